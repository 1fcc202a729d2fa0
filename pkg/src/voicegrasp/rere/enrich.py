"""Transcription, cross-modal alignment gate and attribute-based enrichment."""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import ClarificationNeeded, ConfigError, EmptyTranscript, ValidationError
from .audio import AudioSignal

log = logging.getLogger(__name__)

DEFAULT_GATE = 0.5
# (dimension, weight key, question) in the provider prompting order
DIMENSIONS = (
    ("category", "w_C", "What kind of object is the user referring to?"),
    ("color", "w_S", "What is its dominant color?"),
    ("shape", "w_S", "What is its overall shape?"),
    ("material", "w_M", "What material or surface texture does it have?"),
    ("position", "w_P", "Where is it in the scene relative to other things?"),
)
WEIGHT_ORDER = ("w_C", "w_S", "w_M", "w_P")
SLOT_ORDER = ("color", "material", "shape", "category", "position")


@dataclass(frozen=True)
class Transcript:
    text: str
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence", "must lie in [0, 1]")


def normalize_token(value) -> str:
    if value is None:
        return ""
    s = " ".join(str(value).lower().split())
    return s.strip(string.punctuation + " ")


@dataclass(frozen=True)
class VisualFeatureSet:
    category: str = ""
    color: str = ""
    shape: str = ""
    material: str = ""
    position: str = ""
    context_cues: tuple = ()

    def __post_init__(self):
        for name in ("category", "color", "shape", "material", "position"):
            object.__setattr__(self, name, normalize_token(getattr(self, name)))
        object.__setattr__(self, "context_cues",
                           tuple(c for c in map(normalize_token, self.context_cues) if c))

    def get(self, dim):
        return getattr(self, dim)


@dataclass(frozen=True)
class EnrichmentWeights:
    w_C: float = 1.0
    w_S: float = 1.0
    w_M: float = 1.0
    w_P: float = 1.0

    def __post_init__(self):
        for k in WEIGHT_ORDER:
            if not getattr(self, k) >= 0:
                raise ValidationError(f"weights.{k}", "must be non-negative")

    @classmethod
    def from_mapping(cls, d):
        unknown = set(d) - set(WEIGHT_ORDER)
        if unknown:
            raise ValidationError("weights", f"unknown keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class EnrichedExpression:
    text: str
    source_transcript: Transcript
    features_used: VisualFeatureSet
    alignment: float
    included: tuple = field(default=())  # dimensions used, by descending weight

    def __post_init__(self):
        if not self.text:
            raise ValidationError("text", "enriched expression is empty")
        if not 0.0 <= self.alignment <= 1.0:
            raise ValidationError("alignment", "must lie in [0, 1]")


def load_prompt_template(path=None) -> str:
    if path is None:
        return resources.files("voicegrasp.data").joinpath("prompt_template.txt").read_text()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"prompt template not found: {p}")
    return p.read_text()


def transcribe(segment: AudioSignal, provider) -> Transcript:
    if len(segment) == 0:
        raise EmptyTranscript("zero-length audio segment")
    reply = provider.transcribe(segment)
    text = str(reply.get("text", ""))
    if not text.strip():
        raise EmptyTranscript("provider returned no text")
    conf = float(min(max(reply.get("confidence", 1.0), 0.0), 1.0))
    return Transcript(text, conf)


def assess_alignment(t_orig: Transcript, rgb, provider, gate=DEFAULT_GATE):
    """Provider's transcript/image agreement in [0, 1]; below ``gate`` asks for clarification.

    Returns ``(score, context_cues)``.
    """
    if rgb is None or getattr(rgb, "size", 0) == 0:
        raise ValidationError("rgb", "alignment needs a non-empty image")
    if not t_orig.text.strip():
        raise ClarificationNeeded(t_orig, 0.0)
    reply = provider.complete({"task": "alignment", "transcript": t_orig.text}, rgb)
    score = float(min(max(reply.get("score", 0.0), 0.0), 1.0))
    if score < gate:
        raise ClarificationNeeded(t_orig, score)
    return score, tuple(reply.get("context") or ())


def extract_visual_features(t_orig: Transcript, rgb, provider, template=None,
                            context=()) -> VisualFeatureSet:
    """One templated prompt per dimension; refused dimensions stay empty."""
    template = template if template is not None else load_prompt_template()
    values = {}
    for dim, _, question in DIMENSIONS:
        prompt = template.format(transcript=t_orig.text, dimension=dim, question=question)
        reply = provider.complete({"task": "feature", "dimension": dim, "prompt": prompt,
                                   "transcript": t_orig.text}, rgb)
        if reply.get("refused"):
            log.info("provider refused dimension %s", dim)
            values[dim] = ""
        else:
            values[dim] = reply.get("value", "")
    return VisualFeatureSet(context_cues=tuple(context), **values)


def included_dimensions(feat: VisualFeatureSet, weights: EnrichmentWeights):
    """Dimensions with positive weight and a non-empty value, by descending weight.

    Ties follow the C, S, M, P order (color before shape inside S).
    """
    rank = {k: i for i, k in enumerate(WEIGHT_ORDER)}
    dims = [(dim, key) for dim, key, _ in DIMENSIONS
            if getattr(weights, key) > 0 and feat.get(dim)]
    dims.sort(key=lambda dk: (-getattr(weights, dk[1]), rank[dk[1]]))
    return tuple(d for d, _ in dims)


def compose_enriched(t_orig: Transcript, feat: VisualFeatureSet, weights: EnrichmentWeights,
                     alignment, gate=DEFAULT_GATE) -> EnrichedExpression:
    """Slot template "the {color} {material} {shape} {category} {position}"."""
    if alignment < gate:
        raise ClarificationNeeded(t_orig, alignment)
    used = included_dimensions(feat, weights)
    if not used:
        return EnrichedExpression(t_orig.text, t_orig, feat, float(alignment), ())
    words = ["the"] + [feat.get(d) for d in SLOT_ORDER if d in used]
    return EnrichedExpression(" ".join(words), t_orig, feat, float(alignment), used)
