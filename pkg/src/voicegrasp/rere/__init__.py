"""Spoken target description -> enriched referring expression."""

from .audio import AudioSignal, energy_gate, read_wav, write_wav
from .enrich import (DEFAULT_GATE, EnrichedExpression, EnrichmentWeights, Transcript,
                     VisualFeatureSet, assess_alignment, compose_enriched,
                     extract_visual_features, load_prompt_template, transcribe)
from .providers import HttpProvider, MockProvider, http_transcriber

__all__ = [
    "AudioSignal", "energy_gate", "read_wav", "write_wav", "DEFAULT_GATE", "EnrichedExpression",
    "EnrichmentWeights", "Transcript", "VisualFeatureSet", "assess_alignment",
    "compose_enriched", "extract_visual_features", "load_prompt_template", "transcribe",
    "HttpProvider", "MockProvider", "http_transcriber",
]
