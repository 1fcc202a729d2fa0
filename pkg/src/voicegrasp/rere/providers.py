"""Provider seams for speech recognition and vision-language queries.

A vision-language provider answers ``complete(request, image) -> dict`` where
``request`` carries a ``task`` key (``alignment``, ``feature`` or
``material``). A transcription provider answers ``transcribe(audio) -> dict``
with ``text`` and ``confidence``.
"""

from __future__ import annotations

import base64
import io
import os
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np
import yaml
from PIL import Image

from ..errors import ConfigError, ProviderUnavailable
from .audio import AudioSignal, write_wav

VLM_URL_ENV, VLM_KEY_ENV = "VOICEGRASP_VLM_URL", "VOICEGRASP_VLM_KEY"
ASR_URL_ENV, ASR_KEY_ENV = "VOICEGRASP_ASR_URL", "VOICEGRASP_ASR_KEY"


class VisionLanguageProvider(Protocol):
    def complete(self, request: dict, image) -> dict: ...


class TranscriptionProvider(Protocol):
    def transcribe(self, audio: AudioSignal) -> dict: ...


class MockProvider:
    """Canned answers from a fixture document.

    Recognised keys: ``transcript`` ({text, confidence}), ``alignment`` (float),
    ``features`` (dimension -> answer; missing or null means refusal),
    ``material`` (string), ``context`` (list of cues), ``unavailable`` (list of
    task names that should fail as if the service were down) and ``by_transcript``
    (transcript text -> overrides of any of the above).
    """

    def __init__(self, fixture: dict | None = None):
        self.fixture = dict(fixture or {})
        self.calls = []

    @classmethod
    def load(cls, path):
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"mock provider fixture not found: {p}")
        return cls(yaml.safe_load(p.read_text()) or {})

    def _view(self, transcript=None):
        view = dict(self.fixture)
        view.update((self.fixture.get("by_transcript") or {}).get(transcript or "", {}))
        return view

    def _check(self, view, task):
        if task in (view.get("unavailable") or []):
            raise ProviderUnavailable(f"mock provider configured unavailable for {task!r}")

    def transcribe(self, audio: AudioSignal) -> dict:
        self.calls.append({"task": "transcribe", "samples": len(audio)})
        view = self._view()
        self._check(view, "transcribe")
        t = view.get("transcript") or {}
        if isinstance(t, str):
            t = {"text": t}
        return {"text": t.get("text", ""), "confidence": float(t.get("confidence", 1.0))}

    def complete(self, request: dict, image=None) -> dict:
        self.calls.append(dict(request))
        task = request.get("task")
        view = self._view(request.get("transcript"))
        self._check(view, task)
        if task == "alignment":
            return {"score": float(view.get("alignment", 1.0)),
                    "context": list(view.get("context") or [])}
        if task == "feature":
            value = (view.get("features") or {}).get(request.get("dimension"))
            return {"refused": True} if value is None else {"value": str(value)}
        if task == "material":
            return {"material": str(view.get("material", ""))}
        return {}


def _png_b64(image):
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class HttpProvider:
    """JSON-over-HTTP provider; endpoint and key come from the environment."""

    def __init__(self, url=None, key=None, timeout=10.0, url_env=VLM_URL_ENV, key_env=VLM_KEY_ENV):
        self.url = url or os.environ.get(url_env)
        self.key = key or os.environ.get(key_env)
        self.timeout = timeout
        self.url_env = url_env

    def _post(self, body):
        if not self.url:
            raise ProviderUnavailable(f"no endpoint configured (set {self.url_env})")
        headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
        try:
            r = httpx.post(self.url, json=body, headers=headers, timeout=self.timeout)
            r.raise_for_status()
            return r.json()
        except httpx.TimeoutException as exc:
            raise ProviderUnavailable(f"provider timed out: {exc}") from None
        except (httpx.HTTPError, ValueError) as exc:
            raise ProviderUnavailable(f"provider request failed: {exc}") from None

    def complete(self, request: dict, image=None) -> dict:
        body = dict(request)
        if image is not None:
            body["image_png"] = _png_b64(image)
        return self._post(body)

    def transcribe(self, audio: AudioSignal) -> dict:
        buf = io.BytesIO()
        write_wav(audio, buf)
        return self._post({"task": "transcribe",
                           "audio_wav": base64.b64encode(buf.getvalue()).decode("ascii")})


def http_transcriber(timeout=10.0):
    return HttpProvider(timeout=timeout, url_env=ASR_URL_ENV, key_env=ASR_KEY_ENV)
