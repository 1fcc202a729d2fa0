"""Waveform I/O and energy-gated segmentation."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IoError, ValidationError

DEFAULT_RATE = 16000


@dataclass(frozen=True)
class AudioSignal:
    sample_rate: int
    samples: np.ndarray
    offset: int = 0  # first sample's index in the source recording

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate", "must be positive")
        if not np.all(np.isfinite(s)):
            raise ValidationError("samples", "non-finite audio samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    @property
    def start_time(self):
        return self.offset / self.sample_rate


def read_wav(path) -> AudioSignal:
    """Mono linear-PCM WAV (8/16/32-bit); multi-channel input is averaged."""
    p = Path(path)
    try:
        with wave.open(str(p), "rb") as w:
            rate, width, ch = w.getframerate(), w.getsampwidth(), w.getnchannels()
            raw = w.readframes(w.getnframes())
    except (OSError, wave.Error, EOFError) as exc:
        raise IoError(f"cannot read audio {p}: {exc}") from None
    if width == 1:
        x = (np.frombuffer(raw, np.uint8).astype(float) - 128.0) / 128.0
    elif width == 2:
        x = np.frombuffer(raw, "<i2").astype(float) / 32768.0
    elif width == 4:
        x = np.frombuffer(raw, "<i4").astype(float) / 2147483648.0
    else:
        raise IoError(f"unsupported sample width {width} in {p}")
    return AudioSignal(rate, x.reshape(-1, ch).mean(axis=1))


def write_wav(signal: AudioSignal, path) -> None:
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    target = str(path) if isinstance(path, (str, Path)) else path
    with wave.open(target, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(signal.sample_rate))
        w.writeframes(pcm.tobytes())


def frame_rms(samples, window):
    n = len(samples)
    n_frames = -(-n // window)
    padded = np.zeros(n_frames * window)
    padded[:n] = samples
    sq = (padded ** 2).reshape(n_frames, window).sum(axis=1)
    counts = np.full(n_frames, window)
    if n % window:
        counts[-1] = n % window
    return np.sqrt(sq / counts)


def energy_gate(audio: AudioSignal, window_ms=20.0, threshold=0.02, hangover_ms=200.0):
    """Split into voiced segments by windowed RMS.

    A segment opens at the first window whose RMS exceeds ``threshold`` and
    closes once the RMS has stayed at or below it for ``hangover_ms``; the
    trailing quiet stretch up to that point stays in the segment.
    """
    if window_ms <= 0:
        raise ValidationError("window_ms", "must be positive")
    if threshold < 0:
        raise ValidationError("threshold", "must be non-negative")
    n = len(audio)
    if n == 0:
        return []
    win = max(1, int(round(window_ms * audio.sample_rate / 1000.0)))
    hang = int(round(hangover_ms * audio.sample_rate / 1000.0))
    loud = frame_rms(audio.samples, win) > threshold
    segments = []
    start = None
    last_loud_end = 0
    for f, is_loud in enumerate(loud):
        a, b = f * win, min(n, (f + 1) * win)
        if is_loud:
            if start is None:
                start = a
            last_loud_end = b
        elif start is not None and b - last_loud_end >= hang:
            segments.append((start, min(n, last_loud_end + hang)))
            start = None
    if start is not None:
        segments.append((start, min(n, last_loud_end + hang)))
    return [AudioSignal(audio.sample_rate, audio.samples[a:b], audio.offset + a) for a, b in segments]
