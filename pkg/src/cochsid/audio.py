"""Audio ingestion, resampling, energy VAD and basic measurements.

All DSP runs in float64; 16-bit quantization only happens in :func:`save_wav`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile


class WavError(ValueError):
    """Raised for unreadable, unsupported or empty WAV files."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"AudioClip expects mono 1-D samples, got shape {x.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("AudioClip samples must be finite")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


@dataclass(frozen=True)
class VadParams:
    frame_ms: float = 20.0
    hop_ms: float = 10.0
    energy_floor_db: float = -40.0
    min_speech_frames: int = 3

    def __post_init__(self):
        if not (self.frame_ms >= self.hop_ms > 0):
            raise ValueError("VadParams requires frame_ms >= hop_ms > 0")
        if self.min_speech_frames < 1:
            raise ValueError("min_speech_frames must be >= 1")


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 RIFF/WAVE file as a mono clip.

    Multi-channel audio is averaged to mono; 16-bit samples are scaled by 1/32768.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, OSError, struct.error) as exc:
        if isinstance(exc, OSError) and not path.is_file():
            raise
        raise WavError(f"unsupported or corrupt WAV: {path}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise WavError(f"unsupported or corrupt WAV: {path} (sample type {data.dtype})")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise WavError(f"zero-length audio: {path}")
    return AudioClip(x, rate)


def save_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM mono, clamping to [-1, 1] first."""
    x = np.clip(clip.samples, -1.0, 1.0)
    q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(Path(path), clip.sample_rate, q)


def _kaiser_lowpass(up: int, down: int, taps_per_phase: int = 64, beta: float = 8.6) -> np.ndarray:
    max_rate = max(up, down)
    half_len = taps_per_phase * max_rate // 2
    return signal.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", beta))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Windowed-sinc polyphase resampling (Kaiser beta 8.6, 64 taps per phase)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    ratio = Fraction(int(target_rate), clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    y = signal.resample_poly(clip.samples, up, down, window=_kaiser_lowpass(up, down))
    return AudioClip(y, int(target_rate))


def rms_power(clip: AudioClip) -> float:
    """Mean of squared samples (despite the name, no square root is taken)."""
    if clip.samples.size == 0:
        raise ValueError("rms_power of an empty clip")
    return float(np.mean(clip.samples ** 2))


def _frame_bounds(n: int, frame: int, hop: int) -> np.ndarray:
    # last frame is stretched to the end so no tail samples are orphaned
    n_frames = max(1, math.ceil((n - frame) / hop) + 1)
    starts = np.arange(n_frames) * hop
    ends = np.minimum(starts + frame, n)
    ends[-1] = n
    return np.stack([starts, ends], axis=1)


def _vad_pass(x: np.ndarray, sr: int, params: VadParams) -> np.ndarray:
    frame = max(1, int(round(params.frame_ms * sr / 1000.0)))
    hop = max(1, int(round(params.hop_ms * sr / 1000.0)))
    if x.size <= frame:
        return x
    bounds = _frame_bounds(x.size, frame, hop)
    csum = np.concatenate([[0.0], np.cumsum(x ** 2)])
    energy = (csum[bounds[:, 1]] - csum[bounds[:, 0]]) / (bounds[:, 1] - bounds[:, 0])
    with np.errstate(divide="ignore"):
        log_e = 10.0 * np.log10(energy)
    peak = np.max(log_e)
    if not np.isfinite(peak):
        return x
    active = log_e > peak + params.energy_floor_db
    if not active.any():
        return x

    # fill inactive runs shorter than min_speech_frames that sit between active frames
    idx = np.flatnonzero(active)
    for a, b in zip(idx[:-1], idx[1:]):
        gap = b - a - 1
        if 0 < gap < params.min_speech_frames:
            active[a + 1:b] = True

    keep = np.zeros(x.size, dtype=bool)
    for s, e in bounds[active]:
        keep[s:e] = True
    return x[keep]


def vad_trim(clip: AudioClip, params: VadParams | None = None) -> AudioClip:
    """Drop low-energy frames and concatenate what remains.

    A frame is speech when its log-energy exceeds the loudest frame's by more than
    ``energy_floor_db``. The single pass is iterated to a fixed point, which makes
    the operation idempotent even though framing shifts after each cut.
    """
    params = params or VadParams()
    x = clip.samples
    while True:
        y = _vad_pass(x, clip.sample_rate, params)
        if y.size == x.size:
            break
        x = y
    return AudioClip(x.copy(), clip.sample_rate)
