"""Noise generation, SNR mixing, synthetic reverberation and clipping.

Stages compose as reverb -> additive noise -> clipping (see :func:`apply_corruption`).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import AudioClip, load_wav, resample, rms_power
from .seeding import derive_seed

NOISE_KINDS = ("white", "pink", "file")
CLIP_KINDS = ("center", "peak")


class CorruptionError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSource:
    kind: str
    file_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise CorruptionError(f"unknown noise kind {self.kind!r}")
        if (self.kind == "file") != (self.file_path is not None):
            raise CorruptionError("file_path is required iff kind == 'file'")

    @property
    def name(self) -> str:
        if self.kind == "file":
            return Path(self.file_path).stem
        return self.kind

    def render(self, n_samples: int, sample_rate: int, seed: int) -> AudioClip:
        """Return ``n_samples`` of this noise; generated kinds mix ``seed`` with ``self.seed``."""
        s = derive_seed("noise", self.seed, seed)
        if self.kind == "white":
            return gen_white_noise(n_samples, sample_rate, s)
        if self.kind == "pink":
            return gen_pink_noise(n_samples, sample_rate, s)
        return fit_noise_file(_load_noise_file(self.file_path, sample_rate), n_samples, s)


@dataclass(frozen=True)
class ClipSpec:
    kind: str
    threshold_fraction: float

    def __post_init__(self):
        if self.kind not in CLIP_KINDS:
            raise CorruptionError(f"unknown clip kind {self.kind!r}")
        if not (0.0 < self.threshold_fraction <= 1.0):
            raise CorruptionError("threshold_fraction must be in (0, 1]")


@dataclass(frozen=True)
class CorruptionSpec:
    noise: NoiseSource | None = None
    snr_db: float | None = None
    reverb_delay_ms: float | None = None
    clip: ClipSpec | None = None

    def __post_init__(self):
        if self.noise is None and self.reverb_delay_ms is None and self.clip is None:
            raise CorruptionError("empty corruption spec")
        if (self.noise is None) != (self.snr_db is None):
            raise CorruptionError("noise and snr_db must be given together")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise CorruptionError("snr_db must be finite; omit the noise field for clean speech")
        if self.reverb_delay_ms is not None and not self.reverb_delay_ms > 0:
            raise CorruptionError("reverb_delay_ms must be positive")

    def to_text(self) -> str:
        parts = []
        if self.noise is not None:
            src = self.noise.kind if self.noise.kind != "file" else f"file:{self.noise.file_path}"
            parts.append(f"noise={src}@{_fmt_num(self.snr_db)}dB")
        if self.reverb_delay_ms is not None:
            parts.append(f"reverb={_fmt_num(self.reverb_delay_ms)}ms")
        if self.clip is not None:
            parts.append(f"clip={self.clip.kind}:{_fmt_num(self.clip.threshold_fraction)}")
        return ";".join(parts)

    @classmethod
    def parse(cls, text: str, noise_seed: int = 0) -> "CorruptionSpec":
        """Parse the canonical form, e.g. ``noise=file:babble.wav@-5dB;reverb=200ms;clip=center:0.6``."""
        fields: dict = {}
        for part in filter(None, (p.strip() for p in text.split(";"))):
            key, sep, value = part.partition("=")
            key = key.strip()
            if not sep or key in fields:
                raise CorruptionError(f"malformed corruption spec: {text!r}")
            fields[key] = value.strip()
        unknown = set(fields) - {"noise", "reverb", "clip"}
        if unknown:
            raise CorruptionError(f"unknown corruption field(s): {sorted(unknown)}")

        kw: dict = {}
        if "noise" in fields:
            m = re.fullmatch(r"(white|pink|file:(.+))@([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*dB", fields["noise"])
            if not m:
                raise CorruptionError(f"malformed noise field: {fields['noise']!r}")
            if m.group(2) is not None:
                kw["noise"] = NoiseSource("file", m.group(2), noise_seed)
            else:
                kw["noise"] = NoiseSource(m.group(1), None, noise_seed)
            kw["snr_db"] = float(m.group(3))
        if "reverb" in fields:
            m = re.fullmatch(r"([0-9.]+(?:[eE][-+]?\d+)?)\s*ms", fields["reverb"])
            if not m:
                raise CorruptionError(f"malformed reverb field: {fields['reverb']!r}")
            kw["reverb_delay_ms"] = float(m.group(1))
        if "clip" in fields:
            m = re.fullmatch(r"(center|peak):([0-9.]+(?:[eE][-+]?\d+)?)", fields["clip"])
            if not m:
                raise CorruptionError(f"malformed clip field: {fields['clip']!r}")
            kw["clip"] = ClipSpec(m.group(1), float(m.group(2)))
        try:
            return cls(**kw)
        except ValueError as exc:
            raise CorruptionError(str(exc)) from exc


def _fmt_num(v: float) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class RoomImpulseResponse:
    taps: np.ndarray
    sample_rate: int
    t60_ms: float


# ---------------------------------------------------------------- noise sources

def gen_white_noise(n_samples: int, sample_rate: int, seed: int) -> AudioClip:
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    g = np.random.default_rng(seed)
    return AudioClip(g.standard_normal(n_samples), sample_rate)


def pink_filter_sos(sample_rate: int, f_lo: float = 4.0, n_sections: int = 3) -> np.ndarray:
    """Three biquads of alternating real poles/zeros approximating a -3 dB/octave tilt.

    Poles are geometrically spaced from ``f_lo`` to a quarter of the sample rate, each
    zero sits half a step above its pole. The lowest zero is moved to DC so the output
    has no mean.
    """
    n_poles = 2 * n_sections
    f_hi = 0.25 * sample_rate
    step = (f_hi / f_lo) ** (1.0 / (n_poles - 1))
    pole_hz = f_lo * step ** np.arange(n_poles)
    zero_hz = pole_hz * math.sqrt(step)
    poles = np.exp(-2 * np.pi * pole_hz / sample_rate)
    zeros = np.exp(-2 * np.pi * zero_hz / sample_rate)
    zeros[0] = 1.0
    return signal.zpk2sos(zeros, poles, 1.0)


def gen_pink_noise(n_samples: int, sample_rate: int, seed: int) -> AudioClip:
    """1/f noise scaled to unit RMS."""
    white = gen_white_noise(n_samples, sample_rate, seed).samples
    sos = pink_filter_sos(sample_rate)
    # warm the filter up on a seeded prefix so the start has no transient
    warm = np.random.default_rng(derive_seed("pink-warmup", seed)).standard_normal(
        min(4 * sample_rate, 65536))
    _, zi = signal.sosfilt(sos, warm, zi=np.zeros((sos.shape[0], 2)))
    y, _ = signal.sosfilt(sos, white, zi=zi)
    rms = math.sqrt(float(np.mean(y ** 2)))
    return AudioClip(y / rms, sample_rate)


@functools.lru_cache(maxsize=32)
def _load_noise_file(path, sample_rate: int) -> AudioClip:
    clip = load_wav(path)
    if clip.sample_rate != sample_rate:
        clip = resample(clip, sample_rate)
    return clip


def fit_noise_file(noise: AudioClip, n_samples: int, seed: int) -> AudioClip:
    """Crop (longer) or circularly tile (shorter) a recorded noise from a seeded offset."""
    x = noise.samples
    if x.size == 0:
        raise CorruptionError("noise file is empty")
    offset = int(np.random.default_rng(seed).integers(0, x.size))
    if x.size >= n_samples:
        offset = offset % (x.size - n_samples + 1)
        return noise.with_samples(x[offset:offset + n_samples].copy())
    idx = (offset + np.arange(n_samples)) % x.size
    return noise.with_samples(x[idx])


# ---------------------------------------------------------------- mixing

def snr_gain(speech_power: float, noise_power: float, snr_db: float) -> float:
    return math.sqrt(speech_power / (noise_power * 10.0 ** (snr_db / 10.0)))


def _match_length(noise: np.ndarray, n: int) -> np.ndarray:
    if noise.size >= n:
        return noise[:n]
    return np.resize(noise, n)


def scaled_noise(speech: AudioClip, noise: AudioClip, snr_db: float) -> np.ndarray:
    """The noise component that :func:`mix_at_snr` adds, already gain-scaled."""
    if speech.sample_rate != noise.sample_rate:
        raise CorruptionError("speech and noise sample rates differ")
    n = _match_length(noise.samples, speech.samples.size)
    ps = rms_power(speech)
    pn = float(np.mean(n ** 2))
    if ps == 0.0:
        raise CorruptionError("speech has zero power")
    if pn == 0.0:
        raise CorruptionError("noise has zero power")
    return snr_gain(ps, pn, snr_db) * n


def mix_at_snr(speech: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """``speech + g*noise`` with ``g`` chosen for an exact mean-square SNR. Not renormalized."""
    return speech.with_samples(speech.samples + scaled_noise(speech, noise, snr_db))


def measured_snr_db(speech: np.ndarray, noise_component: np.ndarray) -> float:
    return 10.0 * math.log10(float(np.mean(speech ** 2)) / float(np.mean(noise_component ** 2)))


# ---------------------------------------------------------------- reverberation

def synth_rir(t60_ms: float, duration_factor: float = 1.5, sample_rate: int = 8000,
              seed: int = 0) -> RoomImpulseResponse:
    """Unit direct path followed by a Gaussian tail decaying 60 dB (energy) over ``t60_ms``."""
    if t60_ms <= 0:
        raise ValueError("t60_ms must be positive")
    t60_samples = t60_ms * sample_rate / 1000.0
    n = math.ceil(duration_factor * t60_samples)
    n = max(n, 1)
    k = np.arange(n)
    decay = np.exp(-k * (3.0 * math.log(10.0)) / t60_samples)
    taps = np.random.default_rng(seed).standard_normal(n) * decay
    taps[0] = 1.0
    return RoomImpulseResponse(taps, sample_rate, float(t60_ms))


def schroeder_decay_db(taps: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve, 0 dB at onset."""
    edc = np.cumsum((taps ** 2)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def add_reverb(clip: AudioClip, rir: RoomImpulseResponse) -> AudioClip:
    """Linear convolution with the RIR, truncated to the input length."""
    if clip.sample_rate != rir.sample_rate:
        raise CorruptionError("clip and RIR sample rates differ")
    n = clip.samples.size
    y = signal.fftconvolve(clip.samples, rir.taps[:n])[:n]
    return clip.with_samples(y)


# ---------------------------------------------------------------- clipping

def _threshold(clip: AudioClip, threshold_fraction: float) -> float:
    if not (0.0 < threshold_fraction <= 1.0):
        raise CorruptionError("threshold_fraction must be in (0, 1]")
    peak = float(np.max(np.abs(clip.samples))) if clip.samples.size else 0.0
    if peak == 0.0:
        raise CorruptionError("cannot derive threshold from a silent clip")
    return threshold_fraction * peak


def center_clip(clip: AudioClip, threshold_fraction: float) -> AudioClip:
    c = _threshold(clip, threshold_fraction)
    t = clip.samples
    z = np.where(t >= c, t - c, np.where(t <= -c, t + c, 0.0))
    return clip.with_samples(z)


def peak_clip(clip: AudioClip, threshold_fraction: float) -> AudioClip:
    c = _threshold(clip, threshold_fraction)
    return clip.with_samples(np.clip(clip.samples, -c, c))


def apply_clip(clip: AudioClip, spec: ClipSpec) -> AudioClip:
    fn = center_clip if spec.kind == "center" else peak_clip
    return fn(clip, spec.threshold_fraction)


# ---------------------------------------------------------------- composition

@dataclass
class CorruptionTrace:
    """Intermediate signals of one :func:`apply_corruption` call."""

    reverberated: np.ndarray
    noise_component: np.ndarray | None = None

    @property
    def measured_snr_db(self) -> float | None:
        if self.noise_component is None:
            return None
        return measured_snr_db(self.reverberated, self.noise_component)


def stage_seed(seed: int, stage: str) -> int:
    return derive_seed(seed, stage)


def apply_corruption(clip: AudioClip, spec: CorruptionSpec, seed: int,
                     trace: CorruptionTrace | None = None) -> AudioClip:
    """Reverb, then noise at the target SNR relative to the reverberated speech, then clipping.

    Noise is rendered with ``stage_seed(seed, "noise")`` and the RIR drawn with
    ``stage_seed(seed, "reverb")``. Pass a ``trace`` to receive the intermediate signals.
    """
    out = clip
    if spec.reverb_delay_ms is not None:
        rir = synth_rir(spec.reverb_delay_ms, sample_rate=clip.sample_rate,
                        seed=stage_seed(seed, "reverb"))
        out = add_reverb(out, rir)
    reverberated = out.samples
    noise_component = None
    if spec.noise is not None:
        noise = spec.noise.render(out.samples.size, out.sample_rate, stage_seed(seed, "noise"))
        noise_component = scaled_noise(out, noise, spec.snr_db)
        out = out.with_samples(out.samples + noise_component)
    if spec.clip is not None:
        out = apply_clip(out, spec.clip)
    if trace is not None:
        trace.reverberated = reverberated
        trace.noise_component = noise_component
    return out
