"""Gammatone filterbank and cochleagram front-end.

Each channel realizes the sampled gammatone impulse response

    h[k] = k**(n-1) * exp(-2*pi*w*k/fs) * cos(2*pi*f_c*k/fs)

exactly, as a cascade of real second-order recursive sections. The z-transform of
``k**m * a**k`` is ``a z^-1 E_m(a z^-1) / (1 - a z^-1)**(m+1)`` with ``E_m`` the
Eulerian polynomial, so taking the real part over the complex pole
``a = exp((-w + j f_c) 2 pi / fs)`` gives a real filter whose denominator factors
into ``n`` identical biquads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .audio import AudioClip

LOG_FLOOR = 1e-10


def erb(f_c):
    """Glasberg-Moore equivalent rectangular bandwidth in Hz."""
    return 24.7 * (4.37 * np.asarray(f_c, dtype=float) / 1000.0 + 1.0)


def erb_number(f):
    """ERB-rate scale: the integral of 1/erb from 0 to ``f``."""
    return np.log1p(0.00437 * np.asarray(f, dtype=float)) / (24.7 * 0.00437)


def erb_number_inv(e):
    return np.expm1(np.asarray(e, dtype=float) * 24.7 * 0.00437) / 0.00437


@dataclass(frozen=True)
class FilterbankConfig:
    sample_rate: int = 8000
    n_channels: int = 128
    f_min: float = 50.0
    f_max: float = 8000.0
    order_n: int = 4
    bandwidth_scale: float = 1.019

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.order_n < 1:
            raise ValueError("order_n must be >= 1")
        if self.bandwidth_scale <= 0:
            raise ValueError("bandwidth_scale must be positive")
        if not (0 < self.f_min < self.effective_f_max):
            raise ValueError(
                f"need 0 < f_min < effective f_max, got f_min={self.f_min}, "
                f"effective f_max={self.effective_f_max}")

    @property
    def effective_f_max(self) -> float:
        return min(self.f_max, 0.5 * self.sample_rate * 0.999)


def _eulerian(m: int) -> list[int]:
    if m == 0:
        return [1]
    return [sum((-1) ** j * math.comb(m + 1, j) * (i + 1 - j) ** m for j in range(i + 2))
            for i in range(m)]


def _pair_roots(roots: np.ndarray) -> list[np.ndarray]:
    """Group polynomial roots into real quadratic (or linear) factors."""
    tol = 1e-9 * max(1.0, float(np.max(np.abs(roots)))) if roots.size else 0.0
    cplx = [r for r in roots if abs(r.imag) > tol and r.imag > 0]
    real = sorted(r.real for r in roots if abs(r.imag) <= tol)
    factors = [np.real(np.poly([r, np.conj(r)])) for r in cplx]
    while len(real) >= 2:
        factors.append(np.poly([real.pop(), real.pop()]))
    if real:
        factors.append(np.array([1.0, -real.pop(), 0.0]))
    return factors


def gammatone_sos(f_c: float, bandwidth: float, sample_rate: int, order: int):
    """Second-order sections for one channel, plus the pure delay (samples) split off."""
    a = np.exp((-bandwidth + 1j * f_c) * 2 * np.pi / sample_rate)
    m = order - 1
    if m == 0:
        b_cplx = np.array([1.0 + 0j])
    else:
        b_cplx = np.zeros(m + 1, dtype=complex)
        for i, e in enumerate(_eulerian(m)):
            b_cplx[i + 1] = e * a ** (i + 1)
    a_cplx = np.poly(np.full(order, a))
    num = 0.5 * (np.convolve(b_cplx, np.conj(a_cplx)) + np.convolve(np.conj(b_cplx), a_cplx)).real

    nz = np.flatnonzero(np.abs(num) > 1e-14 * np.max(np.abs(num)))
    delay = int(nz[0])
    num = num[delay:nz[-1] + 1]
    gain = num[0]
    zero_factors = _pair_roots(np.roots(num)) if num.size > 1 else []

    pole_section = np.array([1.0, -2.0 * a.real, abs(a) ** 2])
    sos = np.zeros((order, 6))
    for i in range(order):
        b = zero_factors[i] if i < len(zero_factors) else np.array([1.0, 0.0, 0.0])
        sos[i, :b.size] = b
        sos[i, 3:] = pole_section
    sos[0, :3] *= gain
    return sos, delay


@dataclass(frozen=True)
class GammatoneFilterbank:
    config: FilterbankConfig
    center_freqs: np.ndarray
    bandwidths: np.ndarray
    sos: np.ndarray  # [n_channels, order, 6]
    delays: np.ndarray  # pure delay of each realized channel, samples
    gains: np.ndarray  # peak-normalization factors already folded into sos

    @property
    def n_channels(self) -> int:
        return self.center_freqs.size

    @property
    def sample_rate(self) -> int:
        return self.config.sample_rate

    def compensation_shift(self) -> np.ndarray:
        """Envelope-delay advance per channel, round((n-1)/(2 pi w) * fs) samples."""
        n = self.config.order_n
        return np.round((n - 1) / (2 * np.pi * self.bandwidths) * self.sample_rate).astype(int)

    def impulse_response(self, channel: int, n_samples: int) -> np.ndarray:
        """Realized (uncompensated) impulse response of one channel."""
        imp = np.zeros(n_samples)
        imp[0] = 1.0
        y = signal.sosfilt(self.sos[channel], imp)
        d = int(self.delays[channel])
        return np.concatenate([np.zeros(d), y[:n_samples - d]]) if d else y


def erb_space(f_min: float, f_max: float, n_channels: int) -> np.ndarray:
    if n_channels == 1:
        return erb_number_inv([(erb_number(f_min) + erb_number(f_max)) / 2.0])
    return erb_number_inv(np.linspace(erb_number(f_min), erb_number(f_max), n_channels))


def _peak_gain(sos: np.ndarray, f_c: float, bw: float, fs: int) -> float:
    lo = max(f_c - 2 * bw, 1e-3)
    hi = min(f_c + 2 * bw, 0.5 * fs)
    f = np.linspace(lo, hi, 2001)
    _, h = signal.sosfreqz(sos, worN=f, fs=fs)
    mag = np.abs(h)
    i = int(np.argmax(mag))
    # refine around the coarse maximum
    df = f[1] - f[0]
    f2 = np.linspace(max(f[i] - df, 1e-3), min(f[i] + df, 0.5 * fs), 201)
    _, h2 = signal.sosfreqz(sos, worN=f2, fs=fs)
    return float(np.max(np.abs(h2)))


def make_filterbank(config: FilterbankConfig) -> GammatoneFilterbank:
    fs = config.sample_rate
    fcs = erb_space(config.f_min, config.effective_f_max, config.n_channels)
    bws = config.bandwidth_scale * erb(fcs)
    all_sos, delays, gains = [], [], []
    for fc, bw in zip(fcs, bws):
        sos, delay = gammatone_sos(fc, bw, fs, config.order_n)
        g = 1.0 / _peak_gain(sos, fc, bw, fs)
        sos[0, :3] *= g
        all_sos.append(sos)
        delays.append(delay)
        gains.append(g)
    return GammatoneFilterbank(config, fcs, bws, np.stack(all_sos), np.array(delays),
                               np.array(gains))


def magnitude_response(fb: GammatoneFilterbank, freqs) -> np.ndarray:
    """Per-channel gain in dB at ``freqs`` (Hz), shape [n_channels, n_freqs]."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    out = np.empty((fb.n_channels, freqs.size))
    for m in range(fb.n_channels):
        _, h = signal.sosfreqz(fb.sos[m], worN=freqs, fs=fb.sample_rate)
        with np.errstate(divide="ignore"):
            out[m] = 20.0 * np.log10(np.abs(h))
    return out


def filter_signal(fb: GammatoneFilterbank, clip: AudioClip) -> np.ndarray:
    """Filter ``clip`` through every channel, delay-compensated; shape [n_channels, n_samples]."""
    if clip.sample_rate != fb.sample_rate:
        raise ValueError(
            f"clip sample rate {clip.sample_rate} != filterbank rate {fb.sample_rate}")
    x = clip.samples
    n = x.size
    out = np.zeros((fb.n_channels, n))
    # net shift: realized pure delay minus envelope compensation (negative = advance)
    shifts = fb.delays - fb.compensation_shift()
    for m in range(fb.n_channels):
        y = signal.sosfilt(fb.sos[m], x)
        s = int(shifts[m])
        if s >= 0:
            out[m, s:] = y[:n - s] if s < n else 0.0
        elif -s < n:
            out[m, :n + s] = y[-s:]
    return out


@dataclass(frozen=True)
class Cochleagram:
    values: np.ndarray  # [n_channels, n_frames]
    frame_len: int
    hop: int
    source_sample_rate: int

    @property
    def shape(self):
        return self.values.shape


def n_frames(n_samples: int, frame_len: int, hop: int) -> int:
    return (n_samples - frame_len) // hop + 1


def cochleagram(fb: GammatoneFilterbank, clip: AudioClip, frame_len: int = 320) -> Cochleagram:
    """Log mean-square energy per channel in frames of ``frame_len`` with 50% overlap."""
    if frame_len < 2 or frame_len % 2:
        raise ValueError("frame_len must be an even number of samples >= 2")
    if clip.samples.size < frame_len:
        raise ValueError(f"clip shorter than one frame ({clip.samples.size} < {frame_len})")
    hop = frame_len // 2
    y2 = filter_signal(fb, clip) ** 2
    nf = n_frames(y2.shape[1], frame_len, hop)
    # frame j = two consecutive half-frames, so sum half-frame blocks pairwise
    blocks = y2[:, :(nf + 1) * hop].reshape(fb.n_channels, nf + 1, hop).sum(axis=2)
    energy = (blocks[:, :-1] + blocks[:, 1:]) / frame_len
    return Cochleagram(np.log(LOG_FLOOR + energy), frame_len, hop, clip.sample_rate)


@dataclass(frozen=True)
class FeatureImage:
    values: np.ndarray  # [height, width] in [0, 1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def bilinear_resize(a: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned bilinear interpolation of a 2-D array."""
    a = np.asarray(a, dtype=float)
    h0, w0 = a.shape

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.full(n_out, (n_in - 1) / 2.0)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        i0 = np.clip(np.floor(pos).astype(int), 0, n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    r0, r1, fr = axis(h0, height)
    c0, c1, fc = axis(w0, width)
    top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
    bot = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def to_feature_image(coch: Cochleagram | np.ndarray, height: int = 500, width: int = 400) -> FeatureImage:
    values = coch.values if isinstance(coch, Cochleagram) else np.asarray(coch, dtype=float)
    if values.size == 0:
        raise ValueError("empty cochleagram")
    r = bilinear_resize(values, height, width)
    lo, hi = float(r.min()), float(r.max())
    if hi == lo:
        return FeatureImage(np.full((height, width), 0.5))
    return FeatureImage((r - lo) / (hi - lo))
