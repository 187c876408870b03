"""Synthetic desk-scale speaker corpus.

Every speaker owns a fixed source-filter signature: a fundamental frequency and three
formants (with bandwidths), each drawn from that speaker's own slice of a range so no
two speakers share a slice. Utterances are glottal pulse trains with a slowly wandering
F0 (within +/-10%) passed through the speaker's formant resonators, shaped into
syllable-like bursts and padded with low-level silence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from ..audio import AudioClip, save_wav
from ..seeding import derive_seed
from .manifest import DatasetManifest, ManifestEntry, write_manifest

F0_RANGE = (85.0, 255.0)
FORMANT_RANGES = ((300.0, 850.0), (900.0, 2300.0), (2400.0, 3400.0))
BANDWIDTH_RANGES = ((50.0, 110.0), (70.0, 150.0), (100.0, 200.0))
SILENCE_LEVEL = 1e-4


@dataclass(frozen=True)
class SpeakerSignature:
    f0: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]


def _slice_draw(g, lo, hi, n, slot):
    width = (hi - lo) / n
    # keep a guard band inside each slice so neighbours stay distinct
    return lo + width * (slot + g.uniform(0.2, 0.8))


def speaker_signatures(n_speakers: int, seed: int) -> list[SpeakerSignature]:
    g = np.random.default_rng(derive_seed(seed, "speakers"))
    f0_slots = g.permutation(n_speakers)
    formant_slots = [g.permutation(n_speakers) for _ in FORMANT_RANGES]
    out = []
    for i in range(n_speakers):
        f0 = _slice_draw(g, *F0_RANGE, n_speakers, f0_slots[i])
        formants = tuple(_slice_draw(g, lo, hi, n_speakers, slots[i])
                         for (lo, hi), slots in zip(FORMANT_RANGES, formant_slots))
        bws = tuple(g.uniform(lo, hi) for lo, hi in BANDWIDTH_RANGES)
        out.append(SpeakerSignature(float(f0), formants, bws))
    return out


def _resonator(fc, bw, fs):
    r = math.exp(-math.pi * bw / fs)
    theta = 2 * math.pi * fc / fs
    a = [1.0, -2 * r * math.cos(theta), r * r]
    return [sum(a)], a  # unity gain at DC


def synth_utterance(sig: SpeakerSignature, seconds: float, sample_rate: int, seed: int) -> np.ndarray:
    g = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate

    # F0 contour: two slow sinusoids, scaled to stay within +/-10%
    wander = (np.sin(2 * np.pi * g.uniform(0.3, 1.2) * t + g.uniform(0, 2 * np.pi))
              + 0.5 * np.sin(2 * np.pi * g.uniform(1.5, 3.0) * t + g.uniform(0, 2 * np.pi)))
    f0 = sig.f0 * (1.0 + 0.1 * g.uniform(0.5, 1.0) * wander / 1.5)
    phase = np.cumsum(f0) / sample_rate
    pulses = np.diff(np.floor(phase), prepend=0.0)
    source = signal.lfilter([1.0], [1.0, -0.9], pulses)  # glottal spectral tilt

    y = source
    nyq = 0.5 * sample_rate
    for fc, bw in zip(sig.formants, sig.bandwidths):
        if fc < 0.95 * nyq:
            b, a = _resonator(fc, bw, sample_rate)
            y = signal.lfilter(b, a, y)
    y = y + 0.02 * g.standard_normal(n) * np.std(y)  # breathiness

    # syllable envelope between a leading and trailing pause
    lead, trail = g.uniform(0.08, 0.2), g.uniform(0.08, 0.2)
    lead, trail = min(lead, 0.2 * seconds), min(trail, 0.2 * seconds)
    start, stop = int(lead * sample_rate), n - int(trail * sample_rate)
    env = np.zeros(n)
    n_syll = int(g.integers(3, 6))
    edges = np.linspace(start, stop, n_syll + 1).astype(int)
    for a, b in zip(edges[:-1], edges[1:]):
        gap = int(g.uniform(0.0, 0.25) * (b - a))
        seg = b - a - gap
        if seg > 1:
            env[a:a + seg] = np.hanning(seg) ** 0.5 * g.uniform(0.6, 1.0)
    y = y * env
    if not np.any(y):
        raise ValueError(f"utterance of {seconds} s is too short to synthesize")
    y = 0.5 * y / np.max(np.abs(y))
    return y + SILENCE_LEVEL * g.standard_normal(n)


def split_counts(utts_per_speaker: int) -> tuple[int, int]:
    """80/20 split, round-to-nearest, with at least one test utterance."""
    if utts_per_speaker < 2:
        raise ValueError("need at least 2 utterances per speaker for a train/test split")
    n_train = min(utts_per_speaker - 1, max(1, math.floor(0.8 * utts_per_speaker + 0.5)))
    return n_train, utts_per_speaker - n_train


def synth_speaker_dataset(out_dir, n_speakers: int = 10, utts_per_speaker: int = 12,
                          utt_seconds: float = 2.0, sample_rate: int = 8000,
                          seed: int = 42) -> DatasetManifest:
    """Generate WAVs under ``out_dir/wav`` and write ``out_dir/manifest.csv``."""
    if n_speakers < 2:
        raise ValueError("n_speakers must be >= 2")
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    n_train, _ = split_counts(utts_per_speaker)
    entries = []
    for i, sig in enumerate(speaker_signatures(n_speakers, seed)):
        spk = f"spk{i:03d}"
        for u in range(utts_per_speaker):
            utt = f"{spk}_u{u:03d}"
            y = synth_utterance(sig, utt_seconds, sample_rate, derive_seed(seed, "utt", spk, u))
            wav = out_dir / "wav" / f"{utt}.wav"
            save_wav(AudioClip(y, sample_rate), wav)
            entries.append(ManifestEntry(spk, utt, wav, "train" if u < n_train else "test"))
    manifest = DatasetManifest(entries, "synthetic", sample_rate)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
