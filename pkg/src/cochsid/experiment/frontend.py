"""Utterance -> feature image: VAD, resampling, cochleagram and resize."""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..audio import AudioClip, VadParams, load_wav, resample, vad_trim
from ..gammatone import FilterbankConfig, cochleagram, make_filterbank, to_feature_image

DESK_IMAGE = (100, 80)
FULL_IMAGE = (500, 400)


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 8000
    n_channels: int = 128
    f_min: float = 50.0
    f_max: float = 8000.0
    frame_len: int = 320
    image: tuple[int, int] = DESK_IMAGE
    vad: VadParams = field(default_factory=VadParams)

    @property
    def filterbank_config(self) -> FilterbankConfig:
        return FilterbankConfig(self.sample_rate, self.n_channels, self.f_min, self.f_max)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (1, *self.image)


@functools.lru_cache(maxsize=8)
def filterbank_for(config: FilterbankConfig):
    return make_filterbank(config)


def preprocess(clip: AudioClip, frontend: FrontendConfig) -> AudioClip:
    """VAD-trim, then resample to the frontend rate."""
    trimmed = vad_trim(clip, frontend.vad)
    out = resample(trimmed, frontend.sample_rate)
    if out.samples.size < frontend.frame_len:
        raise ValueError("empty post-VAD audio (shorter than one cochleagram frame)")
    return out


def load_preprocessed(path, frontend: FrontendConfig) -> AudioClip:
    return preprocess(load_wav(path), frontend)


def feature_image(clip: AudioClip, frontend: FrontendConfig) -> np.ndarray:
    """Normalized [height, width] float32 image of a preprocessed clip."""
    fb = filterbank_for(frontend.filterbank_config)
    coch = cochleagram(fb, clip, frontend.frame_len)
    return to_feature_image(coch, *frontend.image).values.astype(np.float32)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map; ``threads > 1`` uses a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
