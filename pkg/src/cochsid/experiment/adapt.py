"""Noise-adapted training sets: clean images plus corrupted copies at low SNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corruption import CorruptionSpec, NoiseSource, apply_corruption
from ..seeding import derive_seed
from .frontend import FrontendConfig, feature_image, load_preprocessed, parallel_map
from .manifest import DatasetManifest


@dataclass(frozen=True)
class AdaptationPlan:
    adapt_noise: NoiseSource | None = None
    adapt_snrs: tuple[float, ...] = (-5.0,)
    include_clean: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adapt_snrs", tuple(float(s) for s in self.adapt_snrs))
        if self.adapt_noise is None:
            object.__setattr__(self, "adapt_snrs", ())
        if not self.include_clean and not self.adapt_snrs:
            raise ValueError("empty adaptation plan")

    @classmethod
    def clean_only(cls) -> "AdaptationPlan":
        return cls(None, (), True)

    @property
    def images_per_utterance(self) -> int:
        return int(self.include_clean) + len(self.adapt_snrs)


@dataclass
class LabeledImages:
    images: np.ndarray  # [n, height, width] float32
    labels: np.ndarray  # [n] speaker indices
    conditions: list[str]

    def __len__(self) -> int:
        return self.labels.size


def train_corruption_seed(seed: int, utterance_id: str, noise: NoiseSource, snr_db: float) -> int:
    return derive_seed(seed, "train", utterance_id, noise.kind, noise.file_path, snr_db)


def build_adapted_training_set(manifest: DatasetManifest, plan: AdaptationPlan,
                               frontend: FrontendConfig, seed: int = 0,
                               threads: int = 1) -> LabeledImages:
    """Per train utterance: the clean image (if requested) then one image per adaptation SNR."""
    train = manifest.split("train")
    if not train:
        raise ValueError("manifest train split is empty")
    index = manifest.speaker_index()

    def one(entry):
        clip = load_preprocessed(entry.wav_path, frontend)
        imgs, conds = [], []
        if plan.include_clean:
            imgs.append(feature_image(clip, frontend))
            conds.append("clean")
        for snr in plan.adapt_snrs:
            spec = CorruptionSpec(noise=plan.adapt_noise, snr_db=snr)
            noisy = apply_corruption(clip, spec,
                                     train_corruption_seed(seed, entry.utterance_id,
                                                           plan.adapt_noise, snr))
            imgs.append(feature_image(noisy, frontend))
            conds.append(spec.to_text())
        return imgs, conds, index[entry.speaker_id]

    images, labels, conditions = [], [], []
    for imgs, conds, label in parallel_map(one, train, threads):
        images.extend(imgs)
        conditions.extend(conds)
        labels.extend([label] * len(imgs))
    return LabeledImages(np.stack(images), np.array(labels), conditions)
