from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import SpeakerModel
from .optim import OptimizerState, sgdm_step
from ..seeding import derive_seed


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    train_acc: float


def _as_images(images):
    x = np.stack([getattr(im, "values", im) for im in images]) if isinstance(images, (list, tuple)) \
        else np.asarray(images)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise ValueError(f"expected a stack of 2-D images, got shape {x.shape}")
    return x


def train(model: SpeakerModel, images, labels, epochs: int = 30, batch_size: int = 64,
          seed: int = 0, optimizer: OptimizerState | None = None, progress=None):
    """Minibatch SGDM training. Mutates and returns ``model`` with the per-epoch log.

    A fresh permutation is drawn from ``seed`` every epoch and the final partial batch
    is kept. Training accuracy is measured on the forward pass that produced each
    gradient (batch-norm in batch-statistics mode).
    """
    x = _as_images(images)
    y = np.asarray(labels, dtype=int)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must be one per image")
    if tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ValueError(f"image dims {tuple(x.shape[1:])} inconsistent with model input "
                         f"{tuple(model.input_shape)}")
    if np.unique(y).size < 2:
        raise ValueError("training needs at least 2 classes")
    if y.min() < 0 or y.max() >= model.n_speakers:
        raise ValueError("label out of range")
    x = x.astype(model.dtype, copy=False)
    opt = optimizer or OptimizerState()
    model.train()
    log = []
    for epoch in range(1, epochs + 1):
        order = np.random.default_rng(derive_seed(seed, "epoch", epoch)).permutation(x.shape[0])
        total_loss, correct = 0.0, 0
        for s in range(0, order.size, batch_size):
            idx = order[s:s + batch_size]
            loss, probs, grads = model.loss_and_grads(x[idx], y[idx])
            sgdm_step(model.params, grads, opt)
            total_loss += loss * idx.size
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        entry = EpochLog(epoch, total_loss / x.shape[0], correct / x.shape[0])
        log.append(entry)
        if progress is not None:
            progress(entry)
    model.eval()
    return model, log


def write_training_log(log, path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_acc"])
        for e in log:
            w.writerow([e.epoch, f"{e.loss:.6f}", f"{e.train_acc:.6f}"])
