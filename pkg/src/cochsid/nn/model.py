"""Five conv blocks (3x3 conv -> batch norm -> ReLU -> 3x3/2 max-pool) and a dense output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from ..seeding import derive_seed

DEFAULT_BLOCKS = (8, 8, 16, 32, 32)
KERNEL = 3


def spatial_after_blocks(height: int, width: int, n_blocks: int) -> tuple[int, int]:
    for _ in range(n_blocks):
        if height < layers.POOL or width < layers.POOL:
            raise ValueError("input too small for the number of pooling stages")
        height, width = layers.pool_out_dim(height), layers.pool_out_dim(width)
    if height < 1 or width < 1:
        raise ValueError("input too small for the number of pooling stages")
    return height, width


@dataclass
class SpeakerModel:
    """CNN speaker classifier. ``params`` holds trainable tensors in declaration order."""

    n_speakers: int
    input_shape: tuple[int, int, int]  # (channels, height, width)
    blocks: tuple[int, ...] = DEFAULT_BLOCKS
    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    train_mode: bool = True

    @classmethod
    def create(cls, n_speakers, input_shape=(1, 500, 400), blocks=DEFAULT_BLOCKS,
               seed=0, dtype=np.float32) -> "SpeakerModel":
        if n_speakers < 2:
            raise ValueError("n_speakers must be >= 2")
        c, h, w = input_shape
        sh, sw = spatial_after_blocks(h, w, len(blocks))
        params, buffers = {}, {}
        in_ch = c
        for i, out_ch in enumerate(blocks):
            params[f"conv{i}.w"] = layers.glorot_init(
                in_ch * KERNEL * KERNEL, out_ch * KERNEL * KERNEL,
                (out_ch, in_ch, KERNEL, KERNEL), derive_seed(seed, "conv", i), dtype)
            params[f"conv{i}.b"] = np.zeros(out_ch, dtype)
            params[f"bn{i}.gamma"] = np.ones(out_ch, dtype)
            params[f"bn{i}.beta"] = np.zeros(out_ch, dtype)
            buffers[f"bn{i}.mean"] = np.zeros(out_ch, dtype)
            buffers[f"bn{i}.var"] = np.ones(out_ch, dtype)
            in_ch = out_ch
        d = in_ch * sh * sw
        params["dense.w"] = layers.glorot_init(d, n_speakers, (d, n_speakers),
                                               derive_seed(seed, "dense"), dtype)
        params["dense.b"] = np.zeros(n_speakers, dtype)
        return cls(n_speakers, tuple(input_shape), tuple(blocks), params, buffers)

    @property
    def dtype(self):
        return self.params["dense.w"].dtype

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        """Shape of the activations entering the dense layer (channels, H, W)."""
        sh, sw = spatial_after_blocks(self.input_shape[1], self.input_shape[2], len(self.blocks))
        return self.blocks[-1], sh, sw

    def astype(self, dtype) -> "SpeakerModel":
        return SpeakerModel(self.n_speakers, self.input_shape, self.blocks,
                            {k: v.astype(dtype) for k, v in self.params.items()},
                            {k: v.astype(dtype) for k, v in self.buffers.items()},
                            self.train_mode)

    def copy(self) -> "SpeakerModel":
        return self.astype(self.dtype)

    def train(self) -> "SpeakerModel":
        self.train_mode = True
        return self

    def eval(self) -> "SpeakerModel":
        self.train_mode = False
        return self

    def _check_input(self, x):
        if x.ndim == 3:
            x = x[:, None]
        if tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ValueError(f"input dims {tuple(x.shape[1:])} do not match model input "
                             f"{tuple(self.input_shape)}")
        return np.ascontiguousarray(x, dtype=self.dtype)

    def features(self, x, update_running=True):
        """Run the conv blocks; returns (activations, caches)."""
        p, caches = self.params, []
        h = self._check_input(x)
        for i in range(len(self.blocks)):
            h, c_conv = layers.conv2d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
            h, c_bn = layers.batchnorm_forward(h, p[f"bn{i}.gamma"], p[f"bn{i}.beta"],
                                               self.buffers[f"bn{i}.mean"],
                                               self.buffers[f"bn{i}.var"],
                                               self.train_mode, update_running)
            h, c_relu = layers.relu_forward(h)
            h, c_pool = layers.maxpool_forward(h)
            caches.append((c_conv, c_bn, c_relu, c_pool))
        return h, caches

    def logits(self, x, update_running=True):
        h, caches = self.features(x, update_running)
        flat = h.reshape(h.shape[0], -1)
        z, c_dense = layers.dense_forward(flat, self.params["dense.w"], self.params["dense.b"])
        return z, (h.shape, caches, c_dense)

    def loss_and_grads(self, x, labels, update_running=True, conv_backward=None):
        """Forward + backward. Returns (loss, probs, grads) with grads keyed like ``params``."""
        conv_backward = conv_backward or layers.conv2d_backward
        z, (h_shape, caches, c_dense) = self.logits(x, update_running)
        loss, probs, dz = layers.softmax_xent(z, labels)
        grads = {}
        dflat, grads["dense.w"], grads["dense.b"] = layers.dense_backward(dz, c_dense)
        dh = dflat.reshape(h_shape)
        for i in reversed(range(len(self.blocks))):
            c_conv, c_bn, c_relu, c_pool = caches[i]
            dh = layers.maxpool_backward(dh, c_pool)
            dh = layers.relu_backward(dh, c_relu)
            dh, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = layers.batchnorm_backward(dh, c_bn)
            dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv_backward(dh, c_conv)
        return loss, probs, {k: grads[k] for k in self.params}

    def predict_proba(self, x):
        z, _ = self.logits(x, update_running=False)
        return layers.softmax(z.astype(np.float64))


def predict(model: SpeakerModel, image):
    """Classify one feature image (H, W) with running batch-norm statistics.

    Returns ``(speaker_index, probabilities)``.
    """
    if model.train_mode:
        raise ValueError("predict requires a model in infer mode (call model.eval())")
    values = getattr(image, "values", image)
    x = np.asarray(values)[None]
    probs = model.predict_proba(x)[0]
    return int(np.argmax(probs)), probs


def predict_batch(model: SpeakerModel, images, batch_size: int = 64) -> np.ndarray:
    if model.train_mode:
        raise ValueError("predict requires a model in infer mode (call model.eval())")
    x = np.asarray(images)
    out = []
    for s in range(0, x.shape[0], batch_size):
        out.append(model.predict_proba(x[s:s + batch_size]))
    return np.concatenate(out)
