"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .model import SpeakerModel

FD_STEP = 1e-5
MAX_SAMPLES = 200
# |a - n| / max(|a|, |n|, ABS_FLOOR): keeps exactly-zero gradients (conv bias
# feeding train-mode batch norm) from turning FD round-off into a failure
ABS_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    per_tensor: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4
    skipped: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def lines(self):
        for name, err in self.per_tensor.items():
            yield f"{name:>12s}  max rel err {err:.3e}  {'ok' if err < self.tolerance else 'FAIL'}"


def rel_error(analytic, numeric, floor=ABS_FLOOR):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_tensors(loss_fn, tensors: dict, grads: dict, seed=0, step=FD_STEP,
                  max_samples=MAX_SAMPLES, tolerance=1e-4, floor=ABS_FLOOR) -> GradCheckReport:
    """Compare ``grads`` against central differences of ``loss_fn()``.

    ``loss_fn`` must re-read the arrays in ``tensors``, which are perturbed in place.
    It returns either a loss or ``(loss, pattern)``; in the latter case an entry whose
    +/- perturbation changes ``pattern`` (a ReLU mask or pooling argmax crossed a tie)
    is not differentiable at this step size and another entry is drawn instead.
    At most ``max_samples`` entries are probed per tensor.
    """
    report = GradCheckReport(tolerance=tolerance)
    g = np.random.default_rng(seed)

    def call():
        r = loss_fn()
        return r if isinstance(r, tuple) else (r, None)

    _, base = call()
    for name, t in tensors.items():
        flat = t.reshape(-1)
        order = g.permutation(flat.size)
        worst, used = 0.0, 0
        for i in order:
            if used == max_samples:
                break
            orig = flat[i]
            flat[i] = orig + step
            lp, pp = call()
            flat[i] = orig - step
            lm, pm = call()
            flat[i] = orig
            if base is not None and (pp != base or pm != base):
                report.skipped += 1
                continue
            num = (lp - lm) / (2 * step)
            worst = max(worst, float(rel_error(grads[name].reshape(-1)[i], num, floor)))
            used += 1
        report.per_tensor[name] = worst
    return report


def activation_pattern(caches) -> bytes:
    """Digest of every ReLU mask and pooling argmax in a forward pass."""
    h = hashlib.blake2b(digest_size=16)
    for _, _, c_relu, c_pool in caches:
        h.update(np.packbits(c_relu > 0).tobytes())
        h.update(c_pool[1].tobytes())
    return h.digest()


def check_model(model: SpeakerModel, x, labels, seed=0, tolerance=1e-4,
                conv_backward=None, include_input=False,
                max_samples=MAX_SAMPLES) -> GradCheckReport:
    """Finite-difference check of every parameter of a (float64) model in train mode."""
    if model.dtype != np.float64:
        raise ValueError("gradient checks need a float64 model")
    model.train()
    x = np.array(x, dtype=np.float64)

    def loss_fn():
        z, (_, caches, _) = model.logits(x, update_running=False)
        return layers.softmax_xent(z, labels)[0], activation_pattern(caches)

    _, _, grads = model.loss_and_grads(x, labels, update_running=False,
                                       conv_backward=conv_backward)
    tensors = dict(model.params)
    if include_input:
        grads = dict(grads)
        grads["input"] = _input_grad(model, x, labels, conv_backward)
        tensors["input"] = x
    return check_tensors(loss_fn, tensors, grads, seed=seed, tolerance=tolerance,
                         max_samples=max_samples)


def _input_grad(model, x, labels, conv_backward):
    conv_backward = conv_backward or layers.conv2d_backward
    captured = {}

    def spy(dout, cache):
        dx, dw, db = conv_backward(dout, cache)
        captured["dx"] = dx  # first block runs last, so this ends as d(loss)/d(input)
        return dx, dw, db

    model.loss_and_grads(x, labels, update_running=False, conv_backward=spy)
    return captured["dx"]


def check_dense_fragment(n=4, d=12, k=5, seed=0, tolerance=1e-7) -> GradCheckReport:
    """Dense layer + softmax cross-entropy alone."""
    g = np.random.default_rng(seed)
    x = g.standard_normal((n, d))
    w = g.standard_normal((d, k)) * 0.5
    b = g.standard_normal(k) * 0.1
    y = g.integers(0, k, size=n)
    _, _, (dx, dw, db) = layers.dense_softmax_xent(x, w, b, y)
    tensors = {"x": x, "w": w, "b": b}

    def loss_fn():
        return layers.dense_softmax_xent(x, w, b, y)[0]

    return check_tensors(loss_fn, tensors, {"x": dx, "w": dw, "b": db}, seed=seed,
                         tolerance=tolerance)


def flipped_conv_backward(dout, cache):
    """Negative control: conv backward with the weight gradient's sign flipped."""
    dx, dw, db = layers.conv2d_backward(dout, cache)
    return dx, -dw, db


def toy_network(n_classes=8, input_shape=(1, 64, 64), batch=4, seed=0):
    """The full five-block architecture on a small random input, float64."""
    model = SpeakerModel.create(n_classes, input_shape, seed=seed, dtype=np.float64)
    g = np.random.default_rng(seed + 1)
    x = g.standard_normal((batch, *input_shape))
    y = g.integers(0, n_classes, size=batch)
    return model, x, y
