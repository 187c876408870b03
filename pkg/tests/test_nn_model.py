import numpy as np
import pytest

from cochsid.nn import (OptimizerState, SpeakerModel, load_model, predict, predict_batch,
                        save_model, sgdm_step, train)
from cochsid.nn.gradcheck import (check_dense_fragment, check_model, flipped_conv_backward,
                                  toy_network)
from cochsid.nn.model import spatial_after_blocks
from cochsid.nn.optim import decays
from cochsid.nn.serialize import ModelFormatError, model_from_bytes, model_to_bytes, read_header
from cochsid.nn.train import write_training_log


def separable_toy(shape=(64, 64)):
    x = np.concatenate([np.full((8, *shape), 0.2), np.full((8, *shape), 0.8)])
    return x, np.repeat([0, 1], 8)


@pytest.fixture(scope="module")
def converged_toy():
    x, y = separable_toy()
    model = SpeakerModel.create(2, (1, 64, 64), seed=0)
    model, log = train(model, x, y, epochs=8, batch_size=16, seed=0,
                       optimizer=OptimizerState(learning_rate=1e-2))
    return model, log, x, y


# ---------------------------------------------------------------- architecture

def test_parameter_shapes():
    m = SpeakerModel.create(10, (1, 100, 80), seed=0)
    assert m.params["conv0.w"].shape == (8, 1, 3, 3)
    assert m.params["conv2.w"].shape == (16, 8, 3, 3)
    assert m.params["conv4.w"].shape == (32, 32, 3, 3)
    c, h, w = m.feature_shape
    assert (c, h, w) == (32, 2, 1)  # 100 -> 49 -> 24 -> 11 -> 5 -> 2, 80 -> 39 -> 19 -> 9 -> 4 -> 1
    assert m.params["dense.w"].shape == (c * h * w, 10)


def test_logits_shape_and_simplex():
    m = SpeakerModel.create(5, (1, 64, 64), seed=1).eval()
    x = np.random.default_rng(0).standard_normal((3, 64, 64))
    z, _ = m.logits(x, update_running=False)
    assert z.shape == (3, 5)
    p = m.predict_proba(x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_input_too_small_or_too_few_speakers():
    with pytest.raises(ValueError):
        SpeakerModel.create(4, (1, 40, 32))
    with pytest.raises(ValueError):
        SpeakerModel.create(1, (1, 64, 64))
    with pytest.raises(ValueError):
        spatial_after_blocks(2, 100, 1)


def test_same_seed_same_init():
    a = model_to_bytes(SpeakerModel.create(3, (1, 64, 64), seed=9))
    b = model_to_bytes(SpeakerModel.create(3, (1, 64, 64), seed=9))
    c = model_to_bytes(SpeakerModel.create(3, (1, 64, 64), seed=10))
    assert a == b and a != c


# ---------------------------------------------------------------- optimizer

def test_plain_sgd_reduction():
    p = {"conv0.w": np.array([1.0, -2.0])}
    g = {"conv0.w": np.array([0.5, 0.25])}
    sgdm_step(p, g, OptimizerState(learning_rate=0.1, momentum=0.0, l2_lambda=0.0))
    np.testing.assert_allclose(p["conv0.w"], [0.95, -2.025], rtol=1e-15)


def test_zero_gradient_leaves_params():
    p = {"dense.b": np.array([3.0, 4.0])}
    sgdm_step(p, {"dense.b": np.zeros(2)}, OptimizerState(l2_lambda=0.0))
    np.testing.assert_array_equal(p["dense.b"], [3.0, 4.0])


def test_two_step_hand_trace():
    # v1 = -lr g; p1 = p0 - lr g; v2 = -0.9 lr g - lr g; p2 = p0 - 2.9 lr g
    lr, g0 = 0.01, 2.0
    p = {"conv1.w": np.array([1.0])}
    st = OptimizerState(learning_rate=lr, momentum=0.9, l2_lambda=0.0)
    for _ in range(2):
        sgdm_step(p, {"conv1.w": np.array([g0])}, st)
    assert p["conv1.w"][0] == pytest.approx(1.0 - 2.9 * lr * g0, abs=1e-15)


def test_l2_applies_to_biases_not_batchnorm():
    st = OptimizerState(learning_rate=0.1, momentum=0.0, l2_lambda=0.5)
    p = {"conv0.b": np.array([2.0]), "bn0.gamma": np.array([2.0])}
    sgdm_step(p, {"conv0.b": np.zeros(1), "bn0.gamma": np.zeros(1)}, st)
    assert p["conv0.b"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)
    assert p["bn0.gamma"][0] == 2.0
    assert decays("dense.w") and not decays("bn3.beta")


def test_optimizer_validation_and_shape_mismatch():
    with pytest.raises(ValueError):
        OptimizerState(learning_rate=0)
    with pytest.raises(ValueError):
        OptimizerState(momentum=1.0)
    with pytest.raises(ValueError):
        sgdm_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState())


# ---------------------------------------------------------------- training

def test_separable_toy_reaches_full_train_accuracy():
    x, y = separable_toy()
    model = SpeakerModel.create(2, (1, 64, 64), seed=0)
    _, log = train(model, x, y, epochs=5, seed=0)
    assert max(e.train_acc for e in log) == 1.0


def test_toy_loss_non_increasing_after_epoch_two(converged_toy):
    _, log, _, _ = converged_toy
    losses = [e.loss for e in log]
    assert all(b <= a for a, b in zip(losses[1:], losses[2:]))
    assert log[-1].train_acc == 1.0


def test_predict_recovers_training_labels(converged_toy):
    model, _, x, y = converged_toy
    for img, label in zip(x[[0, 7, 8, 15]], y[[0, 7, 8, 15]]):
        k, probs = predict(model, img)
        assert k == label
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(predict_batch(model, x).argmax(axis=1), y)


def test_predict_requires_infer_mode_and_matching_dims(converged_toy):
    model, _, x, _ = converged_toy
    with pytest.raises(ValueError, match="input dims"):
        predict(model, np.zeros((32, 32)))
    model.train()
    try:
        with pytest.raises(ValueError, match="infer mode"):
            predict(model, x[0])
    finally:
        model.eval()


def test_zero_epochs_returns_init():
    x, y = separable_toy()
    model = SpeakerModel.create(2, (1, 64, 64), seed=3)
    before = model_to_bytes(model)
    model, log = train(model, x, y, epochs=0)
    assert log == [] and model_to_bytes(model) == before and not model.train_mode


def test_training_is_deterministic():
    x, y = separable_toy()
    runs = []
    for _ in range(2):
        m = SpeakerModel.create(2, (1, 64, 64), seed=4)
        train(m, x, y, epochs=2, batch_size=5, seed=11)
        runs.append(model_to_bytes(m))
    assert runs[0] == runs[1]


def test_training_errors():
    m = SpeakerModel.create(2, (1, 64, 64))
    with pytest.raises(ValueError, match="empty"):
        train(m, np.zeros((0, 64, 64)), [])
    with pytest.raises(ValueError, match="inconsistent"):
        train(m, np.zeros((2, 32, 32)), [0, 1])
    with pytest.raises(ValueError, match="2 classes"):
        train(m, np.zeros((2, 64, 64)), [1, 1])


def test_training_log_csv(tmp_path, converged_toy):
    _, log, _, _ = converged_toy
    p = tmp_path / "log.csv"
    write_training_log(log, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc" and len(lines) == len(log) + 1
    assert lines[-1].startswith(f"{len(log)},")


# ---------------------------------------------------------------- serialization

def test_round_trip_predictions_bit_identical(tmp_path, converged_toy):
    model, _, x, _ = converged_toy
    p = tmp_path / "m.cspk"
    save_model(model, p)
    back = load_model(p)
    np.testing.assert_array_equal(predict_batch(back, x), predict_batch(model, x))
    assert p.read_bytes() == model_to_bytes(back)


def test_header_reports_speakers():
    buf = model_to_bytes(SpeakerModel.create(10, (1, 100, 80)))
    hdr = read_header(buf)
    assert hdr["n_speakers"] == 10
    assert hdr["input_shape"] == (1, 100, 80) and hdr["blocks"] == (8, 8, 16, 32, 32)


@pytest.mark.parametrize("mangle,msg", [
    (lambda b: b[:-3], "truncated"),
    (lambda b: b[:10], "truncated"),
    (lambda b: b"XXXX" + b[4:], "not a CSPK"),
    (lambda b: b[:4] + b"\x09\x00" + b[6:], "version"),
    (lambda b: b + b"\x00", "trailing"),
])
def test_corrupt_files_rejected(mangle, msg):
    buf = model_to_bytes(SpeakerModel.create(3, (1, 64, 64)))
    with pytest.raises(ModelFormatError, match=msg):
        model_from_bytes(mangle(buf))


def test_shape_mismatch_rejected():
    buf = bytearray(model_to_bytes(SpeakerModel.create(3, (1, 64, 64))))
    # first tensor is conv0.w (8,1,3,3); its leading dim sits after the header and ndim byte
    off = read_header(bytes(buf))["_offset"] + 4 + 1
    buf[off:off + 4] = (7).to_bytes(4, "little")
    with pytest.raises(ModelFormatError, match="shape mismatch"):
        model_from_bytes(bytes(buf))


# ---------------------------------------------------------------- gradient checks

def test_dense_fragment_check():
    rep = check_dense_fragment()
    assert rep.passed and rep.max_rel_error < 1e-7


def test_full_network_check_small_sample():
    model, x, y = toy_network(n_classes=4, batch=2)
    rep = check_model(model, x, y, max_samples=8, include_input=True)
    assert set(rep.per_tensor) == set(model.params) | {"input"}
    assert rep.passed, "\n".join(rep.lines())


def test_sign_flipped_conv_backward_is_caught():
    model, x, y = toy_network(n_classes=4, batch=2)
    rep = check_model(model, x, y, max_samples=8, conv_backward=flipped_conv_backward)
    assert not rep.passed
    assert any(err > 1.0 for name, err in rep.per_tensor.items() if name.endswith(".w")
               and name.startswith("conv"))


def test_gradcheck_requires_double():
    model = SpeakerModel.create(2, (1, 64, 64))
    with pytest.raises(ValueError, match="float64"):
        check_model(model, np.zeros((2, 1, 64, 64)), [0, 1])
