import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from target_har.classifier import layers as L
from target_har.classifier import network
from target_har.classifier.metrics import Metrics, confusion_matrix
from target_har.classifier.network import NetworkSpec
from target_har.classifier.optim import AdamState, adam_step
from target_har.classifier.training import TrainConfig, evaluate, gradient_check, train
from target_har.ingest import SchemaError

TINY = NetworkSpec(in_channels=6, height=8, width=8, block_filters=(3, 4), num_classes=5)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        plus = f()
        x[i] = orig - eps
        minus = f()
        x[i] = orig
        g[i] = (plus - minus) / (2 * eps)
    return g


def conv_oracle(x, w, b, stride):
    """Direct loops over output pixels with explicit zero padding."""
    n, h, wd, cin = x.shape
    ho, wo = -(-h // stride), -(-wd // stride)
    out = np.zeros((n, ho, wo, w.shape[-1]))
    for i in range(ho):
        for j in range(wo):
            for di in range(3):
                for dj in range(3):
                    y, xx = i * stride + di - 1, j * stride + dj - 1
                    if 0 <= y < h and 0 <= xx < wd:
                        out[:, i, j, :] += x[:, y, xx, :] @ w[di, dj]
    return out + b


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("size", [(5, 7), (6, 6)])
def test_conv_forward_matches_loops(stride, size):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, *size, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    out, _ = L.conv3x3_forward(x, w, b, stride)
    np.testing.assert_allclose(out, conv_oracle(x, w, b, stride), atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_matches_finite_differences(stride):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 6, 2))
    w = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    probe = rng.normal(size=L.conv3x3_forward(x, w, b, stride)[0].shape)

    def f():
        return float((L.conv3x3_forward(x, w, b, stride)[0] * probe).sum())

    _, cache = L.conv3x3_forward(x, w, b, stride)
    dx, dw, db = L.conv3x3_backward(probe, cache)
    np.testing.assert_allclose(dx, numeric_grad(f, x), atol=1e-6)
    np.testing.assert_allclose(dw, numeric_grad(f, w), atol=1e-6)
    np.testing.assert_allclose(db, numeric_grad(f, b), atol=1e-6)


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_backward(train):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 2, 2, 4))
    gamma, beta = rng.normal(size=4), rng.normal(size=4)
    rm, rv = rng.normal(size=4), rng.uniform(0.5, 2, size=4)
    probe = rng.normal(size=x.shape)

    def f():
        return float((L.batchnorm_forward(x, gamma, beta, rm, rv, train)[0] * probe).sum())

    _, cache, _, _ = L.batchnorm_forward(x, gamma, beta, rm, rv, train)
    dx, dg, dbeta = L.batchnorm_backward(probe, cache)
    np.testing.assert_allclose(dx, numeric_grad(f, x), atol=1e-6)
    np.testing.assert_allclose(dg, numeric_grad(f, gamma), atol=1e-6)
    np.testing.assert_allclose(dbeta, numeric_grad(f, beta), atol=1e-6)


def test_batchnorm_running_update_uses_biased_variance():
    x = np.arange(8, dtype=float).reshape(8, 1)
    _, _, mean, var = L.batchnorm_forward(x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), True, momentum=0.9)
    assert mean[0] == pytest.approx(0.1 * 3.5)
    assert var[0] == pytest.approx(0.9 + 0.1 * np.var(np.arange(8)))


def test_softmax_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 5))
    labels = np.array([0, 3, 4, 1])
    _, grad = L.softmax_cross_entropy(logits, labels)
    np.testing.assert_allclose(grad, numeric_grad(lambda: L.softmax_cross_entropy(logits, labels)[0], logits), atol=1e-8)


def test_softmax_stable_for_large_logits():
    p = L.softmax(np.array([[1000.0, 0.0, -1000.0]]))
    assert np.isfinite(p).all() and p[0, 0] == pytest.approx(1.0)


def test_dropout_is_inverted_and_seeded():
    x = np.ones((200, 200))
    out, mask = L.dropout_forward(x, 0.3, np.random.default_rng(0), True)
    assert out.mean() == pytest.approx(1.0, abs=0.02)
    again, _ = L.dropout_forward(x, 0.3, np.random.default_rng(0), True)
    np.testing.assert_array_equal(out, again)
    same, none = L.dropout_forward(x, 0.3, np.random.default_rng(0), False)
    assert none is None and same is x


def test_default_architecture_sizes():
    spec = NetworkSpec()
    assert spec.feature_size() == (34, 60)
    assert NetworkSpec(height=34, width=60).feature_size() == (9, 15)
    assert NetworkSpec(height=34, width=60).num_params() == 1_084_165


def test_forward_rejects_wrong_shape():
    model = network.init_params(TINY, 0)
    with pytest.raises(ValueError, match="does not match"):
        network.forward(model, np.zeros((1, 5, 8, 8)))


def test_full_network_gradient_check():
    report = gradient_check(TINY, batch_size=3, seed=4)
    assert max(report.values()) < 1e-4
    report = gradient_check(TINY, batch_size=3, seed=4, train=False)
    assert max(report.values()) < 1e-4


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, -3.0])}
    new, state = adam_step(params, grads, AdamState(), lr=0.1)
    # Bias-corrected first step is lr * g / (|g| + eps).
    np.testing.assert_allclose(new["w"], [0.9, -1.9], atol=1e-7)
    assert state.step == 1


def test_adam_matches_hand_recursion():
    rng = np.random.default_rng(5)
    p = rng.normal(size=3)
    params = {"p": p.copy()}
    state = AdamState()
    m = v = np.zeros(3)
    for t in range(1, 6):
        g = rng.normal(size=3)
        params, state = adam_step(params, {"p": g}, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        p = p - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(params["p"], p, atol=1e-12)


def test_checkpoint_round_trip():
    model = network.init_params(TINY, 3)
    back = network.load_checkpoint(network.save_checkpoint(model))
    assert back.spec == TINY
    for k in model.params:
        np.testing.assert_array_equal(back.params[k], model.params[k])
    with pytest.raises(SchemaError):
        network.load_checkpoint(b"XXXX" + network.save_checkpoint(model)[4:])


def _toy_data(n, seed):
    """Class k lights up channel k: trivially separable."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 5
    x = rng.random((n, 6, 8, 8)).astype(np.float32) * 0.2
    for i, k in enumerate(y):
        x[i, k] += 0.8
    return x, y


def test_training_learns_toy_task_and_is_deterministic():
    x, y = _toy_data(100, 0)
    vx, vy = _toy_data(50, 1)
    spec = NetworkSpec(in_channels=6, height=8, width=8, block_filters=(8, 8), num_classes=5)
    cfg = TrainConfig(lr=0.01, batch_size=20, epochs=8, seed=7, bn_recalibration=100)
    model, hist = train(x, y, vx, vy, spec, cfg)
    assert evaluate(model, vx, vy).accuracy >= 0.9
    model2, hist2 = train(x, y, vx, vy, spec, cfg)
    assert [(h.train_loss, h.val_accuracy) for h in hist] == [(h.train_loss, h.val_accuracy) for h in hist2]
    assert network.save_checkpoint(model) == network.save_checkpoint(model2)


def test_recalibrate_bn_matches_population_statistics():
    rng = np.random.default_rng(6)
    model = network.init_params(TINY, 2, dtype=np.float64)
    x = rng.random((30, 6, 8, 8))
    out = network.recalibrate_bn(model, x, chunk=7)
    # conv1 sees the raw input, so its statistics are computable directly.
    h = np.maximum(L.conv3x3_forward(x.transpose(0, 2, 3, 1), model.params["conv1.w"], model.params["conv1.b"], 2)[0], 0)
    np.testing.assert_allclose(out.running["conv1.mean"], h.mean(axis=(0, 1, 2)), atol=1e-12)
    np.testing.assert_allclose(out.running["conv1.var"], h.var(axis=(0, 1, 2)), atol=1e-12)
    # With recalibrated stats, eval mode on the whole set equals train mode with dropout off.
    nodrop = network.Model(network.NetworkSpec(**{**TINY.__dict__, "dropout": 0.0}), out.params, out.running)
    np.testing.assert_allclose(
        network.forward(nodrop, x, train=True)[0], network.forward(out, x, train=False)[0], atol=1e-4
    )


def test_zero_learning_rate_keeps_weights():
    x, y = _toy_data(40, 0)
    cfg = TrainConfig(lr=0.0, batch_size=20, epochs=2, seed=1, sigma_aug=0.0)
    model, _ = train(x, y, x, y, TINY, cfg)
    init = network.init_params(TINY, np.random.default_rng(1).integers(0, 2**63 - 1, size=4)[0])
    for k in init.params:
        np.testing.assert_array_equal(model.params[k], init.params[k])


def test_stop_at_accuracy_ends_early():
    x, y = _toy_data(100, 0)
    cfg = TrainConfig(batch_size=20, epochs=20, seed=7, stop_at_accuracy=0.5)
    _, hist = train(x, y, x, y, TINY, cfg)
    assert len(hist) < 20
    assert hist[-1].val_accuracy >= 0.5


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), max_size=50))
def test_confusion_matrix_counts(pairs):
    true = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    cm = confusion_matrix(true, pred)
    for t in range(5):
        for p in range(5):
            assert cm[t, p] == sum(1 for a, b in pairs if a == t and b == p)
    m = Metrics(cm)
    expected = sum(a == b for a, b in pairs) / len(pairs) if pairs else 0.0
    assert m.accuracy == pytest.approx(expected)
