import numpy as np
import pytest

from paretoflow.flow import (
    FlowModel,
    FlowTrainConfig,
    fm_loss_batch,
    load_flow,
    reconstruction_curve,
    sample_ode,
    save_flow,
    train_flow,
)
from paretoflow.nn import DenseNetwork, TimeEmbedding
from tests.helpers import max_rel_err


def zero_field(d):
    net = DenseNetwork([d + 1, d], "identity", weights=[np.zeros((d, d + 1))], biases=[np.zeros(d)])
    return FlowModel(net, TimeEmbedding(), d)


@pytest.fixture(scope="module")
def gaussian_flow():
    rng = np.random.default_rng(0)
    data = rng.normal(0.5, 0.1, (2000, 1))
    cfg = FlowTrainConfig(hidden=(64, 64, 64), epochs=300, batch_size=128)
    model, hist = train_flow(data, cfg, seed=0)
    return data, model, hist


def test_loss_of_zero_field():
    loss, _ = fm_loss_batch(zero_field(1), [[1.0]], t=[0.5], x0=[[0.0]])
    assert loss == 1.0


def test_cheating_field_has_zero_loss():
    # v(x, t) = (x - x0) / t equals x1 - x0 on the path; build it for one fixed pair
    x0 = np.array([[0.3, -0.2]])
    x1 = np.array([[1.0, 2.0]])
    t = 0.25
    # linear net on input [x, t]: v = (x - x0)/t with t fixed -> weights 1/t on x, bias -x0/t
    w = np.hstack([np.eye(2) / t, np.zeros((2, 1))])
    model = FlowModel(DenseNetwork([3, 2], "identity", weights=[w], biases=[-x0[0] / t]), TimeEmbedding(), 2)
    loss, _ = fm_loss_batch(model, x1, t=[t], x0=x0)
    assert loss == pytest.approx(0.0, abs=1e-24)
    x_t = (1 - t) * x0 + t * x1
    np.testing.assert_allclose(model.estimate_x1(x_t, t), x1, atol=1e-14)


def test_fm_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    model = FlowModel.initialize(3, FlowTrainConfig(hidden=(8, 8)), seed=2)
    x1 = rng.random((5, 3))
    t, x0 = rng.random(5), rng.standard_normal((5, 3))
    _, grads = fm_loss_batch(model, x1, t=t, x0=x0)
    fd = []
    h = 1e-5
    for p in model.net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = fm_loss_batch(model, x1, t=t, x0=x0)
            p[idx] = old - h
            down, _ = fm_loss_batch(model, x1, t=t, x0=x0)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        fd.append(g)
    assert max_rel_err(grads, fd) <= 1e-4


def test_fm_loss_batch_order_invariant():
    rng = np.random.default_rng(4)
    model = FlowModel.initialize(2, FlowTrainConfig(hidden=(8,)), seed=0)
    x1, t, x0 = rng.random((6, 2)), rng.random(6), rng.standard_normal((6, 2))
    perm = rng.permutation(6)
    a, _ = fm_loss_batch(model, x1, t=t, x0=x0)
    b, _ = fm_loss_batch(model, x1[perm], t=t[perm], x0=x0[perm])
    assert a == pytest.approx(b, rel=1e-14)


def test_empty_batch():
    with pytest.raises(ValueError):
        fm_loss_batch(zero_field(1), np.zeros((0, 1)), np.random.default_rng(0))


def test_estimate_x1_conventions():
    model = zero_field(2)
    x = np.array([[0.3, 0.7]])
    np.testing.assert_array_equal(model.estimate_x1(x, 0.4), x)
    trained = FlowModel.initialize(2, FlowTrainConfig(hidden=(4,)), seed=0)
    np.testing.assert_array_equal(trained.estimate_x1(x, 1.0), x)
    with pytest.raises(ValueError):
        trained.estimate_x1(x, 1.5)


def test_estimate_x1_vjp_matches_finite_differences():
    rng = np.random.default_rng(3)
    model = FlowModel.initialize(3, FlowTrainConfig(hidden=(8, 8)), seed=5)
    x, c, t = rng.normal(size=(1, 3)), rng.normal(size=3), 0.6
    g = model.estimate_x1_vjp(x, t, c[None, :])[0]
    fd = np.zeros(3)
    for i in range(3):
        e = np.zeros((1, 3))
        e[0, i] = 1e-5
        fd[i] = (c @ model.estimate_x1(x + e, t)[0] - c @ model.estimate_x1(x - e, t)[0]) / 2e-5
    assert max_rel_err([g], [fd]) <= 1e-4


def test_sinusoidal_embedding_model():
    cfg = FlowTrainConfig(hidden=(8,), epochs=2, batch_size=16, embedding="sinusoidal", embedding_dim=6)
    model, hist = train_flow(np.random.default_rng(0).random((40, 2)), cfg, seed=1)
    assert model.net.in_dim == 8 and len(hist.train_loss) == 2


def test_zero_epochs_returns_initial_model():
    cfg = FlowTrainConfig(hidden=(8,), epochs=0)
    model, hist = train_flow(np.zeros((10, 2)), cfg, seed=3)
    fresh = FlowModel.initialize(2, cfg, seed=3)
    assert hist.train_loss == []
    assert all(np.array_equal(a, b) for a, b in zip(model.net.parameters(), fresh.net.parameters()))


def test_training_is_deterministic():
    data = np.random.default_rng(2).random((64, 2))
    cfg = FlowTrainConfig(hidden=(8, 8), epochs=5, batch_size=16)
    _, h1 = train_flow(data, cfg, seed=7)
    _, h2 = train_flow(data, cfg, seed=7)
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss


def test_invalid_config():
    with pytest.raises(ValueError):
        FlowTrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        FlowTrainConfig(val_fraction=1.0)


def test_gaussian_samples_match_target(gaussian_flow):
    _, model, hist = gaussian_flow
    assert len(hist.train_loss) <= 300 and hist.best_epoch is not None
    samples = sample_ode(model, 2000, 100, seed=1)
    assert abs(samples.mean() - 0.5) <= 0.05
    assert abs(samples.std() - 0.1) <= 0.05


def test_reconstruction_improves_with_t(gaussian_flow):
    data, model, _ = gaussian_flow
    (_, early), (_, late) = reconstruction_curve(model, data, [0.2, 0.9], n_pairs=500, seed=0)
    assert late < early


def test_flow_checkpoint_roundtrip(tmp_path, gaussian_flow):
    _, model, hist = gaussian_flow
    path = save_flow(tmp_path / "flow.npz", model, FlowTrainConfig(hidden=(64, 64, 64)), 0, hist)
    back, meta = load_flow(path)
    x = np.linspace(-1, 1, 7)[:, None]
    assert np.array_equal(back.velocity(x, 0.3), model.velocity(x, 0.3))
    assert meta["data_dim"] == 1 and meta["history"]["train_loss"] == hist.train_loss
