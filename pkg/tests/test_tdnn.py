import numpy as np
import pytest

from closurekit.errors import InvalidDims, NonFiniteLoss
from closurekit.tdnn import (Activation, TrainConfig, activate, checkpoint_bytes, flatten_grads,
                             forward, grid_search, init_mlp, load_checkpoint, loss_and_grad,
                             model_from_checkpoint, save_checkpoint, train)


def _fd_grad(model, Y, Z, wd, h=1e-6):
    base = model.get_params()
    g = np.empty_like(base)
    m = model.copy()
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = h
        m.set_params(base + e)
        lp = loss_and_grad(m, Y, Z, wd)[0]
        m.set_params(base - e)
        lm = loss_and_grad(m, Y, Z, wd)[0]
        g[i] = (lp - lm) / (2 * h)
    return g


@pytest.mark.parametrize("act", list(Activation))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_central_differences(act, seed):
    rng = np.random.default_rng(seed)
    dims = [int(rng.integers(2, 6)), int(rng.integers(3, 8)), int(rng.integers(3, 8)),
            int(rng.integers(1, 3))]
    model = init_mlp(dims, act, seed=seed, std=0.5)
    for b in model.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    Y = rng.normal(size=(20, dims[0]))
    Z = rng.normal(size=(20, dims[-1]))
    wd = 1e-3 * seed
    _, grads = loss_and_grad(model, Y, Z, wd)
    g = flatten_grads(grads)
    fd = _fd_grad(model, Y, Z, wd)
    rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-300)
    assert rel < 1e-5


def test_activation_derivatives():
    a = np.linspace(-2, 2, 9) + 0.01
    for kind in Activation:
        h = 1e-6
        fd = (activate(a + h, kind)[0] - activate(a - h, kind)[0]) / (2 * h)
        np.testing.assert_allclose(activate(a, kind)[1], fd, atol=1e-6)


def test_init_is_truncated_and_seeded():
    m = init_mlp([4, 16, 16, 1], seed=7, std=0.1)
    assert m.n_params == 4 * 16 + 16 + 16 * 16 + 16 + 16 + 1
    assert all(np.all(np.abs(W) <= 0.2) for W in m.weights)
    assert all(np.all(b == 0) for b in m.biases)
    np.testing.assert_array_equal(init_mlp([4, 16, 16, 1], seed=7).get_params(), m.get_params())
    with pytest.raises(InvalidDims):
        init_mlp([3])
    with pytest.raises(InvalidDims):
        forward(m, np.ones(3))


def _toy_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-1, 1, size=(n, 2))
    Z = (np.sin(Y[:, 0]) + 0.5 * Y[:, 1] ** 2)[:, None]
    return Y, Z


def test_training_reduces_loss_and_is_deterministic():
    Y, Z = _toy_data()
    cfg = TrainConfig(learning_rate=1e-2, batch_size=32, epochs=60, seed=3)
    m0 = init_mlp([2, 8, 8, 1], seed=1)
    m1, h1 = train(m0, Y, Z, cfg)
    m2, h2 = train(m0, Y, Z, cfg)
    Y_val, Z_val = Y[-40:], Z[-40:]
    mse0 = float(np.mean((forward(m0, Y_val) - Z_val) ** 2))
    assert h1.val_mse[-1] < 0.1 * mse0
    assert h1.val_mse[-1] == pytest.approx(float(np.mean((forward(m1, Y_val) - Z_val) ** 2)))
    np.testing.assert_array_equal(m1.get_params(), m2.get_params())
    assert h1.train_mse == h2.train_mse
    # the input model is untouched
    np.testing.assert_array_equal(m0.get_params(), init_mlp([2, 8, 8, 1], seed=1).get_params())
    assert h1.to_csv().splitlines()[0] == "epoch,train_mse,val_mse"


def test_normalized_training_predicts_in_original_units():
    Y, Z = _toy_data()
    Z = 1000.0 + 50.0 * Z
    cfg = TrainConfig(learning_rate=1e-2, batch_size=32, epochs=80, seed=0, normalize=True)
    m, _ = train(init_mlp([2, 8, 8, 1], seed=0), Y, Z, cfg)
    assert m.normalized
    pred = forward(m, Y)
    assert np.sqrt(np.mean((pred - Z) ** 2)) < 0.1 * Z.std()


def test_non_finite_loss_raises():
    Y, Z = _toy_data(50)
    Z[3] = np.inf
    with pytest.raises(NonFiniteLoss):
        train(init_mlp([2, 4, 1]), Y, Z, TrainConfig(epochs=2))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(weight_decay=-1.0)


def test_checkpoint_round_trip(tmp_path):
    Y, Z = _toy_data(100)
    m, _ = train(init_mlp([2, 5, 1], Activation.SELU, seed=2), Y, Z,
                 TrainConfig(epochs=3, normalize=True, learning_rate=1e-3))
    raw = checkpoint_bytes(m)
    back = model_from_checkpoint(raw)
    assert checkpoint_bytes(back) == raw
    np.testing.assert_array_equal(forward(back, Y), forward(m, Y))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, m)
    assert path.read_bytes() == raw
    np.testing.assert_array_equal(load_checkpoint(path).get_params(), m.get_params())
    with pytest.raises(ValueError):
        model_from_checkpoint(b"XXXXX" + raw[5:])


def test_grid_search_ranks_by_validation_mse():
    Y, Z = _toy_data(200)
    data = {0: (Y, Z), 1: (np.column_stack([Y, Y[:, :1]]), Z)}
    res = grid_search(data, hidden_units=(4, 8), activations=(Activation.TANH,),
                      config=TrainConfig(learning_rate=1e-2, batch_size=32, epochs=5))
    assert len(res) == 4
    vals = [r.val_mse for r in res]
    assert vals == sorted(vals)
    assert {(r.p, r.hidden) for r in res} == {(0, 4), (0, 8), (1, 4), (1, 8)}
    assert res[0].summary()["activation"] == "tanh"
