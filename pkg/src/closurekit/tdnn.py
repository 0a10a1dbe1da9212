"""Time-delay feedforward networks for closure dynamics.

A network with layer widths ``[n0, n1, ..., nL]`` computes

    eta^0 = y,   eta^l = sigma(theta_l eta^{l-1} + b_l)  (l < L),
    G(y)  = theta_L eta^{L-1} + b_L                       (linear output).

Training minimises ``(1/n) sum_j ||z^j - G(y^j)||^2 + lam sum_l ||theta_l||_F^2``
(biases are not decayed) with Adam over shuffled mini-batches; the last
``validation_fraction`` of the rows, in temporal order, is held out.

Optionally inputs and outputs are z-scored with statistics from the fitting
rows; the statistics live on the model so :func:`forward` always works in the
original units.
"""

import json
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import truncnorm

from .errors import InvalidDims, NonFiniteLoss
from .io import atomic_write, table_to_csv

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
CHECKPOINT_MAGIC = b"CFNN1"


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    SELU = "selu"


def activate(a, kind):
    """Return ``(sigma(a), sigma'(a))``."""
    kind = Activation(kind)
    if kind is Activation.TANH:
        t = np.tanh(a)
        return t, 1.0 - t * t
    if kind is Activation.RELU:
        return np.maximum(a, 0.0), (a > 0).astype(float)
    neg = SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(a, 0.0))
    return (np.where(a > 0, SELU_SCALE * a, neg - SELU_SCALE * SELU_ALPHA),
            np.where(a > 0, SELU_SCALE, neg))


@dataclass
class MlpModel:
    layer_dims: list
    activation: Activation
    weights: list
    biases: list
    x_shift: np.ndarray = None
    x_scale: np.ndarray = None
    y_shift: np.ndarray = None
    y_scale: np.ndarray = None

    def __post_init__(self):
        self.activation = Activation(self.activation)
        self.layer_dims = [int(n) for n in self.layer_dims]
        _check_dims(self.layer_dims)
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[l + 1], self.layer_dims[l]) or \
                    b.shape != (self.layer_dims[l + 1],):
                raise InvalidDims(f"layer {l} parameters do not match dims {self.layer_dims}")

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def normalized(self):
        return self.x_shift is not None

    def get_params(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in
                               zip(self.weights, self.biases)])

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise InvalidDims(f"expected {self.n_params} parameters, got {flat.size}")
        pos = 0
        for l in range(len(self.weights)):
            W = self.weights[l]
            self.weights[l] = flat[pos:pos + W.size].reshape(W.shape).copy()
            pos += W.size
            self.biases[l] = flat[pos:pos + W.shape[0]].copy()
            pos += W.shape[0]

    def copy(self):
        cp = lambda a: None if a is None else np.array(a, dtype=float)
        return MlpModel(list(self.layer_dims), self.activation,
                        [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        cp(self.x_shift), cp(self.x_scale), cp(self.y_shift), cp(self.y_scale))


def _check_dims(dims):
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise InvalidDims(f"layer dims must be >= 2 positive widths, got {dims}")


def init_mlp(layer_dims, activation=Activation.TANH, seed=0, std=0.1):
    """Truncated-normal weights (``N(0, std^2)`` cut at ``+-2 std``), zero biases."""
    dims = [int(n) for n in layer_dims]
    _check_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        W = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=(n_out, n_in), random_state=rng)
        weights.append(np.asarray(W, dtype=float).reshape(n_out, n_in))
        biases.append(np.zeros(n_out))
    return MlpModel(dims, Activation(activation), weights, biases)


def _network(model, Y):
    """Raw network pass on already normalised inputs."""
    a = Y
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W.T + b
        if l < last:
            a = activate(a, model.activation)[0]
    return a


def forward(model, Y):
    """Evaluate ``G`` on one input vector or a batch of rows (original units)."""
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != model.layer_dims[0]:
        raise InvalidDims(f"input width {Y.shape[1]} != {model.layer_dims[0]}")
    if model.normalized:
        Y = (Y - model.x_shift) / model.x_scale
    out = _network(model, Y)
    if model.normalized:
        out = out * model.y_scale + model.y_shift
    return out[0] if single else out


def loss_and_grad(model, Y, Z, weight_decay=0.0):
    """Loss and gradient in network units (no normalisation is applied here).

    Returns
    -------
    loss : float
    grads : list of ``(dW, db)`` per layer
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.asarray(Z, dtype=float).reshape(Y.shape[0], -1)
    n = Y.shape[0]
    acts = [Y]
    derivs = []
    a = Y
    L = len(model.weights)
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        pre = a @ W.T + b
        if l < L - 1:
            a, d = activate(pre, model.activation)
            derivs.append(d)
        else:
            a = pre
        acts.append(a)
    resid = acts[-1] - Z
    loss = float(np.sum(resid * resid)) / n
    loss += weight_decay * sum(float(np.sum(W * W)) for W in model.weights)
    grads = [None] * L
    g = 2.0 * resid / n
    for l in range(L - 1, -1, -1):
        W = model.weights[l]
        dW = g.T @ acts[l] + 2.0 * weight_decay * W
        db = g.sum(axis=0)
        grads[l] = (dW, db)
        if l > 0:
            g = (g @ W) * derivs[l - 1]
    return loss, grads


def flatten_grads(grads):
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, n, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 1000
    weight_decay: float = 0.0
    validation_fraction: float = 0.1
    seed: int = 0
    normalize: bool = False
    init_std: float = 0.1

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.epochs > 0):
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)

    def to_csv(self):
        return table_to_csv(["epoch", "train_mse", "val_mse"],
                            ((e + 1, a, b) for e, (a, b) in
                             enumerate(zip(self.train_mse, self.val_mse))))


def _zscore(A):
    shift = A.mean(axis=0)
    scale = A.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def train(model, Y, Z, config):
    """Fit ``model`` to ``(Y, Z)`` with Adam; returns ``(model, history)``.

    The input model is not modified.  Reported MSEs are data terms (without
    weight decay) in network units, i.e. on z-scored targets when
    ``config.normalize`` is set.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.asarray(Z, dtype=float).reshape(Y.shape[0], -1)
    if Y.shape[1] != model.layer_dims[0] or Z.shape[1] != model.layer_dims[-1]:
        raise InvalidDims(f"data shapes {Y.shape}/{Z.shape} do not fit dims {model.layer_dims}")
    n_val = max(1, int(round(config.validation_fraction * Y.shape[0])))
    n_fit = Y.shape[0] - n_val
    if n_fit < 1:
        raise ValueError("not enough rows to hold out a validation set")
    model = model.copy()
    if config.normalize:
        model.x_shift, model.x_scale = _zscore(Y[:n_fit])
        model.y_shift, model.y_scale = _zscore(Z[:n_fit])
        Yn = (Y - model.x_shift) / model.x_scale
        Zn = (Z - model.y_shift) / model.y_scale
    else:
        model.x_shift = model.x_scale = model.y_shift = model.y_scale = None
        Yn, Zn = Y, Z
    Y_fit, Z_fit = Yn[:n_fit], Zn[:n_fit]
    Y_val, Z_val = Yn[n_fit:], Zn[n_fit:]

    rng = np.random.default_rng(config.seed)
    params = model.get_params()
    opt = Adam(params.size, lr=config.learning_rate)
    hist = TrainHistory()
    bs = config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(n_fit)
        for start in range(0, n_fit, bs):
            rows = order[start:start + bs]
            loss, grads = loss_and_grad(model, Y_fit[rows], Z_fit[rows], config.weight_decay)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss in epoch {epoch}", epoch=epoch)
            params = opt.step(params, flatten_grads(grads))
            model.set_params(params)
        tr = _data_mse(model, Y_fit, Z_fit)
        va = _data_mse(model, Y_val, Z_val)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise NonFiniteLoss(f"non-finite loss in epoch {epoch}", epoch=epoch)
        hist.train_mse.append(tr)
        hist.val_mse.append(va)
    return model, hist


def _data_mse(model, Y, Z):
    r = _network(model, Y) - Z
    return float(np.sum(r * r)) / Y.shape[0]


@dataclass
class GridResult:
    p: int
    hidden: int
    activation: Activation
    val_mse: float
    n_params: int
    model: MlpModel = None
    history: TrainHistory = None
    error: str = None

    def summary(self):
        return {"p": self.p, "hidden": self.hidden, "activation": Activation(self.activation).value,
                "val_mse": self.val_mse, "n_params": self.n_params, "error": self.error}


def grid_search(data_by_p, hidden_units=(4, 8, 12, 16),
                activations=(Activation.RELU, Activation.SELU, Activation.TANH),
                config=None, n_hidden_layers=2):
    """Train every ``(p, width, activation)`` candidate and rank them.

    Parameters
    ----------
    data_by_p : dict
        ``p -> (Y, Z)`` training rows for that delay count.
    config : TrainConfig
        Shared settings; candidate ``i`` uses seed ``config.seed + i``.

    Returns
    -------
    list of GridResult
        Sorted by final validation MSE, then parameter count, then the fixed
        enumeration order.  Failed candidates carry ``error`` and rank last.
    """
    config = TrainConfig() if config is None else config
    results = []
    i = 0
    for p in sorted(data_by_p):
        Y, Z = data_by_p[p]
        Y = np.atleast_2d(Y)
        Z = np.asarray(Z).reshape(Y.shape[0], -1)
        for width in hidden_units:
            for act in activations:
                dims = [Y.shape[1]] + [width] * n_hidden_layers + [Z.shape[1]]
                cfg = TrainConfig(**{**asdict(config), "seed": config.seed + i})
                try:
                    m0 = init_mlp(dims, act, cfg.seed, cfg.init_std)
                    m, h = train(m0, Y, Z, cfg)
                    results.append(GridResult(p, width, Activation(act), h.val_mse[-1],
                                              m.n_params, m, h))
                except (NonFiniteLoss, FloatingPointError, ValueError) as exc:
                    n_params = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
                    results.append(GridResult(p, width, Activation(act), float("inf"),
                                              n_params, error=str(exc)))
                results[-1].order = i
                i += 1
    results.sort(key=lambda r: (r.val_mse, r.n_params, r.order))
    return results


def checkpoint_bytes(model):
    header = {
        "layer_dims": model.layer_dims,
        "activation": model.activation.value,
        "normalization": None if not model.normalized else {
            "x_shift": model.x_shift.tolist(), "x_scale": model.x_scale.tolist(),
            "y_shift": model.y_shift.tolist(), "y_scale": model.y_scale.tolist(),
        },
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = model.get_params().astype("<f8").tobytes()
    return CHECKPOINT_MAGIC + struct.pack("<I", len(head)) + head + blob


def model_from_checkpoint(raw):
    if raw[:5] != CHECKPOINT_MAGIC:
        raise ValueError("not a CFNN1 checkpoint")
    (n,) = struct.unpack_from("<I", raw, 5)
    header = json.loads(raw[9:9 + n].decode("utf-8"))
    params = np.frombuffer(raw, dtype="<f8", offset=9 + n).astype(float)
    model = init_mlp(header["layer_dims"], header["activation"], seed=0)
    model.set_params(params)
    norm = header["normalization"]
    if norm:
        for key in ("x_shift", "x_scale", "y_shift", "y_scale"):
            setattr(model, key, np.array(norm[key], dtype=float))
    return model


def save_checkpoint(path, model):
    atomic_write(path, checkpoint_bytes(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return model_from_checkpoint(fh.read())
