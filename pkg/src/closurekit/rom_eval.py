"""Augmented reduced models with a learned closure: free runs and error metrics.

The augmented model advances the resolved state and the closure together::

    x^{n+1} = x^n + dt (F_hat(x^n, 0) + d^n)
    d^{n+1} = d^n + dt G(y^n)

where ``y^n`` is the delay row built from the last ``p + 1`` states and
closures (see :mod:`closurekit.closure_data`).  A free run starts from ``p + 1``
exact history pairs and never looks at the truth again.
"""

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .closure_data import FeatureLayout, delay_vector
from .errors import NonFiniteState
from .features import PolyLayout
from .io import table_to_csv
from .sparse_regression import SparsePolyModel
from .systems import BLOWUP_THRESHOLD
from .tdnn import MlpModel, forward


class ClosureLayout(str, Enum):
    FULL = "full"
    ECONOMIC = "economic"
    REDUCED = "reduced"


class ClosureOperator:
    """A fitted closure ``G`` together with the delay layout it consumes.

    Parameters
    ----------
    model : SparsePolyModel or MlpModel
    p : int
        Number of delays.
    layout : ClosureLayout, optional
        Inferred from a polynomial model's feature map when omitted; neural
        models default to the economic layout.
    """

    def __init__(self, model, p, layout=None):
        self.model = model
        self.p = int(p)
        if isinstance(model, SparsePolyModel):
            fm = model.feature_map
            if fm.p != self.p:
                raise ValueError(f"model was built for p={fm.p}, not p={self.p}")
            inferred = ClosureLayout(fm.layout.value)
            if layout is not None and ClosureLayout(layout) is not inferred:
                raise ValueError(f"polynomial model uses the {inferred.value} layout")
            self.layout = inferred
            self.q = model.q
            self.input_width = fm.input_width
        elif isinstance(model, MlpModel):
            self.layout = ClosureLayout(layout or ClosureLayout.ECONOMIC)
            if self.layout is ClosureLayout.REDUCED:
                raise ValueError("neural closures take full or economic delay rows")
            self.q = model.layer_dims[-1]
            self.input_width = model.layer_dims[0]
        else:
            raise TypeError(f"unsupported closure model {type(model).__name__}")
        expected = (2 * (1 + self.p) * self.q if self.row_layout is FeatureLayout.FULL
                    else (2 + self.p) * self.q)
        if self.input_width != expected:
            raise ValueError(f"model input width {self.input_width} does not match "
                             f"the {self.layout.value} layout ({expected})")

    @property
    def kind(self):
        return "polynomial" if isinstance(self.model, SparsePolyModel) else "neural"

    @property
    def row_layout(self):
        if self.layout is ClosureLayout.ECONOMIC:
            return FeatureLayout.ECONOMIC
        return FeatureLayout.FULL

    def __call__(self, Y):
        """Evaluate ``G`` on one delay row or a matrix of rows."""
        if isinstance(self.model, SparsePolyModel):
            return self.model.predict(Y)
        return forward(self.model, Y)


def poly_closure(feature_map, W, lam=0.0):
    """Convenience: a :class:`ClosureOperator` from explicit polynomial coefficients."""
    model = SparsePolyModel(feature_map, W, lam)
    return ClosureOperator(model, feature_map.p, PolyLayout(feature_map.layout).value)


@dataclass
class AugmentedROM:
    resolved_rhs: object
    closure: ClosureOperator
    dt: float


@dataclass
class FreeRun:
    """Free-run output; row ``i`` corresponds to absolute step ``start + i``.

    The first ``p + 1`` rows are the supplied history.  ``diverged_at`` is the
    absolute step at which the run blew up (rows stop before it), or ``None``.
    """

    x: np.ndarray
    delta: np.ndarray
    dt: float
    start: int = 0
    diverged_at: int = None

    @property
    def steps(self):
        return self.start + np.arange(self.x.shape[0])

    @property
    def diverged(self):
        return self.diverged_at is not None

    def to_csv(self, truth=None, t0=0.0):
        """Plot-ready table ``t, x*, delta*`` (+ ``truth*`` for the supplied rows)."""
        q = self.x.shape[1]
        header = (["t"] + [f"x{i}" for i in range(q)] + [f"delta{i}" for i in range(q)])
        cols = [t0 + self.dt * self.steps[:, None], self.x, self.delta]
        if truth is not None:
            truth = np.asarray(truth, dtype=float).reshape(-1, q)[self.steps]
            header += [f"truth{i}" for i in range(q)]
            cols.append(truth)
        return table_to_csv(header, np.hstack(cols))


def _blown(v):
    return not np.all(np.isfinite(v)) or np.max(np.abs(v)) > BLOWUP_THRESHOLD


def free_run(rom, x_hist, d_hist, n_steps, start=0):
    """Integrate the augmented model from an exact history.

    Parameters
    ----------
    rom : AugmentedROM
    x_hist, d_hist : array_like, shape (p + 1, Q)
        Resolved states and closures in chronological order (oldest first).
    n_steps : int
        Number of new steps.
    start : int
        Absolute step index of the oldest history row (bookkeeping only).

    Returns
    -------
    FreeRun
        ``x`` and ``delta`` of shape ``(p + 1 + n_steps, Q)``.

    Raises
    ------
    NonFiniteState
        On blow-up; ``exc.partial`` holds the :class:`FreeRun` up to the last
        finite step and ``exc.step`` the absolute step index that failed.
    """
    closure = rom.closure
    p, dt = closure.p, rom.dt
    x_hist = np.asarray(x_hist, dtype=float).reshape(p + 1, -1)
    d_hist = np.asarray(d_hist, dtype=float).reshape(p + 1, -1)
    q = x_hist.shape[1]
    total = p + 1 + n_steps
    xs = np.empty((total, q))
    ds = np.empty((total, q))
    xs[: p + 1] = x_hist
    ds[: p + 1] = d_hist
    # newest-first buffers for building delay rows
    xbuf = deque(x_hist[::-1], maxlen=p + 1)
    dbuf = deque(d_hist[::-1], maxlen=p + 1)
    layout = closure.row_layout
    for i in range(p + 1, total):
        x, d = xbuf[0], dbuf[0]
        y = delay_vector(np.array(xbuf), np.array(dbuf), layout)
        with np.errstate(over="ignore", invalid="ignore"):
            x_new = x + dt * (np.asarray(rom.resolved_rhs(x), dtype=float) + d)
            d_new = d + dt * np.asarray(closure(y), dtype=float).reshape(q)
        if _blown(x_new) or _blown(d_new):
            partial = FreeRun(xs[:i].copy(), ds[:i].copy(), dt, start, start + i)
            raise NonFiniteState(f"free run diverged at step {start + i}",
                                 step=start + i, partial=partial)
        xs[i], ds[i] = x_new, d_new
        xbuf.appendleft(x_new)
        dbuf.appendleft(d_new)
    return FreeRun(xs, ds, dt, start)


def free_run_safe(rom, x_hist, d_hist, n_steps, start=0):
    """Like :func:`free_run` but returns the truncated run with ``diverged_at`` set."""
    try:
        return free_run(rom, x_hist, d_hist, n_steps, start)
    except NonFiniteState as exc:
        return exc.partial


def free_run_from_dataset(rom, ds, start, n_steps, safe=False):
    """Free run whose history is rows ``start - p .. start`` of a closure dataset."""
    p = rom.closure.p
    if start - p < 0 or start >= ds.n_rows:
        raise ValueError(f"history rows {start - p}..{start} are outside the dataset")
    n_steps = min(n_steps, ds.X.shape[0] - 1 - start)
    runner = free_run_safe if safe else free_run
    return runner(rom, ds.X[start - p: start + 1], ds.Delta[start - p: start + 1],
                  n_steps, start - p)


def no_closure_run(resolved_rhs, x0, dt, n_steps, start=0):
    """Truncated model ``x^{n+1} = x^n + dt F_hat(x^n, 0)`` (closure switched off)."""
    x = np.asarray(x0, dtype=float)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for i in range(1, n_steps + 1):
        x = x + dt * np.asarray(resolved_rhs(x), dtype=float)
        if _blown(x):
            raise NonFiniteState(f"truncated model diverged at step {start + i}",
                                 step=start + i,
                                 partial=FreeRun(out[:i].copy(), np.zeros((i, x.size)), dt,
                                                 start, start + i))
        out[i] = x
    return FreeRun(out, np.zeros_like(out), dt, start)


def apriori_mse(closure, Y, Z, idx=None):
    """``(1/|idx|) sum ||z^j - G(y^j)||^2`` over the selected rows."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.asarray(Z, dtype=float).reshape(Y.shape[0], -1)
    if idx is not None:
        Y, Z = Y[idx], Z[idx]
    if Y.shape[0] == 0:
        raise ValueError("no rows to evaluate")
    r = Z - np.asarray(closure(Y)).reshape(Z.shape)
    return float(np.sum(r * r)) / Y.shape[0]


def aposteriori_mse(truth, run, idx=None):
    """``(1/|idx|) sum ||x^j - x*^j||^2`` between two aligned resolved trajectories."""
    truth = np.asarray(truth, dtype=float)
    run = np.asarray(run, dtype=float)
    if truth.ndim == 1:
        truth = truth[:, None]
    if run.ndim == 1:
        run = run[:, None]
    if truth.shape != run.shape:
        raise ValueError(f"trajectory shapes differ: {truth.shape} vs {run.shape}")
    if idx is not None:
        truth, run = truth[idx], run[idx]
    if truth.shape[0] == 0:
        raise ValueError("no rows to evaluate")
    d = truth - run
    return float(np.sum(d * d)) / truth.shape[0]


def run_error(truth_X, run, idx=None):
    """A posteriori MSE of a :class:`FreeRun` against full truth rows ``truth_X``.

    ``idx`` are absolute step indices; the default is every step the run covers.
    """
    steps = run.steps if idx is None else np.asarray(idx)
    if steps.min() < run.start or steps.max() >= run.start + run.x.shape[0]:
        raise ValueError("requested steps are outside the run")
    return aposteriori_mse(np.asarray(truth_X)[steps], run.x[steps - run.start])
