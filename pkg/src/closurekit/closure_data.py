"""Closure snapshots and delay-indexed training data.

Given resolved snapshots ``X[j]`` (``j = 0 .. M-1``) and the resolved rate with
the unresolved state switched off, ``F_hat(x_hat, 0)``, the closure snapshots
are the part of the observed forward-difference rate that the truncated model
misses::

    dX[j]    = (X[j+1] - X[j]) / dt                   j = 0 .. M'-1,  M' = M-1
    Delta[j] = dX[j] - F_hat(X[j], 0)

A closure model learns the rate of change of ``Delta`` from a window of the
last ``p + 1`` resolved states and closures.  Row ``j`` of a delay feature
matrix is laid out as

    FULL      [x^j, x^{j-1}, ..., x^{j-p}, d^j, d^{j-1}, ..., d^{j-p}]   width 2(1+p)Q
    ECONOMIC  [x^j, x^{j-1}, ..., x^{j-p}, d^j]                           width (2+p)Q

where every ``x^i``/``d^i`` is a length-Q block, and the target row is
``(Delta[j+1] - Delta[j]) / dt``.  The economic layout drops the closure
history because ``d^{j-1}`` is already a function of ``x^j`` and ``x^{j-1}``.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptySplit, IndexOverflow, IndexUnderflow


class FeatureLayout(str, Enum):
    FULL = "full"
    ECONOMIC = "economic"


def feature_width(q, p, layout):
    layout = FeatureLayout(layout)
    if layout is FeatureLayout.FULL:
        return 2 * (1 + p) * q
    return (2 + p) * q


@dataclass
class ClosureDataset:
    """Resolved snapshots, their forward differences and the closure.

    Attributes
    ----------
    X : ndarray, shape (M, Q)
    dX, Delta : ndarray, shape (M - 1, Q)
    dt : float
    p : int
        Delay count used to build ``train_idx`` / ``test_idx``.
    train_idx, test_idx : ndarray of int
        Rows ``j`` of ``dX``/``Delta`` (see :func:`split_indices`).
    """

    X: np.ndarray
    dX: np.ndarray
    Delta: np.ndarray
    dt: float
    p: int = 0
    train_idx: np.ndarray = None
    test_idx: np.ndarray = None

    @property
    def q(self):
        return self.X.shape[1]

    @property
    def n_rows(self):
        """Number of closure rows ``M'``."""
        return self.Delta.shape[0]

    def with_split(self, p, train_fraction):
        """Return a copy carrying the temporal split for ``p`` delays."""
        train, test = split_indices(self.n_rows, p, train_fraction)
        return ClosureDataset(self.X, self.dX, self.Delta, self.dt, p, train, test)


def extract_closure(traj, part, resolved_rhs, dt=None):
    """Build a :class:`ClosureDataset` from a full-order trajectory.

    Parameters
    ----------
    traj : StateTrajectory
    part : partition object with a ``project`` method and ``state_dim``
    resolved_rhs : callable
        ``x_hat -> F_hat(x_hat, 0)``; must accept a single resolved state.
    dt : float, optional
        Snapshot spacing; defaults to ``traj.dt``.
    """
    snaps = np.asarray(traj.snapshots)
    if snaps.shape[1] != part.state_dim:
        raise ValueError(f"partition expects state dimension {part.state_dim}, "
                         f"trajectory has {snaps.shape[1]}")
    dt = traj.dt if dt is None else float(dt)
    X = np.asarray(part.project(snaps), dtype=float)
    dX = (X[1:] - X[:-1]) / dt
    F = np.array([resolved_rhs(x) for x in X[:-1]], dtype=float).reshape(dX.shape)
    return ClosureDataset(X, dX, dX - F, dt)


def split_indices(n_rows, p, train_fraction):
    """Temporal train/test split over the rows that have ``p`` predecessors.

    ``I^p = {p, ..., n_rows - 1}``; training rows are those with
    ``j <= floor(train_fraction * n_rows)``, the rest are test rows.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    if p < 0:
        raise ValueError("p must be non-negative")
    cut = math.floor(train_fraction * n_rows)
    valid = np.arange(p, n_rows)
    train = valid[valid <= cut]
    test = valid[valid > cut]
    if train.size == 0 or test.size == 0:
        raise EmptySplit(f"empty split: n_rows={n_rows}, p={p}, fraction={train_fraction}")
    return train, test


def targetable(ds, idx):
    """Drop indices whose target would need a closure row past the end."""
    idx = np.asarray(idx)
    return idx[idx + 1 < ds.n_rows]


def build_features(ds, idx, layout=FeatureLayout.FULL, p=None):
    """Delay feature matrix with one row per index in ``idx``."""
    layout = FeatureLayout(layout)
    p = ds.p if p is None else p
    idx = np.asarray(idx, dtype=int)
    if idx.size and idx.min() - p < 0:
        raise IndexUnderflow(f"row {idx.min()} has fewer than p={p} predecessors")
    if idx.size and idx.max() >= ds.n_rows:
        raise IndexOverflow(f"row {idx.max()} is past the last closure row {ds.n_rows - 1}")
    xs = [ds.X[idx - i] for i in range(p + 1)]
    if layout is FeatureLayout.FULL:
        ds_ = [ds.Delta[idx - i] for i in range(p + 1)]
    else:
        ds_ = [ds.Delta[idx]]
    return np.hstack(xs + ds_)


def build_target(ds, idx):
    """Forward-difference rate of the closure, ``(Delta[j+1] - Delta[j]) / dt``."""
    idx = np.asarray(idx, dtype=int)
    if idx.size and idx.max() + 1 >= ds.n_rows:
        raise IndexOverflow(f"target for row {idx.max()} needs closure row {idx.max() + 1}, "
                            f"last is {ds.n_rows - 1}")
    return (ds.Delta[idx + 1] - ds.Delta[idx]) / ds.dt


def delay_vector(x_hist, d_hist, layout=FeatureLayout.FULL):
    """One feature row from histories ordered newest first, shape ``(p+1, Q)``."""
    layout = FeatureLayout(layout)
    x_hist = np.asarray(x_hist, dtype=float)
    d_hist = np.asarray(d_hist, dtype=float)
    if layout is FeatureLayout.FULL:
        return np.concatenate([x_hist.ravel(), d_hist.ravel()])
    return np.concatenate([x_hist.ravel(), d_hist[0]])
