"""Lasso by cyclic coordinate descent, lasso paths and sparse polynomial closures.

The lasso objective for one target column is

    (1/n) ||z - Phi w||^2 + lam ||w||_1.

With ``G = Phi^T Phi / n`` and ``c = Phi^T z / n`` the minimiser over a single
coordinate ``i`` with all others fixed is

    w_i = S(c_i - sum_{j != i} G_ij w_j, lam / 2) / G_ii,

``S(r, t) = sign(r) max(|r| - t, 0)``.  The solver keeps ``G w`` up to date
so each coordinate update costs O(L) regardless of the number of samples.
All columns are zero for ``lam >= lam_max = (2/n) max |Phi^T z|``.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceWarning, DegenerateColumnWarning, NotConverged,
                     RankDeficientWarning)
from .features import PolyFeatureMap

NNZ_THRESHOLD = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
# Below this many features the coordinate loop runs on Python floats, which
# is several times faster than numpy calls on tiny vectors.
_SMALL = 24


def soft_threshold(r, t):
    return math.copysign(max(abs(r) - t, 0.0), r) if np.isscalar(r) else \
        np.sign(r) * np.maximum(np.abs(r) - t, 0.0)


def lambda_max(Phi, z):
    Phi = np.asarray(Phi, dtype=float)
    z = np.asarray(z, dtype=float)
    return 2.0 * np.max(np.abs(Phi.T @ z)) / Phi.shape[0]


def default_lambda_grid(Phi, z, n=60, lam_min=1e-14):
    """``n`` log-spaced values from ``lambda_max`` down to ``lam_min``."""
    top = lambda_max(Phi, z)
    if not top > lam_min:
        top = 10.0 * lam_min
    return np.logspace(np.log10(top), np.log10(lam_min), n)


def lasso_objective(Phi, z, w, lam):
    r = z - Phi @ w
    return float(r @ r) / Phi.shape[0] + lam * float(np.abs(w).sum())


def _cd_small(G, c, w, lam, active, tol, max_iter):
    L = len(c)
    G = G.tolist()
    c = c.tolist()
    w = w.tolist()
    Gw = [sum(G[i][j] * w[j] for j in range(L)) for i in range(L)]
    half = 0.5 * lam
    for it in range(1, max_iter + 1):
        max_change = 0.0
        for i in active:
            gii = G[i][i]
            wi = w[i]
            r = c[i] - Gw[i] + gii * wi
            if r > half:
                new = (r - half) / gii
            elif r < -half:
                new = (r + half) / gii
            else:
                new = 0.0
            d = new - wi
            if d != 0.0:
                w[i] = new
                Gi = G[i]
                for j in range(L):
                    Gw[j] += d * Gi[j]
                if abs(d) > max_change:
                    max_change = abs(d)
        if max_change < tol:
            return np.array(w), it, True
    return np.array(w), max_iter, False


def _cd_numpy(G, c, w, lam, active, tol, max_iter):
    w = w.copy()
    Gw = G @ w
    half = 0.5 * lam
    diag = np.diag(G).copy()
    for it in range(1, max_iter + 1):
        max_change = 0.0
        for i in active:
            wi = w[i]
            r = c[i] - Gw[i] + diag[i] * wi
            if r > half:
                new = (r - half) / diag[i]
            elif r < -half:
                new = (r + half) / diag[i]
            else:
                new = 0.0
            d = new - wi
            if d != 0.0:
                w[i] = new
                Gw += d * G[i]
                if abs(d) > max_change:
                    max_change = abs(d)
        if max_change < tol:
            return w, it, True
    return w, max_iter, False


@dataclass
class LassoFit:
    coef: np.ndarray
    n_iter: int
    converged: bool


def lasso_fit(Phi, z, lam, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, w0=None,
              strict=False, gram=None, return_info=False):
    """Minimise ``(1/n)||z - Phi w||^2 + lam ||w||_1`` by cyclic coordinate descent.

    Parameters
    ----------
    Phi : ndarray, shape (n, L)
    z : ndarray, shape (n,)
    lam : float
        Non-negative penalty.
    tol : float
        Converged once the largest coordinate change over a full sweep is
        below ``tol``.
    max_iter : int
        Maximum number of full sweeps.
    w0 : ndarray, optional
        Warm start.
    strict : bool
        Raise :class:`NotConverged` instead of warning when ``max_iter`` is hit.
    gram : tuple (G, c), optional
        Precomputed ``Phi^T Phi / n`` and ``Phi^T z / n`` (used by paths).
    return_info : bool
        Return a :class:`LassoFit` instead of the bare coefficient vector.

    Notes
    -----
    All-zero feature columns get a zero coefficient and trigger a
    :class:`DegenerateColumnWarning`.
    """
    Phi = np.asarray(Phi, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    n, L = Phi.shape
    if n < 1:
        raise ValueError("need at least one sample")
    if z.shape[0] != n:
        raise ValueError(f"Phi has {n} rows but z has {z.shape[0]}")
    if not lam >= 0:
        raise ValueError("lam must be non-negative")
    if gram is None:
        G = Phi.T @ Phi / n
        c = Phi.T @ z / n
    else:
        G, c = gram
    diag = np.diag(G)
    degenerate = diag <= 0.0
    if degenerate.any():
        warnings.warn(f"feature columns {np.flatnonzero(degenerate).tolist()} are all zero; "
                      "their coefficients are fixed to 0", DegenerateColumnWarning, stacklevel=2)
    active = [int(i) for i in np.flatnonzero(~degenerate)]
    w = np.zeros(L) if w0 is None else np.array(w0, dtype=float)
    w[degenerate] = 0.0
    solver = _cd_small if L <= _SMALL else _cd_numpy
    w, n_iter, converged = solver(G, c, w, float(lam), active, tol, int(max_iter))
    if not converged:
        if strict:
            raise NotConverged(f"lasso did not converge in {max_iter} sweeps (lam={lam:g})",
                               coef=w, n_iter=n_iter)
        warnings.warn(f"lasso did not converge in {max_iter} sweeps (lam={lam:g})",
                      ConvergenceWarning, stacklevel=2)
    if return_info:
        return LassoFit(w, n_iter, converged)
    return w


def nonzero_count(w, threshold=NNZ_THRESHOLD):
    return int(np.sum(np.abs(np.asarray(w)) > threshold))


@dataclass
class LassoPath:
    """Warm-started lasso solutions along a descending penalty grid."""

    lambdas: np.ndarray
    coefs: np.ndarray          # (n_lambdas, L)
    train_mse: np.ndarray
    val_mse: np.ndarray
    nnz: np.ndarray
    converged: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.lambdas)

    def to_csv(self):
        from .io import table_to_csv
        return table_to_csv(["lambda", "train_mse", "val_mse", "nnz"],
                            zip(self.lambdas, self.train_mse, self.val_mse, self.nnz))


def _mse(Phi, z, w):
    if Phi.shape[0] == 0:
        return float("nan")
    r = z - Phi @ w
    return float(r @ r) / Phi.shape[0]


def lasso_path(Phi, z, lambda_grid=None, val_split=0.2, tol=DEFAULT_TOL,
               max_iter=DEFAULT_MAX_ITER, n_lambdas=60, lambda_min=1e-14):
    """Fit the lasso along ``lambda_grid`` on the leading rows, validate on the tail.

    The first ``1 - val_split`` fraction of rows (temporal order) is used for
    fitting and the last ``val_split`` fraction for validation.  Without an
    explicit grid, ``n_lambdas`` log-spaced penalties from ``lambda_max`` of
    the fitting rows down to ``lambda_min`` are used.
    """
    Phi = np.asarray(Phi, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    if not 0.0 <= val_split < 1.0:
        raise ValueError("val_split must lie in [0, 1)")
    n_fit = Phi.shape[0] - int(round(val_split * Phi.shape[0]))
    if n_fit < 1:
        raise ValueError("no rows left for fitting")
    P_tr, z_tr = Phi[:n_fit], z[:n_fit]
    P_va, z_va = Phi[n_fit:], z[n_fit:]
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(P_tr, z_tr, n_lambdas, lambda_min)
    lambdas = np.asarray(lambda_grid, dtype=float)
    if lambdas.size == 0 or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda_grid must be non-empty and strictly decreasing")
    gram = (P_tr.T @ P_tr / n_fit, P_tr.T @ z_tr / n_fit)
    L = Phi.shape[1]
    coefs = np.zeros((lambdas.size, L))
    conv = np.zeros(lambdas.size, dtype=bool)
    w = np.zeros(L)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateColumnWarning)
        warnings.simplefilter("ignore", ConvergenceWarning)
        for i, lam in enumerate(lambdas):
            fit = lasso_fit(P_tr, z_tr, lam, tol, max_iter, w0=w, gram=gram, return_info=True)
            w = fit.coef
            coefs[i] = w
            conv[i] = fit.converged
    if not conv.all():
        warnings.warn(f"{int((~conv).sum())} of {conv.size} path fits did not converge",
                      ConvergenceWarning, stacklevel=2)
    return LassoPath(
        lambdas=lambdas,
        coefs=coefs,
        train_mse=np.array([_mse(P_tr, z_tr, c) for c in coefs]),
        val_mse=np.array([_mse(P_va, z_va, c) for c in coefs]) if n_fit < Phi.shape[0]
        else np.array([_mse(P_tr, z_tr, c) for c in coefs]),
        nnz=np.array([nonzero_count(c) for c in coefs]),
        converged=conv,
    )


def select_pareto(path, eps=0.05):
    """Sparsest penalty whose validation error is within ``1 + eps`` of the best.

    Ties in the number of nonzeros go to the larger penalty.
    """
    if len(path) == 0:
        raise ValueError("empty lasso path")
    val = np.asarray(path.val_mse, dtype=float)
    best = np.nanmin(val)
    ok = np.flatnonzero(val <= (1.0 + eps) * best)
    nnz = np.asarray(path.nnz)[ok]
    cands = ok[nnz == nnz.min()]
    i = cands[np.argmax(np.asarray(path.lambdas)[cands])]
    return float(path.lambdas[i])


@dataclass(frozen=True)
class SupportCheck:
    feasible: bool
    bound: float


def support_recovery_check(n_true, n_features, n_samples):
    """Sample-size condition ``n_true/n_features <= (n_samples/n_features) / (2 ln n_features)``."""
    if n_features < 2 or n_samples < 1 or n_true < 0:
        raise ValueError("need n_features >= 2, n_samples >= 1, n_true >= 0")
    bound = (n_samples / n_features) / (2.0 * math.log(n_features))
    return SupportCheck(n_true / n_features <= bound, bound)


def ols_fit(Phi, z, rcond=None):
    """Minimum-norm least squares; warns when ``Phi`` is numerically rank deficient."""
    Phi = np.asarray(Phi, dtype=float)
    z = np.asarray(z, dtype=float)
    if Phi.shape[0] < Phi.shape[1]:
        raise ValueError("OLS needs at least as many samples as features")
    w, _, rank, _ = np.linalg.lstsq(Phi, z, rcond=rcond)
    if rank < Phi.shape[1]:
        warnings.warn(f"feature matrix has numerical rank {rank} < {Phi.shape[1]}",
                      RankDeficientWarning, stacklevel=2)
    return w


class SparsePolyModel:
    """Polynomial closure dynamics ``G(y) = Theta(y) W``, one column per channel."""

    def __init__(self, feature_map, W, lam):
        self.feature_map = feature_map
        self.W = np.atleast_2d(np.asarray(W, dtype=float))
        if self.W.shape[0] != feature_map.n_features:
            self.W = self.W.T
        if self.W.shape[0] != feature_map.n_features:
            raise ValueError(f"W must have {feature_map.n_features} rows")
        self.lam = np.broadcast_to(np.asarray(lam, dtype=float), (self.W.shape[1],)).copy()

    @property
    def q(self):
        return self.W.shape[1]

    @property
    def nonzero_count(self):
        return [nonzero_count(self.W[:, j]) for j in range(self.q)]

    def predict(self, Y):
        Y = np.asarray(Y, dtype=float)
        return self.feature_map.transform(Y) @ self.W

    def terms(self, column=0, threshold=NNZ_THRESHOLD):
        """``{name: coefficient}`` of the nonzero terms of one output channel."""
        names = self.feature_map.names()
        return {n: float(c) for n, c in zip(names, self.W[:, column]) if abs(c) > threshold}

    def to_dict(self):
        names = self.feature_map.names()
        return {
            "kind": "polynomial",
            "features": self.feature_map.to_dict(),
            "lambda": self.lam.tolist(),
            "nonzero_count": self.nonzero_count,
            "terms": names,
            "coefficients": self.W.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls(PolyFeatureMap.from_dict(d["features"]), np.array(d["coefficients"]),
                   np.array(d["lambda"]))


def fit_sparse_poly(Y, Z, feature_map, lam=None, lambda_grid=None, val_split=0.2,
                    eps=0.05, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, n_lambdas=60,
                    lambda_min=1e-14):
    """Fit each target column independently.

    With ``lam`` given every column uses that penalty on all rows.  Otherwise a
    lasso path is traced per column, ``select_pareto`` picks the penalty and the
    column is refit at it on all rows.

    Returns
    -------
    model : SparsePolyModel
    paths : list of LassoPath (empty when ``lam`` is given)
    """
    Phi = feature_map.transform(np.asarray(Y, dtype=float))
    Z = np.asarray(Z, dtype=float).reshape(Phi.shape[0], -1)
    n = Phi.shape[0]
    G = Phi.T @ Phi / n
    W = np.zeros((Phi.shape[1], Z.shape[1]))
    lams = np.zeros(Z.shape[1])
    paths = []
    for j in range(Z.shape[1]):
        z = Z[:, j]
        if lam is None:
            path = lasso_path(Phi, z, lambda_grid, val_split, tol, max_iter,
                              n_lambdas, lambda_min)
            paths.append(path)
            lams[j] = select_pareto(path, eps)
            w0 = path.coefs[int(np.flatnonzero(path.lambdas == lams[j])[0])]
        else:
            lams[j] = lam
            w0 = None
        W[:, j] = lasso_fit(Phi, z, lams[j], tol, max_iter, w0=w0, gram=(G, Phi.T @ z / n))
    return SparsePolyModel(feature_map, W, lams), paths
