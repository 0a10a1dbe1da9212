"""Observability of the unresolved state from delayed closure data.

For a system with dual linear closure (see :class:`~closurekit.systems.DualLinearSystem`),
discretised with forward Euler, the unresolved state obeys

    x~^{n+1} = (I + dt A22) x~^n + dt H(x^n),      d^n = A12 x~^n.

Stacking ``p`` evolution equations and ``p + 1`` projection equations gives the
linear system ``Gamma_p X_p = Sigma_p`` with ``X_p = [x~^n; ...; x~^{n-p}]``::

    Gamma_p = [ I  -(I+dt A22)   0   ...          ]   p block rows
              [ 0   I  -(I+dt A22)  ...          ]
              [                 ...              ]
              [ A12  0   ...                      ]   p+1 block rows
              [ 0   A12  ...                      ]
              [            ...              A12   ]

    Sigma_p = [dt H(x^{n-1}); ...; dt H(x^{n-p}); d^n; ...; d^{n-p}]

Its rank is ``p (N-Q) + rank(O_{p+1})`` with the observability matrix
``O_k = [A12; A12 A22; ...; A12 A22^{k-1}]``.  All unresolved states in the
window are recoverable once ``O_{p+1}`` has full column rank; the closure
dynamics alone is recoverable as soon as ``rank O_{p+1} = rank O_{p+2}``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficientGamma

DEFAULT_RANK_TOL = 1e-10


def _singular_values(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def _rank_from_sv(s, tol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def numerical_rank(M, tol=DEFAULT_RANK_TOL):
    """Number of singular values above ``tol * sigma_max`` (0 for a zero matrix)."""
    return _rank_from_sv(_singular_values(M), tol)


def rank_gap(M, tol=DEFAULT_RANK_TOL):
    """``(rank, sigma_r / sigma_{r+1})``; the gap is ``inf`` when nothing is cut off."""
    s = _singular_values(M)
    r = _rank_from_sv(s, tol)
    if r == 0 or r >= s.size or s[r] == 0.0:
        return r, float("inf")
    return r, float(s[r - 1] / s[r])


def _as_blocks(A12, A22):
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    A22 = np.atleast_2d(np.asarray(A22, dtype=float))
    if A22.shape[0] != A22.shape[1] or A12.shape[1] != A22.shape[0]:
        raise ValueError(f"inconsistent shapes A12 {A12.shape}, A22 {A22.shape}")
    return A12, A22


def obsv_matrix(A12, A22, k):
    """``O_k``, built by repeated right-multiplication with ``A22``."""
    A12, A22 = _as_blocks(A12, A22)
    if k < 1:
        raise ValueError("k must be positive")
    blocks = [A12]
    for _ in range(k - 1):
        blocks.append(blocks[-1] @ A22)
    return np.vstack(blocks)


def rank_sequence(A12, A22, k_max, tol=DEFAULT_RANK_TOL):
    """``[r_O(1), ..., r_O(k_max)]`` and the matching singular-value gaps."""
    A12, A22 = _as_blocks(A12, A22)
    ranks, gaps = [], []
    block = A12
    stack = A12
    for k in range(1, k_max + 1):
        if k > 1:
            block = block @ A22
            stack = np.vstack([stack, block])
        r, g = rank_gap(stack, tol)
        ranks.append(r)
        gaps.append(g)
    return ranks, gaps


@dataclass
class RankReport:
    """Observability rank sequence and the minimal memory lengths it implies.

    ``p_star_full`` is the smallest delay count that makes every unresolved
    state in the window recoverable (``None`` when ``O_{N-Q}`` is rank
    deficient); ``p_star_closure`` the smallest one for the closure dynamics.
    """

    ranks: list
    p_star_full: object
    p_star_closure: int
    tol: float
    n_unresolved: int
    q: int
    gaps: list = field(default_factory=list)

    def to_dict(self):
        return {
            "ranks": list(self.ranks),
            "p_star_full": self.p_star_full,
            "p_star_closure": self.p_star_closure,
            "tol": self.tol,
            "n_unresolved": self.n_unresolved,
            "q": self.q,
            "singular_value_gaps": [g if np.isfinite(g) else None for g in self.gaps],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _p_star_full(ranks, n_unres):
    for l, r in enumerate(ranks, start=1):
        if r == n_unres:
            return l - 1
    return None


def _p_star_closure(ranks):
    for l in range(1, len(ranks)):
        if ranks[l - 1] == ranks[l]:
            return l - 1
    raise ValueError("rank sequence too short to find a stall")


def minimal_memory_full(A12, A22, k_max=None, tol=DEFAULT_RANK_TOL):
    """Rank report with both minimal memory lengths.

    ``k_max`` defaults to ``N - Q + 1``, the shortest sequence that decides both.
    """
    A12, A22 = _as_blocks(A12, A22)
    n_unres = A22.shape[0]
    k_max = n_unres + 1 if k_max is None else int(k_max)
    if k_max < n_unres:
        raise ValueError(f"k_max must be at least N-Q = {n_unres}")
    ranks, gaps = rank_sequence(A12, A22, max(k_max, n_unres + 1), tol)
    return RankReport(
        ranks=ranks[:k_max] if k_max > n_unres else ranks,
        p_star_full=_p_star_full(ranks[:n_unres], n_unres),
        p_star_closure=_p_star_closure(ranks),
        tol=tol,
        n_unresolved=n_unres,
        q=A12.shape[0],
        gaps=gaps[:k_max] if k_max > n_unres else gaps,
    )


def minimal_memory_closure(A12, A22, tol=DEFAULT_RANK_TOL):
    """Smallest ``l`` with ``r_O(l) = r_O(l+1)``, minus one (at most ``N-Q-1``)."""
    A12, A22 = _as_blocks(A12, A22)
    ranks, _ = rank_sequence(A12, A22, A22.shape[0] + 1, tol)
    return _p_star_closure(ranks)


@dataclass
class GammaSystem:
    Gamma: np.ndarray
    Sigma: np.ndarray
    p: int
    dt: float
    n_unresolved: int
    q: int

    @property
    def n_unknowns(self):
        return (self.p + 1) * self.n_unresolved


def gamma_matrix(A12, A22, dt, p):
    """The block matrix ``Gamma_p`` alone."""
    A12, A22 = _as_blocks(A12, A22)
    q, m = A12.shape
    step = np.eye(m) + dt * A22
    G = np.zeros((p * m + (p + 1) * q, (p + 1) * m))
    for i in range(p):
        G[i * m:(i + 1) * m, i * m:(i + 1) * m] = np.eye(m)
        G[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = -step
    off = p * m
    for i in range(p + 1):
        G[off + i * q: off + (i + 1) * q, i * m:(i + 1) * m] = A12
    return G


def build_gamma(A12, A22, dtH_values, delta_values, dt, p):
    """Assemble ``Gamma_p`` and ``Sigma_p``.

    Parameters
    ----------
    dtH_values : array_like, shape (p, N-Q)
        ``dt * H(x^{n-1}), ..., dt * H(x^{n-p})`` (newest first, already scaled by ``dt``).
    delta_values : array_like, shape (p + 1, Q)
        ``d^n, ..., d^{n-p}`` (newest first).
    """
    A12, A22 = _as_blocks(A12, A22)
    q, m = A12.shape
    dtH = np.asarray(dtH_values, dtype=float).reshape(-1, m) if p > 0 else np.zeros((0, m))
    delta = np.asarray(delta_values, dtype=float).reshape(-1, q)
    if dtH.shape[0] != p or delta.shape[0] != p + 1:
        raise ValueError(f"need {p} H rows and {p + 1} closure rows, got "
                         f"{dtH.shape[0]} and {delta.shape[0]}")
    Sigma = np.concatenate([dtH.ravel(), delta.ravel()])
    return GammaSystem(gamma_matrix(A12, A22, dt, p), Sigma, p, float(dt), m, q)


def reconstruct_unresolved(gs, tol=DEFAULT_RANK_TOL):
    """Least-squares ``X_p = Gamma_p^+ Sigma_p``; rows ``x~^n, ..., x~^{n-p}``.

    Raises
    ------
    RankDeficientGamma
        If ``Gamma_p`` does not have full column rank.
    """
    r = numerical_rank(gs.Gamma, tol)
    if r < gs.n_unknowns:
        raise RankDeficientGamma(f"Gamma_{gs.p} has rank {r} < {gs.n_unknowns}",
                                 rank=r, required=gs.n_unknowns)
    X, *_ = np.linalg.lstsq(gs.Gamma, gs.Sigma, rcond=None)
    return X.reshape(gs.p + 1, gs.n_unresolved)


def delayed_observable_test(Gamma_p, C, tol=DEFAULT_RANK_TOL):
    """Is ``C^T X_p`` determined by the delayed data?

    ``C`` holds the query functionals as rows, shape ``(n_queries, cols of Gamma_p)``
    (this is ``C^T`` in the lemma).  The test compares ``rank(V_p)`` with
    ``rank([C; V_p^T])`` where ``V_p`` spans the row space of ``Gamma_p``.
    """
    Gamma_p = np.atleast_2d(np.asarray(Gamma_p, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != Gamma_p.shape[1]:
        raise ValueError(f"query has {C.shape[1]} columns, Gamma has {Gamma_p.shape[1]}")
    _, s, Vt = np.linalg.svd(Gamma_p, full_matrices=False)
    r = _rank_from_sv(s, tol)
    Vp_T = Vt[:r]
    return numerical_rank(np.vstack([C, Vp_T]), tol) == numerical_rank(Vp_T, tol) if r else \
        not np.any(C)


def closure_query(A12, A22, p, dt=None):
    """Rows selecting the closure dynamics from ``X_p``.

    ``dt=None`` gives ``[A12 A22, 0, ..., 0]``; with a ``dt`` the discrete form
    ``[A12 (I + dt A22), 0, ..., 0]`` is returned.  Both are equivalent tests
    because ``A12 x~^n`` is itself observed.
    """
    A12, A22 = _as_blocks(A12, A22)
    m = A22.shape[0]
    lead = A12 @ A22 if dt is None else A12 @ (np.eye(m) + dt * A22)
    return np.hstack([lead, np.zeros((A12.shape[0], p * m))])


def propagate_unresolved(A22, H_series, x_tilde_anchor, dt, p):
    """``x~^n`` from ``x~^{n-p}`` and ``H(x^{n-1}), ..., H(x^{n-p})`` (newest first).

    Evaluates ``(I+dt A22)^p x~^{n-p} + sum_l dt (I+dt A22)^l H(x^{n-l-1})``.
    """
    A22 = np.atleast_2d(np.asarray(A22, dtype=float))
    m = A22.shape[0]
    step = np.eye(m) + dt * A22
    H = np.asarray(H_series, dtype=float).reshape(-1, m) if p > 0 else np.zeros((0, m))
    if H.shape[0] != p:
        raise ValueError(f"need {p} H values, got {H.shape[0]}")
    x = np.asarray(x_tilde_anchor, dtype=float).copy()
    # Horner-style: apply the oldest contributions first.
    for l in range(p - 1, -1, -1):
        x = step @ x + dt * H[l]
    return x


@dataclass
class RandomDualSystem:
    """A random dual-linear test system with smooth bounded nonlinearities."""

    A12: np.ndarray
    A22: np.ndarray
    B: np.ndarray
    F_mat: np.ndarray

    @property
    def q(self):
        return self.A12.shape[0]

    @property
    def n_unresolved(self):
        return self.A22.shape[0]

    def F_hat(self, x_hat):
        return self.F_mat @ x_hat + 0.5 * np.sin(x_hat)

    def H(self, x_hat):
        return self.B @ np.tanh(x_hat)

    def dual(self):
        from .systems import DualLinearSystem
        return DualLinearSystem(self.F_hat, self.H, self.A12, self.A22)


def random_dual_system(q, n_unresolved, rng, rank_deficient_prob=0.2):
    """Draw a random dual-linear system; sometimes with structurally reduced rank.

    ``A22`` is shifted so every eigenvalue has real part ``<= -0.5``, keeping
    forward-Euler trajectories bounded for moderate steps.
    """
    rng = np.random.default_rng(rng)
    A12 = rng.normal(size=(q, n_unresolved))
    A22 = rng.normal(size=(n_unresolved, n_unresolved)) / np.sqrt(n_unresolved)
    A22 -= (np.linalg.eigvals(A22).real.max() + 0.5) * np.eye(n_unresolved)
    if n_unresolved > 1 and rng.random() < rank_deficient_prob:
        # make one direction invisible: an invariant subspace of A22 inside ker A12
        v = rng.normal(size=n_unresolved)
        v /= np.linalg.norm(v)
        A12 = A12 - np.outer(A12 @ v, v)
        lam = -rng.random()
        P = np.eye(n_unresolved) - np.outer(v, v)
        A22 = P @ A22 @ P + lam * np.outer(v, v)
    B = rng.normal(size=(n_unresolved, q))
    F_mat = rng.normal(size=(q, q)) / np.sqrt(q) - np.eye(q)
    return RandomDualSystem(A12, A22, B, F_mat)
