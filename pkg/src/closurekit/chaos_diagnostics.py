"""Attractor-level diagnostics for scalar time series.

Everything here works on a scalar series ``x`` (typically one resolved
component of a free run) through its delay embedding::

    v_i = [x_i, x_{i + tau}, ..., x_{i + (m - 1) tau}]

Provided estimators

* :func:`mutual_information_delay` -- first local minimum of the histogram
  mutual information over equiprobable bins (delay selection).
* :func:`max_lyapunov` -- largest Lyapunov exponent, per sampling interval.
  ``method="rosenstein"`` follows the mean log divergence of nearest-neighbour
  pairs; ``method="eckmann"`` fits local linear maps on a delay orbit and
  accumulates their QR stretching factors.
* :func:`correlation_dimension` -- Grassberger-Procaccia slope of the
  correlation sum with a Theiler window.
* :func:`diks_test` -- kernel two-sample statistic for the hypothesis that two
  sets of delay vectors come from the same distribution.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateScaling, InsufficientNeighbors, NoMinimumWarning,
                     TooFewVectors)

# rows per block in the all-pairs loops (bounds memory to ~block * n doubles)
_BLOCK = 512


def _as_series(series):
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        x = x.reshape(-1) if x.ndim == 2 and 1 in x.shape else None
        if x is None:
            raise ValueError("expected a scalar time series")
    if not np.all(np.isfinite(x)):
        raise ValueError("time series contains non-finite values")
    return x


@dataclass(frozen=True)
class EmbeddingConfig:
    """Delay-embedding parameters.

    Parameters
    ----------
    m : int
        Embedding dimension (``>= 1``).
    tau : int
        Delay in samples (``>= 1``).
    theiler_window : int, optional
        Pairs of vectors closer than this many samples in time are never
        treated as neighbours.  Defaults to ``tau``.
    """

    m: int = 2
    tau: int = 1
    theiler_window: int = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {self.m!r}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"delay must be >= 1, got {self.tau!r}")
        w = self.tau if self.theiler_window is None else self.theiler_window
        if int(w) != w or w < 0:
            raise ValueError(f"Theiler window must be >= 0, got {w!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "theiler_window", int(w))

    @property
    def span(self):
        """Samples covered by one delay vector minus one: ``(m - 1) tau``."""
        return (self.m - 1) * self.tau


def delay_embed(series, m, tau=1):
    """Delay vectors of a scalar series, shape ``(len - (m-1) tau, m)``."""
    x = _as_series(series)
    n_vec = x.size - (m - 1) * tau
    if n_vec < 1:
        raise TooFewVectors(f"series of length {x.size} is too short for m={m}, tau={tau}")
    idx = np.arange(n_vec)[:, None] + tau * np.arange(m)[None, :]
    return x[idx]


def block_average(series, l):
    """Means of consecutive non-overlapping blocks of length ``l`` (remainder dropped)."""
    x = _as_series(series)
    if int(l) != l or l < 1:
        raise ValueError(f"segment length must be a positive integer, got {l!r}")
    k = x.size // int(l)
    return x[: k * int(l)].reshape(k, int(l)).mean(axis=1)


# --------------------------------------------------------------------------
# mutual information / delay selection
# --------------------------------------------------------------------------

def _equiprobable_labels(x, n_bins):
    """Bin label of each sample so that every bin holds ~``len(x)/n_bins`` samples."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.int64)
    ranks[order] = np.arange(x.size)
    return (ranks * n_bins) // x.size


def mutual_information(series, tau, n_bins=16):
    """Histogram estimate of ``I(x_t; x_{t+tau})`` in nats.

    Both marginals use the same equiprobable partition of the whole series.
    """
    x = _as_series(series)
    if tau < 0 or tau >= x.size - 1:
        raise ValueError(f"delay {tau} is out of range for a series of length {x.size}")
    labels = _equiprobable_labels(x, n_bins)
    a = labels[: x.size - tau]
    b = labels[tau:]
    joint = np.bincount(a * n_bins + b, minlength=n_bins * n_bins).reshape(n_bins, n_bins)
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))


@dataclass
class DelayChoice:
    """Result of :func:`mutual_information_delay` with ``full_output=True``."""

    tau: int
    found_minimum: bool
    mi: np.ndarray = field(repr=False)  # I(tau) for tau = 0 .. max_tau


def mutual_information_delay(series, max_tau=100, n_bins=16, full_output=False):
    """First local minimum of the mutual information ``I(tau)``, ``tau >= 1``.

    The minimum is the first ``tau`` with ``I(tau) <= I(tau + 1)``.  A value
    already at the noise floor of the estimator (twice the plug-in bias
    ``(n_bins - 1)^2 / (2 n)`` of independent samples) also counts, so for a
    series without lag dependence the choice is ``tau = 1`` rather than a
    random fluctuation further out.

    If ``I`` keeps decreasing up to ``max_tau`` a :class:`NoMinimumWarning` is
    issued and ``max_tau`` is returned (``found_minimum=False``).
    """
    x = _as_series(series)
    max_tau = int(min(max_tau, x.size - 2))
    if max_tau < 1:
        raise ValueError("series too short for delay selection")
    mi = np.array([mutual_information(x, t, n_bins) for t in range(max_tau + 1)])
    # plug-in bias of the estimator for independent samples
    floor = (n_bins - 1) ** 2 / (2.0 * x.size)
    for t in range(1, max_tau):
        if mi[t] <= mi[t + 1] or mi[t] <= 2.0 * floor:
            choice = DelayChoice(t, True, mi)
            break
    else:
        warnings.warn(f"mutual information has no local minimum up to tau={max_tau}",
                      NoMinimumWarning, stacklevel=2)
        choice = DelayChoice(max_tau, False, mi)
    return choice if full_output else choice.tau


# --------------------------------------------------------------------------
# maximal Lyapunov exponent
# --------------------------------------------------------------------------

def _nearest_outside_window(Y, window):
    """Index of the Euclidean nearest neighbour of every row with ``|i - j| > window``."""
    n = Y.shape[0]
    tree = cKDTree(Y)
    k = min(n, 2 * window + 2)
    nn = np.full(n, -1)
    pending = np.arange(n)
    while pending.size and k <= n:
        _, idx = tree.query(Y[pending], k=k)
        idx = np.atleast_2d(idx).reshape(pending.size, -1)
        ok = np.abs(idx - pending[:, None]) > window
        has = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        nn[pending[has]] = idx[has, first[has]]
        pending = pending[~has]
        if k == n:
            break
        k = min(n, 2 * k)
    return nn


def rosenstein_divergence(series, cfg, max_steps=20):
    """Mean log distance of nearest-neighbour pairs after ``0..max_steps`` steps.

    Returns
    -------
    ndarray, shape (max_steps + 1,)
        ``<ln ||v_{i+k} - v_{nn(i)+k}||>`` averaged over all valid pairs.
    """
    Y = delay_embed(series, cfg.m, cfg.tau)
    n = Y.shape[0] - max_steps
    if n < 2:
        raise InsufficientNeighbors("too few delay vectors to follow for "
                                    f"{max_steps} steps")
    nn = _nearest_outside_window(Y[:n], cfg.theiler_window)
    valid = nn >= 0
    if not np.any(valid):
        raise InsufficientNeighbors("no neighbour lies outside the Theiler window")
    i = np.nonzero(valid)[0]
    j = nn[valid]
    curve = np.empty(max_steps + 1)
    for k in range(max_steps + 1):
        d = np.linalg.norm(Y[i + k] - Y[j + k], axis=1)
        d = d[d > 0]
        if d.size == 0:
            raise InsufficientNeighbors(f"all neighbour pairs coincide at step {k}")
        curve[k] = np.mean(np.log(d))
    return curve


def _chebyshev_neighbourhoods(orbit, min_neighbors, min_tsep):
    """For each orbit vector, every admissible vector within the distance of its
    ``min_neighbors``-th nearest admissible one (Chebyshev norm, ties included).

    Admissible means ``|i - j| > min_tsep``.  Yields index arrays in orbit order.
    """
    n = orbit.shape[0]
    tree = cKDTree(orbit)
    k = min(n, min_neighbors + 2 * min_tsep + 2)
    for start in range(0, n, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, n))
        dist, idx = tree.query(orbit[rows], k=k, p=np.inf)
        for r_i, i in enumerate(rows):
            ok = np.abs(idx[r_i] - i) > min_tsep
            d_ok, j_ok = dist[r_i][ok], idx[r_i][ok]
            if d_ok.size >= min_neighbors and dist[r_i][-1] > d_ok[min_neighbors - 1]:
                yield j_ok[d_ok <= d_ok[min_neighbors - 1]]
                continue
            # candidate list too short or cut inside a tie: brute force this row
            d_all = np.max(np.abs(orbit - orbit[i]), axis=1)
            d_all[max(0, i - min_tsep): i + min_tsep + 1] = np.inf
            if np.count_nonzero(np.isfinite(d_all)) < min_neighbors:
                raise InsufficientNeighbors(f"orbit vector {i} has fewer than "
                                            f"{min_neighbors} admissible neighbours")
            radius = np.partition(d_all, min_neighbors - 1)[min_neighbors - 1]
            yield np.nonzero(d_all <= radius)[0]


def eckmann_spectrum(series, emb_dim=10, matrix_dim=4, min_neighbors=None, min_tsep=0):
    """Lyapunov spectrum (per sample) from local linear fits on a delay orbit.

    The series is embedded with unit delay in ``emb_dim`` dimensions.  The
    local map is assumed to act on the ``matrix_dim`` coordinates spaced
    ``s = (emb_dim - 1) / (matrix_dim - 1)`` samples apart, so it has
    companion form with a single unknown last row.  That row is fitted by
    least squares over all neighbours within the distance (Chebyshev norm) of
    the ``min_neighbors``-th nearest one, and the exponents are the averaged
    logs of the diagonal of successive QR factors, divided by ``s``.
    """
    x = _as_series(series)
    if matrix_dim < 2 or (emb_dim - 1) % (matrix_dim - 1):
        raise ValueError("emb_dim - 1 must be a positive multiple of matrix_dim - 1")
    s = (emb_dim - 1) // (matrix_dim - 1)
    if min_neighbors is None:
        min_neighbors = min(2 * matrix_dim, matrix_dim + 4)
    n_orbit = x.size - s - (emb_dim - 1)
    if n_orbit <= min_neighbors:
        raise InsufficientNeighbors(f"series of length {x.size} gives only {n_orbit} "
                                    f"orbit vectors (need > {min_neighbors})")
    orbit = x[np.arange(n_orbit)[:, None] + np.arange(emb_dim)[None, :]]
    cols = s * np.arange(matrix_dim)
    ahead = matrix_dim * s

    Q = np.eye(matrix_dim)
    log_sum = np.zeros(matrix_dim)
    counts = np.zeros(matrix_dim)
    T = np.zeros((matrix_dim, matrix_dim))
    T[:-1, 1:] = np.eye(matrix_dim - 1)
    for i, nb in enumerate(_chebyshev_neighbourhoods(orbit, min_neighbors, min_tsep)):
        A = x[nb[:, None] + cols] - x[i + cols]
        b = x[nb + ahead] - x[i + ahead]
        T[-1] = np.linalg.lstsq(A, b, rcond=None)[0]
        Qn, R = np.linalg.qr(T @ Q)
        sign = np.where(np.diag(R) < 0, -1.0, 1.0)
        Q = Qn * sign
        diag = np.diag(R) * sign
        pos = diag > 0
        log_sum[pos] += np.log(diag[pos])
        counts[pos] += 1
    with np.errstate(divide="ignore", invalid="ignore"):
        spectrum = np.where(counts > 0, log_sum / np.maximum(counts, 1), -np.inf)
    return spectrum / s


@dataclass
class LyapunovEstimate:
    """Largest Lyapunov exponent plus the settings that produced it."""

    value: float
    method: str
    m: int
    tau: int
    theiler_window: int
    fit_range: tuple = None
    divergence: np.ndarray = field(default=None, repr=False)
    spectrum: np.ndarray = field(default=None, repr=False)
    dt: float = 1.0

    def to_dict(self):
        d = {"value": self.value, "method": self.method, "m": self.m, "tau": self.tau,
             "theiler_window": self.theiler_window, "dt": self.dt,
             "fit_range": list(self.fit_range) if self.fit_range is not None else None}
        if self.divergence is not None:
            d["divergence"] = self.divergence.tolist()
        if self.spectrum is not None:
            d["spectrum"] = self.spectrum.tolist()
        return d


def max_lyapunov(series, cfg=None, fit_range=(0, 20), method="rosenstein", dt=1.0,
                 emb_dim=10, matrix_dim=4, min_neighbors=None, full_output=False):
    """Largest Lyapunov exponent of a scalar series.

    Parameters
    ----------
    series : array_like
    cfg : EmbeddingConfig, optional
        Embedding for the Rosenstein estimator (default ``m=2, tau=1``).  For
        the Eckmann estimator only ``theiler_window`` is used (as the minimal
        temporal separation of neighbours).
    fit_range : (int, int)
        Steps ``k`` over which the divergence curve is fitted by a line
        (Rosenstein only).
    method : {"rosenstein", "eckmann"}
    dt : float
        Sampling interval.  The result is per sample divided by ``dt``, so the
        default reports per-sample values.
    emb_dim, matrix_dim, min_neighbors
        Eckmann settings; see :func:`eckmann_spectrum`.

    Returns
    -------
    float or LyapunovEstimate
    """
    cfg = cfg or EmbeddingConfig()
    if method == "rosenstein":
        k0, k1 = (int(v) for v in fit_range)
        if not 0 <= k0 < k1:
            raise ValueError(f"invalid fit range {fit_range!r}")
        curve = rosenstein_divergence(series, cfg, k1)
        ks = np.arange(k0, k1 + 1)
        slope = float(np.polyfit(ks, curve[k0: k1 + 1], 1)[0])
        est = LyapunovEstimate(slope / dt, method, cfg.m, cfg.tau, cfg.theiler_window,
                               (k0, k1), divergence=curve, dt=dt)
    elif method == "eckmann":
        spec = eckmann_spectrum(series, emb_dim, matrix_dim, min_neighbors,
                                min_tsep=0 if cfg is None else cfg.theiler_window)
        est = LyapunovEstimate(float(spec[0]) / dt, method, emb_dim, 1, cfg.theiler_window,
                               None, spectrum=spec / dt, dt=dt)
    else:
        raise ValueError(f"unknown Lyapunov method {method!r}")
    return est if full_output else est.value


# --------------------------------------------------------------------------
# correlation dimension
# --------------------------------------------------------------------------

def correlation_sum(series, cfg, radii):
    """Fraction of vector pairs with ``|i - j| > w`` within each radius.

    Distances are Euclidean and a pair counts when its distance is ``<= r``.
    Pairs are counted exactly with a k-d tree; the pairs inside the Theiler
    window are counted separately (lag by lag) and removed.
    """
    Y = delay_embed(series, cfg.m, cfg.tau)
    radii = np.sort(np.asarray(radii, dtype=float))
    n = Y.shape[0]
    w = min(cfg.theiler_window, n - 1)
    total = n * (n - 1) // 2 - sum(n - lag for lag in range(1, w + 1))
    if total <= 0:
        raise DegenerateScaling("no vector pairs outside the Theiler window")
    tree = cKDTree(Y)
    # ordered pairs including i == j -> unordered pairs i < j
    counts = (tree.count_neighbors(tree, radii).astype(np.int64) - n) // 2
    for lag in range(1, w + 1):
        d = np.linalg.norm(Y[lag:] - Y[:-lag], axis=1)
        counts -= np.searchsorted(np.sort(d), radii, side="right")
    return counts / total


@dataclass
class CorrelationDimension:
    """Grassberger-Procaccia estimate and the fit that produced it."""

    value: float
    fit_range: tuple  # (r_min, r_max) in data units
    m: int
    tau: int
    theiler_window: int
    radii: np.ndarray = field(repr=False)
    csum: np.ndarray = field(repr=False)

    def to_dict(self):
        return {"value": self.value, "fit_range": list(self.fit_range), "m": self.m,
                "tau": self.tau, "theiler_window": self.theiler_window,
                "radii": self.radii.tolist(), "correlation_sum": self.csum.tolist()}


def _widest_flat_interval(log_r, log_c, rel_tol):
    """Widest run of consecutive radii whose local slopes vary by < ``rel_tol``."""
    slopes = np.diff(log_c) / np.diff(log_r)
    best = None
    n = slopes.size
    for a in range(n):
        lo = hi = slopes[a]
        for b in range(a, n):
            lo, hi = min(lo, slopes[b]), max(hi, slopes[b])
            mid = 0.5 * (lo + hi)
            if mid <= 0 or (hi - lo) > rel_tol * mid:
                break
            width = log_r[b + 1] - log_r[a]
            if best is None or width > best[0]:
                best = (width, a, b + 1)
    return best


def correlation_dimension(series, cfg=None, fit_range="auto", n_radii=40,
                          radius_span=(1e-3, 2.0), rel_tol=0.1, full_output=False):
    """Slope of ``log C(r)`` against ``log r``.

    Parameters
    ----------
    series : array_like
    cfg : EmbeddingConfig, optional
    fit_range : "auto" or (float, float)
        ``"auto"`` picks the widest log-r interval over which the local slope
        varies by less than ``rel_tol`` (relative).  A pair ``(a, b)`` fits
        on radii between ``a`` and ``b`` times the standard deviation of the
        series.
    n_radii : int
        Number of log-spaced radii.
    radius_span : (float, float)
        Radius grid limits (times the standard deviation) for ``"auto"``.

    Raises
    ------
    DegenerateScaling
        If some correlation sum in the fit range is zero or no usable scaling
        interval exists.
    """
    cfg = cfg or EmbeddingConfig()
    x = _as_series(series)
    sd = float(np.std(x))
    if sd == 0:
        raise DegenerateScaling("constant series has no scaling region")
    if isinstance(fit_range, str):
        if fit_range != "auto":
            raise ValueError(f"unknown fit range {fit_range!r}")
        lo, hi = radius_span
    else:
        lo, hi = (float(v) for v in fit_range)
        if not 0 < lo < hi:
            raise ValueError(f"invalid fit range {fit_range!r}")
    radii = sd * np.logspace(np.log10(lo), np.log10(hi), n_radii)
    csum = correlation_sum(x, cfg, radii)
    if isinstance(fit_range, str):
        keep = csum > 0
        if keep.sum() < 3:
            raise DegenerateScaling("correlation sum vanishes on almost every radius")
        log_r, log_c = np.log(radii[keep]), np.log(csum[keep])
        best = _widest_flat_interval(log_r, log_c, rel_tol)
        if best is None:
            raise DegenerateScaling("no interval with a stable local slope")
        _, a, b = best
        sel = slice(a, b + 1)
        r_fit, c_fit = log_r[sel], log_c[sel]
        r_range = (float(np.exp(log_r[a])), float(np.exp(log_r[b])))
    else:
        if np.any(csum == 0):
            raise DegenerateScaling("correlation sum is zero inside the fit range")
        r_fit, c_fit = np.log(radii), np.log(csum)
        r_range = (float(radii[0]), float(radii[-1]))
    value = float(np.polyfit(r_fit, c_fit, 1)[0])
    est = CorrelationDimension(value, r_range, cfg.m, cfg.tau, cfg.theiler_window,
                               radii, csum)
    return est if full_output else est.value


# --------------------------------------------------------------------------
# Diks test
# --------------------------------------------------------------------------

def diks_kernel(s, t, d, squared=True):
    """``exp(-||s - t||^2 / (4 d^2))``; ``squared=False`` uses the unsquared norm."""
    diff = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    dist = np.sum(diff * diff, axis=-1)
    if not squared:
        dist = np.sqrt(dist)
    return np.exp(-dist / (4.0 * d * d))


def _kernel_block(A, B, d, squared):
    d2 = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    if not squared:
        np.sqrt(d2, out=d2)
    return np.exp(-d2 / (4.0 * d * d))


@dataclass
class DiksReport:
    """Outcome of :func:`diks_test`.

    ``S = Q_hat / sqrt(variance)``; ``accepted`` means ``|S| < 3``.  When the
    conditional variance is exactly zero (all kernel values identical) ``S``
    is NaN and the hypothesis is not accepted.
    """

    Q_hat: float
    variance: float
    S: float
    d: float
    l: int
    m: int
    tau: int
    n1: int
    n2: int
    squared_distance: bool = True

    @property
    def accepted(self):
        return bool(np.isfinite(self.S) and abs(self.S) < 3.0)

    def to_dict(self):
        d = asdict(self)
        d["accepted"] = self.accepted
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)


def diks_statistic(X, Y, d, squared=True):
    """``(Q_hat, V_c)`` for two sets of delay vectors (rows of ``X`` and ``Y``).

    ``Q_hat`` is the unbiased estimate of the squared kernel distance between
    the two vector distributions; ``V_c`` its variance under the null
    hypothesis, conditional on the pooled sample.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError("vector sets have different dimensions")
    n1, n2 = X.shape[0], Y.shape[0]
    n = n1 + n2
    if n1 < 2 or n2 < 2 or n < 4:
        raise TooFewVectors(f"need at least 2 vectors per set and 4 in total, got {n1}, {n2}")
    if d <= 0:
        raise ValueError(f"bandwidth must be positive, got {d!r}")
    Z = np.vstack([X, Y])

    # pass 1: per-row kernel sums (off-diagonal) and the three Q_hat sums
    row_sum = np.empty(n)
    sxx = syy = sxy = 0.0
    for start in range(0, n, _BLOCK):
        rows = slice(start, min(start + _BLOCK, n))
        K = _kernel_block(Z[rows], Z, d, squared)
        idx = np.arange(rows.start, rows.stop)
        K[idx - start, idx] = 0.0
        row_sum[rows] = K.sum(axis=1)
        in_x = idx < n1
        sxx += K[in_x, :n1].sum()
        sxy += K[in_x, n1:].sum() + K[~in_x, :n1].sum()
        syy += K[~in_x, n1:].sum()
    # sxx, syy are sums over ordered pairs i != j; sxy counts each cross pair twice
    q_hat = (sxx / (n1 * (n1 - 1)) + syy / (n2 * (n2 - 1)) - sxy / (n1 * n2))

    n_pairs = n * (n - 1) / 2
    h_mean = row_sum.sum() / (2 * n_pairs)
    # g_i = (1/(n-2)) sum_{j != i} (h_ij - h_mean)
    g = (row_sum - (n - 1) * h_mean) / (n - 2)

    # pass 2: sum over i < j of phi_ij^2, phi_ij = h_ij - h_mean - g_i - g_j
    phi2 = 0.0
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        K = _kernel_block(Z[start:stop], Z[start:], d, squared)
        phi = K - h_mean - g[start:stop, None] - g[None, start:]
        phi = np.triu(phi, k=1)
        phi2 += np.sum(phi * phi)
    var = (2.0 * (n - 1) ** 2 * (n - 2)
           / (n1 * (n1 - 1) * n2 * (n2 - 1) * (n - 3)) * phi2 / n_pairs)
    return float(q_hat), float(var)


def diks_test(series_x, series_y, d, l=1, cfg=None, squared=True):
    """Diks two-sample test on delay vectors of two scalar series.

    Steps: average consecutive length-``l`` blocks of each series, embed the
    averaged series with ``(cfg.m, cfg.tau)``, then compute ``Q_hat``, its
    conditional variance and ``S = Q_hat / sqrt(V_c)``.

    Raises
    ------
    TooFewVectors
        If an averaged series yields fewer than two delay vectors.
    """
    cfg = cfg or EmbeddingConfig()
    vecs = []
    for name, s in (("x", series_x), ("y", series_y)):
        avg = block_average(s, l)
        if avg.size - cfg.span < 2:
            raise TooFewVectors(
                f"series {name}: {np.size(s)} samples average to {avg.size} blocks of "
                f"{l}, too few for m={cfg.m}, tau={cfg.tau}")
        vecs.append(delay_embed(avg, cfg.m, cfg.tau))
    q_hat, var = diks_statistic(vecs[0], vecs[1], d, squared)
    S = q_hat / np.sqrt(var) if var > 0 else float("nan")
    return DiksReport(q_hat, var, float(S), float(d), int(l), cfg.m, cfg.tau,
                      vecs[0].shape[0], vecs[1].shape[0], bool(squared))


@dataclass
class BandwidthSweep:
    bandwidths: np.ndarray
    S: np.ndarray
    best: float

    def to_dict(self):
        return {"bandwidths": self.bandwidths.tolist(), "S": self.S.tolist(),
                "best": self.best}


def bandwidth_sweep(series_x, series_y, bandwidths=None, l=1, cfg=None, squared=True):
    """Evaluate ``S`` over a bandwidth grid and return the most discriminating one.

    Intended for a held-out pair of trajectories: the chosen bandwidth is the
    one with the largest ``|S|`` (the highest discrepancy between the two).
    """
    if bandwidths is None:
        bandwidths = np.logspace(-5, 0, 11)
    bandwidths = np.asarray(bandwidths, dtype=float)
    S = np.array([diks_test(series_x, series_y, d, l, cfg, squared).S for d in bandwidths])
    finite = np.isfinite(S)
    if not finite.any():
        raise DegenerateScaling("S is undefined for every bandwidth in the sweep")
    best = float(bandwidths[finite][np.argmax(np.abs(S[finite]))])
    return BandwidthSweep(bandwidths, S, best)
