"""Monomial feature libraries over delay rows.

A :class:`MonomialLibrary` of input dimension ``n`` and maximal degree ``k``
holds every exponent vector with total degree ``<= k``.  Terms are ordered by
total degree and, within one degree, lexicographically by the sorted tuple of
variable indices (``combinations_with_replacement`` order), so for ``n = 2,
k = 2`` the order is ``1, a, b, a^2, a b, b^2``.  The count is ``C(n+k, k)``.

The *reduced multi-time* map replaces one big library over the whole delay row
by a sum of per-time libraries: the block for lag ``i`` is the library over
``[x^{j-i}, d^{j-i}]`` only, so no product of values from different times
appears.  The constant column is kept once, in the lag-0 block.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .closure_data import FeatureLayout, feature_width


def _check_nonneg(**kwargs):
    for name, value in kwargs.items():
        if int(value) != value or value < 0:
            raise ValueError(f"{name} must be a non-negative integer, got {value!r}")


class MonomialLibrary:
    """All monomials of degree ``<= max_degree`` in ``input_dim`` variables."""

    def __init__(self, input_dim, max_degree, var_names=None):
        _check_nonneg(input_dim=input_dim, max_degree=max_degree)
        if input_dim < 1:
            raise ValueError("input_dim must be positive")
        self.input_dim = int(input_dim)
        self.max_degree = int(max_degree)
        self.var_names = (list(var_names) if var_names is not None
                          else [f"h{i}" for i in range(self.input_dim)])
        if len(self.var_names) != self.input_dim:
            raise ValueError("need one name per input variable")
        self._index_terms = [()]
        for deg in range(1, self.max_degree + 1):
            self._index_terms.extend(combinations_with_replacement(range(self.input_dim), deg))

    def __len__(self):
        return len(self._index_terms)

    @property
    def terms(self):
        """Exponent multi-indices, shape ``(n_terms, input_dim)``."""
        out = np.zeros((len(self), self.input_dim), dtype=int)
        for t, idx in enumerate(self._index_terms):
            for i in idx:
                out[t, i] += 1
        return out

    def names(self):
        names = []
        for idx in self._index_terms:
            if not idx:
                names.append("1")
                continue
            parts = []
            for i in sorted(set(idx)):
                e = idx.count(i)
                parts.append(self.var_names[i] if e == 1 else f"{self.var_names[i]}^{e}")
            names.append("*".join(parts))
        return names

    def expand_matrix(self, Y):
        """Evaluate every monomial on each row of ``Y`` (shape ``(m, n)``)."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.input_dim:
            raise ValueError(f"expected rows of length {self.input_dim}, got shape {Y.shape}")
        out = np.empty((Y.shape[0], len(self)))
        cache = {(): np.ones(Y.shape[0])}
        for t, idx in enumerate(self._index_terms):
            if idx not in cache:
                cache[idx] = cache[idx[:-1]] * Y[:, idx[-1]]
            out[:, t] = cache[idx]
        return out

    def expand(self, row):
        row = np.asarray(row, dtype=float)
        if row.ndim != 1:
            raise ValueError("expand takes a single row; use expand_matrix for batches")
        return self.expand_matrix(row[None, :])[0]


def count_full(q, p, k):
    """Number of monomials over a full delay row: ``C(2(1+p)Q + k, k)``."""
    _check_nonneg(q=q, p=p, k=k)
    return comb(2 * (1 + p) * q + k, k)


def count_reduced(q, p, k):
    """Reduced multi-time feature count ``(1+p) C(2Q+k, k) - p``."""
    _check_nonneg(q=q, p=p, k=k)
    return (1 + p) * comb(2 * q + k, k) - p


def _time_slice_columns(q, p, i):
    """Column indices of ``[x^{j-i}, d^{j-i}]`` inside a full-layout row."""
    x_cols = np.arange(i * q, (i + 1) * q)
    d_cols = (1 + p) * q + x_cols
    return np.concatenate([x_cols, d_cols])


def expand_reduced_multitime(delay_rows, q, p, k):
    """Concatenate per-lag libraries of full-layout delay rows.

    Accepts a single row or a matrix of rows and returns a row or matrix of
    width :func:`count_reduced`.
    """
    arr = np.asarray(delay_rows, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 2 * (1 + p) * q:
        raise ValueError(f"full-layout row width must be {2 * (1 + p) * q}, got {arr.shape[1]}")
    lib = MonomialLibrary(2 * q, k)
    blocks = []
    for i in range(p + 1):
        block = lib.expand_matrix(arr[:, _time_slice_columns(q, p, i)])
        blocks.append(block if i == 0 else block[:, 1:])
    out = np.hstack(blocks)
    return out[0] if single else out


def delay_var_names(q, p, layout):
    """Human-readable names of the delay-row columns (``x0``, ``x0_lag1``, ``d0``...)."""
    layout = FeatureLayout(layout)

    def lag(base, i):
        return base if i == 0 else f"{base}_lag{i}"

    xs = [lag(f"x{c}", i) for i in range(p + 1) for c in range(q)]
    if layout is FeatureLayout.FULL:
        ds = [lag(f"d{c}", i) for i in range(p + 1) for c in range(q)]
    else:
        ds = [f"d{c}" for c in range(q)]
    return xs + ds


class PolyLayout(str, Enum):
    FULL = "full"
    ECONOMIC = "economic"
    REDUCED = "reduced"


@dataclass(frozen=True)
class PolyFeatureMap:
    """Delay row -> polynomial features, for a given ``(Q, p, k)`` and layout.

    ``FULL`` and ``ECONOMIC`` apply one library to the whole delay row of that
    layout; ``REDUCED`` applies :func:`expand_reduced_multitime` to a full row.
    """

    q: int
    p: int
    k: int
    layout: PolyLayout = PolyLayout.FULL

    def __post_init__(self):
        object.__setattr__(self, "layout", PolyLayout(self.layout))
        _check_nonneg(q=self.q, p=self.p, k=self.k)

    @property
    def row_layout(self):
        """Layout of the delay rows this map consumes."""
        if self.layout is PolyLayout.ECONOMIC:
            return FeatureLayout.ECONOMIC
        return FeatureLayout.FULL

    @property
    def input_width(self):
        return feature_width(self.q, self.p, self.row_layout)

    @cached_property
    def _library(self):
        return MonomialLibrary(self.input_width, self.k,
                               delay_var_names(self.q, self.p, self.row_layout))

    def library(self):
        return self._library

    @property
    def n_features(self):
        if self.layout is PolyLayout.REDUCED:
            return count_reduced(self.q, self.p, self.k)
        return comb(self.input_width + self.k, self.k)

    def names(self):
        if self.layout is not PolyLayout.REDUCED:
            return self.library().names()
        var = delay_var_names(self.q, self.p, FeatureLayout.FULL)
        out = []
        for i in range(self.p + 1):
            cols = _time_slice_columns(self.q, self.p, i)
            names = MonomialLibrary(2 * self.q, self.k, [var[c] for c in cols]).names()
            out.extend(names if i == 0 else names[1:])
        return out

    def transform(self, Y):
        Y = np.asarray(Y, dtype=float)
        if self.layout is PolyLayout.REDUCED:
            return expand_reduced_multitime(Y, self.q, self.p, self.k)
        lib = self._library
        if Y.ndim == 1:
            return lib.expand(Y)
        return lib.expand_matrix(Y)

    def to_dict(self):
        return {"q": self.q, "p": self.p, "k": self.k, "layout": self.layout.value}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["q"]), int(d["p"]), int(d["k"]), PolyLayout(d["layout"]))
