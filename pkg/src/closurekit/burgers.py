"""Pseudo-spectral viscous Burgers solver and its spectral closure split.

Solves u_t + u u_x = nu u_xx on [0, 2*pi) with u(x, 0) = sin(x).  The state is
stored as Fourier-series coefficients ``u_hat[k]`` (forward transform divided
by ``n_grid``, see :mod:`closurekit.fft`) in transform order, so that at t = 0
``u_hat[1] = -0.5j`` and ``u_hat[-1] = +0.5j``.  In this normalisation the
spectral right-hand side of mode k is

    d u_hat_k / dt = -nu k^2 u_hat_k - (i k / 2) sum_{p+q=k} u_hat_p u_hat_q.

The nonlinear product is formed in physical space with the 2/3 rule: modes with
|k| > n_grid / 3 are zeroed before the product and in its result.  Time
stepping is the three-stage SSP Runge-Kutta scheme of Shu and Osher.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGrid, NonFiniteState
from .fft import is_power_of_two, to_physical, to_spectral, wavenumbers
from .systems import BLOWUP_THRESHOLD, StateTrajectory


def dealias_mask(n_grid):
    return np.abs(wavenumbers(n_grid)) <= n_grid / 3.0


def burgers_rhs(u_hat, nu, k=None, mask=None):
    """Full spectral rate for every mode, with 2/3 dealiasing of the product."""
    n = u_hat.shape[-1]
    k = wavenumbers(n) if k is None else k
    mask = dealias_mask(n) if mask is None else mask
    u = to_physical(u_hat * mask).real
    nonlinear = to_spectral(u * u) * mask
    return -nu * k * k * u_hat - 0.5j * k * nonlinear


def initial_condition(n_grid):
    x = 2.0 * np.pi * np.arange(n_grid) / n_grid
    return to_spectral(np.sin(x))


def simulate_burgers(nu, n_grid, dt, t_final, snapshot_count):
    """Integrate viscous Burgers from ``sin(x)`` and return spectral snapshots.

    Parameters
    ----------
    nu : float
        Viscosity.
    n_grid : int
        Number of collocation points; must be a power of two.
    dt : float or None
        Upper bound on the internal time step.  ``None`` selects ``0.01 * dx``.
        The step actually used is shortened so that a whole number of steps
        separates consecutive snapshots.
    t_final : float
        End time; snapshots are taken at ``linspace(0, t_final, snapshot_count)``.
    snapshot_count : int

    Returns
    -------
    StateTrajectory
        Complex coefficients, shape ``(snapshot_count, n_grid)``, transform order.
    """
    if not is_power_of_two(n_grid):
        raise InvalidGrid(f"n_grid must be a power of two, got {n_grid}")
    if snapshot_count < 2:
        raise ValueError("need at least two snapshots")
    dx = 2.0 * np.pi / n_grid
    dt_max = 0.01 * dx if dt is None else float(dt)
    spacing = t_final / (snapshot_count - 1)
    substeps = max(1, math.ceil(spacing / dt_max - 1e-9))
    h = spacing / substeps

    k = wavenumbers(n_grid)
    mask = dealias_mask(n_grid)

    def rate(v):
        return burgers_rhs(v, nu, k, mask)

    u = initial_condition(n_grid)
    out = np.empty((snapshot_count, n_grid), dtype=complex)
    out[0] = u
    for j in range(1, snapshot_count):
        for _ in range(substeps):
            u1 = u + h * rate(u)
            u2 = 0.75 * u + 0.25 * (u1 + h * rate(u1))
            u = u / 3.0 + (2.0 / 3.0) * (u2 + h * rate(u2))
        if not np.all(np.isfinite(u)) or np.abs(u).max() > BLOWUP_THRESHOLD:
            raise NonFiniteState(f"Burgers solution blew up before snapshot {j}",
                                 step=j, partial=out[:j].copy())
        out[j] = u
    return StateTrajectory(out, spacing, 0.0)


def spectral_closure_rhs(u_hat_resolved, F, nu):
    """Resolved-only spectral rate ``F_hat(x_hat, 0)`` for the modes in ``F``.

    ``F`` must be a contiguous, increasing range of wavenumbers and
    ``u_hat_resolved[i]`` the coefficient of mode ``F[i]``.  Only pairs
    ``p + q = k`` with both ``p`` and ``q`` in ``F`` enter the convolution.
    """
    F = np.asarray(F)
    u = np.asarray(u_hat_resolved, dtype=complex)
    if u.shape[-1] != F.size:
        raise ValueError(f"expected {F.size} resolved coefficients, got {u.shape[-1]}")
    if np.any(np.diff(F) != 1):
        raise ValueError("F must be a contiguous increasing range of wavenumbers")
    kmin = F[0]
    if u.ndim == 1:
        conv = np.convolve(u, u)
    else:
        conv = np.stack([np.convolve(row, row) for row in u])
    # conv[..., m] holds the sum over p + q = 2*kmin + m.
    pair_sum = conv[..., F - 2 * kmin]
    return -nu * F * F * u - 0.5j * F * pair_sum


@dataclass(frozen=True)
class SpectralPartition:
    """Resolved Fourier modes of the Burgers state and its real training channels.

    Resolved modes are ``F = {-n_resolved, ..., n_resolved - 1}``.  Because the
    solution from ``sin(x)`` is real and odd, every coefficient is imaginary
    with ``u_hat[-k] = conj(u_hat[k])``, so the imaginary parts of modes
    ``-n_resolved..-1`` determine the resolved field.  Those are the ``q``
    channels the closure is trained on.
    """

    n_grid: int
    n_resolved: int = 6

    @property
    def q(self):
        return self.n_resolved

    @property
    def state_dim(self):
        return self.n_grid

    @property
    def resolved_wavenumbers(self):
        return np.arange(-self.n_resolved, self.n_resolved)

    @property
    def channel_wavenumbers(self):
        return np.arange(-self.n_resolved, 0)

    def _columns(self, ks):
        return np.mod(ks, self.n_grid)

    def project(self, snapshots):
        snapshots = np.asarray(snapshots)
        return snapshots[..., self._columns(self.channel_wavenumbers)].imag.copy()

    def resolved_coefficients(self, snapshots):
        return np.asarray(snapshots)[..., self._columns(self.resolved_wavenumbers)]

    def lift(self, x_hat):
        """Channels -> complex coefficients over ``F`` (odd-symmetric, mode 0 zero)."""
        x_hat = np.asarray(x_hat, dtype=float)
        n = self.n_resolved
        out = np.zeros(x_hat.shape[:-1] + (2 * n,), dtype=complex)
        out[..., :n] = 1j * x_hat                      # k = -n .. -1
        out[..., n + 1:] = -1j * x_hat[..., ::-1][..., :n - 1]   # k = 1 .. n-1
        return out

    def to_physical(self, x_hat, n_points=None):
        """Resolved field on a uniform grid, for plotting and physical-space errors."""
        n_points = self.n_grid if n_points is None else n_points
        coeffs = np.zeros(np.shape(x_hat)[:-1] + (n_points,), dtype=complex)
        coeffs[..., np.mod(self.resolved_wavenumbers, n_points)] = self.lift(x_hat)
        return to_physical(coeffs).real


def resolved_channel_rhs(x_hat, partition, nu):
    """``F_hat(x_hat, 0)`` restricted to the real training channels."""
    rate = spectral_closure_rhs(partition.lift(x_hat), partition.resolved_wavenumbers, nu)
    return rate[..., : partition.n_resolved].imag
