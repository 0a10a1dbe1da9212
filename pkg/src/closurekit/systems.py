"""Full-order benchmark systems and the resolved/unresolved partition.

Every ODE system is advanced with first-order forward Euler; the Duffing map is
written in the same "state + dt * rate" form with dt fixed to 1, so the same
closure machinery applies to all of them.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NonFiniteState

BLOWUP_THRESHOLD = 1e8

LINEAR3D_MATRIX = np.array([
    [0.0, -1.0, -1.0],
    [0.5, -1.1, 1.5],
    [1.0, -3.0, 0.5],
])


class SystemKind(str, Enum):
    LINEAR3D = "linear3d"
    VANDERPOL = "vanderpol"
    DUFFING = "duffing"
    LORENZ = "lorenz"
    BURGERS = "burgers"


_DEFAULTS = {
    SystemKind.LINEAR3D: ({}, 3, 1),
    SystemKind.VANDERPOL: ({"mu": 2.0}, 2, 1),
    SystemKind.DUFFING: ({"a": 2.75, "b": 0.2}, 2, 1),
    SystemKind.LORENZ: ({"sigma": 10.0, "beta": 8.0 / 3.0, "rho": 35.0}, 3, 1),
    SystemKind.BURGERS: ({"nu": 0.02, "n_grid": 1024, "n_resolved": 6}, 1024, 6),
}


@dataclass(frozen=True)
class SystemSpec:
    """Which benchmark system, its parameters and its dimensions.

    For ``BURGERS`` the state dimension is the number of grid points and the
    resolved dimension is the number of real training channels.
    """

    kind: SystemKind
    params: dict = field(default_factory=dict)
    state_dim: int = 0
    resolved_dim: int = 0

    def __post_init__(self):
        kind = SystemKind(self.kind)
        object.__setattr__(self, "kind", kind)
        defaults, n, q = _DEFAULTS[kind]
        params = {**defaults, **dict(self.params)}
        object.__setattr__(self, "params", params)
        if kind is SystemKind.BURGERS:
            n = int(params["n_grid"])
            q = int(params["n_resolved"])
        if not self.state_dim:
            object.__setattr__(self, "state_dim", n)
        if not self.resolved_dim:
            object.__setattr__(self, "resolved_dim", q)
        if not 0 < self.resolved_dim < self.state_dim:
            raise ValueError(f"need 0 < Q < N, got Q={self.resolved_dim}, N={self.state_dim}")
        for name, value in params.items():
            if not np.isfinite(float(value)):
                raise ValueError(f"parameter {name!r} is not finite")

    def rhs(self):
        """Return the rate function ``x -> F(x)`` (ODE systems and the Duffing map)."""
        p = self.params
        kind = self.kind
        if kind is SystemKind.LINEAR3D:
            A = LINEAR3D_MATRIX
            return lambda x: A @ x
        if kind is SystemKind.VANDERPOL:
            mu = p["mu"]
            return lambda x: np.array([x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]])
        if kind is SystemKind.DUFFING:
            a, b = p["a"], p["b"]
            return lambda x: np.array([x[1] - x[0], -b * x[0] + (a - 1.0) * x[1] - x[1] ** 3])
        if kind is SystemKind.LORENZ:
            s, beta, rho = p["sigma"], p["beta"], p["rho"]
            return lambda x: np.array([
                s * (x[1] - x[0]),
                x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2],
            ])
        raise ValueError("Burgers has no pointwise rhs; use closurekit.burgers")


def linear3d():
    return SystemSpec(SystemKind.LINEAR3D)


def van_der_pol(mu=2.0):
    return SystemSpec(SystemKind.VANDERPOL, {"mu": mu})


def duffing_map(a=2.75, b=0.2):
    return SystemSpec(SystemKind.DUFFING, {"a": a, "b": b})


def lorenz(sigma=10.0, beta=8.0 / 3.0, rho=35.0):
    return SystemSpec(SystemKind.LORENZ, {"sigma": sigma, "beta": beta, "rho": rho})


def burgers(nu=0.02, n_grid=1024, n_resolved=6):
    return SystemSpec(SystemKind.BURGERS, {"nu": nu, "n_grid": n_grid, "n_resolved": n_resolved})


@dataclass
class StateTrajectory:
    """Uniformly sampled snapshots; row ``j`` is the state at ``t0 + j*dt``."""

    snapshots: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.snapshots = np.asarray(self.snapshots)
        if self.snapshots.ndim == 1:
            self.snapshots = self.snapshots[:, None]
        if self.snapshots.shape[0] < 2:
            raise ValueError("a trajectory needs at least two snapshots")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.snapshots)):
            raise ValueError("trajectory contains non-finite entries")

    @property
    def n_snapshots(self):
        return self.snapshots.shape[0]

    @property
    def state_dim(self):
        return self.snapshots.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_snapshots)

    def window(self, start, stop=None):
        stop = self.n_snapshots if stop is None else stop
        return StateTrajectory(self.snapshots[start:stop], self.dt, self.t0 + start * self.dt)


@dataclass(frozen=True)
class PartitionSpec:
    """Resolved components of a state vector; everything else is unresolved."""

    resolved_indices: tuple
    state_dim: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.resolved_indices)
        object.__setattr__(self, "resolved_indices", idx)
        if len(set(idx)) != len(idx):
            raise ValueError("resolved indices must be distinct")
        if any(i < 0 or i >= self.state_dim for i in idx):
            raise ValueError(f"resolved indices must lie in [0, {self.state_dim})")
        if not 0 < len(idx) < self.state_dim:
            raise ValueError("need at least one resolved and one unresolved component")

    @property
    def q(self):
        return len(self.resolved_indices)

    @property
    def unresolved_indices(self):
        keep = set(self.resolved_indices)
        return tuple(i for i in range(self.state_dim) if i not in keep)

    def project(self, snapshots):
        """Resolved part of one state or a stack of states."""
        snapshots = np.asarray(snapshots)
        return snapshots[..., list(self.resolved_indices)]

    def unresolved(self, snapshots):
        return np.asarray(snapshots)[..., list(self.unresolved_indices)]

    def lift(self, x_hat):
        """Embed resolved values into a full state with the unresolved part zeroed."""
        x_hat = np.asarray(x_hat, dtype=float)
        full = np.zeros(x_hat.shape[:-1] + (self.state_dim,))
        full[..., list(self.resolved_indices)] = x_hat
        return full


def default_partition(spec):
    """Resolved set used for each benchmark: the first component for the ODEs."""
    if spec.kind is SystemKind.BURGERS:
        from .burgers import SpectralPartition
        return SpectralPartition(int(spec.params["n_grid"]), int(spec.params["n_resolved"]))
    return PartitionSpec(tuple(range(spec.resolved_dim)), spec.state_dim)


def resolved_rhs(spec, partition=None):
    """``x_hat -> F_hat(x_hat, 0)``: the resolved rate with unresolved states zeroed."""
    partition = default_partition(spec) if partition is None else partition
    if spec.kind is SystemKind.BURGERS:
        from .burgers import resolved_channel_rhs
        nu = spec.params["nu"]
        return lambda x_hat: resolved_channel_rhs(x_hat, partition, nu)
    f = spec.rhs()

    def rhs(x_hat):
        return partition.project(f(partition.lift(x_hat)))

    return rhs


@dataclass(frozen=True)
class DualLinearSystem:
    """Resolved dynamics ``F_hat + A12 x_tilde``, unresolved ``H(x_hat) + A22 x_tilde``."""

    F_hat: object
    H: object
    A12: np.ndarray
    A22: np.ndarray

    def __post_init__(self):
        A12 = np.atleast_2d(np.asarray(self.A12, dtype=float))
        A22 = np.atleast_2d(np.asarray(self.A22, dtype=float))
        object.__setattr__(self, "A12", A12)
        object.__setattr__(self, "A22", A22)
        if A22.shape[0] != A22.shape[1] or A12.shape[1] != A22.shape[0]:
            raise ValueError(f"inconsistent shapes A12 {A12.shape}, A22 {A22.shape}")

    @property
    def q(self):
        return self.A12.shape[0]

    @property
    def n_unresolved(self):
        return self.A22.shape[0]

    def rhs(self):
        q = self.q

        def f(x):
            x_hat, x_tilde = x[:q], x[q:]
            return np.concatenate([
                np.asarray(self.F_hat(x_hat)) + self.A12 @ x_tilde,
                np.asarray(self.H(x_hat)) + self.A22 @ x_tilde,
            ])

        return f


def linear3d_dual():
    """The 3D linear benchmark written as a dual-linear-closure system."""
    A = LINEAR3D_MATRIX
    return DualLinearSystem(
        F_hat=lambda x_hat: A[:1, :1] @ x_hat,
        H=lambda x_hat: A[1:, :1] @ x_hat,
        A12=A[:1, 1:],
        A22=A[1:, 1:],
    )


def step_forward_euler(rhs, state, dt, step=None):
    """One explicit Euler step ``state + dt * rhs(state)``.

    Raises :class:`NonFiniteState` if the result is non-finite or exceeds the
    blow-up threshold.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    new = state + dt * np.asarray(rhs(state))
    if not np.all(np.isfinite(new)) or np.max(np.abs(new), initial=0.0) > BLOWUP_THRESHOLD:
        raise NonFiniteState(f"non-finite or runaway state at step {step}", step=step)
    return new


def integrate(rhs, x0, dt, n_steps):
    """Forward-Euler trajectory of an arbitrary rate function, ``n_steps + 1`` rows."""
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for n in range(n_steps):
        try:
            x = step_forward_euler(rhs, x, dt, step=n + 1)
        except NonFiniteState as exc:
            exc.partial = out[: n + 1].copy()
            raise
        out[n + 1] = x
    return out


def simulate(spec, x0, dt, n_steps, t0=0.0):
    """Simulate a benchmark system and return a :class:`StateTrajectory`.

    Parameters
    ----------
    spec : SystemSpec
    x0 : array_like
        Initial state of length ``spec.state_dim``.  Ignored for Burgers, whose
        initial condition is fixed to ``sin(x)``.
    dt : float
        Time step.  Must be exactly 1 for the Duffing map.  For Burgers this is
        the snapshot spacing; the solver substeps internally.
    n_steps : int
        Number of steps; the trajectory has ``n_steps + 1`` rows.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if spec.kind is SystemKind.BURGERS:
        from .burgers import simulate_burgers
        p = spec.params
        return simulate_burgers(p["nu"], int(p["n_grid"]), None, dt * n_steps, n_steps + 1)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.state_dim,):
        raise ValueError(f"x0 must have length {spec.state_dim}")
    if spec.kind is SystemKind.DUFFING and dt != 1.0:
        raise ValueError("the Duffing map is defined with dt = 1")
    return StateTrajectory(integrate(spec.rhs(), x0, dt, n_steps), dt, t0)
