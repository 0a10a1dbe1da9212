import numpy as np
import pytest

from closurekit.errors import NonFiniteState
from closurekit.systems import (
    BLOWUP_THRESHOLD, LINEAR3D_MATRIX, PartitionSpec, StateTrajectory, SystemKind, SystemSpec,
    default_partition, duffing_map, integrate, linear3d, lorenz, resolved_rhs, simulate,
    step_forward_euler, van_der_pol)


def test_linear3d_euler_matches_matrix_power():
    dt = 0.01
    traj = simulate(linear3d(), [1.0, 0.0, 0.0], dt, 4000)
    assert traj.snapshots.shape == (4001, 3)
    step = np.eye(3) + dt * LINEAR3D_MATRIX
    np.testing.assert_allclose(traj.snapshots[4000], np.linalg.matrix_power(step, 4000)
                               @ [1.0, 0.0, 0.0], atol=1e-12)


def test_duffing_map_iterates_the_map():
    traj = simulate(duffing_map(), [0.1, 0.1], 1.0, 50)
    # compare one step at a time: rounding differences grow along a chaotic orbit
    X = traj.snapshots
    expected = np.column_stack([X[:-1, 1], -0.2 * X[:-1, 0] + 2.75 * X[:-1, 1] - X[:-1, 1] ** 3])
    np.testing.assert_allclose(X[1:], expected, rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        simulate(duffing_map(), [0.1, 0.1], 0.5, 5)


def test_vanderpol_and_lorenz_rates():
    f = van_der_pol(2.0).rhs()
    np.testing.assert_allclose(f(np.array([1.0, 2.0])), [2.0, 2.0 * 0.0 * 2.0 - 1.0])
    g = lorenz(10.0, 8.0 / 3.0, 28.0).rhs()
    np.testing.assert_allclose(g(np.array([1.0, 2.0, 3.0])), [10.0, 23.0, 2.0 - 8.0])


def test_spec_defaults_and_validation():
    s = SystemSpec("lorenz")
    assert s.kind is SystemKind.LORENZ and s.params["rho"] == 35.0
    assert (s.state_dim, s.resolved_dim) == (3, 1)
    with pytest.raises(ValueError):
        SystemSpec("lorenz", {"rho": float("nan")})
    with pytest.raises(ValueError):
        SystemSpec("burgers", {"n_grid": 8, "n_resolved": 8})


def test_partition():
    part = PartitionSpec((0, 2), 3)
    assert part.unresolved_indices == (1,)
    np.testing.assert_array_equal(part.project(np.arange(6.0).reshape(2, 3)), [[0, 2], [3, 5]])
    np.testing.assert_array_equal(part.lift([7.0, 8.0]), [7.0, 0.0, 8.0])
    for bad in ((0, 0), (3,), (0, 1, 2)):
        with pytest.raises(ValueError):
            PartitionSpec(bad, 3)


def test_resolved_rhs_zeroes_unresolved():
    spec = lorenz()
    f = resolved_rhs(spec)
    # x1' = sigma (x2 - x1) with x2 = 0
    np.testing.assert_allclose(f(np.array([2.0])), [-10.0 * 2.0])
    assert default_partition(spec).resolved_indices == (0,)


def test_blowup_detection():
    with pytest.raises(NonFiniteState) as exc:
        integrate(lambda x: x * x, [10.0], 1.0, 10)
    assert exc.value.partial.shape[0] >= 1
    assert np.all(np.abs(exc.value.partial) <= BLOWUP_THRESHOLD)
    with pytest.raises(ValueError):
        step_forward_euler(lambda x: x, np.ones(1), 0.0)


def test_trajectory_validation_and_window():
    with pytest.raises(ValueError):
        StateTrajectory(np.ones((1, 2)), 0.1)
    with pytest.raises(ValueError):
        StateTrajectory(np.ones((3, 2)), -0.1)
    with pytest.raises(ValueError):
        StateTrajectory(np.array([[1.0], [np.nan]]), 0.1)
    t = StateTrajectory(np.arange(10.0), 0.5)
    w = t.window(4, 8)
    assert w.n_snapshots == 4 and w.t0 == 2.0
    np.testing.assert_allclose(w.times, [2.0, 2.5, 3.0, 3.5])
