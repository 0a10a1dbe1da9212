import numpy as np
import pytest

from closurekit.burgers import (SpectralPartition, burgers_rhs, dealias_mask, initial_condition,
                                resolved_channel_rhs, simulate_burgers, spectral_closure_rhs)
from closurekit.errors import InvalidGrid
from closurekit.fft import dft, fft, ifft, is_power_of_two, to_physical, to_spectral, wavenumbers


def test_fft_round_trip_1024():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1024) + 1j * rng.normal(size=1024)
    assert np.max(np.abs(ifft(fft(x)) - x)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 8, 64, 256])
def test_fft_matches_direct_dft_and_numpy(n):
    x = np.random.default_rng(n).normal(size=(3, n)) + 0j
    got = fft(x)
    np.testing.assert_allclose(got, dft(x), atol=1e-10 * max(n, 1))
    np.testing.assert_allclose(got, np.fft.fft(x), atol=1e-10 * max(n, 1))


def test_fft_rejects_non_power_of_two():
    assert is_power_of_two(1024) and not is_power_of_two(12) and not is_power_of_two(0)
    with pytest.raises(InvalidGrid):
        fft(np.ones(12))


def test_spectral_normalisation():
    n = 16
    x = 2 * np.pi * np.arange(n) / n
    u_hat = to_spectral(np.sin(x))
    k = wavenumbers(n)
    assert u_hat[k == 1][0] == pytest.approx(-0.5j)
    assert u_hat[k == -1][0] == pytest.approx(0.5j)
    np.testing.assert_allclose(to_physical(u_hat).real, np.sin(x), atol=1e-14)
    np.testing.assert_allclose(initial_condition(n), u_hat)


def _rhs_oracle(u_hat, nu):
    """Direct convolution over dealiased pairs p + q = k (no wrap-around)."""
    n = u_hat.size
    k = wavenumbers(n)
    keep = dealias_mask(n)
    coef = dict(zip(k, np.where(keep, u_hat, 0)))
    out = np.empty(n, dtype=complex)
    for i, kk in enumerate(k):
        s = sum(coef[p] * coef[kk - p] for p in k if (kk - p) in coef)
        out[i] = -nu * kk * kk * u_hat[i] - 0.5j * kk * (s if keep[i] else 0.0)
    return out


def test_burgers_rhs_matches_convolution_oracle():
    n = 32
    rng = np.random.default_rng(1)
    u = rng.normal(size=n)
    u_hat = to_spectral(u)
    np.testing.assert_allclose(burgers_rhs(u_hat, 0.05), _rhs_oracle(u_hat, 0.05), atol=1e-12)


def test_burgers_rhs_at_sine():
    # u = sin x: u u_x = sin(2x)/2, so mode 1 only feels viscosity
    n, nu = 64, 0.1
    r = burgers_rhs(initial_condition(n), nu)
    k = wavenumbers(n)
    assert r[k == 1][0] == pytest.approx(-nu * -0.5j)
    # -sin(2x)/2 has coefficient -(1/2)(-0.5j) at k = 2
    assert r[k == 2][0] == pytest.approx(0.25j)


def test_resolved_closure_rhs_matches_brute_force():
    F = np.arange(-4, 4)
    rng = np.random.default_rng(2)
    u = rng.normal(size=F.size) + 1j * rng.normal(size=F.size)
    got = spectral_closure_rhs(u, F, 0.02)
    c = dict(zip(F, u))
    ref = np.array([-0.02 * k * k * c[k] - 0.5j * k * sum(c[p] * c[k - p] for p in F
                                                          if (k - p) in c) for k in F])
    np.testing.assert_allclose(got, ref, atol=1e-13)
    np.testing.assert_allclose(spectral_closure_rhs(np.stack([u, 2 * u]), F, 0.02)[1],
                               spectral_closure_rhs(2 * u, F, 0.02))
    with pytest.raises(ValueError):
        spectral_closure_rhs(u, np.array([0, 2, 3, 4, 5, 6, 7, 8]), 0.02)


def test_partition_lift_project_round_trip():
    part = SpectralPartition(64, 6)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 6))
    coeffs = np.zeros((4, 64), dtype=complex)
    coeffs[:, np.mod(part.resolved_wavenumbers, 64)] = part.lift(x)
    np.testing.assert_allclose(part.project(coeffs), x)
    # the lifted field is real and odd
    field = part.to_physical(x[0])
    assert field.shape == (64,)
    np.testing.assert_allclose(field[1:], -field[1:][::-1], atol=1e-12)
    assert resolved_channel_rhs(x, part, 0.01).shape == (4, 6)


def test_simulation_is_resolution_converged_and_dissipative():
    nu, T = 0.05, 0.5
    a = simulate_burgers(nu, 64, None, T, 6).snapshots
    b = simulate_burgers(nu, 128, None, T, 6).snapshots
    ka, kb = wavenumbers(64), wavenumbers(128)
    for k in range(-10, 11):
        assert abs(a[-1, ka == k][0] - b[-1, kb == k][0]) < 1e-8
    # odd real solution: imaginary coefficients, energy decays
    assert np.max(np.abs(a.real)) < 1e-12
    energy = np.sum(np.abs(a) ** 2, axis=1)
    assert np.all(np.diff(energy) < 0)
    with pytest.raises(InvalidGrid):
        simulate_burgers(nu, 48, None, T, 6)
