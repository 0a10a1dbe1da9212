"""Acceptance suite: one test per criterion.

Every test evaluates all sub-checks of its criterion, records a single
``CRITERION n: PASS|FAIL`` line with the measured values (printed again in
the terminal summary) and then asserts.  Reference values are either
derived independently inside the test (matrix algebra, direct simulation,
least squares, brute-force oracles) or are fixed benchmark reference values.
"""

import time

import numpy as np
import pytest
from conftest import record_criterion

from closurekit.chaos_diagnostics import EmbeddingConfig, diks_statistic, diks_test
from closurekit.config import preset
from closurekit.experiments import (fit_closure, prepare_dataset, run_experiment,
                                   simulate_experiment, system_setup, window_bounds)
from closurekit.fft import fft, ifft
from closurekit.observability import (build_gamma, gamma_matrix, minimal_memory_full,
                                      numerical_rank, obsv_matrix, propagate_unresolved,
                                      random_dual_system, reconstruct_unresolved)
from closurekit.rom_eval import AugmentedROM, free_run_from_dataset, run_error
from closurekit.sparse_regression import lasso_fit, ols_fit
from closurekit.systems import LINEAR3D_MATRIX, integrate
from closurekit.tdnn import Activation, flatten_grads, init_mlp, loss_and_grad


def _conclude(number, checks, elapsed, limit):
    """Record the criterion line from ``(label, ok, value)`` checks and assert."""
    checks = list(checks) + [("runtime", elapsed < limit, f"{elapsed:.3g}s < {limit:g}s")]
    failed = [c for c in checks if not c[1]]
    detail = "; ".join(f"{label} {'ok' if ok else 'FAILED'} ({value})"
                       for label, ok, value in checks)
    record_criterion(number, not failed, detail)
    assert not failed, "failed sub-checks: " + ", ".join(c[0] for c in failed)


def _rel(a, b):
    return abs(a - b) / abs(b)


# --------------------------------------------------------------------------
# 1. rank theory on the 3D linear system
# --------------------------------------------------------------------------

def test_criterion_1_linear3d_rank_theory():
    A12 = np.array([[-1.0, -1.0]])
    A22 = np.array([[-1.1, 1.5], [-3.0, 0.5]])
    rep = minimal_memory_full(A12, A22)
    # warm timing: best of repeated calls, excluding the first import-time call
    times = []
    for _ in range(50):
        t = time.perf_counter()
        minimal_memory_full(A12, A22)
        times.append(time.perf_counter() - t)
    best = min(times)
    _conclude(1, [("p*", rep.p_star_full == 1, f"p*={rep.p_star_full}")], best, 1e-3)


# --------------------------------------------------------------------------
# 2. sparse recovery on the 3D linear system
# --------------------------------------------------------------------------

def _linear3d_analytic_closure(dt):
    """Closure rate ``(d^{n+1} - d^n)/dt`` in terms of ``x^n, x^{n-1}, d^n, d^{n-1}``.

    With ``B = I + dt A22`` and Cayley-Hamilton ``B^2 = tr(B) B - det(B) I``:
    ``rate = c H x^n + (c B H - tr(B) c H) x^{n-1} + (tr(B) - 1)/dt d^n
    - det(B)/dt d^{n-1}`` where ``c = A12`` and ``H = A21``.
    """
    A = LINEAR3D_MATRIX
    c, H, A22 = A[:1, 1:], A[1:, :1], A[1:, 1:]
    B = np.eye(2) + dt * A22
    trB, detB = np.trace(B), np.linalg.det(B)
    return {"x0": (c @ H).item(), "x0_lag1": (c @ B @ H - trB * c @ H).item(),
            "d0": (trB - 1.0) / dt, "d0_lag1": -detB / dt}


def test_criterion_2_linear3d_sparse_recovery():
    t0 = time.perf_counter()
    cfg = preset("linear3d")
    res = run_experiment(cfg)
    terms = res.fit.model.terms(0)
    nnz = int(res.fit.model.nonzero_count[0])
    analytic = _linear3d_analytic_closure(cfg.simulation.dt)
    coef_err = {k: _rel(terms.get(k, 0.0), v) for k, v in analytic.items()}
    test = res.evaluation.windows["test"]

    control_cfg = preset("linear3d")
    control_cfg.data.p = 0
    control = run_experiment(control_cfg, windows=("test",), trajectory=res.trajectory)
    ctest = control.evaluation.windows["test"]
    elapsed = time.perf_counter() - t0
    control_failed = ctest.diverged_at is not None or ctest.mse > 1e-2

    # the library is collinear (d^{n-1} = (x^n - x^{n-1})/dt when A11 = 0);
    # report how far the fit is from the analytic closure once the null
    # direction (x0: +1/dt, x0_lag1: -1/dt, d0_lag1: -1) is projected out
    keys = ["1", "x0", "x0_lag1", "d0", "d0_lag1"]
    diff = np.array([terms.get(k, 0.0) - analytic.get(k, 0.0) for k in keys])
    null = np.array([0.0, 1.0 / cfg.simulation.dt, -1.0 / cfg.simulation.dt, 0.0, -1.0])
    null /= np.linalg.norm(null)
    off_null = np.linalg.norm(diff - (diff @ null) * null)
    fitted = ", ".join(f"{k}={v:.6g}" for k, v in terms.items())
    expected = ", ".join(f"{k}={v:.6g}" for k, v in analytic.items())
    _conclude(2, [
        ("nnz==4", nnz == 4, f"nnz={nnz}"),
        ("coefficients rel<1e-2", max(coef_err.values()) < 1e-2,
         f"fitted {fitted}; analytic {expected}; max rel err {max(coef_err.values()):.3g}; "
         f"difference off the library null direction {off_null:.2g}"),
        ("test MSE<1e-6", test.diverged_at is None and test.mse < 1e-6, f"{test.mse:.3g}"),
        ("p=0 control fails", control_failed,
         f"MSE {ctest.mse:.3g}, diverged_at {ctest.diverged_at}"),
    ], elapsed, 10.0)


# --------------------------------------------------------------------------
# 3. Van der Pol recovery
# --------------------------------------------------------------------------

def test_criterion_3_vanderpol_recovery():
    t0 = time.perf_counter()
    cfg = preset("vanderpol")
    setup = system_setup(cfg)
    traj = simulate_experiment(cfg, setup)
    ds = prepare_dataset(cfg, traj, setup)
    fit = fit_closure(cfg, ds)
    # free run from the initial condition across the whole record
    rom = AugmentedROM(setup.rhs, fit.closure, ds.dt)
    run = free_run_from_dataset(rom, ds, 0, ds.X.shape[0] - 1, safe=True)
    mse = run_error(ds.X, run) if run.diverged_at is None else float("inf")
    elapsed = time.perf_counter() - t0

    lam = float(np.atleast_1d(fit.model.lam)[0])
    terms = fit.model.terms(0)
    dominant = sorted(terms, key=lambda k: -abs(terms[k]))[:3]
    target = {"x0": -1.0, "d0": 2.0, "x0^2*d0": -2.0}
    coef_ok = set(dominant) == set(target) and all(
        abs(terms[k] - v) < 1e-2 for k, v in target.items())
    rest = max((abs(v) for k, v in terms.items() if k not in target), default=0.0)
    _conclude(3, [
        ("lambda near 1e-10", 1e-11 <= lam <= 1e-9, f"selected {lam:.3g}"),
        ("dominant terms", coef_ok and rest < 1e-2,
         ", ".join(f"{k}={terms[k]:.8g}" for k in dominant) + f"; largest other {rest:.2g}"),
        ("free-run MSE<1e-4 over 6000 steps",
         run.diverged_at is None and run.x.shape[0] == ds.X.shape[0] and mse < 1e-4,
         f"{mse:.3g} over {run.x.shape[0] - 1} steps"),
    ], elapsed, 30.0)


# --------------------------------------------------------------------------
# 4. Duffing recovery and attractor statistics
# --------------------------------------------------------------------------

def _attractor_checks(res, windows, mle_ok, mle_ref, gamma_ref, gamma_tol):
    checks = []
    for name in windows:
        w = res.evaluation.windows[name]
        dg = w.diagnostics or {}
        if w.diverged_at is not None or "model" not in dg:
            checks.append((f"{name} free run", False, f"diverged at {w.diverged_at}"))
            continue
        truth, model, diks = dg["truth"], dg["model"], dg["diks"]
        mle, gam, S = model["mle"], model["corr_dim"], diks.get("S")
        checks.append((f"{name} MLE", mle is not None and mle_ok(mle),
                       f"model {mle:.4g} vs {mle_ref}; truth {truth['mle']:.4g}"))
        checks.append((f"{name} gamma", gam is not None and abs(gam - gamma_ref) <= gamma_tol,
                       f"model {gam:.4g} vs {gamma_ref}+-{gamma_tol}; "
                       f"truth {truth['corr_dim']:.4g}"))
        checks.append((f"{name} Diks |S|<3", S is not None and abs(S) < 3,
                       f"S={S:.3g}" + (" with fallback" if diks.get("fallbacks") else "")))
    return checks


def test_criterion_4_duffing_recovery_and_attractor():
    t0 = time.perf_counter()
    res = run_experiment(preset("duffing"))
    elapsed = time.perf_counter() - t0
    terms = res.fit.model.terms(0)
    target = {"x0": -0.2, "d0": 1.75, "d0^3": -1.0}
    coef_ok = all(abs(terms.get(k, 0.0) - v) < 1e-3 for k, v in target.items())
    checks = [("coefficients within 1e-3", coef_ok,
               ", ".join(f"{k}={terms.get(k, 0.0):.9g}" for k in target))]
    checks += _attractor_checks(res, ("train", "test"), lambda m: abs(m - 0.98) <= 0.05,
                                "0.98+-0.05", 1.12, 0.05)
    _conclude(4, checks, elapsed, 120.0)


# --------------------------------------------------------------------------
# 5. Lorenz: chaotic attractor statistics and non-chaotic free run
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_lorenz():
    t0 = time.perf_counter()
    chaotic = run_experiment(preset("lorenz_chaotic"))
    quiet = run_experiment(preset("lorenz_nonchaotic"), windows=("test",))
    elapsed = time.perf_counter() - t0
    checks = _attractor_checks(chaotic, ("train", "test"),
                               lambda m: 0.75 * 0.044 <= m <= 1.25 * 0.044,
                               "0.044+-25%", 1.34, 0.1)
    q = quiet.evaluation.windows["test"]
    checks.append(("non-chaotic test MSE<1e-3", q.diverged_at is None and q.mse < 1e-3,
                   f"{q.mse:.3g}"))
    _conclude(5, checks, elapsed, 30 * 60.0)


# --------------------------------------------------------------------------
# 6. Burgers closure
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_burgers():
    t0 = time.perf_counter()
    nn_cfg, poly_cfg = preset("burgers_nn"), preset("burgers_poly")
    # both presets describe the same truth run; simulate it once
    assert nn_cfg.to_dict()["simulation"] == poly_cfg.to_dict()["simulation"]
    assert nn_cfg.to_dict()["system"] == poly_cfg.to_dict()["system"]
    nn = run_experiment(nn_cfg)
    crashed = None
    try:
        poly = run_experiment(poly_cfg, trajectory=nn.trajectory)
    except Exception as exc:  # any exception is a failure of this criterion
        crashed, poly = repr(exc), None
    elapsed = time.perf_counter() - t0

    w = nn.evaluation.windows["test"]
    start, n = window_bounds(nn_cfg, nn.dataset, "test")
    t_lo, t_hi = start * nn.dataset.dt, (start + n) * nn.dataset.dt
    checks = [("NN test MSE<0.5x baseline",
               w.diverged_at is None and w.mse < 0.5 * w.baseline_mse,
               f"{w.mse:.3g} vs baseline {w.baseline_mse:.3g} on t in ({t_lo:.3g}, {t_hi:.3g}]")]
    if poly is None:
        checks.append(("polynomial run completes", False, crashed))
    else:
        pt, pv = poly.evaluation.windows["train"], poly.evaluation.windows["test"]
        checks.append(("poly train window beats baseline",
                       pt.diverged_at is None and pt.mse < pt.baseline_mse,
                       f"{pt.mse:.3g} vs baseline {pt.baseline_mse:.3g}"))
        reported = (pv.diverged_at is not None and np.isinf(pv.mse)) or \
                   (pv.diverged_at is None and np.isfinite(pv.mse))
        checks.append(("poly test outcome reported", reported,
                       f"diverged_at {pv.diverged_at}, MSE {pv.mse:.3g} "
                       f"vs baseline {pv.baseline_mse:.3g}"))
    _conclude(6, checks, elapsed, 20 * 60.0)


# --------------------------------------------------------------------------
# 7. theory property suite on random dual-linear systems
# --------------------------------------------------------------------------

def test_criterion_7_random_theory_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    dt = 0.1
    n_systems = 120
    bad = {"rank": 0, "reconstruct": 0, "bound": 0, "propagate": 0}
    n_recon = 0
    worst_recon = worst_prop = 0.0
    for _ in range(n_systems):
        q, m = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        s = random_dual_system(q, m, rng)
        rep = minimal_memory_full(s.A12, s.A22)
        bad["bound"] += rep.p_star_closure > m - 1
        for p in range(5):
            r_o = numerical_rank(obsv_matrix(s.A12, s.A22, p + 1))
            bad["rank"] += numerical_rank(gamma_matrix(s.A12, s.A22, dt, p)) != p * m + r_o
        # direct simulation of the full system is the oracle for (b) and (d)
        X = integrate(s.dual().rhs(), rng.normal(size=q + m), dt, 60)
        xh, xt = X[:, :q], X[:, q:]
        if rep.p_star_full is not None:
            n = 40
            for p in range(rep.p_star_full, 5):
                gs = build_gamma(s.A12, s.A22, [dt * s.H(xh[n - 1 - i]) for i in range(p)],
                                 [s.A12 @ xt[n - i] for i in range(p + 1)], dt, p)
                err = np.max(np.abs(reconstruct_unresolved(gs) - xt[n - np.arange(p + 1)]))
                worst_recon = max(worst_recon, err)
                bad["reconstruct"] += err > 1e-8
                n_recon += 1
        x = propagate_unresolved(s.A22, [s.H(xh[59 - l]) for l in range(50)], xt[10], dt, 50)
        err = np.max(np.abs(x - xt[60]))
        worst_prop = max(worst_prop, err)
        bad["propagate"] += err > 1e-10
    elapsed = time.perf_counter() - t0
    _conclude(7, [
        ("systems>=100", n_systems >= 100, f"{n_systems}"),
        ("(a) rank formula", bad["rank"] == 0, f"{bad['rank']} violations over p=0..4"),
        ("(b) reconstruction 1e-8", bad["reconstruct"] == 0 and n_recon > 0,
         f"{n_recon} cases, worst {worst_recon:.2g}"),
        ("(c) p* <= N-Q-1", bad["bound"] == 0, f"{bad['bound']} violations"),
        ("(d) propagation 1e-10", bad["propagate"] == 0, f"worst {worst_prop:.2g}"),
    ], elapsed, 30.0)


# --------------------------------------------------------------------------
# 8. numerical kernels
# --------------------------------------------------------------------------

def _central_difference_grad(model, Y, Z, h=1e-6):
    theta = model.get_params()
    m = model.copy()

    def loss_at(t):
        m.set_params(t)
        return loss_and_grad(m, Y, Z)[0]

    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (loss_at(theta + e) - loss_at(theta - e)) / (2 * h)
    return g


def test_criterion_8_numerical_kernels():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst_grad = 0.0
    for act in Activation:
        for _ in range(3):
            dims = [int(rng.integers(2, 6)), int(rng.integers(3, 8)), int(rng.integers(3, 8)),
                    int(rng.integers(1, 3))]
            model = init_mlp(dims, act, seed=int(rng.integers(2 ** 31)), std=0.5)
            for b in model.biases:
                b[:] = rng.normal(scale=0.3, size=b.shape)
            Y, Z = rng.normal(size=(20, dims[0])), rng.normal(size=(20, dims[-1]))
            g = flatten_grads(loss_and_grad(model, Y, Z)[1])
            fd = _central_difference_grad(model, Y, Z)
            worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(fd))

    Phi = rng.normal(size=(300, 8))
    z = rng.normal(size=300)
    lasso_err = np.max(np.abs(lasso_fit(Phi, z, 1e-14, tol=1e-14, max_iter=1_000_000)
                              - ols_fit(Phi, z)))

    x = rng.normal(size=1024) + 1j * rng.normal(size=1024)
    fft_err = np.max(np.abs(ifft(fft(x)) - x))

    X, Yd = rng.normal(size=(60, 2)), rng.normal(loc=0.2, size=(50, 2))
    (q1, v1), (q2, v2) = diks_statistic(X, Yd, 0.5), diks_statistic(Yd, X, 0.5)
    sym_err = max(abs(q1 - q2), abs(v1 - v2))
    series = np.sin(0.37 * np.arange(4000)) + 0.2 * rng.normal(size=4000)
    same = diks_test(series, series.copy(), 0.5, 4, EmbeddingConfig(2, 1))
    elapsed = time.perf_counter() - t0
    _conclude(8, [
        ("NN gradient rel<1e-5", worst_grad < 1e-5, f"worst {worst_grad:.2g}"),
        ("lasso(0) vs OLS 1e-6", lasso_err < 1e-6, f"{lasso_err:.2g}"),
        ("FFT round trip 1e-12", fft_err < 1e-12, f"{fft_err:.2g}"),
        ("Diks symmetry 1e-12", sym_err <= 1e-12, f"{sym_err:.2g}"),
        ("Diks identical accepted", bool(same.accepted), f"S={same.S:.3g}"),
    ], elapsed, 30.0)
