"""End-to-end benchmark pipeline driven by an :class:`~closurekit.config.ExperimentConfig`.

simulate -> extract closure -> build delay data -> fit (lasso or MLP)
-> a priori / a posteriori evaluation -> optional attractor diagnostics.
The CLI and the acceptance tests both go through these functions.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import chaos_diagnostics as chaos
from .closure_data import FeatureLayout, build_features, build_target, extract_closure, targetable
from .errors import ConvergenceWarning, NonFiniteState
from .features import PolyFeatureMap
from .observability import DEFAULT_RANK_TOL, minimal_memory_full, random_dual_system
from .rom_eval import (AugmentedROM, ClosureOperator, apriori_mse, free_run_from_dataset,
                       no_closure_run, run_error)
from .sparse_regression import fit_sparse_poly
from .systems import PartitionSpec, SystemKind, SystemSpec, default_partition, resolved_rhs, simulate
from .tdnn import TrainConfig, init_mlp, train


# --------------------------------------------------------------------------
# system and data
# --------------------------------------------------------------------------

@dataclass
class SystemSetup:
    spec: SystemSpec
    partition: object
    rhs: object  # x_hat -> F_hat(x_hat, 0)


def system_setup(cfg):
    spec = SystemSpec(SystemKind(cfg.system.kind), cfg.system.params)
    if cfg.system.resolved is not None:
        part = PartitionSpec(tuple(cfg.system.resolved), spec.state_dim)
    else:
        part = default_partition(spec)
    return SystemSetup(spec, part, resolved_rhs(spec, part))


def simulate_experiment(cfg, setup=None):
    """Full-order trajectory for the configured system."""
    setup = setup or system_setup(cfg)
    sim = cfg.simulation
    return simulate(setup.spec, sim.x0, sim.dt, sim.n_steps)


def prepare_dataset(cfg, traj, setup=None):
    """Closure dataset with the configured delay count and temporal split."""
    setup = setup or system_setup(cfg)
    ds = extract_closure(traj, setup.partition, setup.rhs)
    return ds.with_split(cfg.data.p, cfg.data.train_fraction)


def _row_layout(cfg):
    m = cfg.model
    if m.type == "poly":
        return FeatureLayout.ECONOMIC if m.poly.layout == "economic" else FeatureLayout.FULL
    return FeatureLayout(m.nn.layout)


def delay_data(cfg, ds, which="train"):
    """``(Y, Z, idx)``: delay rows, closure-rate targets and the row indices used."""
    idx = targetable(ds, ds.train_idx if which == "train" else ds.test_idx)
    layout = _row_layout(cfg)
    return build_features(ds, idx, layout), build_target(ds, idx), idx


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

@dataclass
class FitResult:
    closure: ClosureOperator
    paths: list = field(default_factory=list)     # LassoPath per output column
    history: object = None                        # TrainHistory for networks
    converged: bool = True
    apriori_train: float = float("nan")
    apriori_test: float = float("nan")
    seed: int = None                              # seed of the selected network

    @property
    def model(self):
        return self.closure.model

    def summary(self):
        out = {"kind": self.closure.kind, "p": self.closure.p,
               "layout": self.closure.layout.value, "converged": self.converged,
               "apriori_train_mse": self.apriori_train, "apriori_test_mse": self.apriori_test}
        if self.closure.kind == "polynomial":
            m = self.model
            out["lambda"] = [float(v) for v in np.atleast_1d(m.lam)]
            out["nonzero_terms"] = [int(v) for v in m.nonzero_count]
            out["terms"] = [m.terms(j) for j in range(m.q)]
        else:
            out["layer_dims"] = list(self.model.layer_dims)
            out["activation"] = self.model.activation.value
            out["n_params"] = int(self.model.n_params)
            out["seed"] = self.seed
            if self.history is not None and self.history.val_mse:
                out["final_train_mse"] = self.history.train_mse[-1]
                out["final_val_mse"] = self.history.val_mse[-1]
        return out


def fit_closure(cfg, ds):
    """Fit the configured closure model on the training rows."""
    Y, Z, _ = delay_data(cfg, ds, "train")
    p = cfg.data.p
    if cfg.model.type == "poly":
        pc = cfg.model.poly
        fm = PolyFeatureMap(ds.q, p, pc.k, pc.layout)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            if pc.lam is None:
                model, paths = fit_sparse_poly(Y, Z, fm, None, None, pc.val_split,
                                               pc.pareto_eps, pc.tol, pc.max_iter,
                                               pc.n_lambdas, pc.lambda_min)
            else:
                model, paths = fit_sparse_poly(Y, Z, fm, pc.lam, tol=pc.tol,
                                               max_iter=pc.max_iter)
        # path fits at tiny penalties may legitimately stop early; only the
        # final refit(s) decide convergence
        final_warn = [w for w in caught if issubclass(w.category, ConvergenceWarning)
                      and "path fits" not in str(w.message)]
        for w in caught:
            if w not in final_warn:
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        closure = ClosureOperator(model, p)
        result = FitResult(closure, paths, None, not final_warn)
    else:
        nc = cfg.model.nn
        dims = [Y.shape[1], *nc.hidden, Z.shape[1]]
        best = None
        # independent restarts (seeds seed, seed+1, ...); keep the lowest
        # final validation MSE, ties to the earlier seed
        for r in range(nc.restarts):
            seed = cfg.seed + r
            tc = TrainConfig(nc.learning_rate, nc.batch_size, nc.epochs, nc.weight_decay,
                             nc.validation_fraction, seed, nc.normalize, nc.init_std)
            net = init_mlp(dims, nc.activation, seed=seed, std=nc.init_std)
            net, hist = train(net, Y, Z, tc)
            if best is None or hist.val_mse[-1] < best[1].val_mse[-1]:
                best = (net, hist, seed)
        net, hist, seed = best
        closure = ClosureOperator(net, p, nc.layout)
        result = FitResult(closure, [], hist, True)
        result.seed = seed
    result.apriori_train = apriori_mse(closure, Y, Z)
    Yt, Zt, _ = delay_data(cfg, ds, "test")
    if Yt.shape[0]:
        result.apriori_test = apriori_mse(closure, Yt, Zt)
    return result


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class WindowResult:
    name: str
    run: object                  # FreeRun (possibly truncated)
    mse: float                   # a posteriori MSE over the steps the run covers
    diverged_at: int = None
    baseline: object = None      # FreeRun of the no-closure model
    baseline_mse: float = None
    baseline_diverged_at: int = None
    diagnostics: dict = None

    def summary(self):
        out = {"start": int(self.run.start), "steps": int(self.run.x.shape[0]),
               "aposteriori_mse": self.mse, "diverged_at": self.diverged_at}
        if self.baseline is not None or self.baseline_diverged_at is not None:
            out["baseline_mse"] = self.baseline_mse
            out["baseline_diverged_at"] = self.baseline_diverged_at
        if self.diagnostics is not None:
            out["diagnostics"] = self.diagnostics
        return out


def window_bounds(cfg, ds, name):
    """``(start, n_steps)`` of the train or test free run (``start`` = newest history row)."""
    p = cfg.data.p
    if name == "train":
        start = int(ds.train_idx[0])
        return start, int(ds.train_idx[-1]) - start
    start = int(ds.test_idx[0])
    n = ds.X.shape[0] - 1 - start
    if cfg.evaluation.test_steps is not None:
        n = min(n, cfg.evaluation.test_steps)
    assert start - p >= 0
    return start, n


def free_run_window(cfg, ds, setup, closure, name):
    """Free run over one window; blow-ups are caught and reported."""
    start, n = window_bounds(cfg, ds, name)
    rom = AugmentedROM(setup.rhs, closure, ds.dt)
    run = free_run_from_dataset(rom, ds, start, n, safe=True)
    steps = run.steps[run.steps >= start]
    mse = run_error(ds.X, run, steps) if not run.diverged else float("inf")
    res = WindowResult(name, run, mse, run.diverged_at)
    if cfg.evaluation.baseline:
        try:
            base = no_closure_run(setup.rhs, ds.X[start], ds.dt, n, start)
            res.baseline = base
            res.baseline_mse = run_error(ds.X, base)
        except NonFiniteState as exc:
            res.baseline = exc.partial
            res.baseline_mse = float("inf")
            res.baseline_diverged_at = exc.step
    return res


def attractor_diagnostics(dcfg, truth, model):
    """MLE, correlation dimension (truth and model) and the Diks test of a window."""
    out = {}
    ecfg_l = chaos.EmbeddingConfig(dcfg.lyapunov_m, dcfg.lyapunov_tau)
    for label, series in (("truth", truth), ("model", model)):
        entry = {}
        try:
            if dcfg.lyapunov_method == "eckmann":
                entry["mle"] = chaos.max_lyapunov(series, chaos.EmbeddingConfig(1, 1, 0),
                                                  method="eckmann",
                                                  emb_dim=dcfg.eckmann_emb_dim,
                                                  matrix_dim=dcfg.eckmann_matrix_dim)
            else:
                entry["mle"] = chaos.max_lyapunov(series, ecfg_l, tuple(dcfg.lyapunov_fit))
        except (chaos.InsufficientNeighbors, ValueError) as exc:
            entry["mle"] = None
            entry["mle_error"] = str(exc)
        ccfg = chaos.EmbeddingConfig(dcfg.corr_m, dcfg.corr_tau, dcfg.corr_theiler)
        try:
            fit = tuple(dcfg.corr_fit) if dcfg.corr_fit else "auto"
            cd = chaos.correlation_dimension(series, ccfg, fit, full_output=True)
            entry["corr_dim"] = cd.value
            entry["corr_dim_fit_range"] = list(cd.fit_range)
        except chaos.DegenerateScaling as exc:
            entry["corr_dim"] = None
            entry["corr_dim_error"] = str(exc)
        out[label] = entry
    out["diks"] = diks_protocol(dcfg, truth, model)
    return out


def diks_protocol(dcfg, truth, model):
    """Diks test with the configured parameters, plus two documented fallbacks.

    1. Too few embedded block vectors for ``(l, m, tau)``: the delay is
       replaced by the first mutual-information minimum of the block-averaged
       truth series.
    2. ``S`` undefined (every kernel value underflows, so the variance is
       zero): the bandwidth with the largest ``|S|`` on the grid
       ``10^-5 .. 10^0`` is used.  Taking the most discriminating bandwidth can
       only make acceptance harder.

    The returned dictionary lists the fallbacks that fired under ``"fallbacks"``.
    """
    fallbacks = []
    emb = chaos.EmbeddingConfig(dcfg.diks_m, dcfg.diks_tau)
    d = dcfg.diks_d
    try:
        rep = chaos.diks_test(truth, model, d, dcfg.diks_l, emb, dcfg.diks_squared)
    except chaos.TooFewVectors:
        avg = chaos.block_average(truth, dcfg.diks_l)
        max_tau = max(1, (avg.size - 4) // (2 * max(dcfg.diks_m - 1, 1)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", chaos.NoMinimumWarning)
            tau = chaos.mutual_information_delay(avg, max_tau=min(max_tau, 100))
        emb = chaos.EmbeddingConfig(dcfg.diks_m, tau)
        fallbacks.append({"reason": "too few block vectors", "tau": tau})
        try:
            rep = chaos.diks_test(truth, model, d, dcfg.diks_l, emb, dcfg.diks_squared)
        except chaos.TooFewVectors as exc:
            return {"error": str(exc), "accepted": False, "fallbacks": fallbacks}
    if not np.isfinite(rep.S):
        try:
            sweep = chaos.bandwidth_sweep(truth, model, l=dcfg.diks_l, cfg=emb,
                                          squared=dcfg.diks_squared)
        except chaos.DegenerateScaling as exc:
            out = rep.to_dict()
            out["fallbacks"] = fallbacks + [{"reason": str(exc)}]
            return out
        fallbacks.append({"reason": "S undefined at the configured bandwidth",
                          "configured_d": d, "d": sweep.best})
        rep = chaos.diks_test(truth, model, sweep.best, dcfg.diks_l, emb, dcfg.diks_squared)
    out = rep.to_dict()
    out["fallbacks"] = fallbacks
    return out


@dataclass
class Evaluation:
    windows: dict

    def summary(self):
        return {k: w.summary() for k, w in self.windows.items()}


def evaluate(cfg, ds, setup, closure, windows=("train", "test")):
    """Free runs (and diagnostics when enabled) over the requested windows."""
    out = {}
    for name in windows:
        res = free_run_window(cfg, ds, setup, closure, name)
        if cfg.diagnostics.enabled:
            c = cfg.diagnostics.component
            if res.diverged_at is None:
                truth = ds.X[res.run.steps, c]
                res.diagnostics = attractor_diagnostics(cfg.diagnostics, truth, res.run.x[:, c])
            else:
                res.diagnostics = {"skipped": f"free run diverged at step {res.diverged_at}"}
        out[name] = res
    return Evaluation(out)


@dataclass
class ExperimentResult:
    cfg: object
    setup: SystemSetup
    trajectory: object
    dataset: object
    fit: FitResult
    evaluation: Evaluation

    def summary(self):
        return {"name": self.cfg.name, "seed": self.cfg.seed, "fit": self.fit.summary(),
                "evaluation": self.evaluation.summary()}


def run_experiment(cfg, windows=("train", "test"), trajectory=None):
    """simulate -> fit -> evaluate in one call."""
    setup = system_setup(cfg)
    traj = trajectory if trajectory is not None else simulate_experiment(cfg, setup)
    ds = prepare_dataset(cfg, traj, setup)
    fit = fit_closure(cfg, ds)
    ev = evaluate(cfg, ds, setup, fit.closure, windows)
    return ExperimentResult(cfg, setup, traj, ds, fit, ev)


# --------------------------------------------------------------------------
# rank tests
# --------------------------------------------------------------------------

def rank_report(A12, A22, tol=DEFAULT_RANK_TOL):
    """Rank sequence and both memory lengths for one ``(A12, A22)`` pair."""
    report = minimal_memory_full(A12, A22, tol=tol)
    out = report.to_dict()
    out["closure_bound_holds"] = report.p_star_closure <= report.n_unresolved - 1
    return out


def random_rank_reports(seed, q, n_unresolved, count=10):
    """Reports for ``count`` random dual systems drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(count):
        sys_ = random_dual_system(q, n_unresolved, rng)
        reports.append(rank_report(sys_.A12, sys_.A22))
    return reports
