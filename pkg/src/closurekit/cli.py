"""Command-line experiment runner.

Usage::

    closurekit simulate   --preset lorenz_chaotic --out runs/lorenz
    closurekit fit        --config my.toml --out runs/my
    closurekit evaluate   --preset duffing --model runs/duffing/model.json
    closurekit lasso-path --preset vanderpol
    closurekit ranktest   --preset linear3d
    closurekit diagnose   --preset duffing --input runs/duffing/freerun_test.csv --column x0

Every command takes ``--config PATH`` or ``--preset NAME`` (``ranktest`` has its
own presets), ``--seed INT`` to override the configured seed and ``--out DIR``
to override the output directory.  Commands that need data simulate the
configured system unless ``--trajectory`` points at a file written by
``simulate``.  All outputs are written atomically and are byte-identical for a
given configuration and seed.

Exit codes: 0 success, 1 other library error, 2 configuration error,
3 numerical divergence, 4 fit non-convergence.  Outputs produced before a
divergence or convergence failure are still written.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import chaos_diagnostics as chaos
from . import experiments as ex
from .config import RANK_PRESETS, load_config, preset, preset_names
from .errors import (ClosureKitError, ConfigError, ConvergenceWarning, NonFiniteLoss,
                     NonFiniteState, NotConverged)
from .io import (atomic_write, read_table, read_trajectory, table_to_csv,
                 write_json, write_trajectory_binary, write_trajectory_csv)
from .rom_eval import ClosureOperator
from .sparse_regression import SparsePolyModel, lasso_path, select_pareto
from .features import PolyFeatureMap
from .tdnn import load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NOT_CONVERGED = 4


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _load(args):
    """Resolve ``--config``/``--preset`` and apply ``--seed``/``--out``."""
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config and --preset")
    cfg = load_config(args.config) if args.config else preset(args.preset)
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _trajectory(args, cfg, setup):
    """Simulated trajectory, or the one in ``--trajectory`` (checked against ``cfg``)."""
    if getattr(args, "trajectory", None) is None:
        return ex.simulate_experiment(cfg, setup)
    try:
        traj = read_trajectory(args.trajectory)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trajectory {args.trajectory}: {exc}") from None
    dt = cfg.simulation.dt
    # CSV time columns carry rounding; snap to the configured step when they agree
    if abs(traj.dt - dt) > 1e-9 * dt:
        raise ConfigError(f"trajectory dt {traj.dt!r} does not match simulation.dt {dt!r}")
    traj.dt = dt
    return traj


def _print(msg):
    print(msg, flush=True)


def _poly_paths_csv(paths):
    """One table for all output channels: ``column, lambda, train_mse, val_mse, nnz``."""
    rows = []
    for j, path in enumerate(paths):
        for lam, tr, va, nz in zip(path.lambdas, path.train_mse, path.val_mse, path.nnz):
            rows.append((str(j), lam, tr, va, nz))
    return table_to_csv(["column", "lambda", "train_mse", "val_mse", "nnz"], rows)


def _load_closure(path, cfg):
    """A fitted closure from ``model.json`` (polynomial) or a network checkpoint."""
    try:
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                model = SparsePolyModel.from_dict(json.load(fh))
            return ClosureOperator(model, cfg.data.p)
        layout = cfg.model.nn.layout if cfg.model.nn is not None else None
        return ClosureOperator(load_checkpoint(path), cfg.data.p, layout)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot use model {path}: {exc}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _load(args)
    setup = ex.system_setup(cfg)
    traj = ex.simulate_experiment(cfg, setup)
    write_trajectory_csv(_out(cfg, "trajectory.csv"), traj)
    write_trajectory_binary(_out(cfg, "trajectory.cftr"), traj)
    _print(f"{cfg.name}: M={traj.n_snapshots} N={traj.state_dim} dt={traj.dt!r} "
           f"-> {cfg.output_dir}")
    return EXIT_OK


def _write_fit(cfg, fit):
    model = fit.model
    if fit.closure.kind == "polynomial":
        atomic_write(_out(cfg, "model.json"), model.to_json() + "\n")
        if fit.paths:
            atomic_write(_out(cfg, "lasso_path.csv"), _poly_paths_csv(fit.paths))
    else:
        save_checkpoint(_out(cfg, "model.ckpt"), model)
        if fit.history is not None:
            atomic_write(_out(cfg, "training_history.csv"), fit.history.to_csv())
    write_json(_out(cfg, "fit_report.json"), fit.summary())


def cmd_fit(args):
    cfg = _load(args)
    setup = ex.system_setup(cfg)
    ds = ex.prepare_dataset(cfg, _trajectory(args, cfg, setup), setup)
    fit = ex.fit_closure(cfg, ds)
    _write_fit(cfg, fit)
    s = fit.summary()
    if fit.closure.kind == "polynomial":
        _print(f"{cfg.name}: lambda={s['lambda']} nonzero={s['nonzero_terms']} "
               f"apriori_test_mse={s['apriori_test_mse']!r}")
    else:
        _print(f"{cfg.name}: network {s['layer_dims']} seed={s['seed']} "
               f"val_mse={s.get('final_val_mse')!r} apriori_test_mse={s['apriori_test_mse']!r}")
    if not fit.converged:
        _print("error: the final lasso fit did not converge (outputs written)")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _load(args)
    setup = ex.system_setup(cfg)
    traj = _trajectory(args, cfg, setup)
    ds = ex.prepare_dataset(cfg, traj, setup)
    closure = _load_closure(args.model, cfg)
    ev = ex.evaluate(cfg, ds, setup, closure)
    metrics = {"name": cfg.name, "seed": cfg.seed, "model": os.path.basename(args.model)}
    for which in ("train", "test"):
        Y, Z, _ = ex.delay_data(cfg, ds, which)
        metrics[f"apriori_{which}_mse"] = (ex.apriori_mse(closure, Y, Z) if Y.shape[0]
                                           else None)
    metrics["windows"] = ev.summary()
    diverged = False
    for name, w in ev.windows.items():
        atomic_write(_out(cfg, f"freerun_{name}.csv"), w.run.to_csv(ds.X, traj.t0))
        if w.baseline is not None:
            atomic_write(_out(cfg, f"baseline_{name}.csv"), w.baseline.to_csv(ds.X, traj.t0))
        diverged |= w.diverged_at is not None
        line = f"{cfg.name} [{name}] aposteriori_mse={w.mse!r}"
        if w.baseline_mse is not None:
            line += f" baseline_mse={w.baseline_mse!r}"
        if w.diverged_at is not None:
            line += f" DIVERGED at step {w.diverged_at}"
        _print(line)
    write_json(_out(cfg, "metrics.json"), metrics)
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_lasso_path(args):
    cfg = _load(args)
    if cfg.model.type != "poly":
        raise ConfigError("model.type: lasso-path needs a polynomial model")
    pc = cfg.model.poly
    setup = ex.system_setup(cfg)
    ds = ex.prepare_dataset(cfg, _trajectory(args, cfg, setup), setup)
    Y, Z, _ = ex.delay_data(cfg, ds, "train")
    fm = PolyFeatureMap(ds.q, cfg.data.p, pc.k, pc.layout)
    Phi = fm.transform(Y)
    paths, selected = [], []
    with warnings.catch_warnings():
        # path fits at tiny penalties may stop early; the table records it
        warnings.simplefilter("ignore", ConvergenceWarning)
        for j in range(Z.shape[1]):
            path = lasso_path(Phi, Z[:, j], None, pc.val_split, pc.tol, pc.max_iter,
                              n_lambdas=pc.n_lambdas, lambda_min=pc.lambda_min)
            lam = select_pareto(path, pc.pareto_eps)
            k = int(np.flatnonzero(path.lambdas == lam)[0])
            paths.append(path)
            selected.append({"column": j, "lambda": float(path.lambdas[k]),
                             "nnz": int(path.nnz[k]), "val_mse": float(path.val_mse[k])})
    atomic_write(_out(cfg, "lasso_path.csv"), _poly_paths_csv(paths))
    write_json(_out(cfg, "lasso_selection.json"), {"name": cfg.name, "selected": selected})
    for s in selected:
        _print(f"{cfg.name} column {s['column']}: selected lambda={s['lambda']!r} "
               f"nnz={s['nnz']}")
    return EXIT_OK


def _read_matrix(path):
    try:
        if path.endswith(".npy"):
            return np.load(path)
        return np.loadtxt(path, delimiter="," if path.endswith(".csv") else None, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix {path}: {exc}") from None


def cmd_ranktest(args):
    out_dir = args.out or "runs/ranktest"
    if args.preset is not None:
        if args.a12 or args.a22:
            raise ConfigError("give either --preset or --a12/--a22")
        if args.preset not in RANK_PRESETS:
            raise ConfigError(f"unknown rank preset {args.preset!r}; "
                              f"available: {', '.join(sorted(RANK_PRESETS))}")
        spec = RANK_PRESETS[args.preset]
        if "A12" in spec:
            report = ex.rank_report(np.array(spec["A12"]), np.array(spec["A22"]))
        else:
            seed = 0 if args.seed is None else args.seed
            reports = ex.random_rank_reports(seed, spec["q"], spec["n_unresolved"],
                                             spec.get("count", 10))
            report = {"seed": seed, "systems": reports,
                      "closure_bound_holds": all(r["closure_bound_holds"] for r in reports)}
    else:
        if not (args.a12 and args.a22):
            raise ConfigError("give --preset or both --a12 and --a22")
        try:
            report = ex.rank_report(_read_matrix(args.a12), _read_matrix(args.a22))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    write_json(os.path.join(out_dir, "rank_report.json"), report)
    if "systems" in report:
        stars = [r["p_star_full"] for r in report["systems"]]
        _print(f"random systems: p_star_full={stars} "
               f"closure_bound_holds={report['closure_bound_holds']}")
    else:
        _print(f"p_star_full={report['p_star_full']} "
               f"p_star_closure={report['p_star_closure']} ranks={report['ranks']}")
    return EXIT_OK if report["closure_bound_holds"] else EXIT_ERROR


def _series(path, column):
    try:
        header, data = read_table(path)
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if column not in header:
        raise ConfigError(f"{path}: no column {column!r}; have {', '.join(header)}")
    return data[:, header.index(column)]


def cmd_diagnose(args):
    cfg = _load(args)
    dcfg = cfg.diagnostics
    if args.input is not None:
        series = _series(args.input, args.column)
    else:
        setup = ex.system_setup(cfg)
        ds = ex.prepare_dataset(cfg, _trajectory(args, cfg, setup), setup)
        series = ds.X[:, dcfg.component]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", chaos.NoMinimumWarning)
        tau = chaos.mutual_information_delay(series, max_tau=args.max_tau)
    report = {"name": cfg.name, "n": int(series.size),
              "mi_delay": {"tau": int(tau), "found_minimum": not caught,
                           "max_tau": args.max_tau}}
    if args.against is not None:
        other = _series(args.against, args.against_column or args.column)
        n = min(series.size, other.size)
        report.update(ex.attractor_diagnostics(dcfg, series[:n], other[:n]))
    else:
        report.update(ex.attractor_diagnostics(dcfg, series, series)["truth"])
    write_json(_out(cfg, "diagnostics.json"), report)
    _print(json.dumps(report, indent=2, sort_keys=True, default=str))
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _common(p, presets=True):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
    if presets:
        g.add_argument("--preset", metavar="NAME",
                       help=f"shipped preset: {', '.join(preset_names())}")
    g.add_argument("--seed", type=int, metavar="INT", help="override the configured seed")
    g.add_argument("--out", metavar="DIR", help="override the output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="closurekit",
        description="Learn and evaluate closure models for reduced-order systems.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="simulate the full-order system")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a closure model on the training window")
    _common(p)
    p.add_argument("--trajectory", metavar="PATH", help="reuse a simulated trajectory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="free-run a fitted model against the truth")
    _common(p)
    p.add_argument("--model", metavar="PATH", required=True,
                   help="model.json (polynomial) or a network checkpoint")
    p.add_argument("--trajectory", metavar="PATH", help="reuse a simulated trajectory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("lasso-path", help="lasso regularization path and Pareto selection")
    _common(p)
    p.add_argument("--trajectory", metavar="PATH", help="reuse a simulated trajectory")
    p.set_defaults(func=cmd_lasso_path)

    p = sub.add_parser("ranktest", help="observability rank test / minimal memory length")
    p.add_argument("--preset", metavar="NAME",
                   help=f"rank preset: {', '.join(sorted(RANK_PRESETS))}")
    p.add_argument("--a12", metavar="PATH", help="A12 matrix (.npy, .csv or whitespace text)")
    p.add_argument("--a22", metavar="PATH", help="A22 matrix")
    p.add_argument("--seed", type=int, metavar="INT", help="seed for the random preset")
    p.add_argument("--out", metavar="DIR", help="output directory (default runs/ranktest)")
    p.set_defaults(func=cmd_ranktest)

    p = sub.add_parser("diagnose", help="chaos diagnostics of a scalar series")
    _common(p)
    p.add_argument("--input", metavar="CSV", help="table with the series (default: simulate)")
    p.add_argument("--column", default="x0", help="column of --input (default x0)")
    p.add_argument("--against", metavar="CSV", help="second series for the Diks test")
    p.add_argument("--against-column", help="column of --against (default: --column)")
    p.add_argument("--max-tau", type=int, default=100, help="largest delay searched")
    p.add_argument("--trajectory", metavar="PATH", help="reuse a simulated trajectory")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteState, NonFiniteLoss) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ClosureKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
