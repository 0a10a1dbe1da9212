"""Declarative experiment configuration (TOML) and the shipped presets.

A configuration file looks like::

    name = "vanderpol"
    seed = 0
    output_dir = "runs/vanderpol"

    [system]
    kind = "vanderpol"
    params = { mu = 2.0 }

    [simulation]
    dt = 0.01
    n_steps = 6000
    x0 = [1.0, 0.0]

    [data]
    p = 0
    train_fraction = 0.3

    [model]
    type = "poly"

    [model.poly]
    k = 3

Every table is validated against a fixed schema before anything is computed;
unknown keys, wrong types and out-of-range values raise :class:`ConfigError`
with the dotted key path (and, for TOML syntax errors, the line and column).
"""

import copy
import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .systems import SystemKind

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib
import tomli_w


# --------------------------------------------------------------------------
# schema helpers
# --------------------------------------------------------------------------

def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(table, allowed, path):
    if not isinstance(table, dict):
        _fail(path, f"expected a table, got {type(table).__name__}")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        _fail(path, f"unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def _num(value, path, positive=False, nonneg=False, integer=False, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if integer and (not isinstance(value, int)):
        if not (isinstance(value, float) and value.is_integer()):
            _fail(path, f"expected an integer, got {value!r}")
        value = int(value)
    if not math.isfinite(value):
        _fail(path, f"must be finite, got {value!r}")
    if positive and not value > 0:
        _fail(path, f"must be > 0, got {value!r}")
    if nonneg and value < 0:
        _fail(path, f"must be >= 0, got {value!r}")
    if lo is not None and not value > lo:
        _fail(path, f"must be > {lo}, got {value!r}")
    if hi is not None and not value < hi:
        _fail(path, f"must be < {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _bool(value, path):
    if not isinstance(value, bool):
        _fail(path, f"expected true/false, got {value!r}")
    return value


def _choice(value, choices, path):
    if value not in choices:
        _fail(path, f"expected one of {', '.join(map(str, choices))}, got {value!r}")
    return value


def _num_list(value, path, **kw):
    if not isinstance(value, list):
        _fail(path, f"expected a list, got {value!r}")
    return [_num(v, f"{path}[{i}]", **kw) for i, v in enumerate(value)]


def _drop_none(d):
    """TOML has no null: omit ``None`` entries (recursively) when rendering."""
    out = {}
    for k, v in d.items():
        if v is None:
            continue
        out[k] = _drop_none(v) if isinstance(v, dict) else v
    return out


# --------------------------------------------------------------------------
# configuration sections
# --------------------------------------------------------------------------

@dataclass
class SystemConfig:
    kind: str
    params: dict = field(default_factory=dict)
    resolved: list = None  # resolved component indices (ODE systems only)

    @classmethod
    def parse(cls, t, path="system"):
        _check_keys(t, {"kind", "params", "resolved"}, path)
        if "kind" not in t:
            _fail(path, "missing key 'kind'")
        kind = _choice(t["kind"], [k.value for k in SystemKind], f"{path}.kind")
        params = t.get("params", {})
        _check_keys(params, _SYSTEM_PARAMS[kind], f"{path}.params")
        params = {k: _num(v, f"{path}.params.{k}") for k, v in params.items()}
        resolved = t.get("resolved")
        if resolved is not None:
            if kind == SystemKind.BURGERS.value:
                _fail(f"{path}.resolved", "Burgers uses params.n_resolved instead")
            resolved = _num_list(resolved, f"{path}.resolved", integer=True, nonneg=True)
        return cls(kind, params, resolved)


_SYSTEM_PARAMS = {
    "linear3d": set(),
    "vanderpol": {"mu"},
    "duffing": {"a", "b"},
    "lorenz": {"sigma", "beta", "rho"},
    "burgers": {"nu", "n_grid", "n_resolved"},
}


@dataclass
class SimulationConfig:
    dt: float
    n_steps: int
    x0: list = None

    @classmethod
    def parse(cls, t, path="simulation"):
        _check_keys(t, {"dt", "n_steps", "t_final", "x0"}, path)
        if "dt" not in t:
            _fail(path, "missing key 'dt'")
        dt = _num(t["dt"], f"{path}.dt", positive=True)
        if ("n_steps" in t) == ("t_final" in t):
            _fail(path, "give exactly one of 'n_steps' and 't_final'")
        if "n_steps" in t:
            n_steps = _num(t["n_steps"], f"{path}.n_steps", integer=True, positive=True)
        else:
            t_final = _num(t["t_final"], f"{path}.t_final", positive=True)
            n_steps = int(round(t_final / dt))
            if n_steps < 1:
                _fail(f"{path}.t_final", "shorter than one step")
        x0 = t.get("x0")
        if x0 is not None:
            x0 = _num_list(x0, f"{path}.x0")
        return cls(dt, n_steps, x0)


@dataclass
class DataConfig:
    p: int = 0
    train_fraction: float = 0.5

    @classmethod
    def parse(cls, t, path="data"):
        _check_keys(t, {"p", "train_fraction"}, path)
        return cls(_num(t.get("p", 0), f"{path}.p", integer=True, nonneg=True),
                   _num(t.get("train_fraction", 0.5), f"{path}.train_fraction", lo=0.0, hi=1.0))


@dataclass
class PolyConfig:
    k: int = 1
    layout: str = "full"
    lam: float = None  # fixed penalty; None -> lasso path + Pareto selection
    n_lambdas: int = 60
    lambda_min: float = 1e-14
    val_split: float = 0.2
    pareto_eps: float = 0.05
    tol: float = 1e-10
    max_iter: int = 100_000

    @classmethod
    def parse(cls, t, path="model.poly"):
        names = {f.name for f in fields(cls)}
        _check_keys(t, names, path)
        out = cls()
        if "k" in t:
            out.k = _num(t["k"], f"{path}.k", integer=True, nonneg=True)
        if "layout" in t:
            out.layout = _choice(t["layout"], ["full", "economic", "reduced"], f"{path}.layout")
        if "lam" in t:
            out.lam = _num(t["lam"], f"{path}.lam", nonneg=True)
        if "n_lambdas" in t:
            out.n_lambdas = _num(t["n_lambdas"], f"{path}.n_lambdas", integer=True, lo=1)
        if "lambda_min" in t:
            out.lambda_min = _num(t["lambda_min"], f"{path}.lambda_min", positive=True)
        if "val_split" in t:
            out.val_split = _num(t["val_split"], f"{path}.val_split", lo=0.0, hi=1.0)
        if "pareto_eps" in t:
            out.pareto_eps = _num(t["pareto_eps"], f"{path}.pareto_eps", nonneg=True)
        if "tol" in t:
            out.tol = _num(t["tol"], f"{path}.tol", positive=True)
        if "max_iter" in t:
            out.max_iter = _num(t["max_iter"], f"{path}.max_iter", integer=True, positive=True)
        return out


@dataclass
class NNConfig:
    hidden: list = field(default_factory=lambda: [16, 16])
    activation: str = "tanh"
    layout: str = "full"
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 1000
    weight_decay: float = 0.0
    validation_fraction: float = 0.1
    normalize: bool = True
    init_std: float = 0.1
    restarts: int = 1  # independent seeds; the lowest final validation MSE wins

    @classmethod
    def parse(cls, t, path="model.nn"):
        names = {f.name for f in fields(cls)}
        _check_keys(t, names, path)
        out = cls()
        if "hidden" in t:
            out.hidden = _num_list(t["hidden"], f"{path}.hidden", integer=True, positive=True)
        if "activation" in t:
            out.activation = _choice(t["activation"], ["tanh", "relu", "selu"],
                                     f"{path}.activation")
        if "layout" in t:
            out.layout = _choice(t["layout"], ["full", "economic"], f"{path}.layout")
        if "learning_rate" in t:
            out.learning_rate = _num(t["learning_rate"], f"{path}.learning_rate", positive=True)
        if "batch_size" in t:
            out.batch_size = _num(t["batch_size"], f"{path}.batch_size", integer=True,
                                  positive=True)
        if "epochs" in t:
            out.epochs = _num(t["epochs"], f"{path}.epochs", integer=True, positive=True)
        if "weight_decay" in t:
            out.weight_decay = _num(t["weight_decay"], f"{path}.weight_decay", nonneg=True)
        if "validation_fraction" in t:
            out.validation_fraction = _num(t["validation_fraction"],
                                           f"{path}.validation_fraction", lo=0.0, hi=1.0)
        if "normalize" in t:
            out.normalize = _bool(t["normalize"], f"{path}.normalize")
        if "init_std" in t:
            out.init_std = _num(t["init_std"], f"{path}.init_std", positive=True)
        if "restarts" in t:
            out.restarts = _num(t["restarts"], f"{path}.restarts", integer=True, positive=True)
        return out


@dataclass
class ModelConfig:
    type: str = "poly"
    poly: PolyConfig = None
    nn: NNConfig = None

    @classmethod
    def parse(cls, t, path="model"):
        _check_keys(t, {"type", "poly", "nn"}, path)
        kind = _choice(t.get("type", "poly"), ["poly", "nn"], f"{path}.type")
        poly = PolyConfig.parse(t["poly"], f"{path}.poly") if "poly" in t else None
        nn = NNConfig.parse(t["nn"], f"{path}.nn") if "nn" in t else None
        if kind == "poly" and poly is None:
            poly = PolyConfig()
        if kind == "nn" and nn is None:
            nn = NNConfig()
        return cls(kind, poly, nn)


@dataclass
class DiagnosticsConfig:
    """Attractor diagnostics on one resolved component of the free runs."""

    enabled: bool = False
    component: int = 0
    lyapunov_method: str = "eckmann"
    lyapunov_m: int = 2        # Rosenstein embedding
    lyapunov_tau: int = 1
    lyapunov_fit: list = field(default_factory=lambda: [0, 20])
    eckmann_emb_dim: int = 10
    eckmann_matrix_dim: int = 4
    corr_m: int = 2
    corr_tau: int = 1
    corr_theiler: int = 0
    corr_fit: list = field(default_factory=lambda: [0.1, 0.5])  # times std; [] -> auto
    diks_d: float = 1e-3
    diks_l: int = 100
    diks_m: int = 2
    diks_tau: int = 1
    diks_squared: bool = True

    @classmethod
    def parse(cls, t, path="diagnostics"):
        names = {f.name for f in fields(cls)}
        _check_keys(t, names, path)
        out = cls()
        ints = {"component": dict(nonneg=True), "lyapunov_m": dict(positive=True),
                "lyapunov_tau": dict(positive=True), "eckmann_emb_dim": dict(lo=1),
                "eckmann_matrix_dim": dict(lo=1), "corr_m": dict(positive=True),
                "corr_tau": dict(positive=True), "corr_theiler": dict(nonneg=True),
                "diks_l": dict(positive=True), "diks_m": dict(positive=True),
                "diks_tau": dict(positive=True)}
        for key, kw in ints.items():
            if key in t:
                setattr(out, key, _num(t[key], f"{path}.{key}", integer=True, **kw))
        for key in ("enabled", "diks_squared"):
            if key in t:
                setattr(out, key, _bool(t[key], f"{path}.{key}"))
        if "lyapunov_method" in t:
            out.lyapunov_method = _choice(t["lyapunov_method"], ["rosenstein", "eckmann"],
                                          f"{path}.lyapunov_method")
        if "lyapunov_fit" in t:
            fit = _num_list(t["lyapunov_fit"], f"{path}.lyapunov_fit", integer=True,
                            nonneg=True)
            if len(fit) != 2 or fit[0] >= fit[1]:
                _fail(f"{path}.lyapunov_fit", "expected [start, stop] with start < stop")
            out.lyapunov_fit = fit
        if "corr_fit" in t:
            fit = _num_list(t["corr_fit"], f"{path}.corr_fit", positive=True)
            if fit and (len(fit) != 2 or fit[0] >= fit[1]):
                _fail(f"{path}.corr_fit", "expected [] (auto) or [lo, hi] with lo < hi")
            out.corr_fit = fit
        if "diks_d" in t:
            out.diks_d = _num(t["diks_d"], f"{path}.diks_d", positive=True)
        if (out.eckmann_emb_dim - 1) % (out.eckmann_matrix_dim - 1):
            _fail(path, "eckmann_emb_dim - 1 must be a multiple of eckmann_matrix_dim - 1")
        return out


@dataclass
class EvaluationConfig:
    """Free-run windows: ``train`` starts at the first trainable row and runs to
    the end of training; ``test`` starts at the first test row and runs
    ``test_steps`` steps (default: to the end of the data)."""

    test_steps: int = None
    baseline: bool = False  # also run the model with the closure switched off

    @classmethod
    def parse(cls, t, path="evaluation"):
        _check_keys(t, {"test_steps", "baseline"}, path)
        steps = t.get("test_steps")
        if steps is not None:
            steps = _num(steps, f"{path}.test_steps", integer=True, positive=True)
        return cls(steps, _bool(t.get("baseline", False), f"{path}.baseline"))


@dataclass
class ExperimentConfig:
    """A complete, validated experiment description."""

    name: str
    system: SystemConfig
    simulation: SimulationConfig
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seed: int = 0
    output_dir: str = "runs"

    _TOP = {"name", "system", "simulation", "data", "model", "diagnostics", "evaluation",
            "seed", "output_dir"}

    @classmethod
    def from_dict(cls, d):
        _check_keys(d, cls._TOP, "<root>")
        for key in ("system", "simulation"):
            if key not in d:
                _fail("<root>", f"missing table [{key}]")
        name = d.get("name", "experiment")
        if not isinstance(name, str) or not name:
            _fail("name", "expected a non-empty string")
        out_dir = d.get("output_dir", "runs")
        if not isinstance(out_dir, str) or not out_dir:
            _fail("output_dir", "expected a non-empty string")
        cfg = cls(
            name=name,
            system=SystemConfig.parse(d["system"]),
            simulation=SimulationConfig.parse(d["simulation"]),
            data=DataConfig.parse(d.get("data", {})),
            model=ModelConfig.parse(d.get("model", {})),
            diagnostics=DiagnosticsConfig.parse(d.get("diagnostics", {})),
            evaluation=EvaluationConfig.parse(d.get("evaluation", {})),
            seed=_num(d.get("seed", 0), "seed", integer=True, nonneg=True),
            output_dir=out_dir,
        )
        cfg._cross_check()
        return cfg

    def _cross_check(self):
        from .systems import SystemSpec
        try:
            spec = SystemSpec(SystemKind(self.system.kind), self.system.params)
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from None
        if spec.kind is SystemKind.DUFFING and self.simulation.dt != 1.0:
            _fail("simulation.dt", "the Duffing map requires dt = 1")
        if spec.kind is not SystemKind.BURGERS:
            if self.simulation.x0 is None:
                _fail("simulation.x0", "required for this system")
            if len(self.simulation.x0) != spec.state_dim:
                _fail("simulation.x0", f"expected {spec.state_dim} values")
            res = self.system.resolved
            if res is not None and (len(set(res)) != len(res) or max(res) >= spec.state_dim
                                    or not 0 < len(res) < spec.state_dim):
                _fail("system.resolved", f"need distinct indices in [0, {spec.state_dim}) "
                                         "leaving at least one unresolved")
        q = len(self.system.resolved) if self.system.resolved else spec.resolved_dim
        if self.diagnostics.component >= q:
            _fail("diagnostics.component", f"must be < Q = {q}")

    def to_dict(self):
        d = asdict(self)
        for key in ("poly", "nn"):
            if d["model"][key] is None:
                del d["model"][key]
        return _drop_none(d)

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def replace(self, **changes):
        new = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(new, k, v)
        return new


def parse_config(text):
    """Parse TOML text into an :class:`ExperimentConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:  # message carries "(at line L, column C)"
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return ExperimentConfig.from_dict(raw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

_PRESETS = {
    # 3D linear system, p = 1 recovers the closure exactly.  The lasso at
    # lam = 1e-12 sits on a collinear design (the lag-1 closure is a linear
    # combination of the two resolved states), so it needs far more sweeps
    # than the library default to converge.
    "linear3d": {
        "name": "linear3d",
        "system": {"kind": "linear3d"},
        "simulation": {"dt": 0.01, "n_steps": 4000, "x0": [1.0, 0.0, 0.0]},
        "data": {"p": 1, "train_fraction": 0.1},
        "model": {"type": "poly", "poly": {"k": 1, "lam": 1e-12, "max_iter": 1_000_000}},
        "evaluation": {"baseline": True},
    },
    # memoryless control: the same data with p = 0 cannot represent the closure
    "linear3d_p0": {
        "name": "linear3d_p0",
        "system": {"kind": "linear3d"},
        "simulation": {"dt": 0.01, "n_steps": 4000, "x0": [1.0, 0.0, 0.0]},
        "data": {"p": 0, "train_fraction": 0.1},
        "model": {"type": "poly", "poly": {"k": 1, "lam": 1e-12, "max_iter": 1_000_000}},
    },
    "vanderpol": {
        "name": "vanderpol",
        "system": {"kind": "vanderpol", "params": {"mu": 2.0}},
        "simulation": {"dt": 0.01, "n_steps": 6000, "x0": [1.0, 0.0]},
        "data": {"p": 0, "train_fraction": 0.3},
        "model": {"type": "poly", "poly": {"k": 3}},
    },
    # Diagnostics: Eckmann MLE (10-dim orbit, 4x4 local maps), correlation
    # dimension on a 4-dim unit-delay embedding over 0.1-0.5 std radii, Diks
    # with d = 1e-4, l = 100, m = 2, tau = 20.
    "duffing": {
        "name": "duffing",
        "system": {"kind": "duffing", "params": {"a": 2.75, "b": 0.2}},
        "simulation": {"dt": 1.0, "n_steps": 6000, "x0": [0.5, 0.0]},
        "data": {"p": 0, "train_fraction": 0.3},
        "model": {"type": "poly", "poly": {"k": 3}},
        "diagnostics": {"enabled": True, "lyapunov_method": "eckmann", "corr_m": 4,
                        "corr_tau": 1, "corr_theiler": 0, "corr_fit": [0.1, 0.5],
                        "diks_d": 1e-4, "diks_l": 100, "diks_m": 2, "diks_tau": 20},
    },
    # 40000 snapshots on t in [0, 400], half for training.  Epochs are cut
    # from 16000 to 4000 for desk-scale runtime; the network input is the full
    # p = 1 delay row (x^n, x^{n-1}, d^n, d^{n-1}), which is what a 4-wide
    # input layer implies.
    "lorenz_chaotic": {
        "name": "lorenz_chaotic",
        "system": {"kind": "lorenz", "params": {"sigma": 10.0, "beta": 8.0 / 3.0, "rho": 35.0}},
        "simulation": {"dt": 0.01, "n_steps": 39999, "x0": [0.5, 0.0, 0.0]},
        "data": {"p": 1, "train_fraction": 0.5},
        "model": {"type": "nn", "nn": {"hidden": [16, 16], "activation": "tanh",
                                       "layout": "full", "learning_rate": 1e-4,
                                       "batch_size": 256, "epochs": 4000,
                                       "validation_fraction": 0.1, "normalize": True}},
        "diagnostics": {"enabled": True, "lyapunov_method": "eckmann", "corr_m": 3,
                        "corr_tau": 1, "corr_theiler": 0, "corr_fit": [0.1, 0.5],
                        "diks_d": 1e-3, "diks_l": 100, "diks_m": 3, "diks_tau": 25},
    },
    # 8000 snapshots on t in [0, 20] (dt = 0.0025).  The trajectory spirals
    # into a fixed point, where the closure rate hinges on the small difference
    # of consecutive closure values; 4000 epochs at 1e-4 leave a free-run MSE
    # around 1e-2, hence the longer schedule and restarts selected by
    # validation MSE.
    "lorenz_nonchaotic": {
        "name": "lorenz_nonchaotic",
        "system": {"kind": "lorenz", "params": {"sigma": 10.0, "beta": 8.0 / 3.0, "rho": 15.0}},
        "simulation": {"dt": 0.0025, "n_steps": 7999, "x0": [0.5, 0.0, 0.0]},
        "data": {"p": 1, "train_fraction": 0.5},
        "model": {"type": "nn", "nn": {"hidden": [16, 16], "activation": "tanh",
                                       "layout": "full", "learning_rate": 1e-3,
                                       "batch_size": 256, "epochs": 16000,
                                       "validation_fraction": 0.1, "normalize": True,
                                       "restarts": 4}},
    },
    # 2000 snapshots on t in [0, 10]; train on t <= 4, evaluate the free run
    # on t in (4, 6] against the truncated (no-closure) model
    "burgers_nn": {
        "name": "burgers_nn",
        "system": {"kind": "burgers", "params": {"nu": 0.02, "n_grid": 1024, "n_resolved": 6}},
        "simulation": {"dt": 10.0 / 1999, "n_steps": 1999},
        "data": {"p": 2, "train_fraction": 0.4},
        "model": {"type": "nn", "nn": {"hidden": [12, 12], "activation": "tanh",
                                       "layout": "full", "learning_rate": 1e-3,
                                       "batch_size": 64, "epochs": 3000,
                                       "validation_fraction": 0.1, "normalize": True}},
        "evaluation": {"test_steps": 400, "baseline": True},
    },
    "burgers_poly": {
        "name": "burgers_poly",
        "system": {"kind": "burgers", "params": {"nu": 0.02, "n_grid": 1024, "n_resolved": 6}},
        "simulation": {"dt": 10.0 / 1999, "n_steps": 1999},
        "data": {"p": 1, "train_fraction": 0.4},
        # 181 reduced features on 6 channels are numerically rank deficient
        # (condition number ~1e19), so coordinate descent stalls at small
        # penalties; a shorter path with a sweep cap keeps the fit at desk scale.
        "model": {"type": "poly", "poly": {"k": 2, "layout": "reduced", "n_lambdas": 20,
                                           "lambda_min": 1e-8, "max_iter": 5000}},
        "evaluation": {"baseline": True},
    },
}

# rank-test presets: (A12, A22) pairs or a random seed
RANK_PRESETS = {
    "linear3d": {"A12": [[-1.0, -1.0]], "A22": [[-1.1, 1.5], [-3.0, 0.5]]},
    "identity": {"A12": [[1.0, 0.0], [0.0, 1.0]], "A22": [[-1.0, 0.3], [0.2, -2.0]]},
    "random": {"random": True, "q": 2, "n_unresolved": 4},
}


def preset_names():
    return sorted(_PRESETS)


def preset(name):
    """The :class:`ExperimentConfig` of a shipped preset."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    d = copy.deepcopy(_PRESETS[name])
    d.setdefault("output_dir", f"runs/{name}")
    return ExperimentConfig.from_dict(d)
