"""Experiment configuration, presets and the config file format.

Config files are INI documents (``configparser``) with the sections listed
in :data:`SECTIONS`. Each key maps onto one :class:`ExperimentConfig` field
and is parsed with that field's type. See ``README.md`` for the schema.
"""

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass

STREAMS = ("multitask_nonlinear", "linear", "wiener", "classification", "csv")
MIXINGS = ("max_degree", "identity", "file")
STEP_POLICIES = ("uniform", "constant", "list")
DICTIONARY_SOURCES = ("input_distribution", "first_samples")

# name -> (filter kind, protocol kind); "NC-" algorithms run ATC with A = I
ALGORITHMS = {
    "D-LMS": ("lms", "atc"),
    "D-MT-LMS": ("lms", "multitask"),
    "NC-LMS": ("lms", "identity"),
    "D-KLMS": ("klms", "atc"),
    "D-MT-KLMS": ("klms", "multitask"),
    "NC-KLMS": ("klms", "identity"),
    "D-RFF": ("rff", "atc"),
    "D-MT-RFF": ("rff", "multitask"),
    "D-RVFL": ("rvfl", "atc"),
    "D-MT-RVFL": ("rvfl", "multitask"),
    "D-LOGREG": ("logistic", "atc"),
    "NC-LOGREG": ("logistic", "identity"),
    "D-SAF": ("saf", "cta_saf"),
    "NC-SAF": ("saf", "non_cooperative"),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    algorithms: tuple = ("D-LMS",)
    slots: int = 1000
    runs: int = 50
    master_seed: int = 0
    steady_window: int = 100
    per_agent_traces: tuple = ()
    # topology
    n_agents: int = 9
    edge_probability: float = 0.2
    edges: tuple = None
    mixing: str = "max_degree"
    mixing_file: str = None
    # stream
    stream: str = "multitask_nonlinear"
    input_dim: int = 3
    noise_var_max: float = 0.3
    sigma2: tuple = None
    weights: tuple = None
    shared_model: bool = True
    nonlinearity: str = "tanh"
    flip_probability: float = 0.1
    csv_path: str = None
    label_column: str = "label"
    # step sizes
    step_policy: str = "uniform"
    step_low: float = 0.0
    step_high: float = 0.1
    step_floor: float = 1e-4
    step_value: float = 0.05
    step_values: tuple = None
    # filters
    eta: float = 0.01
    gamma: float = None
    lam: float = 0.01
    dictionary_sizes: tuple = (100,)
    dictionary_source: str = "input_distribution"
    n_features: int = 200
    rvfl_range: float = 1.0
    saf_x_min: float = -2.0
    saf_delta_x: float = 0.2
    saf_points: int = 21
    saf_q_step: float = None
    paper_runs: int = None

    @property
    def kernel_gamma(self):
        return 1.0 / self.input_dim if self.gamma is None else self.gamma

    @property
    def classification(self):
        return self.stream == "classification" or (
            self.stream == "csv" and any(ALGORITHMS[a][0] == "logistic" for a in self.algorithms)
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def as_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        """Raise :class:`ConfigError` for the first inconsistent field."""

        def bad(field_name, msg):
            raise ConfigError(f"{field_name}: {msg}")

        if self.runs < 1:
            bad("runs", f"must be >= 1, got {self.runs}")
        if self.slots < 1:
            bad("slots", f"must be >= 1, got {self.slots}")
        if not 1 <= self.steady_window <= self.slots:
            bad("steady_window", f"must lie in [1, slots={self.slots}], got {self.steady_window}")
        if self.n_agents < 1:
            bad("n_agents", "must be >= 1")
        if self.edges is None and not 0 < self.edge_probability < 1:
            bad("edge_probability", f"must lie in (0, 1), got {self.edge_probability}")
        if self.edges is not None:
            for k, l in self.edges:
                if k == l or not (0 <= k < self.n_agents and 0 <= l < self.n_agents):
                    bad("edges", f"invalid edge {k}-{l} for {self.n_agents} agents")
        if self.mixing not in MIXINGS:
            bad("mixing", f"must be one of {MIXINGS}")
        if self.mixing == "file" and not self.mixing_file:
            bad("mixing_file", "required when mixing = file")
        if not self.algorithms:
            bad("algorithms", "at least one algorithm is required")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                bad("algorithms", f"unknown algorithm {a!r}; known: {', '.join(ALGORITHMS)}")
        kinds = {ALGORITHMS[a][0] for a in self.algorithms}
        if self.stream not in STREAMS:
            bad("stream", f"must be one of {STREAMS}")
        if self.stream == "classification" and kinds != {"logistic"}:
            bad("algorithms", "the classification stream only supports logistic algorithms")
        if "logistic" in kinds and self.stream not in ("classification", "csv"):
            bad("stream", "logistic algorithms need a classification or csv stream")
        if self.stream == "csv" and not self.csv_path:
            bad("csv_path", "required when stream = csv")
        if self.stream == "multitask_nonlinear" and self.input_dim != 3:
            bad("input_dim", "the multitask nonlinear model is 3-dimensional")
        if self.input_dim < 1:
            bad("input_dim", "must be >= 1")
        if not 0 <= self.noise_var_max:
            bad("noise_var_max", "must be nonnegative")
        if self.sigma2 is not None:
            if len(self.sigma2) != self.n_agents or min(self.sigma2) < 0:
                bad("sigma2", f"needs {self.n_agents} nonnegative variances")
        if self.weights is not None:
            if self.stream not in ("linear", "wiener"):
                bad("weights", "explicit weights apply to linear and wiener streams only")
            if len(self.weights) != self.n_agents or any(len(r) != self.input_dim for r in self.weights):
                bad("weights", f"needs {self.n_agents} rows of length input_dim={self.input_dim}")
        if not 0 <= self.flip_probability < 0.5:
            bad("flip_probability", "must lie in [0, 0.5)")
        if self.step_policy not in STEP_POLICIES:
            bad("step_policy", f"must be one of {STEP_POLICIES}")
        if self.step_policy == "uniform" and not 0 <= self.step_low <= self.step_high:
            bad("step_high", "need 0 <= step_low <= step_high")
        if self.step_policy == "constant" and not self.step_value > 0:
            bad("step_value", "must be positive")
        if self.step_policy == "list":
            if self.step_values is None or len(self.step_values) != self.n_agents:
                bad("step_values", f"needs {self.n_agents} values")
            if min(self.step_values) < 0:
                bad("step_values", "must be nonnegative")
        if self.eta < 0:
            bad("eta", "must be nonnegative")
        if self.gamma is not None and not self.gamma > 0:
            bad("gamma", "must be positive")
        if self.lam < 0:
            bad("lam", "must be nonnegative")
        if not self.dictionary_sizes or min(self.dictionary_sizes) < 1:
            bad("dictionary_sizes", "sizes must be >= 1")
        if self.dictionary_source not in DICTIONARY_SOURCES:
            bad("dictionary_source", f"must be one of {DICTIONARY_SOURCES}")
        if self.n_features < 1:
            bad("n_features", "must be >= 1")
        if self.saf_points < 4 or not self.saf_delta_x > 0:
            bad("saf_points", "need saf_points >= 4 and saf_delta_x > 0")
        ratio = self.saf_x_min / self.saf_delta_x
        if abs(ratio - round(ratio)) > 1e-9:
            bad("saf_x_min", "must be an integer multiple of saf_delta_x")
        for k in self.per_agent_traces:
            if not 0 <= k < self.n_agents:
                bad("per_agent_traces", f"agent {k} outside 0..{self.n_agents - 1}")
        return self


# -- presets ---------------------------------------------------------------

_FIG5 = ExperimentConfig(
    name="fig5",
    algorithms=("D-LMS", "D-MT-LMS", "D-KLMS", "D-MT-KLMS"),
    slots=1000,
    runs=50,
    paper_runs=500,
    master_seed=0,
    steady_window=100,
    n_agents=9,
    edge_probability=0.2,
    stream="multitask_nonlinear",
    input_dim=3,
    step_policy="uniform",
    step_low=0.0,
    step_high=0.1,
    eta=0.01,
    gamma=1.0 / 3.0,
    dictionary_sizes=(100,),
)

PRESETS = {
    "fig5": _FIG5,
    "fig6": _FIG5.replace(name="fig6", runs=25, paper_runs=100, per_agent_traces=(0, 4, 8)),
    "fig7": _FIG5.replace(name="fig7", algorithms=("D-MT-KLMS",), runs=25, dictionary_sizes=(10, 50, 100)),
    "fig3": ExperimentConfig(
        name="fig3",
        algorithms=("D-LOGREG", "NC-LOGREG"),
        slots=500,
        runs=25,
        master_seed=0,
        steady_window=100,
        n_agents=20,
        edge_probability=0.2,
        stream="classification",
        input_dim=10,
        flip_probability=0.1,
        step_policy="constant",
        step_value=0.05,
        lam=0.01,
    ),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


# -- config files ----------------------------------------------------------

SECTIONS = {
    "experiment": ("name", "preset", "algorithms", "slots", "runs", "master_seed", "steady_window",
                   "per_agent_traces", "paper_runs"),
    "topology": ("n_agents", "edge_probability", "edges", "mixing", "mixing_file"),
    "stream": ("stream", "input_dim", "noise_var_max", "sigma2", "weights", "shared_model",
               "nonlinearity", "flip_probability", "csv_path", "label_column"),
    "steps": ("step_policy", "step_low", "step_high", "step_floor", "step_value", "step_values"),
    "filters": ("eta", "gamma", "lam", "dictionary_sizes", "dictionary_source", "n_features",
                "rvfl_range", "saf_x_min", "saf_delta_x", "saf_points", "saf_q_step"),
}
_ALIASES = {"seed": "master_seed", "kind": "stream", "dictionary_size": "dictionary_sizes", "policy": "step_policy"}


def _split(text, sep=","):
    return [p.strip() for p in text.split(sep) if p.strip()]


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _edges(text):
    out = []
    for tok in _split(text):
        k, _, l = tok.partition("-")
        out.append((int(k), int(l)))
    return tuple(out)


_PARSERS = {
    "name": str,
    "algorithms": lambda s: tuple(_split(s)),
    "slots": int,
    "runs": int,
    "master_seed": int,
    "steady_window": int,
    "per_agent_traces": lambda s: tuple(int(x) for x in _split(s)),
    "paper_runs": int,
    "n_agents": int,
    "edge_probability": float,
    "edges": _edges,
    "mixing": str,
    "mixing_file": str,
    "stream": str,
    "input_dim": int,
    "noise_var_max": float,
    "sigma2": lambda s: tuple(float(x) for x in _split(s)),
    "weights": lambda s: tuple(tuple(float(x) for x in _split(row)) for row in _split(s, ";")),
    "shared_model": _bool,
    "nonlinearity": str,
    "flip_probability": float,
    "csv_path": str,
    "label_column": str,
    "step_policy": str,
    "step_low": float,
    "step_high": float,
    "step_floor": float,
    "step_value": float,
    "step_values": lambda s: tuple(float(x) for x in _split(s)),
    "eta": float,
    "gamma": float,
    "lam": float,
    "dictionary_sizes": lambda s: tuple(int(x) for x in _split(s)),
    "dictionary_source": str,
    "n_features": int,
    "rvfl_range": float,
    "saf_x_min": float,
    "saf_delta_x": float,
    "saf_points": int,
    "saf_q_step": float,
}


_TUPLE_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig) if isinstance(f.default, tuple)}


def parse_config_text(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
        for key, raw in parser.items(section):
            name = _ALIASES.get(key, key)
            if name not in SECTIONS[section]:
                raise ConfigError(f"{source}: [{section}] has no key {key!r}")
            if raw.strip() == "" and name in _TUPLE_FIELDS:
                values[name] = ()
                continue
            if raw.strip().lower() in ("", "none"):
                values[name] = None
                continue
            if name == "preset":
                values[name] = raw.strip()
                continue
            try:
                values[name] = _PARSERS[name](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from None
    base = preset(values.pop("preset")) if values.get("preset") else ExperimentConfig()
    values.pop("preset", None)
    return dataclasses.replace(base, **values)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            if len(value[0]) == 2 and all(isinstance(x, int) for x in value[0]):
                return ", ".join(f"{k}-{l}" for k, l in value)
            return "; ".join(", ".join(repr(float(x)) for x in row) for row in value)
        return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in value)
    return str(value)


def to_config_text(cfg):
    """Serialise a resolved config so that :func:`parse_config_text` round-trips it."""
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            if key == "preset":
                continue
            lines.append(f"{key} = {_format(getattr(cfg, key))}")
        lines.append("")
    return "\n".join(lines)
