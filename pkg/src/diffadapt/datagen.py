"""Streaming observation sources for every experiment.

Each stream produces, for one Monte Carlo run, an input array ``U`` of shape
``(T, N, M)`` and desired responses ``D`` of shape ``(T, N)``. Inputs and
noise for agent ``k`` in run ``r`` come from their own generators, derived
from the master seed by ``(purpose, r, k)``; see :mod:`diffadapt.seeding`.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_rng

NOISE_VAR_MAX = 0.3
STEP_SIZE_FLOOR = 1e-4


@dataclass(frozen=True)
class Sample:
    u: np.ndarray
    d: float


def _dot(u, w):
    # elementwise row reduction: one sample and a batch give identical bits
    return np.sum(np.asarray(u, dtype=float) * w, axis=-1)


def _check_agents(n_agents):
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")


# -- multitask nonlinear model ---------------------------------------------


@dataclass(frozen=True)
class MultitaskNonlinearModel:
    """``d_k = a*u1^2 + b*u2*u3 + w_k.u + noise_k`` with a shared nonlinear part."""

    a: float
    b: float
    w_local: np.ndarray
    sigma2: np.ndarray
    input_dim: int = 3

    def __post_init__(self):
        w = np.array(self.w_local, dtype=float)
        s2 = np.array(self.sigma2, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3:
            raise ValueError("w_local must have shape (N, 3)")
        if s2.shape != (w.shape[0],) or np.any(s2 < 0):
            raise ValueError("sigma2 needs one nonnegative variance per agent")
        object.__setattr__(self, "w_local", w)
        object.__setattr__(self, "sigma2", s2)

    @property
    def n_agents(self):
        return self.w_local.shape[0]

    def clean_output(self, agent, u):
        u = np.asarray(u, dtype=float)
        nonlin = self.a * u[..., 0] ** 2 + self.b * u[..., 1] * u[..., 2]
        return nonlin + _dot(u, self.w_local[agent])

    def snapshot(self):
        return {
            "kind": "multitask_nonlinear",
            "a": self.a,
            "b": self.b,
            "w_local": self.w_local.tolist(),
            "sigma2": self.sigma2.tolist(),
            "w_local_distribution": "standard normal per entry",
        }


def draw_multitask_model(n_agents, seed, noise_var_max=NOISE_VAR_MAX):
    _check_agents(n_agents)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(2)
    w = rng.standard_normal((n_agents, 3))
    sigma2 = rng.uniform(0.0, noise_var_max, size=n_agents)
    return MultitaskNonlinearModel(float(a), float(b), w, sigma2)


def next_sample(model, agent, input_rng, noise_rng, u=None):
    """One observation for ``agent``; ``u`` may be forced instead of drawn.

    Inputs and noise use separate generators so that forcing ``u`` does not
    shift the noise sequence.
    """
    if u is None:
        u = input_rng.standard_normal(model.input_dim)
    u = np.asarray(u, dtype=float)
    nu = np.sqrt(model.sigma2[agent]) * noise_rng.standard_normal()
    return Sample(u, float(model.clean_output(agent, u) + nu))


# -- linear and Wiener models ----------------------------------------------

NONLINEARITIES = {
    "identity": lambda s: s,
    "tanh": np.tanh,
    "cubic": lambda s: s + 0.25 * s**3,
    # mild asymmetric saturation, a common SAF benchmark shape
    "saturation": lambda s: 2.0 / (1.0 + np.exp(-s)) - 1.0 + 0.1 * s,
}


@dataclass(frozen=True)
class LinearModel:
    """``d_k = w_k.u + noise_k``; a single-task network has identical rows."""

    w: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.w, dtype=float))
        s2 = np.array(self.sigma2, dtype=float)
        if s2.shape != (w.shape[0],) or np.any(s2 < 0):
            raise ValueError("sigma2 needs one nonnegative variance per agent")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "sigma2", s2)

    @property
    def input_dim(self):
        return self.w.shape[1]

    @property
    def n_agents(self):
        return self.w.shape[0]

    def clean_output(self, agent, u):
        return _dot(u, self.w[agent])

    def snapshot(self):
        return {"kind": "linear", "w": self.w.tolist(), "sigma2": self.sigma2.tolist()}


@dataclass(frozen=True)
class WienerModel:
    """``d_k = f(w_k.u) + noise_k`` with a named scalar nonlinearity."""

    w: np.ndarray
    nonlinearity: str
    sigma2: np.ndarray

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}; choose from {sorted(NONLINEARITIES)}")
        w = np.atleast_2d(np.array(self.w, dtype=float))
        s2 = np.array(self.sigma2, dtype=float)
        if s2.shape != (w.shape[0],) or np.any(s2 < 0):
            raise ValueError("sigma2 needs one nonnegative variance per agent")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "sigma2", s2)

    @property
    def input_dim(self):
        return self.w.shape[1]

    @property
    def n_agents(self):
        return self.w.shape[0]

    def clean_output(self, agent, u):
        return NONLINEARITIES[self.nonlinearity](_dot(u, self.w[agent]))

    def snapshot(self):
        return {"kind": "wiener", "w": self.w.tolist(), "nonlinearity": self.nonlinearity, "sigma2": self.sigma2.tolist()}


def draw_linear_model(n_agents, input_dim, seed, shared=True, noise_var_max=NOISE_VAR_MAX):
    _check_agents(n_agents)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((1 if shared else n_agents, input_dim))
    sigma2 = rng.uniform(0.0, noise_var_max, size=n_agents)
    return LinearModel(np.repeat(w, n_agents, axis=0) if shared else w, sigma2)


def draw_wiener_model(n_agents, input_dim, seed, nonlinearity="tanh", shared=True, noise_var_max=NOISE_VAR_MAX):
    _check_agents(n_agents)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((1 if shared else n_agents, input_dim)) / np.sqrt(input_dim)
    sigma2 = rng.uniform(0.0, noise_var_max, size=n_agents)
    return WienerModel(np.repeat(w, n_agents, axis=0) if shared else w, nonlinearity, sigma2)


# -- classification --------------------------------------------------------


@dataclass(frozen=True)
class ClassificationStream:
    """Labels from a random hyperplane through the origin, flipped at random."""

    w_true: np.ndarray
    flip_probability: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability < 0.5:
            raise ValueError("flip_probability must lie in [0, 0.5)")
        object.__setattr__(self, "w_true", np.array(self.w_true, dtype=float))

    @property
    def input_dim(self):
        return self.w_true.shape[0]

    def label(self, u, flip):
        clean = (_dot(u, self.w_true) >= 0).astype(float)
        return np.where(flip, 1.0 - clean, clean)

    def snapshot(self):
        return {"kind": "classification", "w_true": self.w_true.tolist(), "flip_probability": self.flip_probability}


def draw_classification_stream(input_dim, seed, flip_probability=0.1):
    rng = np.random.default_rng(seed)
    return ClassificationStream(rng.standard_normal(input_dim), flip_probability)


def next_classification_sample(stream, input_rng, flip_rng, u=None):
    if u is None:
        u = input_rng.standard_normal(stream.input_dim)
    u = np.asarray(u, dtype=float)
    flip = flip_rng.random() < stream.flip_probability
    return Sample(u, float(stream.label(u, flip)))


# -- CSV datasets ----------------------------------------------------------


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CsvDataset:
    """Standardised features and labels loaded from a CSV file.

    Each agent's stream draws rows uniformly with replacement.
    """

    features: np.ndarray
    labels: np.ndarray
    columns: tuple = field(default=())
    source: str = ""

    @property
    def input_dim(self):
        return self.features.shape[1]

    def snapshot(self):
        return {"kind": "csv", "path": self.source, "rows": int(self.labels.size), "columns": list(self.columns)}


def load_csv_stream(path, label_column):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise CsvFormatError(f"{path}: label column {label_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    data = np.array(rows)
    li = header.index(label_column)
    labels = data[:, li]
    x = np.delete(data, li, axis=1)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    cols = tuple(h for j, h in enumerate(header) if j != li)
    return CsvDataset((x - mean) / std, labels, cols, str(path))


# -- per-run stream generation ----------------------------------------------


def generate_run(source, n_agents, slots, master_seed, run):
    """Inputs ``(T, N, M)`` and desired outputs ``(T, N)`` for one Monte Carlo run."""
    m = source.input_dim
    U = np.empty((slots, n_agents, m))
    D = np.empty((slots, n_agents))
    for k in range(n_agents):
        if isinstance(source, CsvDataset):
            rows = derive_rng(master_seed, "csv_rows", run, k).integers(0, source.labels.size, size=slots)
            U[:, k] = source.features[rows]
            D[:, k] = source.labels[rows]
            continue
        u = derive_rng(master_seed, "input", run, k).standard_normal((slots, m))
        U[:, k] = u
        if isinstance(source, ClassificationStream):
            flips = derive_rng(master_seed, "label_flip", run, k).random(slots) < source.flip_probability
            D[:, k] = source.label(u, flips)
        else:
            nu = np.sqrt(source.sigma2[k]) * derive_rng(master_seed, "noise", run, k).standard_normal(slots)
            D[:, k] = source.clean_output(k, u) + nu
    return U, D


def draw_step_sizes(n_agents, seed, low=0.0, high=0.1, floor=STEP_SIZE_FLOOR):
    """Per-agent step sizes, uniform on ``[low, high]`` and floored at ``floor``."""
    rng = np.random.default_rng(seed)
    return np.maximum(rng.uniform(low, high, size=n_agents), floor)


def save_snapshot(path, source, extra=None):
    with open(path, "w") as fh:
        json.dump({**source.snapshot(), **(extra or {})}, fh, indent=2)
