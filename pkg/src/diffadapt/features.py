"""Gaussian kernel, shared dictionaries and random feature maps.

Dictionaries and feature maps are immutable once built: every agent of a
network must use bit-identical copies, which :meth:`Dictionary.digest`
makes checkable.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

RVFL = "rvfl_sigmoid"
FOURIER = "random_fourier"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _sq_dist(u1, u2):
    diff = np.asarray(u1, dtype=float) - np.asarray(u2, dtype=float)
    return np.sum(diff * diff, axis=-1)


@dataclass(frozen=True)
class GaussianKernel:
    """``k(u1, u2) = exp(-gamma * ||u1 - u2||^2)``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, u1, u2):
        return np.exp(-self.gamma * _sq_dist(u1, u2))


def kernel_eval(kern, u1, u2):
    u1, u2 = np.asarray(u1, dtype=float), np.asarray(u2, dtype=float)
    if u1.shape[-1] != u2.shape[-1]:
        raise ValueError(f"dimension mismatch: {u1.shape[-1]} vs {u2.shape[-1]}")
    return kern(u1, u2)


@dataclass(frozen=True)
class Dictionary:
    """Fixed set of input-space atoms shared by all kernel filters."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = _readonly(self.atoms)
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("a dictionary needs at least one atom of shape (M,)")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def input_dim(self):
        return self.atoms.shape[1]

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.atoms).tobytes()).hexdigest()

    def to_json(self):
        return json.dumps({"atoms": self.atoms.tolist(), "sha256": self.digest()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        out = cls(np.array(obj["atoms"], dtype=float))
        if "sha256" in obj and obj["sha256"] != out.digest():
            raise ValueError("dictionary digest does not match its atoms")
        return out


def build_dictionary(size, input_dim, seed):
    """Atoms drawn i.i.d. from N(0, I).

    Atoms come off one stream in row order, so a smaller dictionary built
    with the same seed is a prefix of a larger one.
    """
    if size < 1:
        raise ValueError("dictionary size must be >= 1")
    rng = np.random.default_rng(seed)
    return Dictionary(rng.standard_normal((size, input_dim)))


def kernel_vector(kern, dictionary, u):
    """Kernel values between ``u`` (shape ``(..., M)``) and every atom."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != dictionary.input_dim:
        raise ValueError(f"input has dimension {u.shape[-1]}, dictionary atoms have {dictionary.input_dim}")
    return kern(u[..., None, :], dictionary.atoms)


@dataclass(frozen=True)
class FeatureMap:
    """Random projection ``h: R^M -> R^B`` with weights ``a`` (B, M) and offsets ``b`` (B,)."""

    kind: str
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.kind not in (RVFL, FOURIER):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        a, b = _readonly(self.a), _readonly(self.b)
        if a.ndim != 2 or a.shape[0] < 1 or b.shape != (a.shape[0],):
            raise ValueError("feature map needs a of shape (B, M) and b of shape (B,), B >= 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def output_dim(self):
        return self.a.shape[0]

    @property
    def input_dim(self):
        return self.a.shape[1]

    def __call__(self, u):
        if self.kind == RVFL:
            return rvfl_features(self, u)
        return random_fourier_features(self, u)

    def to_json(self):
        return json.dumps({"kind": self.kind, "a": self.a.tolist(), "b": self.b.tolist()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["kind"], np.array(obj["a"], dtype=float), np.array(obj["b"], dtype=float))


def rvfl_map(input_dim, n_features, seed, a_range=(-1.0, 1.0), b_range=(-1.0, 1.0)):
    rng = np.random.default_rng(seed)
    a = rng.uniform(*a_range, size=(n_features, input_dim))
    b = rng.uniform(*b_range, size=n_features)
    return FeatureMap(RVFL, a, b)


def random_fourier_map(kern, input_dim, n_features, seed):
    """Random Fourier features for a Gaussian kernel.

    Frequencies are drawn from the kernel's spectral density N(0, 2*gamma*I),
    phases uniformly on [0, 2*pi).
    """
    rng = np.random.default_rng(seed)
    a = rng.normal(scale=np.sqrt(2.0 * kern.gamma), size=(n_features, input_dim))
    b = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
    return FeatureMap(FOURIER, a, b)


def _check(fmap, kind, u):
    if fmap.kind != kind:
        raise ValueError(f"expected a {kind} map, got {fmap.kind}")
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != fmap.input_dim:
        raise ValueError(f"input has dimension {u.shape[-1]}, map expects {fmap.input_dim}")
    return u


def rvfl_features(fmap, u):
    u = _check(fmap, RVFL, u)
    return 1.0 / (1.0 + np.exp(-(u @ fmap.a.T) - fmap.b))


def random_fourier_features(fmap, u):
    u = _check(fmap, FOURIER, u)
    return np.sqrt(2.0 / fmap.output_dim) * np.cos(u @ fmap.a.T + fmap.b)
