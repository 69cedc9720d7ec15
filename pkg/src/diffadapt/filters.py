"""Per-agent adaptive filters.

A filter object holds only hyperparameters. Parameters live in a plain array
with one row per agent, shape ``(N, n_params)``, so a whole network adapts
with one vectorised call and rows never interact. Inputs ``u`` are ``(N, M)``,
desired responses ``d`` and step sizes ``mu`` are ``(N,)``.

Row-wise reductions go through :func:`rowdot` so that a one-row call gives
bit-identical results to the same row inside a larger batch.
"""

import json

import numpy as np
from scipy.special import expit

from . import features as feat

CATMULL_ROM = 0.5 * np.array(
    [
        [-1.0, 3.0, -3.0, 1.0],
        [2.0, -5.0, 4.0, -1.0],
        [-1.0, 0.0, 1.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
    ]
)
CATMULL_ROM.setflags(write=False)


def rowdot(a, b):
    return np.sum(a * b, axis=-1)


def _as_rows(params, u, d=None, mu=None):
    params = np.atleast_2d(np.asarray(params, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = params.shape[0]
    if u.shape[0] != n:
        raise ValueError(f"{u.shape[0]} inputs for {n} agents")
    out = [params, u]
    if d is not None:
        out.append(np.broadcast_to(np.asarray(d, dtype=float), (n,)))
    if mu is not None:
        out.append(np.broadcast_to(np.asarray(mu, dtype=float), (n,)))
    return out


class AdaptiveFilter:
    """Common contract of all filters.

    ``predict`` never mutates its arguments; ``adapt`` returns a fresh array
    holding the intermediate estimate after one instantaneous-gradient step.
    """

    name = "filter"

    @property
    def n_params(self):
        raise NotImplementedError

    def init_params(self, n_agents):
        return np.zeros((n_agents, self.n_params))

    def predict(self, params, u):
        raise NotImplementedError

    def adapt(self, params, u, d, mu):
        raise NotImplementedError

    def loss(self, params, u, d):
        """Instantaneous loss whose negative gradient ``adapt`` follows."""
        raise NotImplementedError

    def check_params(self, params):
        params = np.asarray(params)
        if params.ndim != 2 or params.shape[1] != self.n_params:
            raise ValueError(f"{self.name} expects parameter blocks of length {self.n_params}, got shape {params.shape}")

    def describe(self):
        return {"filter_type": self.name}


class _LinearInFeatures(AdaptiveFilter):
    """LMS on a fixed transform of the input."""

    def features(self, u):
        raise NotImplementedError

    def predict(self, params, u):
        params, u = _as_rows(params, u)
        return rowdot(params, self.features(u))

    def adapt(self, params, u, d, mu):
        params, u, d, mu = _as_rows(params, u, d, mu)
        x = self.features(u)
        err = d - rowdot(params, x)
        return params + (mu * err)[:, None] * x

    def loss(self, params, u, d):
        return 0.5 * (np.asarray(d, dtype=float) - self.predict(params, u)) ** 2


class LMS(_LinearInFeatures):
    name = "lms"

    def __init__(self, input_dim):
        self.input_dim = int(input_dim)

    @property
    def n_params(self):
        return self.input_dim

    def features(self, u):
        if u.shape[-1] != self.input_dim:
            raise ValueError(f"input has dimension {u.shape[-1]}, filter expects {self.input_dim}")
        return u

    def describe(self):
        return {"filter_type": self.name, "input_dim": self.input_dim}


class KLMS(_LinearInFeatures):
    """Kernel LMS over a fixed dictionary shared by the whole network.

    Parameters are the expansion coefficients ``beta``, one per atom.
    """

    name = "klms"

    def __init__(self, kernel, dictionary):
        self.kernel = kernel
        self.dictionary = dictionary

    @property
    def n_params(self):
        return len(self.dictionary)

    def features(self, u):
        return feat.kernel_vector(self.kernel, self.dictionary, u)

    def describe(self):
        return {
            "filter_type": self.name,
            "gamma": self.kernel.gamma,
            "dictionary_size": len(self.dictionary),
            "dictionary_sha256": self.dictionary.digest(),
        }


class FeatureLMS(_LinearInFeatures):
    """LMS on a random feature expansion (RVFL sigmoids or random Fourier features)."""

    name = "feature_lms"

    def __init__(self, feature_map):
        self.feature_map = feature_map

    @property
    def n_params(self):
        return self.feature_map.output_dim

    def features(self, u):
        return self.feature_map(u)

    def describe(self):
        return {"filter_type": self.name, "kind": self.feature_map.kind, "n_features": self.feature_map.output_dim}


class Logistic(AdaptiveFilter):
    """Logistic regression with an l2 penalty split evenly across ``n_agents``."""

    name = "logistic"

    def __init__(self, input_dim, lam=0.01, n_agents=1):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.input_dim = int(input_dim)
        self.lam = float(lam)
        self.n_agents = int(n_agents)

    @property
    def n_params(self):
        return self.input_dim

    def predict(self, params, u):
        params, u = _as_rows(params, u)
        return expit(rowdot(params, u))

    def adapt(self, params, u, d, mu):
        params, u, d, mu = _as_rows(params, u, d, mu)
        if np.any((d != 0) & (d != 1)):
            raise ValueError("logistic labels must be 0 or 1")
        err = d - expit(rowdot(params, u))
        return params + (mu * err)[:, None] * u - (mu * self.lam / self.n_agents)[:, None] * params

    def loss(self, params, u, d):
        params, u, d = _as_rows(params, u, d)
        s = rowdot(params, u)
        # -d log(sig(s)) - (1-d) log(1-sig(s)) written stably
        ce = np.logaddexp(0.0, s) - d * s
        return ce + self.lam / (2.0 * self.n_agents) * rowdot(params, params)

    def describe(self):
        return {"filter_type": self.name, "input_dim": self.input_dim, "lam": self.lam, "n_agents": self.n_agents}


class SAF(AdaptiveFilter):
    """Wiener spline adaptive filter: linear part, then a cubic Catmull-Rom spline.

    Parameter rows are ``[w (M values), q (Q control-point ordinates)]``.
    Control-point abscissae are ``x_min + j * delta_x``; ``x_min`` must be an
    integer multiple of ``delta_x``. Ordinates start on the identity line.
    Outside the lattice the span index is clamped to the first or last span.

    ``q_step`` fixes the spline step size for every agent; ``None`` reuses the
    agent's linear step size.
    """

    name = "saf"

    def __init__(self, input_dim, x_min=-2.0, delta_x=0.2, n_points=21, q_step=None):
        if n_points < 4:
            raise ValueError("a cubic spline needs at least 4 control points")
        if not delta_x > 0:
            raise ValueError("delta_x must be positive")
        offset = x_min / delta_x
        if abs(offset - round(offset)) > 1e-9:
            raise ValueError("x_min must be an integer multiple of delta_x")
        self.input_dim = int(input_dim)
        self.x_min = float(x_min)
        self.delta_x = float(delta_x)
        self.n_points = int(n_points)
        self.q_step = q_step
        self._offset = int(round(offset))
        self.spline_matrix = CATMULL_ROM

    @property
    def n_params(self):
        return self.input_dim + self.n_points

    @property
    def abscissae(self):
        return self.x_min + self.delta_x * np.arange(self.n_points)

    def init_params(self, n_agents):
        params = np.zeros((n_agents, self.n_params))
        params[:, self.input_dim:] = self.abscissae
        return params

    def split(self, params):
        return params[..., : self.input_dim], params[..., self.input_dim:]

    def span(self, s):
        """Span start index ``i`` (into q) and local abscissa ``t`` for linear outputs ``s``.

        The active ordinates are ``q[i:i+4]``; for ``t = 0`` the output equals ``q[i+1]``.
        """
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise FloatingPointError("non-finite linear output fed to the spline")
        z = s / self.delta_x
        fl = np.floor(z)
        t = z - fl
        i = fl.astype(np.int64) - self._offset - 1
        last = self.n_points - 4
        t = np.where(i < 0, 0.0, t)
        t = np.where(i > last, np.nextafter(1.0, 0.0), t)
        i = np.clip(i, 0, last)
        return i, t

    @staticmethod
    def powers(t):
        t = np.asarray(t, dtype=float)
        return np.stack([t**3, t**2, t, np.ones_like(t)], axis=-1)

    def gather(self, q, i):
        """Rows ``q[k, i[k]:i[k]+4]``."""
        return np.take_along_axis(q, np.asarray(i)[..., None] + np.arange(4), axis=-1)

    def spline_output(self, t, xi):
        return rowdot(self.powers(t) @ self.spline_matrix, xi)

    def spline_slope(self, t, xi):
        """Derivative of the spline output with respect to ``s``."""
        t = np.asarray(t, dtype=float)
        dp = np.stack([3.0 * t**2, 2.0 * t, np.ones_like(t), np.zeros_like(t)], axis=-1)
        return rowdot(dp @ self.spline_matrix, xi) / self.delta_x

    def predict(self, params, u):
        params, u = _as_rows(params, u)
        w, q = self.split(params)
        i, t = self.span(rowdot(w, u))
        return self.spline_output(t, self.gather(q, i))

    def step(self, psi, q, i, t, xi, u, d, mu):
        """Gradient step from linear weights ``psi`` and active span ``xi`` located at ``i``.

        Ordinates of ``q`` outside the span are carried over unchanged.
        """
        mu_q = mu if self.q_step is None else np.broadcast_to(float(self.q_step), mu.shape)
        p = self.powers(t)
        err = d - rowdot(p @ self.spline_matrix, xi)
        if not np.all(np.isfinite(err)):
            bad = int(np.flatnonzero(~np.isfinite(err))[0])
            raise FloatingPointError(f"non-finite spline error at agent {bad}")
        w_new = psi + (mu * err * self.spline_slope(t, xi))[:, None] * u
        xi_new = xi + (mu_q * err)[:, None] * (p @ self.spline_matrix)
        q_new = q.copy()
        np.put_along_axis(q_new, i[:, None] + np.arange(4), xi_new, axis=-1)
        return np.concatenate([w_new, q_new], axis=-1)

    def adapt(self, params, u, d, mu):
        params, u, d, mu = _as_rows(params, u, d, mu)
        w, q = self.split(params)
        i, t = self.span(rowdot(w, u))
        return self.step(w, q, i, t, self.gather(q, i), u, d, mu)

    def loss(self, params, u, d):
        return 0.5 * (np.asarray(d, dtype=float) - self.predict(params, u)) ** 2

    def describe(self):
        return {
            "filter_type": self.name,
            "input_dim": self.input_dim,
            "x_min": self.x_min,
            "delta_x": self.delta_x,
            "n_points": self.n_points,
            "q_step": self.q_step,
        }


def multitask_penalty_gradient(own, neighbor_params, rho_out, eta, rho_in=None):
    """``eta * sum_l rho_bar[l] * (own - neighbor_l)``.

    ``rho_out[j]`` is the weight this agent puts on neighbour ``j``,
    ``rho_in[j]`` the weight neighbour ``j`` puts on this agent; the pair is
    averaged. ``rho_in`` defaults to ``rho_out`` (symmetric weights).
    """
    own = np.asarray(own, dtype=float)
    nb = np.asarray(neighbor_params, dtype=float).reshape(-1, own.shape[-1])
    rho_out = np.asarray(rho_out, dtype=float)
    rho_in = rho_out if rho_in is None else np.asarray(rho_in, dtype=float)
    if not (len(nb) == len(rho_out) == len(rho_in)):
        raise ValueError("one weight pair per neighbour is required")
    rho_bar = 0.5 * (rho_out + rho_in)
    return eta * np.sum(rho_bar[:, None] * (own[None, :] - nb), axis=0)


def multitask_penalty(own, neighbor_params, rho_out, eta, rho_in=None):
    """Penalty value whose gradient in ``own`` is :func:`multitask_penalty_gradient`."""
    own = np.asarray(own, dtype=float)
    nb = np.asarray(neighbor_params, dtype=float).reshape(-1, own.shape[-1])
    rho_out = np.asarray(rho_out, dtype=float)
    rho_in = rho_out if rho_in is None else np.asarray(rho_in, dtype=float)
    rho_bar = 0.5 * (rho_out + rho_in)
    return 0.5 * eta * float(np.sum(rho_bar * np.sum((own[None, :] - nb) ** 2, axis=-1)))


def save_checkpoint(path, filt, params, metadata=None):
    doc = {
        "filter_type": filt.name,
        "params": np.asarray(params, dtype=float).tolist(),
        "metadata": {**filt.describe(), **(metadata or {})},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns ``(filter_type, params, metadata)``."""
    with open(path) as fh:
        doc = json.load(fh)
    return doc["filter_type"], np.array(doc["params"], dtype=float), doc["metadata"]
