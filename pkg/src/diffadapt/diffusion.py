"""Synchronous, time-slotted diffusion engine.

Every slot has the same shape: each agent records its prior error on the
new sample with the parameters it held at the end of the previous slot, then
the protocol's adaptation and combination phases run. Within a phase agents
are independent; a phase reads only the outputs of the previous phase.
"""

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .filters import SAF
from .topology import MixingMatrix, TaskWeights

NON_COOPERATIVE = "non_cooperative"
ATC = "atc"
CTA_SAF = "cta_saf"
MULTITASK = "multitask"
KINDS = (NON_COOPERATIVE, ATC, CTA_SAF, MULTITASK)


@dataclass(frozen=True)
class Protocol:
    kind: str
    mixing: MixingMatrix = None
    task_weights: TaskWeights = None
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown protocol {self.kind!r}; choose from {KINDS}")
        if self.kind in (ATC, CTA_SAF) and self.mixing is None:
            raise ValueError(f"protocol {self.kind} needs a mixing matrix")
        if self.kind == MULTITASK and self.task_weights is None:
            raise ValueError("multitask protocol needs task weights")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @property
    def n_agents(self):
        if self.mixing is not None:
            return self.mixing.n_agents
        if self.task_weights is not None:
            return self.task_weights.rho.shape[0]
        return None


@dataclass
class Traffic:
    """Values sent over links, accumulated over slots."""

    reals: int = 0
    indices: int = 0
    messages: int = 0


@dataclass
class RunResult:
    prior_error: np.ndarray  # (N, T), d - prediction before the slot's update
    final_params: np.ndarray
    accuracy: np.ndarray = None  # (N, T) in {0, 1}
    seeds: dict = field(default_factory=dict)
    traffic: Traffic = None

    @property
    def squared_error(self):
        return self.prior_error**2


def combine(mixing, phi):
    """``new[k] = sum_l A[l, k] * phi[l]``, summed in ascending ``l``.

    Written as an explicit elementwise reduction (not a BLAS product) so
    each agent's result depends on nothing but its own column of ``A``.
    """
    a = mixing.a if isinstance(mixing, MixingMatrix) else np.asarray(mixing)
    return np.sum(a[:, :, None] * phi[:, None, :], axis=0)


def _check_homogeneous(params, n_agents):
    if params.ndim != 2 or params.shape[0] != n_agents:
        raise ValueError(f"parameter array of shape {params.shape} does not hold one block per agent ({n_agents})")


def run_slot_noncooperative(filt, params, u, d, mu):
    return filt.adapt(params, u, d, mu)


def run_slot_atc(filt, params, mixing, u, d, mu):
    _check_homogeneous(params, mixing.n_agents)
    phi = filt.adapt(params, u, d, mu)
    return combine(mixing, phi)


def penalty_gradients(params, task_weights, eta):
    """Multitask penalty gradient for every agent at once.

    Row ``k`` equals :func:`diffadapt.filters.multitask_penalty_gradient`
    evaluated on agent ``k`` and all other agents.
    """
    rho_bar = task_weights.symmetrized()
    diffs = params[:, None, :] - params[None, :, :]
    return eta * np.sum(rho_bar[:, :, None] * diffs, axis=1)


def run_slot_multitask(filt, params, task_weights, eta, u, d, mu):
    """Local step plus the penalty pull, both evaluated at last slot's parameters."""
    _check_homogeneous(params, task_weights.rho.shape[0])
    phi = filt.adapt(params, u, d, mu)
    return phi - mu[:, None] * penalty_gradients(params, task_weights, eta)


def run_slot_cta_saf(saf, params, mixing, u, d, mu, traffic=None):
    """Combine-then-adapt for spline filters.

    Linear weights are combined in full. Each agent then picks its span from
    the combined weights and combines only the four neighbour ordinates at
    that same span index before the gradient step.
    """
    if not isinstance(saf, SAF):
        raise TypeError("cta_saf requires SAF filters")
    n = mixing.n_agents
    _check_homogeneous(params, n)
    a = mixing.a
    w, q = saf.split(params)
    psi = combine(a, w)
    s = np.sum(psi * u, axis=-1)
    i, t = saf.span(s)
    # spans[k, l] = q_l at agent k's span index
    spans = np.take_along_axis(q[None, :, :], (i[:, None] + np.arange(4))[:, None, :], axis=-1)
    xi = np.sum(a.T[:, :, None] * spans, axis=1)
    if traffic is not None:
        links = int(np.count_nonzero(a - np.diag(np.diag(a))))
        traffic.messages += links
        traffic.indices += links
        traffic.reals += 4 * links
    return saf.step(psi, q, i, t, xi, u, d, mu)


def run_slot(filt, protocol, params, u, d, mu, traffic=None):
    if protocol.kind == NON_COOPERATIVE:
        return run_slot_noncooperative(filt, params, u, d, mu)
    if protocol.kind == ATC:
        return run_slot_atc(filt, params, protocol.mixing, u, d, mu)
    if protocol.kind == MULTITASK:
        return run_slot_multitask(filt, params, protocol.task_weights, protocol.eta, u, d, mu)
    return run_slot_cta_saf(filt, params, protocol.mixing, u, d, mu, traffic)


def simulate(filt, protocol, U, D, mu, init=None, classification=False):
    """Run one Monte Carlo realisation.

    ``U`` is ``(T, N, M)``, ``D`` is ``(T, N)``, ``mu`` is ``(N,)``.
    """
    T, n = D.shape
    if protocol.n_agents not in (None, n):
        raise ValueError(f"protocol is built for {protocol.n_agents} agents, data has {n}")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,) or np.any(mu < 0):
        raise ValueError("mu needs one nonnegative step size per agent")
    params = filt.init_params(n) if init is None else np.array(init, dtype=float)
    filt.check_params(params)
    err = np.empty((n, T))
    acc = np.empty((n, T)) if classification else None
    traffic = Traffic() if protocol.kind == CTA_SAF else None
    for t in range(T):
        y = filt.predict(params, U[t])
        err[:, t] = D[t] - y
        if classification:
            acc[:, t] = metrics.classification_accuracy(y, D[t])
        params = run_slot(filt, protocol, params, U[t], D[t], mu, traffic)
        if not np.all(np.isfinite(params)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(params), axis=1))[0])
            raise FloatingPointError(f"parameters of agent {bad} became non-finite at slot {t}")
    return RunResult(err, params, acc, traffic=traffic)
