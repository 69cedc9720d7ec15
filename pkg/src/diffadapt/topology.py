"""Agent networks and the weight matrices used by the diffusion protocols.

Agents are indexed ``0..N-1``. Combination weights follow the convention
``A[l, k]`` = weight agent ``k`` gives to the estimate received from ``l``,
so every column of a mixing matrix sums to one.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

STOCHASTIC_ATOL = 1e-12
DEFAULT_MAX_TRIES = 10_000


class TopologyError(ValueError):
    """Invalid network or weight matrix."""


def _canonical_edges(n_agents, edges):
    out = set()
    for k, l in edges:
        k, l = int(k), int(l)
        if k == l:
            raise TopologyError(f"self-loop on agent {k}")
        if not (0 <= k < n_agents and 0 <= l < n_agents):
            raise TopologyError(f"edge ({k}, {l}) outside 0..{n_agents - 1}")
        out.add((min(k, l), max(k, l)))
    return frozenset(out)


@dataclass(frozen=True)
class Network:
    """Static undirected graph over ``n_agents`` agents.

    ``edges`` holds unordered pairs stored as ``(min, max)``. Connectivity is
    not enforced here so that hand-built test networks may contain isolated
    agents; :meth:`is_connected` reports it.
    """

    n_agents: int
    edges: frozenset

    def __post_init__(self):
        if int(self.n_agents) < 1:
            raise TopologyError("a network needs at least one agent")
        object.__setattr__(self, "n_agents", int(self.n_agents))
        object.__setattr__(self, "edges", _canonical_edges(self.n_agents, self.edges))

    def adjacency(self):
        adj = np.zeros((self.n_agents, self.n_agents), dtype=bool)
        for k, l in self.edges:
            adj[k, l] = adj[l, k] = True
        return adj

    @property
    def degrees(self):
        return self.adjacency().sum(axis=1)

    def neighbors(self, k):
        """Sorted neighbours of ``k``, excluding ``k`` itself."""
        return [int(l) for l in np.flatnonzero(self.adjacency()[k])]

    def is_connected(self):
        if self.n_agents == 1:
            return True
        n_comp, _ = csgraph.connected_components(self.adjacency(), directed=False)
        return n_comp == 1

    def to_edge_list(self):
        lines = [str(self.n_agents)]
        lines += [f"{k} {l}" for k, l in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows or len(rows[0]) != 1:
            raise TopologyError("edge list must start with a line holding N")
        n = int(rows[0][0])
        edges = []
        for i, r in enumerate(rows[1:], start=2):
            if len(r) != 2:
                raise TopologyError(f"edge list line {i}: expected 'k l', got {' '.join(r)!r}")
            edges.append((int(r[0]), int(r[1])))
        return cls(n, edges)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_edge_list())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_edge_list(fh.read())


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MixingMatrix:
    """Nonnegative, column-stochastic combination weights ``A[l, k]``."""

    a: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise TopologyError(f"mixing matrix must be square, got shape {a.shape}")
        if np.any(a < 0):
            raise TopologyError("mixing matrix has negative entries")
        cols = a.sum(axis=0)
        if not np.allclose(cols, 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            bad = int(np.argmax(np.abs(cols - 1.0)))
            raise TopologyError(f"column {bad} of the mixing matrix sums to {cols[bad]!r}, not 1")
        object.__setattr__(self, "a", a)

    @property
    def n_agents(self):
        return self.a.shape[0]

    def check_support(self, net):
        """Raise unless nonzero weights sit on edges or the diagonal."""
        if net.n_agents != self.n_agents:
            raise TopologyError(f"mixing matrix is {self.n_agents}x{self.n_agents} but network has {net.n_agents} agents")
        allowed = net.adjacency() | np.eye(net.n_agents, dtype=bool)
        bad = np.argwhere((self.a != 0) & ~allowed)
        if len(bad):
            l, k = bad[0]
            raise TopologyError(f"A[{l}, {k}] is nonzero but agents {l} and {k} are not linked")

    def to_csv(self, path):
        np.savetxt(path, self.a, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


@dataclass(frozen=True)
class TaskWeights:
    """Multitask similarity weights ``rho[k, l]``; each row sums to one over neighbours.

    Rows of agents without neighbours are all zero.
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise TopologyError(f"task weights must be square, got shape {rho.shape}")
        if np.any(rho < 0):
            raise TopologyError("task weights must be nonnegative")
        if np.any(np.diag(rho) != 0):
            raise TopologyError("task weights must have a zero diagonal")
        rows = rho.sum(axis=1)
        live = rows != 0
        if not np.allclose(rows[live], 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            raise TopologyError("each nonzero row of the task weights must sum to 1")
        object.__setattr__(self, "rho", rho)

    def symmetrized(self):
        return 0.5 * (self.rho + self.rho.T)


def generate_random_connected(n_agents, edge_probability, seed, max_tries=DEFAULT_MAX_TRIES):
    """Erdos-Renyi graph, redrawn until connected.

    Each try draws every unordered pair independently with probability
    ``edge_probability`` from a generator seeded once with ``seed``.
    """
    if n_agents < 1:
        raise TopologyError("n_agents must be >= 1")
    if not 0.0 < edge_probability < 1.0:
        raise TopologyError(f"edge_probability must lie in (0, 1), got {edge_probability}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n_agents, k=1)
    for _ in range(max_tries):
        keep = rng.random(iu.size) < edge_probability
        net = Network(n_agents, zip(iu[keep].tolist(), ju[keep].tolist()))
        if net.is_connected():
            return net
    raise TopologyError(
        f"no connected graph with N={n_agents}, p={edge_probability} after {max_tries} tries"
    )


def max_degree_weights(net):
    deg = net.degrees
    a = net.adjacency() / (deg.max() + 1.0)
    np.fill_diagonal(a, 1.0 - deg / (deg.max() + 1.0))
    return MixingMatrix(a)


def identity_mixing(n_agents):
    """No cooperation: every agent keeps its own estimate."""
    return MixingMatrix(np.eye(n_agents))


def uniform_task_weights(net):
    deg = net.degrees
    adj = net.adjacency().astype(float)
    if np.any(deg == 0):
        isolated = np.flatnonzero(deg == 0).tolist()
        warnings.warn(f"agents {isolated} have no neighbours; their multitask penalty is zero", stacklevel=2)
    rho = np.divide(adj, deg[:, None], out=np.zeros_like(adj), where=deg[:, None] > 0)
    return TaskWeights(rho)
