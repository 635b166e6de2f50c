"""Time-varying doubly stochastic communication schedules.

Weights follow the Metropolis rule: an edge ``(i, j)`` gets
``1 / (1 + max(deg_i, deg_j))`` and the diagonal absorbs the remainder.  The
matrices are symmetric, hence doubly stochastic, and every positive entry is
at least ``1/N``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import CertificationError, ParameterError
from .rng import RandomStream

FAMILIES = ("complete", "ring", "random-connected")

# path tag separating graph streams from other users of the same seed
_GRAPH_STREAM = 1


def metropolis_weights(adjacency) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    adj = adj & ~np.eye(adj.shape[0], dtype=bool)
    deg = adj.sum(axis=1)
    pair_max = np.maximum(deg[:, None], deg[None, :])
    A = np.where(adj, 1.0 / (1.0 + pair_max), 0.0)
    np.fill_diagonal(A, 1.0 - A.sum(axis=1))
    return A


def _ring_adjacency(N):
    adj = np.zeros((N, N), dtype=bool)
    idx = np.arange(N)
    adj[idx, (idx + 1) % N] = True
    adj[(idx + 1) % N, idx] = True
    return adj


def _random_connected_adjacency(N, seed, t, extra_p):
    stream = RandomStream(seed, _GRAPH_STREAM, t)
    if N == 2:
        tree_edges = [(0, 1)]
    else:
        prufer = np.minimum((stream.uniforms(N - 2) * N).astype(int), N - 1)
        tree_edges = nx.from_prufer_sequence(prufer.tolist()).edges()
    adj = np.zeros((N, N), dtype=bool)
    for i, j in tree_edges:
        adj[i, j] = adj[j, i] = True
    iu, ju = np.triu_indices(N, k=1)
    extra = stream.uniforms(iu.shape[0]) < extra_p
    adj[iu[extra], ju[extra]] = True
    adj[ju[extra], iu[extra]] = True
    return adj


@dataclass(frozen=True)
class GraphSchedule:
    """A deterministic sequence ``A_1, A_2, ...`` of weight matrices.

    ``family`` is one of ``complete``, ``ring`` or ``random-connected``.  The
    random family draws, every round, a uniform spanning tree (Pruefer code)
    plus each remaining edge independently with ``extra_edge_probability``.
    """

    family: str
    N: int
    seed: int = 0
    extra_edge_probability: float = 0.3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(
                f"unknown graph family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.N < 2:
            raise ParameterError("a schedule needs at least two agents")
        if not 0.0 <= self.extra_edge_probability <= 1.0:
            raise ParameterError("extra_edge_probability must lie in [0, 1]")

    @property
    def time_invariant(self) -> bool:
        return self.family != "random-connected"

    @property
    def eta(self) -> float:
        """Closed-form minimal connection strength.

        Exact for the fixed families.  For ``random-connected`` this is the
        Metropolis lower bound ``1/N``; use :func:`certify_eta` for the value
        actually attained over a horizon.
        """
        if self.family == "ring" and self.N >= 3:
            return 1.0 / 3.0
        if self.family == "ring":
            return 0.5
        return 1.0 / self.N

    def matrix_at(self, t: int) -> np.ndarray:
        return matrix_at(self, t)

    def matrices(self, T: int) -> np.ndarray:
        """Stack ``A_1 .. A_T`` into a ``(T, N, N)`` array."""
        return np.stack([matrix_at(self, t) for t in range(1, T + 1)])

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "N": self.N,
            "seed": self.seed,
            "extra_edge_probability": self.extra_edge_probability,
        }


@functools.lru_cache(maxsize=4096)
def _cached_matrix(schedule: GraphSchedule, t: int) -> np.ndarray:
    N = schedule.N
    if schedule.family == "complete":
        adj = ~np.eye(N, dtype=bool)
    elif schedule.family == "ring":
        adj = _ring_adjacency(N)
    else:
        adj = _random_connected_adjacency(
            N, schedule.seed, t, schedule.extra_edge_probability
        )
    A = metropolis_weights(adj)
    A.setflags(write=False)
    return A


def matrix_at(schedule: GraphSchedule, t: int) -> np.ndarray:
    """Weight matrix ``A_t`` for round ``t >= 1`` (read-only)."""
    if t < 1:
        raise ParameterError(f"rounds start at 1, got {t}")
    return _cached_matrix(schedule, 1 if schedule.time_invariant else int(t))


def support_connected(A) -> bool:
    A = np.asarray(A)
    N = A.shape[0]
    seen = np.zeros(N, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(A[i] > 0):
            if not seen[j]:
                seen[j] = True
                frontier.append(j)
    return bool(seen.all())


def validate_weight_matrix(A, eta=None, atol=1e-12, round_index=None):
    """Raise :class:`CertificationError` unless ``A`` meets the assumptions.

    Checks non-negativity, unit row and column sums, a connected support
    graph and, when ``eta`` is given, the lower bound on the diagonal and on
    every positive entry.
    """
    A = np.asarray(A, dtype=float)
    where = f" at round {round_index}" if round_index is not None else ""
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise CertificationError(f"weight matrix is not square{where}", round_index)
    if np.any(A < 0):
        raise CertificationError(f"negative weight{where}", round_index)
    if np.max(np.abs(A.sum(axis=1) - 1.0)) > atol:
        raise CertificationError(f"row sums differ from 1{where}", round_index)
    if np.max(np.abs(A.sum(axis=0) - 1.0)) > atol:
        raise CertificationError(f"column sums differ from 1{where}", round_index)
    if not support_connected(A):
        raise CertificationError(f"support graph is disconnected{where}", round_index)
    if eta is not None:
        if np.min(np.diag(A)) < eta - atol:
            raise CertificationError(f"diagonal entry below eta{where}", round_index)
        positive = A[A > 0]
        if positive.min() < eta - atol:
            raise CertificationError(f"positive entry below eta{where}", round_index)


def certify_eta(schedule: GraphSchedule, horizon: int) -> float:
    """Smallest positive entry (diagonal included) over rounds ``1..horizon``."""
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    last = 1 if schedule.time_invariant else horizon
    eta = math.inf
    for t in range(1, last + 1):
        A = matrix_at(schedule, t)
        validate_weight_matrix(A, round_index=t)
        eta = min(eta, float(A[A > 0].min()))
    return eta


def transfer_matrix(schedule: GraphSchedule, s: int, k: int) -> np.ndarray:
    """``Phi(k, s) = A(k) A(k-1) ... A(s+1)``; the identity when ``k == s``."""
    if not k >= s >= 0:
        raise ParameterError(f"need k >= s >= 0, got s={s}, k={k}")
    phi = np.eye(schedule.N)
    for t in range(s + 1, k + 1):
        phi = matrix_at(schedule, t) @ phi
    return phi


@dataclass(frozen=True)
class ConvergenceEnvelope:
    """Geometric bound ``|Phi(t,s)_ij - 1/N| <= theta * beta**(t-s)``."""

    theta: float
    beta: float

    def bound(self, window) -> float:
        return self.theta * self.beta**window


def envelope(N: int, eta: float) -> ConvergenceEnvelope:
    if N < 2:
        raise ParameterError("envelope needs N >= 2")
    if not 0.0 < eta <= 1.0:
        raise ParameterError(f"eta must lie in (0, 1], got {eta}")
    beta = 1.0 - eta / (4.0 * N * N)
    return ConvergenceEnvelope(theta=beta**-2, beta=beta)
