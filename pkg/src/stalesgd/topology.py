"""Agent grid, topology validation and the gossip mixing matrix.

Agents are indexed ``(s, k)`` with ``s`` the data-group (1..S) and ``k`` the
model-group (1..K).  Every data-group is a path ``(s,1) - ... - (s,K)`` and
every model-group shares one undirected graph over ``1..S`` (``model_edges``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import rng as _rng

Edge = tuple[int, int]


class TopologyError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class AgentId:
    s: int
    k: int


def _normalize_edges(edges: Iterable[Iterable[int]], n: int) -> frozenset[Edge]:
    out = set()
    for e in edges:
        u, v = (int(x) for x in e)
        if u == v:
            raise TopologyError(f"self-loop on node {u}")
        for x in (u, v):
            if not 1 <= x <= n:
                raise TopologyError(f"edge endpoint {x} outside 1..{n}")
        out.add((min(u, v), max(u, v)))
    return frozenset(out)


def parse_edges(text: str) -> list[Edge]:
    """Parse ``"u v"`` pairs separated by whitespace (commas/semicolons allowed)."""
    tokens = [t for t in re.split(r"[\s,;]+", text.strip()) if t]
    if len(tokens) % 2:
        raise TopologyError(f"odd number of endpoints in edge list {text!r}")
    try:
        nums = [int(t) for t in tokens]
    except ValueError as exc:
        raise TopologyError(f"non-integer endpoint in edge list {text!r}") from exc
    return list(zip(nums[::2], nums[1::2]))


def ring_edges(S: int) -> list[Edge]:
    if S < 2:
        return []
    if S == 2:
        return [(1, 2)]
    return [(i, i % S + 1) for i in range(1, S + 1)]


def path_edges(S: int) -> list[Edge]:
    return [(i, i + 1) for i in range(1, S)]


def complete_edges(S: int) -> list[Edge]:
    return [(i, j) for i in range(1, S + 1) for j in range(i + 1, S + 1)]


def named_edges(name: str, S: int) -> list[Edge]:
    builders = {"ring": ring_edges, "path": path_edges, "complete": complete_edges}
    try:
        return builders[name](S)
    except KeyError:
        raise TopologyError(f"unknown topology {name!r}; expected one of {sorted(builders)}") from None


@dataclass(frozen=True)
class CommGraph:
    """SK-agent communication graph with one shared model-group topology."""

    S: int
    K: int
    model_edges: frozenset[Edge] = field(default_factory=frozenset)

    @property
    def agents(self) -> list[AgentId]:
        return [AgentId(s, k) for s in range(1, self.S + 1) for k in range(1, self.K + 1)]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.S, dtype=int)
        for u, v in self.model_edges:
            deg[u - 1] += 1
            deg[v - 1] += 1
        return deg

    def neighbors(self, s: int) -> list[int]:
        """Model-group neighbours of data-group ``s`` (excluding ``s``)."""
        out = [v for u, v in self.model_edges if u == s] + [u for u, v in self.model_edges if v == s]
        return sorted(out)

    def data_group_edges(self, s: int) -> list[tuple[AgentId, AgentId]]:
        return [(AgentId(s, k), AgentId(s, k + 1)) for k in range(1, self.K)]

    def comm_edges(self) -> list[tuple[AgentId, AgentId]]:
        """Every edge of the full SK-agent graph."""
        edges = []
        for s in range(1, self.S + 1):
            edges.extend(self.data_group_edges(s))
        for k in range(1, self.K + 1):
            edges.extend((AgentId(u, k), AgentId(v, k)) for u, v in sorted(self.model_edges))
        return edges


def build_agent_grid(S: int, K: int, model_graph: Iterable[Iterable[int]] = ()) -> CommGraph:
    if S < 1 or K < 1:
        raise TopologyError(f"need S >= 1 and K >= 1, got S={S}, K={K}")
    return CommGraph(S, K, _normalize_edges(model_graph, S))


def _is_connected(n: int, edges: Iterable[Edge]) -> bool:
    adj: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {1}
    stack = [1]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def _is_path(nodes: list, edges: list[tuple]) -> bool:
    n = len(nodes)
    if len(edges) != n - 1:
        return False
    deg = {x: 0 for x in nodes}
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    if n == 1:
        return True
    return sorted(deg.values()) == [1, 1] + [2] * (n - 2) and _is_connected_generic(nodes, edges)


def _is_connected_generic(nodes: list, edges: list[tuple]) -> bool:
    index = {x: i + 1 for i, x in enumerate(nodes)}
    return _is_connected(len(nodes), [(index[a], index[b]) for a, b in edges])


@dataclass
class ValidationReport:
    checks: list[tuple[str, bool, str]]

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failures(self) -> list[str]:
        return [f"{name}: {detail}" for name, ok, detail in self.checks if not ok]

    def table(self) -> str:
        width = max(len(name) for name, _, _ in self.checks)
        lines = [f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}" for name, ok, detail in self.checks]
        return "\n".join(lines)


def validate_topology(g: CommGraph) -> ValidationReport:
    """Check that each data-group is a line and each model-group is connected."""
    checks = []
    for s in range(1, g.S + 1):
        nodes = [AgentId(s, k) for k in range(1, g.K + 1)]
        ok = _is_path(nodes, g.data_group_edges(s))
        checks.append((f"data-group {s} is a path", ok, f"{g.K} node(s)"))
    connected = _is_connected(g.S, g.model_edges)
    for k in range(1, g.K + 1):
        detail = f"{g.S} node(s), {len(g.model_edges)} edge(s)"
        if not connected:
            detail += ", disconnected"
        checks.append((f"model-group {k} connected", connected, detail))
    return ValidationReport(checks)


@dataclass(frozen=True)
class MixingMatrix:
    P: np.ndarray
    alpha: float
    gamma: float


def default_alpha(model_edges: Iterable[Edge], S: int) -> float:
    deg = np.zeros(S, dtype=int)
    for u, v in model_edges:
        deg[u - 1] += 1
        deg[v - 1] += 1
    return 0.9 / (int(deg.max(initial=0)) + 1)


def build_mixing_matrix(model_graph: Iterable[Iterable[int]], S: int, alpha: float | None = None) -> MixingMatrix:
    """Weighted gossip matrix of an undirected graph over ``1..S``.

    Off-diagonal entries are ``alpha`` on edges and zero elsewhere; the diagonal
    is ``1 - degree * alpha`` so every row sums to one.

    Parameters
    ----------
    model_graph : iterable of (u, v)
        Undirected edges, 1-based.
    S : int
        Number of nodes.
    alpha : float, optional
        Edge weight; must lie strictly inside ``(0, 1/max_degree)``.  Defaults
        to ``0.9 / (max_degree + 1)``.
    """
    edges = _normalize_edges(model_graph, S)
    deg = np.zeros(S, dtype=int)
    for u, v in edges:
        deg[u - 1] += 1
        deg[v - 1] += 1
    max_deg = int(deg.max(initial=0))
    if alpha is None:
        alpha = default_alpha(edges, S)
    alpha = float(alpha)
    if max_deg > 0 and not 0.0 < alpha < 1.0 / max_deg:
        raise TopologyError(f"alpha={alpha} outside (0, 1/{max_deg})")
    if max_deg == 0 and not alpha > 0.0:
        raise TopologyError(f"alpha={alpha} must be positive")
    P = np.zeros((S, S))
    for u, v in edges:
        P[u - 1, v - 1] = alpha
        P[v - 1, u - 1] = alpha
    for i in range(S):
        P[i, i] = 1.0 - deg[i] * alpha
    return MixingMatrix(P=P, alpha=alpha, gamma=spectral_gap(P))


def spectral_gap(
    P: np.ndarray | MixingMatrix,
    *,
    rtol: float = 1e-10,
    max_iter: int = 10_000,
    seed: int = 0,
) -> float:
    """Spectral radius of ``P - (1/S) 11^T`` by power iteration.

    Iterates on the square of the (symmetric) deviation matrix so that a
    ``+lambda / -lambda`` pair collapses to one dominant eigenvalue, and stops
    once the eigen-residual of the Rayleigh quotient is below ``rtol`` relative.
    If the iterate falls into the null space (start vector orthogonal to the
    dominant eigenspace) the iteration restarts from a fresh vector deflated
    against the null directions already seen.
    """
    if isinstance(P, MixingMatrix):
        P = P.P
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if S == 1:
        return 0.0
    D = P - np.full((S, S), 1.0 / S)
    gen = _rng.stream(seed, _rng.POWER_START, S)
    null_dirs: list[np.ndarray] = []
    tiny = np.finfo(float).tiny
    for _ in range(S + 1):
        x = gen.standard_normal(S)
        for v in null_dirs:
            x -= (v @ x) * v
        nx = np.linalg.norm(x)
        if nx == 0.0:
            break
        x /= nx
        for _ in range(max_iter):
            y = D @ x
            z = D @ y
            mu = float(y @ y)
            if mu <= tiny:
                null_dirs.append(x.copy())
                break
            resid = float(np.linalg.norm(z - mu * x))
            nz = np.linalg.norm(z)
            x = z / nz
            if resid <= rtol * mu:
                return float(np.sqrt(float((D @ x) @ (D @ x))))
        else:
            raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
    return 0.0
