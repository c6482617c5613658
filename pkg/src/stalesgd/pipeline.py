"""Fully decoupled pipelined backpropagation with stale gradients.

Within a data-group the network is cut into ``K`` contiguous modules, one per
agent.  At iteration ``t`` agent ``k`` forwards mini-batch ``t-k+1`` and
backwards mini-batch ``t-2K+k+1``.  Messages travel one hop per iteration:
activations to ``k+1``, error gradients to ``k-1``.  The backward pass of a
batch reuses the weights the agent held when it forwarded that batch, kept in
a per-batch trace, so module ``k`` ends up differentiating the network at
``col{w_j(tau + j - 1)}`` for batch ``tau``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nn import (
    ForwardTrace,
    NetworkSpec,
    ParamSegment,
    backward_segment,
    forward_segment,
    full_gradient,
    loss_and_output_grad,
)


class SchedulingError(RuntimeError):
    """A message or trace required by the staleness schedule is missing or wrong."""


@dataclass(frozen=True)
class LayerGrouping:
    """Module boundaries ``(p_k, q_k)``, 1-based and inclusive."""

    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        b = self.bounds
        if not b or b[0][0] != 1:
            raise ValueError("first module must start at layer 1")
        for (p, q), nxt in zip(b, list(b[1:]) + [None]):
            if p > q:
                raise ValueError(f"empty module [{p}..{q}]")
            if nxt is not None and nxt[0] != q + 1:
                raise ValueError("modules must be contiguous")

    @property
    def K(self) -> int:
        return len(self.bounds)

    @property
    def L(self) -> int:
        return self.bounds[-1][1]

    def group(self, k: int) -> tuple[int, int]:
        return self.bounds[k - 1]

    def slice(self, spec: NetworkSpec, k: int) -> slice:
        return spec.segment_slice(*self.group(k))


def split_layers(
    L: int,
    K: int,
    strategy: str = "balanced",
    param_counts: Sequence[int] | None = None,
) -> LayerGrouping:
    """Cut layers ``1..L`` into ``K`` contiguous non-empty modules.

    ``"balanced"`` minimises the largest module parameter count (exact, by
    dynamic programming over cut points); ``"even"`` balances layer counts,
    giving earlier modules the extra layer when ``L`` is not divisible by ``K``.
    """
    if not 1 <= K <= L:
        raise ValueError(f"cannot split {L} layers into {K} modules")
    if strategy == "even":
        sizes = [len(c) for c in np.array_split(np.arange(L), K)]
    elif strategy == "balanced":
        costs = list(param_counts) if param_counts is not None else [1] * L
        if len(costs) != L:
            raise ValueError(f"need {L} parameter counts, got {len(costs)}")
        sizes = _minmax_partition(costs, K)
    else:
        raise ValueError(f"unknown split strategy {strategy!r}")
    bounds, start = [], 1
    for n in sizes:
        bounds.append((start, start + n - 1))
        start += n
    return LayerGrouping(tuple(bounds))


def _minmax_partition(costs: list[int], K: int) -> list[int]:
    L = len(costs)
    prefix = [0, *itertools.accumulate(costs)]
    inf = float("inf")
    # best[j][i]: smallest achievable max when the first i layers form j modules
    best = [[inf] * (L + 1) for _ in range(K + 1)]
    cut = [[0] * (L + 1) for _ in range(K + 1)]
    best[0][0] = 0
    for j in range(1, K + 1):
        for i in range(j, L - (K - j) + 1):
            for m in range(j - 1, i):
                val = max(best[j - 1][m], prefix[i] - prefix[m])
                if val < best[j][i]:
                    best[j][i] = val
                    cut[j][i] = m
    sizes, i = [], L
    for j in range(K, 0, -1):
        m = cut[j][i]
        sizes.append(i - m)
        i = m
    return sizes[::-1]


def staleness_indices(t: int, k: int, K: int) -> tuple[int | None, int | None]:
    """Mini-batches agent ``k`` forwards and backwards at iteration ``t``.

    ``None`` marks a warm-up slot with no valid batch.
    """
    fwd = t - k + 1
    bwd = t - 2 * K + k + 1
    return (fwd if fwd >= 0 else None), (bwd if bwd >= 0 else None)


@dataclass(frozen=True)
class ActivationMsg:
    batch_id: int
    payload: np.ndarray
    targets: np.ndarray
    src: tuple[int, int]
    dst: tuple[int, int]


@dataclass(frozen=True)
class ErrorGradMsg:
    batch_id: int
    payload: np.ndarray
    src: tuple[int, int]
    dst: tuple[int, int]


@dataclass
class ModuleAgent:
    """State of agent ``(s, k)``: its module weights, in-flight traces and inboxes.

    ``scale`` is ``|D_s| / N``; the stale gradient is the batch-mean gradient
    times ``scale``, i.e. ``|D_s|/(BN)`` times the batch sum.
    """

    s: int
    k: int
    K: int
    first: int
    last: int
    params: np.ndarray
    scale: float = 1.0
    traces: dict[int, ForwardTrace] = field(default_factory=dict)
    inbox_fwd: ActivationMsg | None = None
    inbox_bwd: ErrorGradMsg | None = None
    grad: np.ndarray | None = None
    last_loss: float | None = None
    max_traces: int = 0

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.params)

    @property
    def segment(self) -> ParamSegment:
        return ParamSegment(self.first, self.last, self.params)

    @property
    def trace_bound(self) -> int:
        return 2 * (self.K - self.k) + 1


@dataclass
class StepOutput:
    activation: ActivationMsg | None
    error_grad: ErrorGradMsg | None
    grad: np.ndarray


Sampler = Callable[[int], tuple[np.ndarray, np.ndarray]]


def pipeline_step(agent: ModuleAgent, t: int, spec: NetworkSpec, sample: Sampler | None = None) -> StepOutput:
    """One iteration of agent ``(s, k)``: forward one batch, backward an older one.

    ``sample(tau)`` must return ``(inputs, targets)`` of mini-batch ``tau``;
    only the first module calls it.  Inboxes must hold the messages its
    neighbours emitted at ``t - 1``.  Afterwards ``agent.grad`` is the scaled
    stale gradient, or zeros during warm-up.
    """
    k, K = agent.k, agent.K
    fwd, bwd = staleness_indices(t, k, K)
    act_out = err_out = None
    if fwd is None and agent.inbox_fwd is not None:
        raise SchedulingError(f"agent {(agent.s, k)} got an activation during warm-up at t={t}")
    if bwd is None and agent.inbox_bwd is not None:
        raise SchedulingError(f"agent {(agent.s, k)} got an error gradient during warm-up at t={t}")

    if fwd is not None:
        if k == 1:
            if sample is None:
                raise SchedulingError(f"agent {(agent.s, k)} needs a sampler")
            h_in, targets = sample(fwd)
        else:
            msg = agent.inbox_fwd
            if msg is None or msg.batch_id != fwd:
                got = None if msg is None else msg.batch_id
                raise SchedulingError(f"agent {(agent.s, k)} at t={t} expected activation for batch {fwd}, got {got}")
            h_in, targets = msg.payload, msg.targets
        trace, h_out = forward_segment(h_in, agent.segment, spec, fwd, targets)
        agent.traces[fwd] = trace
        agent.max_traces = max(agent.max_traces, len(agent.traces))
        if len(agent.traces) > agent.trace_bound:
            raise SchedulingError(f"agent {(agent.s, k)} holds {len(agent.traces)} traces > {agent.trace_bound}")
        if k < K:
            act_out = ActivationMsg(fwd, h_out, targets, (agent.s, k), (agent.s, k + 1))
    agent.inbox_fwd = None

    if bwd is not None:
        trace = agent.traces.pop(bwd, None)
        if trace is None:
            raise SchedulingError(f"agent {(agent.s, k)} at t={t} has no trace for batch {bwd}")
        if k == K:
            agent.last_loss, upstream = loss_and_output_grad(trace.output, trace.targets, spec.loss)
        else:
            msg = agent.inbox_bwd
            if msg is None or msg.batch_id != bwd:
                got = None if msg is None else msg.batch_id
                raise SchedulingError(f"agent {(agent.s, k)} at t={t} expected error gradient for batch {bwd}, got {got}")
            upstream = msg.payload
        grad_w, grad_in = backward_segment(trace, upstream, spec)
        agent.grad = grad_w * agent.scale
        if k > 1:
            err_out = ErrorGradMsg(bwd, grad_in, (agent.s, k), (agent.s, k - 1))
    else:
        agent.grad = np.zeros_like(agent.params)
    agent.inbox_bwd = None
    return StepOutput(act_out, err_out, agent.grad)


def deliver(agents: dict[tuple[int, int], ModuleAgent], outputs: list[StepOutput]) -> None:
    """Route messages emitted this iteration into the receivers' inboxes."""
    for out in outputs:
        for msg, slot in ((out.activation, "inbox_fwd"), (out.error_grad, "inbox_bwd")):
            if msg is None:
                continue
            dst = agents[msg.dst]
            if getattr(dst, slot) is not None:
                raise SchedulingError(f"inbox {slot} of {msg.dst} already full")
            setattr(dst, slot, msg)


@dataclass
class History:
    """Recorded weights and batches for checking the pipeline against replay.

    ``weights[t][s-1][k-1]`` is ``w_{s,k}(t)``, the module weights at the start
    of iteration ``t``.  ``batches[(s, tau)]`` holds ``(inputs, targets)``.
    """

    weights: list[list[list[np.ndarray]]] = field(default_factory=list)
    batches: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def history_oracle(
    history: History,
    spec: NetworkSpec,
    grouping: LayerGrouping,
    s: int,
    k: int,
    t: int,
    scale: float = 1.0,
) -> np.ndarray:
    """Reference stale gradient for agent ``(s, k)`` at iteration ``t``.

    Rebuilds the mixed-age weight vector ``col{w_{s,j}(tau + j - 1)}`` for
    ``tau = t - 2K + k + 1`` and differentiates it with one monolithic
    backprop on mini-batch ``tau``.
    """
    K = grouping.K
    tau = t - 2 * K + k + 1
    sl = grouping.slice(spec, k)
    if tau < 0:
        return np.zeros(sl.stop - sl.start)
    W = np.concatenate([history.weights[tau + j - 1][s - 1][j - 1] for j in range(1, K + 1)])
    X, targets = history.batches[(s, tau)]
    _, g = full_gradient(spec, W, X, targets)
    return g[sl] * scale
