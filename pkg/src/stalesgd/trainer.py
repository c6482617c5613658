"""Lockstep driver for decentralized training with pipelined stale gradients.

Each iteration every agent runs its pipeline step, takes a local step with
its stale gradient and then averages with its model-group neighbours through
the gossip matrix.  The run records loss at the averaged weights, the
consensus error in two norms, and checks every step against the one-step
contraction of the consensus error and its cumulative geometric bound.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as _rng
from .datasets import Dataset, split_data, sample_minibatch
from .nn import NetworkSpec, encode_targets, full_gradient, init_params, per_sample_grad_norms
from .pipeline import History, ModuleAgent, deliver, pipeline_step, split_layers
from .topology import TopologyError, build_agent_grid, build_mixing_matrix, ring_edges, validate_topology

CSV_HEADER = ("t", "eta", "loss", "delta_max", "delta_norm", "grad_norm", "lemma2_rhs", "contraction_ok", "wall_ms")
SLACK = 1e-9


# --- step sizes ----------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule: ``constant``, ``piecewise`` or ``diminishing`` (``eta_star / (t+1)``).

    A piecewise schedule returns ``values[i]`` for the first ``i`` with
    ``t <= breakpoints[i]`` and ``values[-1]`` past the last breakpoint.
    """

    kind: str = "constant"
    eta: float = 0.1
    breakpoints: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    eta_star: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(int(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "constant":
            if not self.eta > 0:
                raise ValueError("constant step size must be positive")
        elif self.kind == "piecewise":
            if len(self.values) != len(self.breakpoints) + 1:
                raise ValueError("piecewise schedule needs one more value than breakpoints")
            if any(v <= 0 for v in self.values):
                raise ValueError("step sizes must be positive")
            if any(a < b for a, b in zip(self.values, self.values[1:])):
                raise ValueError("piecewise step sizes must be non-increasing")
            if any(a >= b for a, b in zip(self.breakpoints, self.breakpoints[1:])):
                raise ValueError("breakpoints must be strictly increasing")
        elif self.kind == "diminishing":
            if not self.eta_star > 0:
                raise ValueError("eta_star must be positive")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def strategy_one(cls, eta: float = 0.1) -> "StepSchedule":
        return cls("constant", eta=eta)

    @classmethod
    def strategy_two(cls, breakpoints: Sequence[int] = (15000, 30000, 40000)) -> "StepSchedule":
        return cls("piecewise", breakpoints=tuple(breakpoints), values=(0.1, 0.01, 0.001, 0.0001))

    @classmethod
    def diminishing(cls, eta_star: float) -> "StepSchedule":
        return cls("diminishing", eta_star=eta_star)

    @classmethod
    def parse(cls, text: str) -> "StepSchedule":
        """Parse ``strategy1[:eta]``, ``constant:eta``, ``strategy2[:b1,b2,b3]``,
        ``piecewise:b1,..:v1,..`` or ``diminishing:eta_star``."""
        name, _, rest = text.strip().partition(":")
        name = name.strip().lower()
        args = [a for a in rest.split(":")] if rest else []

        def floats(s):
            return [float(x) for x in s.split(",") if x.strip()]

        try:
            if name in ("strategy1", "strategy-i", "constant"):
                return cls.strategy_one(float(args[0]) if args else 0.1)
            if name in ("strategy2", "strategy-ii"):
                return cls.strategy_two([int(x) for x in floats(args[0])] if args else (15000, 30000, 40000))
            if name == "piecewise":
                return cls("piecewise", breakpoints=tuple(int(x) for x in floats(args[0])), values=tuple(floats(args[1])))
            if name == "diminishing":
                return cls.diminishing(float(args[0]) if args else 0.5)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad schedule {text!r}: {exc}") from exc
        raise ValueError(f"unknown schedule {text!r}")

    def __call__(self, t: int) -> float:
        return schedule_eta(self, t)

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.eta!r}"
        if self.kind == "diminishing":
            return f"diminishing:{self.eta_star!r}"
        return "piecewise:{}:{}".format(",".join(map(str, self.breakpoints)), ",".join(map(repr, self.values)))


def schedule_eta(sched: StepSchedule, t: int) -> float:
    if sched.kind == "constant":
        return sched.eta
    if sched.kind == "diminishing":
        return sched.eta_star / (t + 1)
    for bp, v in zip(sched.breakpoints, sched.values):
        if t <= bp:
            return v
    return sched.values[-1]


# --- update laws and consensus metrics ----------------------------------


def local_update(agent: ModuleAgent, eta: float) -> np.ndarray:
    """Gradient step on a copy of the agent's weights; the agent is untouched."""
    return agent.params - eta * agent.grad


def mixing_update(U: Sequence[np.ndarray], P: np.ndarray) -> list[np.ndarray]:
    """New weights of one model-group: row ``s`` of ``P`` applied to the stack ``U``.

    Terms are accumulated neighbour by neighbour in index order, skipping
    zero weights, so results do not depend on a BLAS reduction order.
    """
    S = len(U)
    if P.shape != (S, S):
        raise ValueError(f"mixing matrix {P.shape} does not match {S} replicas")
    if any(u.shape != U[0].shape for u in U):
        raise ValueError("replicas of a model-group differ in dimension")
    return [sum(P[s, r] * U[r] for r in range(S) if P[s, r] != 0.0) for s in range(S)]


def consensus_error_norm(W: np.ndarray) -> float:
    """``||delta||`` for stacked replicas ``W`` of shape ``(S, d)``."""
    W = np.asarray(W, dtype=float)
    return float(np.linalg.norm(W - W.mean(axis=0)))


def consensus_error_max(W: np.ndarray, spec: NetworkSpec) -> float:
    """Largest per-layer, per-replica distance from the replica average."""
    W = np.asarray(W, dtype=float)
    dev = W - W.mean(axis=0)
    worst = 0.0
    for l in range(1, spec.L + 1):
        per_replica = np.linalg.norm(dev[:, spec.layer_slice(l)], axis=1)
        worst = max(worst, float(per_replica.max()))
    return worst


def lemma2_rhs(gamma: float, delta0_norm: float, g_max: float, sched: StepSchedule, t: int) -> float:
    """Bound on ``||delta(t+1)||``: ``gamma^(t+1) delta0 + g_max sum_{tau<=t} gamma^(t+1-tau) eta_tau``."""
    tail = sum(gamma ** (t + 1 - tau) * sched(tau) for tau in range(t + 1))
    return gamma ** (t + 1) * delta0_norm + g_max * tail


def contraction_check(
    delta_norm: float, next_delta_norm: float, eta: float, grad_norm: float, gamma: float, slack: float = SLACK
) -> bool:
    """One-step test ``||delta(t+1)|| <= gamma ||delta(t)|| + gamma eta ||grad(t)||``."""
    return next_delta_norm <= gamma * delta_norm + gamma * eta * grad_norm + slack


def theorem1_constants(
    rho: float, sigma: float, gamma: float, eta: float, K: int, S: int, B: int, delta0: float
) -> tuple[float, float]:
    """The two constants of the fixed-step gradient-norm bound.

    Inputs here are empirical estimates, so the result is a diagnostic.  A
    ``RuntimeWarning`` is issued when ``eta > S / rho``.
    """
    if rho > 0 and eta > S / rho:
        warnings.warn(f"step size {eta} exceeds S/rho = {S / rho:.6g}", RuntimeWarning, stacklevel=2)
    common = (24 * K**3 + 1) * (S + rho * eta) * rho**2
    M1 = common * (gamma**2 / (1 - gamma**2) * delta0**2 + gamma / (1 - gamma) * delta0 * eta)
    M2 = (
        rho * K * sigma**2 / (B * S**2)
        + (eta * S + rho * eta**2) * 6 * K**3 * rho**2 * sigma**2 / (B * S**4)
        + common * (gamma / (1 - gamma)) ** 2 * eta**2
    )
    return M1, M2


# --- configuration and results ------------------------------------------


@dataclass
class TrainConfig:
    spec: NetworkSpec
    dataset: Dataset
    S: int = 1
    K: int = 1
    B: int = 32
    T: int = 1000
    seed: int = 0
    edges: list[tuple[int, int]] | None = None  # None: ring over the S data-groups
    alpha: float | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule.strategy_one)
    split: str = "balanced"
    eval_interval: int = 50
    eval_size: int = 512
    init_noise: float = 0.0
    record_history: bool = False
    record_wall: bool = False
    workers: int = 1
    lipschitz_probes: int = 64
    probe_radius: float = 0.01
    fault_at: int | None = None  # drop all pipeline messages emitted at this iteration
    zero_gradients: bool = False

    def model_edges(self) -> list[tuple[int, int]]:
        return ring_edges(self.S) if self.edges is None else list(self.edges)


@dataclass
class MetricsRecord:
    t: int
    eta: float
    loss: float
    delta_max: float
    delta_norm: float
    grad_norm: float
    lemma2_rhs: float
    contraction_ok: bool
    wall_ms: float

    def row(self) -> list[str]:
        def num(x):
            return repr(float(x))

        return [
            str(self.t),
            num(self.eta),
            num(self.loss),
            num(self.delta_max),
            num(self.delta_norm),
            num(self.grad_norm),
            num(self.lemma2_rhs),
            "true" if self.contraction_ok else "false",
            num(self.wall_ms),
        ]


@dataclass
class DiagnosticsReport:
    values: dict[str, object]

    def __getitem__(self, key):
        return self.values[key]

    def text(self) -> str:
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(float(v))
            return str(v)

        return "".join(f"{k}={fmt(v)}\n" for k, v in self.values.items())


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    diagnostics: DiagnosticsReport
    # per-iteration series; index t refers to the state after t iterations
    delta_norm: np.ndarray
    delta_max: np.ndarray
    lemma2_bound: np.ndarray  # lemma2_bound[t] bounds delta_norm[t]; [0] = delta_norm[0]
    grad_norm: np.ndarray  # grad_norm[t]: stacked stale gradient used at iteration t
    eta: np.ndarray
    contraction_ok: np.ndarray
    stale_grads: dict[tuple[int, int, int], np.ndarray] | None = None
    history: History | None = None
    final_weights: np.ndarray | None = None

    @property
    def checks_passed(self) -> bool:
        return bool(self.contraction_ok.all() and (self.delta_norm <= self.lemma2_bound + SLACK).all())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in self.records:
            w.writerow(rec.row())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.csv_text())

    def write_diagnostics(self, path: str | Path) -> None:
        Path(path).write_text(self.diagnostics.text())


# --- simulation ---------------------------------------------------------


class Simulation:
    """Grid of ``S x K`` module agents advanced in lockstep."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        spec, ds = cfg.spec, cfg.dataset
        if min(cfg.S, cfg.K, cfg.B) < 1 or cfg.T < 0:
            raise ValueError("S, K, B must be >= 1 and T >= 0")
        if spec.layers[0].n_in != ds.dim:
            raise ValueError(f"network input width {spec.layers[0].n_in} != data dim {ds.dim}")
        self.graph = build_agent_grid(cfg.S, cfg.K, cfg.model_edges())
        report = validate_topology(self.graph)
        if not report.passed:
            raise TopologyError("; ".join(report.failures()))
        self.mixing = build_mixing_matrix(self.graph.model_edges, cfg.S, cfg.alpha)
        self.grouping = split_layers(spec.L, cfg.K, cfg.split, [layer.size for layer in spec.layers])
        self.partition = split_data(ds, cfg.S, cfg.seed)
        self.w0 = init_params(spec, cfg.seed)
        self.agents: dict[tuple[int, int], ModuleAgent] = {}
        for s in range(1, cfg.S + 1):
            w = self.w0.copy()
            if cfg.init_noise > 0:
                w = w + cfg.init_noise * _rng.stream(cfg.seed, _rng.INIT_NOISE, s).standard_normal(w.size)
            for k in range(1, cfg.K + 1):
                p, q = self.grouping.group(k)
                self.agents[(s, k)] = ModuleAgent(
                    s, k, cfg.K, p, q, w[self.grouping.slice(spec, k)].copy(), self.partition.weight(s)
                )
        self.history = History() if cfg.record_history else None
        self.stale_grads: dict[tuple[int, int, int], np.ndarray] | None = {} if cfg.record_history else None
        self.t = 0
        self._pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def sampler(self, s: int):
        cfg = self.cfg

        def sample(tau: int):
            batch = sample_minibatch(self.partition, s, cfg.B, tau, cfg.seed)
            X, labels = cfg.dataset.columns(batch.indices)
            targets = encode_targets(cfg.spec, labels)
            if self.history is not None:
                self.history.batches[(s, tau)] = (X, targets)
            return X, targets

        return sample

    def stacked(self) -> np.ndarray:
        """Replica weights as an ``(S, d)`` array."""
        S, K = self.cfg.S, self.cfg.K
        return np.stack([np.concatenate([self.agents[(s, k)].params for k in range(1, K + 1)]) for s in range(1, S + 1)])

    def _compute(self, t: int):
        spec = self.cfg.spec
        order = sorted(self.agents)

        def run(key):
            agent = self.agents[key]
            return pipeline_step(agent, t, spec, self.sampler(agent.s) if agent.k == 1 else None)

        if self._pool is None:
            return [run(key) for key in order]
        return list(self._pool.map(run, order))

    def step(self) -> tuple[float, float]:
        """Advance one iteration; returns the step size and ``||stacked gradient||``."""
        cfg, t = self.cfg, self.t
        if self.history is not None:
            self.history.weights.append(
                [[self.agents[(s, k)].params.copy() for k in range(1, cfg.K + 1)] for s in range(1, cfg.S + 1)]
            )
        eta = cfg.schedule(t)
        # phase 1 happened at the end of the previous step (inboxes filled)
        outputs = self._compute(t)
        if cfg.fault_at is None or t != cfg.fault_at:
            deliver(self.agents, outputs)
        if cfg.zero_gradients:
            for agent in self.agents.values():
                agent.grad = np.zeros_like(agent.params)
        if self.stale_grads is not None:
            for (s, k), agent in self.agents.items():
                self.stale_grads[(s, k, t)] = agent.grad.copy()
        grad_sq = sum(float(agent.grad @ agent.grad) for agent in self.agents.values())
        U = {key: local_update(agent, eta) for key, agent in self.agents.items()}
        P = self.mixing.P
        for k in range(1, cfg.K + 1):
            new = mixing_update([U[(s, k)] for s in range(1, cfg.S + 1)], P)
            for s, w in enumerate(new, start=1):
                self.agents[(s, k)].params = w
        self.t += 1
        return eta, math.sqrt(grad_sq)


def _eval_indices(cfg: TrainConfig) -> np.ndarray:
    n = min(cfg.eval_size, cfg.dataset.N)
    return np.sort(_rng.stream(cfg.seed, _rng.EVAL).choice(cfg.dataset.N, size=n, replace=False))


def _estimate_lipschitz(cfg: TrainConfig, centers: list[np.ndarray]) -> float:
    gen = _rng.stream(cfg.seed, _rng.PROBE)
    spec, ds = cfg.spec, cfg.dataset
    worst = 0.0
    for i in range(cfg.lipschitz_probes):
        c = centers[i % len(centers)]
        w1 = c + cfg.probe_radius * gen.standard_normal(c.size)
        w2 = c + cfg.probe_radius * gen.standard_normal(c.size)
        n = gen.integers(ds.N)
        X, labels = ds.columns(np.array([n]))
        targets = encode_targets(spec, labels)
        g1 = full_gradient(spec, w1, X, targets)[1]
        g2 = full_gradient(spec, w2, X, targets)[1]
        worst = max(worst, float(np.linalg.norm(g1 - g2) / np.linalg.norm(w1 - w2)))
    return worst


def run_training(cfg: TrainConfig) -> TrainResult:
    """Run ``cfg.T`` lockstep iterations and collect metrics and diagnostics."""
    sim = Simulation(cfg)
    try:
        return _run(sim)
    finally:
        sim.close()


def _run(sim: Simulation) -> TrainResult:
    cfg = sim.cfg
    spec, T = cfg.spec, cfg.T
    gamma = sim.mixing.gamma
    eval_idx = _eval_indices(cfg)
    X_eval, y_eval = cfg.dataset.columns(eval_idx)
    t_eval = encode_targets(spec, y_eval)

    delta_norm = np.zeros(T + 1)
    delta_max = np.zeros(T + 1)
    bound = np.zeros(T + 1)
    grad_norm = np.zeros(T)
    etas = np.zeros(T)
    contraction = np.ones(T, dtype=bool)

    W = sim.stacked()
    delta_norm[0] = consensus_error_norm(W)
    delta_max[0] = consensus_error_max(W, spec)
    bound[0] = delta_norm[0]
    delta0 = delta_norm[0]

    records: list[MetricsRecord] = []
    centers: list[np.ndarray] = []
    eval_grad: list[tuple[float, float]] = []  # (eta weight, ||grad Psi||)
    sigma_hat = 0.0

    def evaluate(t: int, eta: float, gnorm: float, ok: bool, wall: float) -> None:
        nonlocal sigma_hat
        avg = W.mean(axis=0)
        centers.append(avg)
        value, g = full_gradient(spec, avg, X_eval, t_eval)
        eval_grad.append((cfg.schedule(t), float(np.linalg.norm(g))))
        sigma_hat = max(sigma_hat, float(per_sample_grad_norms(spec, avg, X_eval, t_eval).max()))
        records.append(
            MetricsRecord(t, eta, value, delta_max[t], delta_norm[t], gnorm, bound[t], ok, wall)
        )

    evaluate(0, cfg.schedule(0), 0.0, True, float("nan") if not cfg.record_wall else 0.0)

    g_max = 0.0
    tail = 0.0
    since_ok = True
    for t in range(T):
        start = time.perf_counter() if cfg.record_wall else 0.0
        eta, gnorm = sim.step()
        wall = (time.perf_counter() - start) * 1e3 if cfg.record_wall else float("nan")
        W = sim.stacked()
        etas[t] = eta
        grad_norm[t] = gnorm
        delta_norm[t + 1] = consensus_error_norm(W)
        delta_max[t + 1] = consensus_error_max(W, spec)
        contraction[t] = contraction_check(delta_norm[t], delta_norm[t + 1], eta, gnorm, gamma)
        since_ok &= bool(contraction[t])
        g_max = max(g_max, gnorm)
        tail = gamma * (tail + eta)
        bound[t + 1] = gamma ** (t + 1) * delta0 + g_max * tail
        if (t + 1) % cfg.eval_interval == 0 or t + 1 == T:
            evaluate(t + 1, eta, gnorm, since_ok, wall)
            since_ok = True

    final_avg = W.mean(axis=0)
    rho_hat = _estimate_lipschitz(cfg, centers) if cfg.lipschitz_probes > 0 else 0.0
    eta_fixed = cfg.schedule(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        M1, M2 = theorem1_constants(rho_hat, sigma_hat, gamma, eta_fixed, cfg.K, cfg.S, cfg.B, delta0)
    psi0 = records[0].loss
    eta_sum = float(etas.sum())
    eta_sq_sum = float((etas**2).sum())
    partial = np.cumsum(etas)
    partial_sq = np.cumsum(etas**2)
    weights = np.array([w for w, _ in eval_grad])
    norms = np.array([n for _, n in eval_grad])
    lemma2_fail = int(np.count_nonzero(delta_norm > bound + SLACK))
    diag = {
        "S": cfg.S,
        "K": cfg.K,
        "B": cfg.B,
        "T": T,
        "seed": cfg.seed,
        "schedule": cfg.schedule.describe(),
        "module_bounds": " ".join(f"{p}-{q}" for p, q in sim.grouping.bounds),
        "alpha": sim.mixing.alpha,
        "gamma": gamma,
        "delta0_norm": delta0,
        "g_max": g_max,
        "sigma_hat": sigma_hat,
        "rho_hat": rho_hat,
        "eta_for_constants": eta_fixed,
        "eta_le_S_over_rho": bool(rho_hat == 0 or eta_fixed <= cfg.S / rho_hat),
        "M1": M1,
        "M2": M2,
        "fixed_step_bound": 2 * cfg.S * psi0 / (eta_fixed * T) + M1 / T + M2 * eta_fixed if T > 0 else float("inf"),
        "consensus_limit": gamma * eta_fixed / (1 - gamma) if gamma < 1 else float("inf"),
        "eta_sum": eta_sum,
        "eta_sq_sum": eta_sq_sum,
        "partial_sums_monotone": bool(np.all(np.diff(partial) >= 0) and np.all(np.diff(partial_sq) >= 0)),
        "mean_sq_grad_norm": float(np.mean(norms**2)),
        "weighted_grad_norm": float(weights @ norms / weights.sum()),
        "initial_loss": psi0,
        "final_loss": records[-1].loss,
        "final_delta_norm": float(delta_norm[-1]),
        "final_delta_max": float(delta_max[-1]),
        "max_delta_norm": float(delta_norm.max()),
        "contraction_failures": int(np.count_nonzero(~contraction)),
        "bound_failures": lemma2_fail,
        "max_traces": " ".join(
            str(max(sim.agents[(s, k)].max_traces for s in range(1, cfg.S + 1))) for k in range(1, cfg.K + 1)
        ),
        "samples_per_iteration": cfg.S * cfg.B,
        "samples_processed": cfg.S * cfg.B * T,
        "checks_passed": bool(contraction.all() and lemma2_fail == 0),
    }
    return TrainResult(
        records=records,
        diagnostics=DiagnosticsReport(diag),
        delta_norm=delta_norm,
        delta_max=delta_max,
        lemma2_bound=bound,
        grad_norm=grad_norm,
        eta=etas,
        contraction_ok=contraction,
        stale_grads=sim.stale_grads,
        history=_finish_history(sim),
        final_weights=final_avg,
    )


def _finish_history(sim: Simulation) -> History | None:
    if sim.history is None:
        return None
    cfg = sim.cfg
    sim.history.weights.append(
        [[sim.agents[(s, k)].params.copy() for k in range(1, cfg.K + 1)] for s in range(1, cfg.S + 1)]
    )
    return sim.history


# --- four-method comparison ---------------------------------------------

METHODS = (
    ("centralized", 1, 1),
    ("decoupled", 1, 2),
    ("data_parallel", 4, 1),
    ("distributed", 4, 2),
)


def _edges_for(S: int, edges: list[tuple[int, int]] | None) -> list[tuple[int, int]]:
    if S > 1 and edges and max(max(e) for e in edges) == S:
        return list(edges)
    return ring_edges(S)


def run_comparison(cfg: TrainConfig, out_dir: str | Path | None = None) -> dict[str, TrainResult]:
    """Run the centralized, decoupled, data-parallel and distributed variants.

    All four share the network, data, seed, schedule and per-group batch size,
    so they start from the same weights and evaluate on the same grid.  With
    ``out_dir`` set, writes ``metrics_<method>.csv``, ``merged.csv`` and
    ``summary.csv``.
    """
    results = {}
    for label, S, K in METHODS:
        sub = TrainConfig(**{**cfg.__dict__, "S": S, "K": K, "edges": _edges_for(S, cfg.edges)})
        results[label] = run_training(sub)
    if out_dir is not None:
        write_comparison(results, out_dir)
    return results


def write_comparison(results: dict[str, TrainResult], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    merged = io.StringIO()
    mw = csv.writer(merged, lineterminator="\n")
    mw.writerow(("method", *CSV_HEADER))
    summary = io.StringIO()
    sw = csv.writer(summary, lineterminator="\n")
    sw.writerow(
        ("method", "S", "K", "samples_per_iteration", "samples_processed", "initial_loss", "final_loss",
         "final_delta_max", "final_delta_norm", "checks_passed")
    )
    for label, res in results.items():
        res.write_csv(out / f"metrics_{label}.csv")
        for rec in res.records:
            mw.writerow((label, *rec.row()))
        d = res.diagnostics
        sw.writerow(
            (label, d["S"], d["K"], d["samples_per_iteration"], d["samples_processed"],
             repr(float(d["initial_loss"])), repr(float(d["final_loss"])),
             repr(float(d["final_delta_max"])), repr(float(d["final_delta_norm"])),
             "true" if d["checks_passed"] else "false")
        )
    (out / "merged.csv").write_text(merged.getvalue())
    (out / "summary.csv").write_text(summary.getvalue())
