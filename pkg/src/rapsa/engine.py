"""Synchronous RAPSA iterations: block selection, per-processor batches, parallel block updates."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import BATCH, SELECT, BlockPartition, DomainError, StepSchedule, make_partition, make_rng, step_size


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, t, block, batch):
        self.t, self.block, self.batch = t, block, list(np.asarray(batch).tolist())
        super().__init__(f"non-finite gradient at iteration {t}, block {block}, batch {self.batch}")


@dataclass(frozen=True)
class EngineConfig:
    I: int
    B: int
    L: int
    schedule: StepSchedule
    T: int
    seed: int = 0
    eval_every: int = 1
    algorithm: str = "rapsa"
    tau: int = 10
    workers: int = 1
    track_grad_norm: bool = False

    def __post_init__(self):
        if not 1 <= self.I <= self.B:
            raise DomainError(f"need 1 <= I <= B, got I={self.I}, B={self.B}")
        if self.L < 1:
            raise DomainError("mini-batch size L must be at least 1")
        if self.T < 0:
            raise DomainError("T must be nonnegative")
        if self.eval_every < 1:
            raise DomainError("eval_every must be at least 1")
        if self.algorithm not in ("rapsa", "arapsa"):
            raise DomainError(f"unknown algorithm {self.algorithm!r}")
        if self.tau < 0:
            raise DomainError("tau must be nonnegative")


@dataclass(frozen=True)
class IterationPlan:
    """Processor ``i`` updates block ``blocks[i]`` using sample indices ``batches[i]``."""

    blocks: tuple
    batches: tuple

    def __post_init__(self):
        if len(set(self.blocks)) != len(self.blocks):
            raise DomainError(f"processors share a block: {self.blocks}")
        if len(self.blocks) != len(self.batches):
            raise DomainError("one batch per processor required")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    features_processed: int
    objective: float
    grad_norm: float | None = None
    test_accuracy: float | None = None
    wall_ms: float | None = None


class Trace(list):
    """List of :class:`TraceRecord` plus the final iterate and optional snapshots."""

    def __init__(self, rows=(), x=None, iterates=None):
        super().__init__(rows)
        self.x = x
        self.iterates = iterates if iterates is not None else []

    def column(self, name):
        return np.array([getattr(r, name) for r in self], dtype=float)


def select_blocks(B: int, I: int, rng: np.random.Generator) -> list:
    """``I`` distinct blocks from ``range(B)`` by a partial Fisher-Yates shuffle."""
    if not 1 <= I <= B:
        raise DomainError(f"cannot pick {I} distinct blocks out of {B}")
    pool = list(range(B))
    for k in range(I):
        j = k + int(rng.integers(B - k))
        pool[k], pool[j] = pool[j], pool[k]
    return pool[:I]


def sample_minibatch(N: int, L: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= L <= N:
        raise DomainError(f"cannot draw {L} distinct samples out of {N}")
    if L == N:
        return np.arange(N)
    return rng.choice(N, L, replace=False)


def features_processed(t: int, p: int, I: int, B: int):
    """``p t I / B``; an ``int`` whenever the division is exact."""
    num = p * t * I
    return num // B if num % B == 0 else num / B


def _checked(g, t, b, batch):
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(t, b, batch)
    return g


def block_gradients(x, oracle, part: BlockPartition, plan: IterationPlan, executor=None, t=None) -> list:
    """Per-processor batch gradients, all evaluated at the snapshot ``x``."""
    x.setflags(write=False)
    try:
        def work(i):
            b = plan.blocks[i]
            return _checked(oracle.block_grad(x, plan.batches[i], part.block_slice(b)), t, b, plan.batches[i])

        idx = range(len(plan.blocks))
        if executor is None:
            return [work(i) for i in idx]
        return list(executor.map(work, idx))
    finally:
        x.setflags(write=True)


def rapsa_step(x, oracle, part: BlockPartition, plan: IterationPlan, gamma: float, executor=None, t=None) -> np.ndarray:
    """One synchronous RAPSA update; returns a new vector and leaves ``x`` untouched.

    Every gradient is taken at the pre-step snapshot, so the result does not
    depend on which processor runs first.
    """
    snapshot = np.array(x, dtype=float)
    grads = block_gradients(snapshot, oracle, part, plan, executor, t)
    out = snapshot.copy()
    for b, g in zip(plan.blocks, grads):
        sl = part.block_slice(b)
        out[sl] = snapshot[sl] - gamma * g
    return out


def make_plan(B: int, I: int, N: int, L: int, select_rng, batch_rngs) -> IterationPlan:
    blocks = select_blocks(B, I, select_rng)
    batches = tuple(sample_minibatch(N, L, batch_rngs[i]) for i in range(I))
    return IterationPlan(tuple(blocks), batches)


def run(config: EngineConfig, oracle, x0, part: BlockPartition | None = None, test_fn=None, keep_iterates=False) -> Trace:
    """Run ``config.T`` iterations from ``x0`` and return the trace.

    ``test_fn(x)`` is called at trace points to fill ``test_accuracy``.
    """
    p, N = oracle.p, oracle.n_samples
    part = part or make_partition(p, config.B)
    if part.p != p or part.B != config.B:
        raise DomainError("partition does not match problem dimension / block count")
    if config.L > N:
        raise DomainError(f"mini-batch size {config.L} exceeds N={N}")
    x = np.array(x0, dtype=float)
    if x.shape != (p,):
        raise DomainError(f"x0 has shape {x.shape}, expected ({p},)")

    select_rng = make_rng(config.seed, 0, SELECT)
    batch_rngs = [make_rng(config.seed, i, BATCH) for i in range(config.I)]
    sizes = part.sizes

    memories = None
    if config.algorithm == "arapsa":
        from .arapsa import BlockCurvatureMemory, arapsa_step

        memories = [BlockCurvatureMemory(b, config.tau) for b in range(config.B)]
    # the extra same-batch gradient at x^{t+1} doubles the cost when curvature is kept
    cost_factor = 2 if memories is not None and config.tau > 0 else 1

    trace = Trace()
    start = time.perf_counter()
    processed = 0

    def record(t):
        trace.append(TraceRecord(
            t=t,
            features_processed=processed,
            objective=oracle.objective(x),
            grad_norm=float(np.linalg.norm(oracle.gradient(x))) if config.track_grad_norm else None,
            test_accuracy=test_fn(x) if test_fn is not None else None,
            wall_ms=1e3 * (time.perf_counter() - start),
        ))
        if keep_iterates:
            trace.iterates.append(x.copy())

    executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        record(0)
        for t in range(config.T):
            plan = make_plan(config.B, config.I, N, config.L, select_rng, batch_rngs)
            gamma = step_size(config.schedule, t)
            if memories is None:
                x = rapsa_step(x, oracle, part, plan, gamma, executor, t)
            else:
                x, memories = arapsa_step(x, oracle, part, plan, gamma, memories, executor, t)
            processed += cost_factor * sum(sizes[b] for b in plan.blocks)
            if (t + 1) % config.eval_every == 0 or t + 1 == config.T:
                record(t + 1)
    finally:
        if executor is not None:
            executor.shutdown()
    trace.x = x
    return trace
