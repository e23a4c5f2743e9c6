"""Block-wise online L-BFGS acceleration (ARAPSA).

Each block keeps its own ring buffer of curvature pairs ``(v, r)`` where
``v`` is the change in the block variable and ``r`` the change of the
stochastic block gradient evaluated on the same mini-batch at both points.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import BlockPartition, DomainError
from .engine import IterationPlan, _checked, block_gradients

DEFAULT_TAU = 10


class BlockCurvatureMemory:
    """Last ``capacity`` admitted pairs ``(v, r, rho = 1/v^T r)``, oldest first."""

    def __init__(self, block: int = 0, capacity: int = DEFAULT_TAU):
        if capacity < 0:
            raise DomainError("memory capacity must be nonnegative")
        self.block = block
        self.capacity = capacity
        self.pairs = deque(maxlen=capacity)
        self.skipped = 0

    def __len__(self):
        return len(self.pairs)

    def record_pair(self, v, r) -> bool:
        """Store the pair if ``v^T r`` clears the curvature threshold; return whether it did."""
        v = np.array(v, dtype=float)
        r = np.array(r, dtype=float)
        if v.shape != r.shape or v.ndim != 1:
            raise DomainError(f"pair shapes differ: {v.shape} vs {r.shape}")
        if self.pairs and v.shape != self.pairs[-1][0].shape:
            raise DomainError("pair dimension does not match the stored block size")
        vr = float(v @ r)
        threshold = 1e-10 * (np.linalg.norm(v) * np.linalg.norm(r) + 1e-30)
        if self.capacity == 0 or not vr > threshold:
            self.skipped += 1
            return False
        self.pairs.append((v, r, 1.0 / vr))
        return True

    def eta(self) -> float:
        """Initial scaling ``v^T r / ||r||^2`` from the newest pair, or 1 when empty."""
        if not self.pairs:
            return 1.0
        v, r, _ = self.pairs[-1]
        return float(v @ r) / float(r @ r)


def record_pair(mem: BlockCurvatureMemory, v, r) -> bool:
    return mem.record_pair(v, r)


def eta(mem: BlockCurvatureMemory) -> float:
    return mem.eta()


def two_loop_direction(mem: BlockCurvatureMemory, g) -> np.ndarray:
    """Apply the implicit inverse-Hessian approximation to ``g`` in O(tau p_b)."""
    q = np.array(g, dtype=float)
    alphas = []
    for v, r, rho in reversed(mem.pairs):
        a = rho * (v @ q)
        q -= a * r
        alphas.append(a)
    d = mem.eta() * q
    for (v, r, rho), a in zip(mem.pairs, reversed(alphas)):
        beta = rho * (r @ d)
        d += (a - beta) * v
    return d


def dense_hessian_recursion(mem: BlockCurvatureMemory, dim: int | None = None) -> np.ndarray:
    """Explicit ``B = Z^T B Z + rho v v^T`` updates from ``eta * I`` (reference only)."""
    if dim is None:
        if not mem.pairs:
            raise DomainError("dimension required for an empty memory")
        dim = mem.pairs[0][0].size
    Bm = mem.eta() * np.eye(dim)
    for v, r, rho in mem.pairs:
        Z = np.eye(dim) - rho * np.outer(r, v)
        Bm = Z.T @ Bm @ Z + rho * np.outer(v, v)
    return Bm


def arapsa_step(x, oracle, part: BlockPartition, plan: IterationPlan, gamma: float, memories, executor=None, t=None):
    """One ARAPSA update. Returns ``(x_next, memories)``; memories of updated blocks are extended in place.

    With zero-capacity memories the direction is the plain gradient and the
    extra gradient evaluation at the new point is skipped.
    """
    snapshot = np.array(x, dtype=float)
    grads = block_gradients(snapshot, oracle, part, plan, executor, t)
    out = snapshot.copy()
    for b, g in zip(plan.blocks, grads):
        sl = part.block_slice(b)
        out[sl] = snapshot[sl] - gamma * two_loop_direction(memories[b], g)

    if any(memories[b].capacity > 0 for b in plan.blocks):
        out.setflags(write=False)

        def refresh(i):
            b = plan.blocks[i]
            sl = part.block_slice(b)
            g_new = _checked(oracle.block_grad(out, plan.batches[i], sl), t, b, plan.batches[i])
            memories[b].record_pair(out[sl] - snapshot[sl], g_new - grads[i])

        idx = range(len(plan.blocks))
        if executor is None:
            for i in idx:
                refresh(i)
        else:
            list(executor.map(refresh, idx))
        out.setflags(write=True)
    return out, memories
