"""Block layout of the decision vector, step-size rules and seeded streams."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an argument falls outside the domain of an operation."""


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous split of ``p`` coordinates into ``B`` blocks.

    ``offsets`` has ``B + 1`` entries; block ``b`` covers
    ``offsets[b]:offsets[b + 1]``.
    """

    p: int
    B: int
    offsets: tuple = field(repr=False)

    def __post_init__(self):
        off = self.offsets
        if len(off) != self.B + 1 or off[0] != 0 or off[-1] != self.p:
            raise DomainError(f"offsets {off} do not delimit p={self.p} into B={self.B} blocks")
        if any(b <= a for a, b in zip(off[:-1], off[1:])):
            raise DomainError("offsets must be strictly increasing")

    @property
    def sizes(self) -> tuple:
        return tuple(b - a for a, b in zip(self.offsets[:-1], self.offsets[1:]))

    def block_slice(self, b: int) -> slice:
        if not 0 <= b < self.B:
            raise DomainError(f"block index {b} outside [0, {self.B})")
        return slice(self.offsets[b], self.offsets[b + 1])

    @property
    def equal_sized(self) -> bool:
        return self.p % self.B == 0


def make_partition(p: int, B: int) -> BlockPartition:
    """Near-equal contiguous blocks: the first ``p % B`` blocks get one extra coordinate."""
    if B < 1 or B > p:
        raise DomainError(f"need 1 <= B <= p, got B={B}, p={p}")
    q, rem = divmod(p, B)
    sizes = [q + 1] * rem + [q] * (B - rem)
    return BlockPartition(p, B, tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))


def read_block(x: np.ndarray, part: BlockPartition, b: int) -> np.ndarray:
    """Copy of block ``b`` of ``x``."""
    return x[part.block_slice(b)].copy()


def write_block(x: np.ndarray, part: BlockPartition, b: int, values) -> None:
    sl = part.block_slice(b)
    values = np.asarray(values, dtype=float)
    if values.shape != (sl.stop - sl.start,):
        raise DomainError(f"block {b} has length {sl.stop - sl.start}, got shape {values.shape}")
    x[sl] = values


# Step-size schedules. Each is a frozen value object exposing ``__call__(t)``.


@dataclass(frozen=True)
class Constant:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("constant step size must be positive")

    def __call__(self, t: int) -> float:
        return self.gamma


@dataclass(frozen=True)
class InverseTime:
    """``gamma0 * T0 / (t + T0)``."""

    gamma0: float
    T0: float

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.T0 > 0):
            raise DomainError("InverseTime needs gamma0 > 0 and T0 > 0")

    def __call__(self, t: int) -> float:
        return self.gamma0 * self.T0 / (t + self.T0)


@dataclass(frozen=True)
class Hybrid:
    """``min(eps, eps * T_anneal / t)``: constant, then O(1/t) decay.

    At ``t = 0`` the ratio is infinite and the constant branch wins.
    """

    eps: float
    T_anneal: float

    def __post_init__(self):
        if not (self.eps > 0 and self.T_anneal > 0):
            raise DomainError("Hybrid needs eps > 0 and T_anneal > 0")

    def __call__(self, t: int) -> float:
        if t <= self.T_anneal:
            return self.eps
        return self.eps * self.T_anneal / t


StepSchedule = Constant | InverseTime | Hybrid


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 0:
        raise DomainError(f"iteration index must be nonnegative, got {t}")
    return schedule(t)


# Random streams. Every (seed, purpose, stream) triple maps to its own
# counter-based Philox generator so draws never depend on thread scheduling.

SELECT = 0
BATCH = 1
DATA = 2


@dataclass(frozen=True)
class RngState:
    seed: int
    stream: int = 0
    purpose: int = SELECT

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.purpose, self.stream))
        return np.random.Generator(np.random.Philox(ss))


def make_rng(seed: int, stream: int = 0, purpose: int = SELECT) -> np.random.Generator:
    return RngState(seed, stream, purpose).generator()
