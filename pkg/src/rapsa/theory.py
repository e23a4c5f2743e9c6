"""Convergence constants, rate envelopes and Monte Carlo checks of the per-step bounds.

All closed-form helpers are plain float arithmetic. The ``check_*``
functions return report objects; deciding pass/fail is left to callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, make_partition, make_rng
from .engine import IterationPlan, rapsa_step, select_blocks


class BoundConditionError(DomainError):
    """A step-size condition required by a bound does not hold."""


@dataclass(frozen=True)
class RateConstants:
    m: float
    M: float
    K: float
    r: float
    F0err: float = 0.0
    gamma0: float | None = None
    T0: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if not (self.m > 0 and self.M > 0 and self.K >= 0):
            raise DomainError("need m > 0, M > 0, K >= 0")
        if self.m > self.M * (1 + 1e-12):
            raise DomainError(f"m={self.m} exceeds M={self.M}")
        if not 0 < self.r <= 1:
            raise DomainError(f"block fraction r={self.r} outside (0, 1]")
        if self.F0err < 0:
            raise DomainError("initial error must be nonnegative")


def constant_C(rc: RateConstants) -> float:
    """``max{r M K (g0 T0)^2 / (4 m r g0 T0 - 2), T0 * F0err}``."""
    if rc.gamma0 is None or rc.T0 is None:
        raise DomainError("constant_C needs gamma0 and T0")
    c = 2 * rc.m * rc.r * rc.gamma0 * rc.T0
    if not c > 1:
        raise BoundConditionError(f"2 m r gamma0 T0 = {c} must exceed 1")
    g0T0 = rc.gamma0 * rc.T0
    return max(rc.r * rc.M * rc.K * g0T0 ** 2 / (2 * c - 2), rc.T0 * rc.F0err)


def sublinear_bound(t, C: float, T0: float):
    return C / (np.asarray(t, dtype=float) + T0) if np.ndim(t) else C / (t + T0)


def _contraction(rc: RateConstants) -> float:
    if rc.gamma is None:
        raise DomainError("constant step size gamma required")
    a = 2 * rc.m * rc.gamma * rc.r
    if not a < 1:
        raise BoundConditionError(f"2 m gamma r = {a} must be below 1")
    return 1.0 - a


def plateau(rc: RateConstants) -> float:
    """Steady-state error level ``gamma M K / (4 m)``."""
    if rc.gamma is None:
        raise DomainError("constant step size gamma required")
    return rc.gamma * rc.M * rc.K / (4 * rc.m)


def linear_envelope(t, rc: RateConstants):
    """``q^t F0err + plateau * (1 - q^t)`` with ``q = 1 - 2 m gamma r``."""
    q = _contraction(rc)
    qt = q ** np.asarray(t, dtype=float)
    env = qt * rc.F0err + plateau(rc) * (1.0 - qt)
    return float(env) if np.ndim(env) == 0 else env


def accuracy_plan(eps: float, phi: float, rc: RateConstants):
    """Constant step and iteration count reaching expected error ``eps``.

    The step puts the plateau at ``phi * eps``; the count makes the transient
    at most ``(1 - phi) * eps``.
    """
    if not 0 < phi < 1:
        raise DomainError("phi must lie in (0, 1)")
    if not eps > 0:
        raise DomainError("accuracy must be positive")
    gamma = 4 * rc.m * phi * eps / (rc.M * rc.K)
    if not 2 * rc.m * gamma * rc.r < 1:
        raise BoundConditionError(f"planned step {gamma} violates 2 m gamma r < 1")
    arg = rc.F0err / ((1 - phi) * eps)
    if arg <= 1:
        return gamma, 0
    t = rc.M * rc.K / (8 * rc.m ** 2 * rc.r * phi * eps) * math.log(arg)
    return gamma, math.ceil(t)


# ---------------------------------------------------------------------------
# Monte Carlo machinery shared by the one-step checks.


def _random_subsets(rng, D, n, k):
    """``D`` uniform ``k``-subsets of ``range(n)``, one per row."""
    if k == n:
        return np.broadcast_to(np.arange(n), (D, n))
    return np.argpartition(rng.random((D, n)), k - 1, axis=1)[:, :k]


def one_step_displacements(oracle, x, gamma, I, B, L, draws, seed=0, batches=None, chunk=20000):
    """Yield ``x_next - x`` for ``draws`` independent (block set, batch) realizations.

    With ``batches`` given (one index array per block) only the block choice
    is random. Results come in chunks of at most ``chunk`` rows.
    """
    part = make_partition(oracle.p, B)
    owner = np.repeat(np.arange(B), part.sizes)
    G = oracle.sample_gradients(x)
    N = oracle.n_samples
    rng = make_rng(seed, stream=7)
    fixed = None
    if batches is not None:
        fixed = np.stack([G[np.asarray(bt)].mean(axis=0) for bt in batches])  # (B, p)
    chunk = max(1, min(chunk, 2_000_000 // max(N, B)))
    done = 0
    while done < draws:
        D = min(chunk, draws - done)
        blocks = _random_subsets(rng, D, B, I)
        step = np.zeros((D, oracle.p))
        for i in range(I):
            b = blocks[:, i]
            if fixed is not None:
                g = fixed[b]
            else:
                idx = _random_subsets(rng, D, N, L)
                g = G[idx].mean(axis=1)
            step += (owner[None, :] == b[:, None]) * g
        done += D
        yield -gamma * step


@dataclass
class Prop1Report:
    lhs_mean: float
    lhs_se: float
    rhs: float
    gap0: float
    draws: int

    @property
    def margin(self) -> float:
        """``rhs - lhs`` in standard errors (positive when the bound holds)."""
        if self.lhs_se > 0:
            return (self.rhs - self.lhs_mean) / self.lhs_se
        return math.inf if self.lhs_mean <= self.rhs else -math.inf

    def holds(self, n_se: float = 5.0) -> bool:
        return self.lhs_mean <= self.rhs + n_se * self.lhs_se


def check_proposition1(oracle, rc: RateConstants, x, gamma: float, I: int, B: int, L: int,
                       F_star: float, draws: int = 100_000, seed: int = 0) -> Prop1Report:
    """Estimate ``E[F(x+) - F*]`` after one RAPSA step from ``x`` and the bound it must obey.

    The bound is ``(1 - 2 m r gamma)(F(x) - F*) + r M K gamma^2 / 2``.
    """
    x = np.asarray(x, dtype=float)
    vals = []
    for disp in one_step_displacements(oracle, x, gamma, I, B, L, draws, seed):
        vals.append(oracle.objectives(x[None, :] + disp) - F_star)
    vals = np.concatenate(vals)
    gap0 = oracle.objective(x) - F_star
    rhs = (1 - 2 * rc.m * rc.r * gamma) * gap0 + rc.r * rc.M * rc.K * gamma ** 2 / 2
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return Prop1Report(float(vals.mean()), se, float(rhs), float(gap0), len(vals))


@dataclass
class Lemma1Report:
    mean_step: np.ndarray
    mean_step_se: np.ndarray
    expected_step: np.ndarray
    mean_sq: float
    mean_sq_se: float
    expected_sq: float

    def holds(self, n_se: float = 5.0) -> bool:
        tol = n_se * self.mean_step_se + 1e-15
        ok1 = np.all(np.abs(self.mean_step - self.expected_step) <= tol)
        ok2 = abs(self.mean_sq - self.expected_sq) <= n_se * self.mean_sq_se + 1e-15
        return bool(ok1 and ok2)


def check_lemma1(oracle, x, gamma, I, B, batches, draws=100_000, seed=0) -> Lemma1Report:
    """Average the RAPSA displacement over block choices with the batches held fixed.

    ``batches[b]`` is the sample set used whenever block ``b`` is updated, so
    the stacked batch gradient ``g`` is well defined; the expected mean step
    is ``-(I/B) gamma g`` and the expected squared norm ``(I/B) gamma^2 ||g||^2``.
    Each draw goes through :func:`select_blocks` and :func:`rapsa_step`.
    """
    x = np.asarray(x, dtype=float)
    part = make_partition(oracle.p, B)
    g = np.concatenate([oracle.block_grad(x, batches[b], part.block_slice(b)) for b in range(B)])
    rng = make_rng(seed, stream=5)
    disp = np.empty((draws, oracle.p))
    for k in range(draws):
        blocks = tuple(select_blocks(B, I, rng))
        plan = IterationPlan(blocks, tuple(batches[b] for b in blocks))
        disp[k] = rapsa_step(x, oracle, part, plan, gamma) - x
    sq = np.sum(disp ** 2, axis=1)
    r = I / B
    return Lemma1Report(disp.mean(axis=0), disp.std(axis=0, ddof=1) / math.sqrt(draws), -r * gamma * g,
                        float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(draws)), r * gamma ** 2 * float(g @ g))


# ---------------------------------------------------------------------------
# Ensemble reports against the rate bounds.


@dataclass
class BoundReport:
    """Observed error curve against a bound, one row per traced iteration."""

    t: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> np.ndarray:
        return self.bound - self.observed

    @property
    def max_ratio(self) -> float:
        """Largest ``observed / bound`` over traced iterations."""
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.bound > 0, self.observed / self.bound, np.where(self.observed > 0, np.inf, 0.0))
        return float(np.max(ratio))

    def rows(self):
        for t, o, b in zip(self.t, self.observed, self.bound):
            yield {"t": int(t), "bound": float(b), "observed": float(o), "margin": float(b - o)}


def _error_matrix(traces, F_star):
    ts = np.array([r.t for r in traces[0]])
    errs = np.array([[r.objective for r in tr] for tr in traces]) - F_star
    for tr in traces[1:]:
        if [r.t for r in tr] != list(ts):
            raise DomainError("ensemble traces must share trace points")
    return ts, errs


def check_theorem1(traces, rc: RateConstants, F_star: float) -> BoundReport:
    """Ensemble-mean error against ``C / (t + T0)``."""
    ts, errs = _error_matrix(traces, F_star)
    C = constant_C(rc)
    return BoundReport(ts, errs.mean(axis=0), sublinear_bound(ts, C, rc.T0), "sublinear", {"C": C, "runs": len(traces)})


def check_theorem2(traces, rc: RateConstants, F_star: float, tail: float = 0.1) -> BoundReport:
    """Ensemble-mean error against the linear envelope; ``extra`` carries the tail-mean plateau check."""
    ts, errs = _error_matrix(traces, F_star)
    mean = errs.mean(axis=0)
    n_tail = max(1, int(math.ceil(tail * len(ts))))
    return BoundReport(ts, mean, np.asarray(linear_envelope(ts, rc)), "linear",
                       {"plateau": plateau(rc), "tail_mean": float(mean[-n_tail:].mean()), "runs": len(traces)})


def lemma3_first_violation(c: float, b: float, t0: float, u0: float, T: int):
    """First ``t <= T`` where the equality-case sequence exceeds ``Q/(t+t0)``, else ``None``.

    The sequence is ``u+ = (1 - c/(t+t0)) u + b/(t+t0)^2`` and
    ``Q = max(b/(c-1), t0 u0)``. A relative slack of 1e-12 absorbs rounding.
    """
    if not (c > 1 and b >= 0 and t0 > 0 and u0 >= 0):
        raise DomainError("need c > 1, b >= 0, t0 > 0, u0 >= 0")
    Q = max(b / (c - 1), t0 * u0)
    u = u0
    for t in range(T + 1):
        k = t + t0
        if u > Q / k * (1 + 1e-12):
            return t
        u = (1 - c / k) * u + b / (k * k)
    return None


def lemma3_bound(c: float, b: float, t0: float, u0: float, T: int) -> bool:
    return lemma3_first_violation(c, b, t0, u0, T) is None
