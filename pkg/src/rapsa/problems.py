"""Problem oracles: least squares (LMMSE) and l2-regularized logistic regression.

Both classes expose the same duck-typed surface used by the engine and the
theory checks:

``p``, ``n_samples``
    decision dimension and training-set size.
``objective(x)`` / ``objectives(X)``
    full-data average loss at one point or at each row of ``X``.
``gradient(x)``
    full-data gradient.
``block_grad(x, batch, sl)``
    mini-batch gradient restricted to the coordinates ``sl``.
``sample_gradients(x)``
    ``(N, p)`` array of per-sample gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import DATA, DomainError, make_rng


class SingularGramError(DomainError):
    """The normal equations have no unique solution."""


def _as_point(x, p):
    x = np.asarray(x, dtype=float)
    if x.shape != (p,):
        raise DomainError(f"expected a point of shape ({p},), got {x.shape}")
    return x


@dataclass
class LinearRegressionProblem:
    """Average of ``||H_n x - z_n||^2`` over ``N`` observations.

    ``H`` has shape ``(N, q, p)`` and ``z`` shape ``(N, q)``.
    """

    H: np.ndarray
    z: np.ndarray
    sigma2: float = 0.0
    x_true: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.H.ndim == 2:
            self.H = self.H[:, None, :]
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        N, q, p = self.H.shape
        if N < 1 or self.z.shape != (N, q):
            raise DomainError(f"targets of shape {self.z.shape} do not match H of shape {self.H.shape}")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.z))):
            raise DomainError("non-finite entries in regression data")
        self._flat = self.H.reshape(N * q, p)

    @property
    def p(self) -> int:
        return self.H.shape[2]

    @property
    def n_samples(self) -> int:
        return self.H.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[1]

    def residuals(self, x):
        return np.einsum("nqp,p->nq", self.H, x) - self.z

    def objective(self, x) -> float:
        x = _as_point(x, self.p)
        r = self.residuals(x)
        return float(np.sum(r * r) / self.n_samples)

    def objectives(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        R = np.einsum("nqp,dp->dnq", self.H, X) - self.z
        return np.sum(R * R, axis=(1, 2)) / self.n_samples

    def gradient(self, x) -> np.ndarray:
        x = _as_point(x, self.p)
        r = self.residuals(x)
        return 2.0 * np.einsum("nqp,nq->p", self.H, r) / self.n_samples

    def block_grad(self, x, batch, sl: slice) -> np.ndarray:
        """``(2/L) sum_{n in batch} H_n[:, sl]^T (H_n x - z_n)``."""
        x = _as_point(x, self.p)
        batch = np.asarray(batch)
        Hb = self.H[batch]
        r = np.einsum("lqp,p->lq", Hb, x) - self.z[batch]
        return 2.0 * np.einsum("lqk,lq->k", Hb[:, :, sl], r) / len(batch)

    def sample_gradients(self, x) -> np.ndarray:
        x = _as_point(x, self.p)
        return 2.0 * np.einsum("nqp,nq->np", self.H, self.residuals(x))

    def gram(self) -> np.ndarray:
        """``sum_n H_n^T H_n``."""
        return self._flat.T @ self._flat

    def hessian(self) -> np.ndarray:
        return 2.0 * self.gram() / self.n_samples


def generate_lmmse(p: int, N: int, q: int = 1, sigma2: float = 10 ** -1.5, seed: int = 0) -> LinearRegressionProblem:
    """Synthetic instance ``z_n = H_n x + w_n`` with Gaussian ``H_n`` and ``x = 1/4``."""
    if min(p, N, q) < 1:
        raise DomainError("p, N and q must be positive")
    if sigma2 < 0:
        raise DomainError("noise variance must be nonnegative")
    rng = make_rng(seed, purpose=DATA)
    H = rng.standard_normal((N, q, p))
    x_true = np.full(p, 0.25)
    w = np.sqrt(sigma2) * rng.standard_normal((N, q))
    z = np.einsum("nqp,p->nq", H, x_true) + w
    return LinearRegressionProblem(H, z, sigma2, x_true)


def quadratic_objective(prob: LinearRegressionProblem, x) -> float:
    return prob.objective(x)


def quadratic_block_grad(prob: LinearRegressionProblem, x, batch, sl: slice) -> np.ndarray:
    return prob.block_grad(x, batch, sl)


def closed_form_optimum(prob: LinearRegressionProblem):
    """Solve the normal equations by Cholesky; return ``(x_star, F_star)``.

    Raises :class:`SingularGramError` when ``N q < p`` or when a pivot drops
    below ``1e-12 * ||Gram||``.
    """
    N, q, p = prob.H.shape
    if N * q < p:
        raise SingularGramError(f"N*q = {N * q} < p = {p}: Gram matrix is singular")
    G = prob.gram()
    scale = np.linalg.norm(G)
    try:
        Lc = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError("Gram matrix is not positive definite") from exc
    if scale == 0 or np.min(np.diag(Lc)) ** 2 < 1e-12 * scale:
        raise SingularGramError("Gram matrix is numerically singular")
    rhs = prob._flat.T @ prob.z.reshape(-1)
    y = np.linalg.solve(Lc, rhs)
    x_star = np.linalg.solve(Lc.T, y)
    return x_star, prob.objective(x_star)


def estimate_constants(prob: LinearRegressionProblem):
    """Strong convexity and gradient Lipschitz constants ``(m, M)``.

    These are the extreme eigenvalues of the (constant) Hessian
    ``(2/N) sum_n H_n^T H_n``.
    """
    Hs = prob.hessian()
    if not np.all(np.isfinite(Hs)):
        raise DomainError("non-finite Hessian")
    ev = np.linalg.eigvalsh(Hs)
    return float(ev[0]), float(ev[-1])


@dataclass(frozen=True)
class KEstimate:
    """Empirical second-moment bound on the stochastic gradient norm."""

    K: float
    raw: float
    safety: float

    def __float__(self):
        return self.K


def estimate_K(prob, trajectory, sample_budget: int | None = None, safety: float = 1.5, seed: int = 0) -> KEstimate:
    """Max over visited points of the mean squared stochastic gradient norm, times ``safety``.

    When ``sample_budget`` is ``None`` or at least ``N`` every sample is used;
    otherwise ``sample_budget`` distinct samples are drawn per point.
    """
    trajectory = [np.asarray(x, dtype=float) for x in trajectory]
    if not trajectory:
        raise DomainError("trajectory must contain at least one point")
    N = prob.n_samples
    rng = make_rng(seed, purpose=DATA, stream=1)
    worst = 0.0
    for x in trajectory:
        G = prob.sample_gradients(x)
        if sample_budget is not None and sample_budget < N:
            G = G[rng.choice(N, sample_budget, replace=False)]
        worst = max(worst, float(np.mean(np.sum(G * G, axis=1))))
    return KEstimate(safety * worst, worst, safety)


@dataclass
class LogisticProblem:
    """``(lam/2)||x||^2 + (1/N) sum_n log(1 + exp(-y_n x^T z_n))``.

    ``Z`` has shape ``(N, p)``; labels ``y`` are in ``{-1, +1}``.
    """

    Z: np.ndarray
    y: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.Z.ndim != 2 or self.y.shape != (self.Z.shape[0],) or self.Z.shape[0] < 1:
            raise DomainError(f"features {self.Z.shape} and labels {self.y.shape} do not match")
        if not np.all(np.abs(self.y) == 1):
            raise DomainError("labels must be -1 or +1")
        if self.lam < 0:
            raise DomainError("regularizer must be nonnegative")

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def n_samples(self) -> int:
        return self.Z.shape[0]

    @staticmethod
    def _softplus_neg(u):
        # log(1 + exp(-u)) without overflow
        return np.log1p(np.exp(-np.abs(u))) + np.maximum(0.0, -u)

    def objective(self, x) -> float:
        x = _as_point(x, self.p)
        u = self.y * (self.Z @ x)
        return float(0.5 * self.lam * (x @ x) + np.mean(self._softplus_neg(u)))

    def objectives(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = (X @ self.Z.T) * self.y
        return 0.5 * self.lam * np.sum(X * X, axis=1) + np.mean(self._softplus_neg(U), axis=1)

    def gradient(self, x) -> np.ndarray:
        x = _as_point(x, self.p)
        u = self.y * (self.Z @ x)
        w = self.y * expit(-u)
        return self.lam * x - (self.Z.T @ w) / self.n_samples

    def block_grad(self, x, batch, sl: slice) -> np.ndarray:
        x = _as_point(x, self.p)
        batch = np.asarray(batch)
        Zb = self.Z[batch]
        yb = self.y[batch]
        w = yb * expit(-yb * (Zb @ x))
        return self.lam * x[sl] - (Zb[:, sl].T @ w) / len(batch)

    def sample_gradients(self, x) -> np.ndarray:
        x = _as_point(x, self.p)
        w = self.y * expit(-self.y * (self.Z @ x))
        return self.lam * x[None, :] - self.Z * w[:, None]

    def constants(self):
        """``(m, M)`` with ``m = lam`` and ``M = lam + lambda_max(Z^T Z / N) / 4``."""
        top = np.linalg.eigvalsh(self.Z.T @ self.Z / self.n_samples)[-1]
        return float(self.lam), float(self.lam + 0.25 * top)


def logistic_objective(prob: LogisticProblem, x) -> float:
    return prob.objective(x)


def logistic_block_grad(prob: LogisticProblem, x, batch, sl: slice) -> np.ndarray:
    return prob.block_grad(x, batch, sl)
