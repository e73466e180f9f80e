"""GP training: exact log marginal likelihood, analytic gradients in
log-hyperparameter space, and LHS-multistart L-BFGS-B optimization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from ..errors import InsufficientDataError, NumericError, OptimizationError
from .kernel import ArdHyperparams, HyperparamBounds, kernel_cross, kernel_matrix

N_MULTISTARTS = 15
_MAX_OPT_ITER = 200
_GRAD_TOL = 1.0e-6
_JITTERS = (0.0, 1.0e-10, 1.0e-9, 1.0e-8, 1.0e-7, 1.0e-6)


def _chol_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.mean(np.diag(k)))
    for jitter in _JITTERS:
        try:
            return linalg.cholesky(k + jitter * scale * np.eye(k.shape[0]), lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise NumericError("Cholesky factorization failed at maximum jitter")


def log_marginal_likelihood(
    x: np.ndarray, y: np.ndarray, h: ArdHyperparams
) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient wrt log-hyperparameters.

    Gradient entries follow the layout [log sf2, log l_1..l_d, log sn2] and
    use d/d(log t) = t * d/dt.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    k = kernel_matrix(h, x)
    low, _ = _chol_with_jitter(k)
    alpha = linalg.cho_solve((low, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(low))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    k_inv = linalg.cho_solve((low, True), np.eye(n))
    w = np.outer(alpha, alpha) - k_inv

    k_se = k - h.noise_variance * np.eye(n)
    grad = np.empty(len(h.length_scales) + 2)
    # d/d log sf2: dK = K_se
    grad[0] = 0.5 * float(np.sum(w * k_se))
    ls = np.asarray(h.length_scales)
    for i in range(ls.size):
        d2 = (x[:, None, i] - x[None, :, i]) ** 2 / ls[i] ** 2
        # d/d log l_i: dK = K_se * d_i^2 / l_i^2
        grad[1 + i] = 0.5 * float(np.sum(w * (k_se * d2)))
    # d/d log sn2: dK = sn2 * I
    grad[-1] = 0.5 * h.noise_variance * float(np.trace(w))
    return lml, grad


def _lhs_unit(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    cols = [(rng.permutation(n) + rng.uniform(size=n)) / n for _ in range(dims)]
    return np.column_stack(cols)


def optimize_hyperparams(
    x: np.ndarray,
    y: np.ndarray,
    bounds: HyperparamBounds | None = None,
    seed: int = 0,
    n_starts: int = N_MULTISTARTS,
) -> ArdHyperparams:
    """Maximize the log marginal likelihood from LHS starts in log space."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size < 8:
        raise InsufficientDataError("hyperparameter optimization needs n >= 8")
    bounds = bounds or HyperparamBounds()
    log_box = bounds.log_bounds(x.shape[1])
    lo = np.array([b[0] for b in log_box])
    hi = np.array([b[1] for b in log_box])
    rng = np.random.default_rng(seed)
    starts = lo + _lhs_unit(n_starts, lo.size, rng) * (hi - lo)

    def objective(v: np.ndarray) -> tuple[float, np.ndarray]:
        lml, grad = log_marginal_likelihood(x, y, ArdHyperparams.from_log_vector(v))
        return -lml, -grad

    best_val = np.inf
    best_v = None
    failures = 0
    for v0 in starts:
        try:
            res = minimize(
                objective,
                v0,
                jac=True,
                method="L-BFGS-B",
                bounds=log_box,
                options={"maxiter": _MAX_OPT_ITER, "gtol": _GRAD_TOL},
            )
        except NumericError:
            failures += 1
            continue
        if res.fun < best_val:
            best_val = float(res.fun)
            best_v = res.x
    if best_v is None:
        raise OptimizationError(f"all {n_starts} optimization starts failed")
    if failures:
        warnings.warn(f"{failures} of {n_starts} optimization starts failed", stacklevel=2)
    return ArdHyperparams.from_log_vector(best_v)


@dataclass
class TrainedGp:
    """Immutable trained GP with cached Cholesky factor and weights."""

    x: np.ndarray  # (n, d) unit-hypercube inputs
    y: np.ndarray  # (n,) raw targets
    y_mean: float
    hyperparams: ArdHyperparams
    chol: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0

    @classmethod
    def train(
        cls,
        x: np.ndarray,
        y: np.ndarray,
        bounds: HyperparamBounds | None = None,
        seed: int = 0,
    ) -> "TrainedGp":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        y_mean = float(y.mean())
        h = optimize_hyperparams(x, y - y_mean, bounds, seed=seed)
        return cls.from_hyperparams(x, y, h)

    @classmethod
    def from_hyperparams(cls, x, y, h: ArdHyperparams) -> "TrainedGp":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        y_mean = float(y.mean())
        k = kernel_matrix(h, x)
        low, jitter = _chol_with_jitter(k)
        alpha = linalg.cho_solve((low, True), y - y_mean)
        return cls(x=x, y=y, y_mean=y_mean, hyperparams=h, chol=low, alpha=alpha, jitter=jitter)

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior predictive mean and variance (noise included)."""
        xq = np.atleast_2d(np.asarray(xq, dtype=float))
        if not np.all(np.isfinite(xq)):
            raise NumericError("prediction inputs must be finite")
        h = self.hyperparams
        ks = kernel_cross(h, xq, self.x)  # (m, n)
        mean = ks @ self.alpha + self.y_mean
        v = linalg.solve_triangular(self.chol, ks.T, lower=True)
        var = h.signal_variance + h.noise_variance - np.sum(v * v, axis=0)
        neg = var < 0.0
        if neg.any():
            warnings.warn(
                f"clamped {int(neg.sum())} negative predictive variance value(s)",
                stacklevel=2,
            )
            var = np.maximum(var, 0.0)
        return mean, var
