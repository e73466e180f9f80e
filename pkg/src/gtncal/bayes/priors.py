"""Priors over the GTN parameter box.

The uniform prior is truncated by the physical constraint f_c < f_f.  The
sequential-update prior is a Gaussian KDE fitted in logit space,

    z_i = log((theta_i - a_i) / (b_i - theta_i)),

which preserves the box support and non-Gaussian shape of a posterior; the
theta-space density carries the Jacobian prod_i (b_i - a_i) /
((theta_i - a_i)(b_i - theta_i)) and the same f_c < f_f truncation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..errors import DomainError, InsufficientDataError, NumericError

#: Indices of the constrained pair (f_c, f_f) in the canonical ordering.
FC_INDEX = 2
FF_INDEX = 3

_BOUNDARY_NUDGE = 1.0e-9
_MIN_KDE_SAMPLES = 50


def _check_box(bounds: np.ndarray) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise DomainError("bounds must have shape (d, 2)")
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise DomainError("every lower bound must lie below its upper bound")
    return bounds


def logit_map(theta: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Map box-interior points to unconstrained space."""
    bounds = _check_box(bounds)
    theta = np.asarray(theta, dtype=float)
    a, b = bounds[:, 0], bounds[:, 1]
    if np.any(theta <= a) or np.any(theta >= b):
        raise DomainError("theta must lie strictly inside the bounds")
    return np.log((theta - a) / (b - theta))


def inverse_logit_map(z: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    bounds = _check_box(bounds)
    z = np.asarray(z, dtype=float)
    a, b = bounds[:, 0], bounds[:, 1]
    # Stable sigmoid for both tails.
    pos = z >= 0.0
    ez = np.exp(np.where(pos, -z, z))
    sig = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return a + (b - a) * sig


def constraint_ok(theta: np.ndarray) -> np.ndarray:
    """f_c < f_f for each row."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    return theta[:, FC_INDEX] < theta[:, FF_INDEX]


@dataclass(frozen=True)
class UniformBoxPrior:
    """Uniform density over the box, zeroed where f_c >= f_f.

    The truncation renormalization constant is omitted; it cancels in MCMC.
    """

    bounds: np.ndarray
    enforce_constraint: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "bounds", _check_box(self.bounds))

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        a, b = self.bounds[:, 0], self.bounds[:, 1]
        inside = np.all((theta >= a) & (theta <= b), axis=1)
        if self.enforce_constraint:
            inside &= constraint_ok(theta)
        log_vol = float(np.sum(np.log(b - a)))
        return np.where(inside, -log_vol, -np.inf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a, b = self.bounds[:, 0], self.bounds[:, 1]
        out = np.empty((n, self.dim))
        filled = 0
        while filled < n:
            draw = a + rng.uniform(size=(n - filled, self.dim)) * (b - a)
            if self.enforce_constraint:
                draw = draw[constraint_ok(draw)]
            take = min(draw.shape[0], n - filled)
            out[filled : filled + take] = draw[:take]
            filled += take
        return out


@dataclass
class KdePrior:
    """Gaussian KDE in whitened logit space with box Jacobian.

    The kernel covariance is h^2 * Sigma_z (Scott-type full-covariance
    bandwidth), realized as a diagonal unit-bandwidth KDE on whitened
    coordinates.  Whitening preserves the thin, correlated ridges typical of
    partially identified posteriors, which per-axis bandwidths would smear.
    """

    centers_z: np.ndarray  # (m, d) logit-space kernel centers
    bandwidths: np.ndarray  # (d,) in whitened coordinates
    bounds: np.ndarray
    whiten: np.ndarray  # (d, d) map from centered z to whitened coordinates
    enforce_constraint: bool = True
    _log_norm: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self) -> None:
        self.bounds = _check_box(self.bounds)
        if np.any(self.bandwidths <= 0.0):
            raise NumericError("bandwidths must be positive")
        m, d = self.centers_z.shape
        self._z_mean = self.centers_z.mean(axis=0)
        self._unwhiten = np.linalg.inv(self.whiten)
        # Normalization includes |det W| from the whitening change of variables.
        sign, logdet_w = np.linalg.slogdet(self.whiten)
        if sign <= 0:
            raise NumericError("whitening transform must have positive determinant")
        self._log_norm = (
            -math.log(m)
            - float(np.sum(np.log(self.bandwidths)))
            - 0.5 * d * math.log(2.0 * math.pi)
            + logdet_w
        )
        w = ((self.centers_z - self._z_mean) @ self.whiten.T) / self.bandwidths
        self._scaled_centers = w
        self._center_sq = (w * w).sum(axis=1)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        a, b = self.bounds[:, 0], self.bounds[:, 1]
        inside = np.all((theta > a) & (theta < b), axis=1)
        if self.enforce_constraint:
            inside &= constraint_ok(theta)
        out = np.full(theta.shape[0], -np.inf)
        if not inside.any():
            return out
        th = theta[inside]
        z = np.log((th - a) / (b - th))
        # Pairwise squared distances in whitened space via one GEMM:
        # |u - v|^2 = |u|^2 + |v|^2 - 2 u.v.
        u = ((z - self._z_mean) @ self.whiten.T) / self.bandwidths
        v = self._scaled_centers
        log_k = u @ v.T
        log_k *= 2.0
        log_k -= (u * u).sum(axis=1)[:, None]
        log_k -= self._center_sq[None, :]
        log_k *= 0.5
        log_kde = logsumexp(log_k, axis=1) + self._log_norm
        # Jacobian of the logit map for each coordinate.
        log_jac = np.sum(
            np.log(b - a) - np.log(th - a) - np.log(b - th), axis=1
        )
        out[inside] = log_kde + log_jac
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m = self.centers_z.shape[0]
        out = np.empty((n, self.dim))
        filled = 0
        while filled < n:
            take = n - filled
            picks = rng.integers(0, m, size=take)
            step = (rng.normal(size=(take, self.dim)) * self.bandwidths) @ self._unwhiten.T
            th = inverse_logit_map(self.centers_z[picks] + step, self.bounds)
            if self.enforce_constraint:
                th = th[constraint_ok(th)]
            got = min(th.shape[0], take)
            out[filled : filled + got] = th[:got]
            filled += got
        return out


def fit_kde_prior(
    samples: np.ndarray,
    bounds: np.ndarray,
    enforce_constraint: bool = True,
    max_centers: int | None = None,
    seed: int = 0,
    bandwidth_scale: float = 1.0,
) -> KdePrior:
    """Fit the logit-space KDE with per-dimension Silverman bandwidths.

    Samples touching the bounds are nudged inward by 1e-9 * (b - a) rather
    than rejected, since bound-hugging posteriors are expected for weakly
    identifying data.  ``max_centers`` optionally thins the kernel centers
    (seeded) to bound the cost of downstream density evaluations.

    ``bandwidth_scale`` multiplies the Silverman widths; the sequential
    updater passes 0.5 because plain Silverman (MISE-optimal for display)
    oversmooths a posterior carried forward as a prior, measurably inflating
    the second update's credible intervals.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    bounds = _check_box(bounds)
    if samples.shape[0] < _MIN_KDE_SAMPLES:
        raise InsufficientDataError(
            f"KDE prior needs >= {_MIN_KDE_SAMPLES} samples, got {samples.shape[0]}"
        )
    a, b = bounds[:, 0], bounds[:, 1]
    span = b - a
    low = samples <= a + _BOUNDARY_NUDGE * span
    high = samples >= b - _BOUNDARY_NUDGE * span
    n_nudged = int(np.count_nonzero(low | high))
    if n_nudged:
        warnings.warn(f"nudged {n_nudged} boundary-touching sample value(s) inward", stacklevel=2)
    clipped = np.clip(samples, a + _BOUNDARY_NUDGE * span, b - _BOUNDARY_NUDGE * span)
    if max_centers is not None and clipped.shape[0] > max_centers:
        rng = np.random.default_rng(seed)
        keep = rng.choice(clipped.shape[0], size=max_centers, replace=False)
        keep.sort()
        clipped = clipped[keep]
    z = logit_map(clipped, bounds)
    m, d = z.shape
    sd = z.std(axis=0, ddof=1)
    if np.any(sd <= 0.0):
        raise NumericError("degenerate sample: constant in at least one coordinate")
    cov = np.cov(z.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError("degenerate sample covariance in logit space") from exc
    whiten = np.linalg.inv(chol)
    silverman = (4.0 / ((d + 2.0) * m)) ** (1.0 / (d + 4.0))
    return KdePrior(
        centers_z=z,
        bandwidths=np.full(d, bandwidth_scale * silverman),
        bounds=bounds,
        whiten=whiten,
        enforce_constraint=enforce_constraint,
    )
