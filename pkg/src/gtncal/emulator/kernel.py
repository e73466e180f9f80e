"""Squared-exponential kernel with automatic relevance determination.

k(x, x') = signal_variance * exp(-0.5 * sum_i (x_i - x'_i)^2 / l_i^2)
           + noise_variance * delta(x, x')

Inputs are expected on the unit hypercube (the bundle scales raw parameters
by the prior box before kernel evaluation), which makes one set of
length-scale bounds meaningful across parameters of different magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError


@dataclass(frozen=True)
class HyperparamBounds:
    """Box bounds for hyperparameter optimization."""

    length_scale: tuple[float, float] = (1.0e-3, 1.0e2)
    signal_variance: tuple[float, float] = (1.0e-6, 1.0e2)
    noise_variance: tuple[float, float] = (1.0e-8, 1.0e-1)

    def log_bounds(self, n_dims: int) -> list[tuple[float, float]]:
        """Optimization box in log space: [signal, l_1..l_d, noise]."""
        lo_s, hi_s = self.signal_variance
        lo_l, hi_l = self.length_scale
        lo_n, hi_n = self.noise_variance
        out = [(np.log(lo_s), np.log(hi_s))]
        out += [(np.log(lo_l), np.log(hi_l))] * n_dims
        out.append((np.log(lo_n), np.log(hi_n)))
        return out


@dataclass(frozen=True)
class ArdHyperparams:
    signal_variance: float
    length_scales: tuple[float, ...]
    noise_variance: float

    def __post_init__(self) -> None:
        if self.signal_variance <= 0.0 or self.noise_variance <= 0.0:
            raise ParameterError("variances must be positive")
        if any(l <= 0.0 for l in self.length_scales):
            raise ParameterError("length scales must be positive")

    def validate_bounds(self, bounds: HyperparamBounds) -> None:
        lo, hi = bounds.signal_variance
        if not lo <= self.signal_variance <= hi:
            raise ParameterError("signal variance out of bounds")
        lo, hi = bounds.length_scale
        if not all(lo <= l <= hi for l in self.length_scales):
            raise ParameterError("length scale out of bounds")
        lo, hi = bounds.noise_variance
        if not lo <= self.noise_variance <= hi:
            raise ParameterError("noise variance out of bounds")

    def to_log_vector(self) -> np.ndarray:
        return np.log(
            np.array([self.signal_variance, *self.length_scales, self.noise_variance])
        )

    @classmethod
    def from_log_vector(cls, v: np.ndarray) -> "ArdHyperparams":
        v = np.exp(np.asarray(v, dtype=float))
        return cls(
            signal_variance=float(v[0]),
            length_scales=tuple(float(x) for x in v[1:-1]),
            noise_variance=float(v[-1]),
        )


def _sq_dists(x: np.ndarray, z: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - z[None, :, :]
    return np.sum((diff / length_scales) ** 2, axis=2)


def kernel_eval(h: ArdHyperparams, x: np.ndarray, x2: np.ndarray) -> float:
    """Covariance between two single inputs (delta term applies iff equal)."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ls = np.asarray(h.length_scales)
    r2 = float(np.sum(((x - x2) / ls) ** 2))
    val = h.signal_variance * np.exp(-0.5 * r2)
    if np.array_equal(x, x2):
        val += h.noise_variance
    return float(val)


def kernel_matrix(h: ArdHyperparams, x: np.ndarray) -> np.ndarray:
    """Training covariance K(X, X) + noise_variance * I."""
    x = np.asarray(x, dtype=float)
    ls = np.asarray(h.length_scales)
    r2 = _sq_dists(x, x, ls)
    return h.signal_variance * np.exp(-0.5 * r2) + h.noise_variance * np.eye(x.shape[0])


def kernel_cross(h: ArdHyperparams, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Cross covariance K(X, Z) without the delta term."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    ls = np.asarray(h.length_scales)
    return h.signal_variance * np.exp(-0.5 * _sq_dists(x, z, ls))
