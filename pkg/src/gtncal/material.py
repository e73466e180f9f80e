"""GTN porous-plasticity material-point model.

The yield surface couples von Mises plasticity to the void volume fraction

    Phi = (s_eq/s_y)^2 + 2 q1 f* cosh(3 q2 s_m / (2 s_y)) - (1 + q3 f*^2),

with the effective void fraction f* accelerating past the coalescence
threshold f_c and reaching 1/q1 at the failure fraction f_f.  Void evolution
combines growth driven by plastic dilatation, (1 - f) tr(deps_p), with
strain-controlled nucleation distributed normally around eps_n.

Material points here carry a single signed axial stress; the stress state is
parameterized by a triaxiality ratio s_m = triaxiality * s_ax (1/3 recovers
uniaxial tension).  Integration is explicit: an elastic predictor on the
axial stress followed by a return to the current yield surface, with the
internal variables updated from the normality rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NumericError, ParameterError, StabilityError

UNIAXIAL_TRIAXIALITY = 1.0 / 3.0

#: Hard ceiling on the strain increment accepted by :func:`integrate_point`.
POINT_STEP_CAP = 1.0e-4

#: Internal ceiling for the vectorized batch engine used by the specimen
#: simulator; accuracy at this step size is covered by the step-refinement
#: convergence test.
BATCH_STEP_CAP = 2.0e-3

_FLOW_TOL = 1.0e-9
_FLOW_MAX_ITER = 80


@dataclass(frozen=True)
class FixedGtnConstants:
    """Void-interaction coefficients and baseline porosity held fixed."""

    q1: float = 1.5
    q2: float = 1.0
    q3: float = 2.25
    f0: float = 0.001
    sn_ratio: float = 1.0 / 3.0

    def __post_init__(self) -> None:
        if self.q1 <= 0.0 or self.q2 <= 0.0 or self.sn_ratio <= 0.0:
            raise ParameterError("q1, q2 and sn_ratio must be positive")
        if not math.isclose(self.q3, self.q1**2, rel_tol=1e-12):
            raise ParameterError("q3 must equal q1**2")
        if not 0.0 <= self.f0 < 1.0:
            raise ParameterError("f0 must lie in [0, 1)")


@dataclass(frozen=True)
class GtnParams:
    """The four calibrated damage parameters."""

    eps_n: float
    f_n: float
    f_c: float
    f_f: float

    def __post_init__(self) -> None:
        if min(self.eps_n, self.f_n, self.f_c, self.f_f) <= 0.0:
            raise ParameterError("all GTN parameters must be strictly positive")
        if self.f_c >= self.f_f:
            raise ParameterError(
                f"coalescence fraction f_c={self.f_c} must be below failure fraction f_f={self.f_f}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.eps_n, self.f_n, self.f_c, self.f_f])

    @classmethod
    def from_array(cls, theta: np.ndarray) -> "GtnParams":
        e, fn, fc, ff = (float(v) for v in np.asarray(theta).ravel())
        return cls(e, fn, fc, ff)


#: Canonical ordering of the calibrated parameters throughout the package.
PARAM_NAMES = ("eps_n", "f_n", "f_c", "f_f")


@dataclass(frozen=True)
class VoceParams:
    """Saturating isotropic hardening: sigma0 + q_sat*(1 - exp(-b_rate*eps_p))."""

    sigma0: float = 165.0
    q_sat: float = 136.0
    b_rate: float = 9.8

    def __post_init__(self) -> None:
        if self.sigma0 <= 0.0:
            raise ParameterError("sigma0 must be positive")
        if self.q_sat < 0.0:
            raise ParameterError("q_sat must be nonnegative")
        if self.b_rate <= 0.0:
            raise ParameterError("b_rate must be positive")


@dataclass(frozen=True)
class MaterialPointState:
    """State of one integration point."""

    eps_p: float = 0.0
    f: float = 0.0
    f_star: float = 0.0
    sigma_eq: float = 0.0
    sigma_m: float = 0.0
    failed: bool = False

    def __post_init__(self) -> None:
        if self.eps_p < 0.0:
            raise ParameterError("eps_p must be nonnegative")
        if not 0.0 <= self.f <= 1.0:
            raise ParameterError("f must lie in [0, 1]")
        if self.sigma_eq < 0.0:
            raise ParameterError("sigma_eq must be nonnegative")

    @classmethod
    def initial(cls, consts: FixedGtnConstants, params: GtnParams) -> "MaterialPointState":
        f0 = consts.f0
        return cls(f=f0, f_star=effective_void_fraction(consts, params, f0))


def voce_flow_stress(voce: VoceParams, eps_p) -> float | np.ndarray:
    """Matrix flow stress at equivalent plastic strain ``eps_p`` (MPa)."""
    eps_p = np.asarray(eps_p, dtype=float)
    if np.any(eps_p < 0.0):
        raise DomainError("eps_p must be nonnegative")
    out = voce.sigma0 + voce.q_sat * (1.0 - np.exp(-voce.b_rate * eps_p))
    return float(out) if out.ndim == 0 else out


def effective_void_fraction(consts: FixedGtnConstants, params: GtnParams, f) -> float | np.ndarray:
    """Coalescence-accelerated effective void fraction.

    Identity below f_c, then linear to 1/q1 at f_f; continuous at f_c.
    """
    if params.f_c >= params.f_f:
        raise ParameterError("f_c must be below f_f")
    f = np.asarray(f, dtype=float)
    if np.any((f < 0.0) | (f > 1.0)):
        raise DomainError("f must lie in [0, 1]")
    slope = (1.0 / consts.q1 - params.f_c) / (params.f_f - params.f_c)
    out = np.where(f < params.f_c, f, params.f_c + slope * (f - params.f_c))
    return float(out) if out.ndim == 0 else out


def gtn_yield(consts: FixedGtnConstants, sigma_eq, sigma_m, sigma_y, f_star) -> float | np.ndarray:
    """Yield function Phi; Phi = 0 defines the yield surface."""
    sigma_y = np.asarray(sigma_y, dtype=float)
    if np.any(sigma_y <= 0.0):
        raise DomainError("sigma_y must be positive")
    sigma_eq = np.asarray(sigma_eq, dtype=float)
    sigma_m = np.asarray(sigma_m, dtype=float)
    f_star = np.asarray(f_star, dtype=float)
    out = (
        (sigma_eq / sigma_y) ** 2
        + 2.0 * consts.q1 * f_star * np.cosh(1.5 * consts.q2 * sigma_m / sigma_y)
        - (1.0 + consts.q3 * f_star**2)
    )
    return float(out) if out.ndim == 0 else out


def void_growth_rate(f, trace_eps_p_dot) -> float | np.ndarray:
    """Growth contribution (1 - f) * tr(deps_p/dt)."""
    f = np.asarray(f, dtype=float)
    if np.any((f < 0.0) | (f > 1.0)):
        raise DomainError("f must lie in [0, 1]")
    out = (1.0 - f) * np.asarray(trace_eps_p_dot, dtype=float)
    return float(out) if out.ndim == 0 else out


def nucleation_intensity(consts: FixedGtnConstants, params: GtnParams, eps_p) -> float | np.ndarray:
    """Nucleation rate per unit plastic strain: Gaussian in eps_p around eps_n."""
    eps_p = np.asarray(eps_p, dtype=float)
    if np.any(eps_p < 0.0):
        raise DomainError("eps_p must be nonnegative")
    s_n = consts.sn_ratio * params.eps_n
    z = (eps_p - params.eps_n) / s_n
    out = params.f_n / (s_n * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * z * z)
    return float(out) if out.ndim == 0 else out


def void_nucleation_rate(
    consts: FixedGtnConstants, params: GtnParams, eps_p, eps_p_dot
) -> float | np.ndarray:
    """Nucleation contribution to df/dt at plastic strain rate ``eps_p_dot``."""
    eps_p_dot = np.asarray(eps_p_dot, dtype=float)
    if np.any(eps_p_dot < 0.0):
        raise DomainError("eps_p_dot must be nonnegative")
    out = nucleation_intensity(consts, params, eps_p) * eps_p_dot
    return float(out) if out.ndim == 0 else out


def flow_stress_on_surface(
    consts: FixedGtnConstants,
    sigma_y: np.ndarray,
    f_star: np.ndarray,
    triaxiality,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Solve Phi(s) = 0 for the axial flow stress, vectorized.

    Phi is convex and increasing in s >= 0 with Phi(0) <= 0 and
    Phi(sigma_y) >= 0, so Newton started at (or above) the root converges
    monotonically after at most one overshoot.  Converged entries are frozen
    immediately, so results do not depend on the batch composition.
    """
    sigma_y = np.atleast_1d(np.asarray(sigma_y, dtype=float))
    shape = sigma_y.shape
    sigma_y = sigma_y.ravel()
    n = sigma_y.size
    f_star = np.broadcast_to(np.asarray(f_star, dtype=float), shape).ravel()
    c = np.broadcast_to(1.5 * consts.q2 * np.asarray(triaxiality, dtype=float), shape).ravel()
    s = (
        np.array(np.broadcast_to(start, shape), dtype=float).ravel()
        if start is not None
        else sigma_y.copy()
    )
    np.maximum(s, 0.0, out=s)
    rhs = 1.0 + consts.q3 * f_star**2
    work = np.arange(n)
    for _ in range(_FLOW_MAX_ITER):
        sw = s[work]
        syw = sigma_y[work]
        fw = f_star[work]
        cw = c[work]
        x = sw / syw
        e = np.exp(cw * x)
        cosh = 0.5 * (e + 1.0 / e)
        sinh = 0.5 * (e - 1.0 / e)
        phi = x * x + 2.0 * consts.q1 * fw * cosh - rhs[work]
        open_mask = np.abs(phi) > _FLOW_TOL
        if not open_mask.any():
            break
        work = work[open_mask]
        x = x[open_mask]
        sinh = sinh[open_mask]
        dphi = (2.0 * x + 2.0 * consts.q1 * f_star[work] * c[work] * sinh) / sigma_y[work]
        step = phi[open_mask] / np.where(dphi > 0.0, dphi, 1.0)
        s[work] = np.minimum(np.maximum(s[work] - step, 0.0), sigma_y[work])
    else:
        raise NumericError("flow-stress Newton iteration did not converge")
    return s.reshape(shape)


class GtnPointBatch:
    """Vectorized bank of independent GTN material points.

    Drives each point with a signed axial strain increment and keeps the
    axial stress on or inside the yield surface.  All arrays share one shape;
    the specimen simulator stacks (run, cell) into it.
    """

    def __init__(
        self,
        n: int | tuple[int, ...],
        consts: FixedGtnConstants,
        params_arrays: dict[str, np.ndarray] | GtnParams,
        voce: VoceParams,
        elastic_modulus: float,
        triaxiality: float | np.ndarray = UNIAXIAL_TRIAXIALITY,
    ):
        shape = (n,) if isinstance(n, int) else tuple(n)
        self.consts = consts
        self.voce = voce
        self.modulus = float(elastic_modulus)
        self.triaxiality = (
            float(triaxiality) if np.ndim(triaxiality) == 0 else np.asarray(triaxiality, float)
        )
        if isinstance(params_arrays, GtnParams):
            params_arrays = {
                "eps_n": np.full(shape, params_arrays.eps_n),
                "f_n": np.full(shape, params_arrays.f_n),
                "f_c": np.full(shape, params_arrays.f_c),
                "f_f": np.full(shape, params_arrays.f_f),
            }
        self.eps_n = np.broadcast_to(params_arrays["eps_n"], shape).astype(float)
        self.f_n = np.broadcast_to(params_arrays["f_n"], shape).astype(float)
        self.f_c = np.broadcast_to(params_arrays["f_c"], shape).astype(float)
        self.f_f = np.broadcast_to(params_arrays["f_f"], shape).astype(float)
        if np.any(self.f_c >= self.f_f):
            raise ParameterError("f_c must be below f_f for every point")
        self.s_n = consts.sn_ratio * self.eps_n
        self._fstar_slope = (1.0 / consts.q1 - self.f_c) / (self.f_f - self.f_c)

        self.sigma = np.zeros(shape)
        self.eps_p = np.zeros(shape)
        self.f = np.full(shape, consts.f0)
        self.f_star = self._effective(self.f)
        self.failed = np.zeros(shape, dtype=bool)
        self._sigma_y = voce.sigma0 * np.ones(shape)
        self._flow = flow_stress_on_surface(
            consts, self._sigma_y, np.minimum(self.f_star, 1.0 / consts.q1), self.triaxiality
        )

    def _effective(self, f: np.ndarray) -> np.ndarray:
        return np.where(f < self.f_c, f, self.f_c + self._fstar_slope * (f - self.f_c))

    def _tri_flat(self) -> np.ndarray:
        return np.broadcast_to(self.triaxiality, self.sigma.shape).ravel()

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return {
            "sigma": self.sigma.copy(),
            "eps_p": self.eps_p.copy(),
            "f": self.f.copy(),
            "f_star": self.f_star.copy(),
            "failed": self.failed.copy(),
            "_sigma_y": self._sigma_y.copy(),
            "_flow": self._flow.copy(),
        }

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in snap.items():
            setattr(self, name, arr.copy())

    def refresh_caches(self) -> None:
        """Recompute hardening and flow-stress caches after a direct state edit."""
        self._sigma_y = self.voce.sigma0 + self.voce.q_sat * (
            1.0 - np.exp(-self.voce.b_rate * self.eps_p)
        )
        self._flow = flow_stress_on_surface(
            self.consts,
            self._sigma_y,
            np.minimum(self.f_star, 1.0 / self.consts.q1),
            self.triaxiality,
        )

    def take_runs(self, rows: np.ndarray) -> None:
        """Keep only the given leading-axis rows (run repacking)."""
        for name in ("sigma", "eps_p", "f", "f_star", "failed", "_sigma_y", "_flow",
                     "eps_n", "f_n", "f_c", "f_f", "s_n", "_fstar_slope"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name)[rows]))
        if np.ndim(self.triaxiality) != 0:
            self.triaxiality = np.ascontiguousarray(np.asarray(self.triaxiality)[rows])

    def step(self, d_eps: np.ndarray, step_cap: float = BATCH_STEP_CAP) -> None:
        """Advance every non-failed point by the signed axial strain increment.

        The plastic corrector runs on the yielding subset only; the flow
        stress is cached and stays valid because hardening and damage change
        exclusively through yielding, which refreshes the cache.
        """
        d_eps = np.broadcast_to(np.asarray(d_eps, dtype=float), self.sigma.shape)
        amax = float(np.max(np.abs(d_eps)))
        if not np.isfinite(amax):
            raise NumericError("non-finite strain increment")
        if amax > step_cap:
            raise StabilityError(
                f"strain increment {amax:.3e} exceeds stability cap {step_cap:.1e}"
            )
        consts = self.consts
        fstar_cap = 1.0 / consts.q1

        trial = np.where(self.failed, self.sigma, self.sigma + self.modulus * d_eps)
        # 1e-9 MPa slack keeps points resting exactly on the surface elastic.
        yielding = ~self.failed & (np.abs(trial) - self._flow > 1.0e-9)
        if not yielding.any():
            self.sigma = trial
            return

        idx = np.flatnonzero(yielding.ravel())
        tr = trial.ravel()[idx]
        sy = self._sigma_y.ravel()[idx]
        flow = self._flow.ravel()[idx]
        f = self.f.ravel()[idx]
        fstar_eff = np.minimum(self.f_star.ravel()[idx], fstar_cap)
        eps_p = self.eps_p.ravel()[idx]
        tri = self._tri_flat()[idx]
        sign = np.where(tr >= 0.0, 1.0, -1.0)

        # Normality split of the plastic increment into deviatoric and
        # volumetric parts, evaluated on the yield surface.
        c = 1.5 * consts.q2 * tri
        x = flow / sy
        e = np.exp(c * x)
        sinh = 0.5 * (e - 1.0 / e)
        d_eq = 2.0 * x / sy  # dPhi/dsigma_eq
        d_m = 3.0 * consts.q1 * consts.q2 * fstar_eff * sinh / sy  # dPhi/dsigma_m
        d_eps_ax_p = (np.abs(tr) - flow) / self.modulus
        lam = d_eps_ax_p / np.maximum(d_eq + d_m / 3.0, 1.0e-300)
        d_dev = lam * d_eq
        d_tr = lam * d_m
        # Matrix strain from plastic-work equivalence:
        # (1-f) sigma_y deps_p = sigma_eq*d_dev + sigma_m*d_tr.
        d_eps_p = (flow * d_dev + tri * flow * d_tr) / (np.maximum(1.0 - f, 1.0e-12) * sy)
        eps_n = self.eps_n.ravel()[idx] if self.eps_n.ndim else self.eps_n
        s_n = self.s_n.ravel()[idx]
        f_n = self.f_n.ravel()[idx]
        z = (eps_p - eps_n) / s_n
        a_nuc = f_n / (s_n * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * z * z)
        df = (1.0 - f) * d_tr * sign + a_nuc * d_eps_p

        eps_p_new = eps_p + d_eps_p
        f_new = np.minimum(np.maximum(f + df, 0.0), 1.0)
        fc = self.f_c.ravel()[idx]
        ff = self.f_f.ravel()[idx]
        slope = self._fstar_slope.ravel()[idx] if np.ndim(self._fstar_slope) else self._fstar_slope
        fstar_new = np.where(f_new < fc, f_new, fc + slope * (f_new - fc))
        failed_new = f_new >= ff

        # Stress back on the surface, re-solved with end-of-step hardening
        # and damage so returned states satisfy Phi = 0 to solver tolerance.
        sy_new = self.voce.sigma0 + self.voce.q_sat * (1.0 - np.exp(-self.voce.b_rate * eps_p_new))
        flow_new = flow_stress_on_surface(
            consts, sy_new, np.minimum(fstar_new, fstar_cap), tri, start=flow
        )

        self.sigma = trial
        sig_flat = self.sigma.ravel()
        sig_flat[idx] = np.where(failed_new, 0.0, sign * flow_new)
        self.sigma = sig_flat.reshape(self.sigma.shape)
        for target, values in (
            (self.eps_p, eps_p_new),
            (self.f, f_new),
            (self.f_star, fstar_new),
            (self._sigma_y, sy_new),
            (self._flow, flow_new),
        ):
            flat = target.ravel()
            flat[idx] = values
        fail_flat = self.failed.ravel()
        fail_flat[idx] = failed_new
        self.failed = fail_flat.reshape(self.failed.shape)
        if not np.all(np.isfinite(flow_new)):
            raise NumericError("non-finite stress after integration step")


def integrate_point(
    state: MaterialPointState,
    consts: FixedGtnConstants,
    params: GtnParams,
    voce: VoceParams,
    strain_increment: float,
    *,
    triaxiality: float = UNIAXIAL_TRIAXIALITY,
    elastic_modulus: float = 70.0e3,
) -> MaterialPointState:
    """Explicit update of a single material point by one axial strain increment."""
    if state.failed:
        raise DomainError("cannot integrate a failed material point")
    if not math.isfinite(strain_increment):
        raise NumericError("strain increment must be finite")
    if abs(strain_increment) > POINT_STEP_CAP:
        raise StabilityError(
            f"|strain_increment|={abs(strain_increment):.3e} exceeds the {POINT_STEP_CAP:.0e} cap"
        )
    batch = GtnPointBatch(1, consts, params, voce, elastic_modulus, triaxiality)
    sign = 1.0 if state.sigma_m >= 0.0 else -1.0
    batch.sigma[0] = sign * state.sigma_eq
    batch.eps_p[0] = state.eps_p
    batch.f[0] = state.f
    batch.f_star[0] = effective_void_fraction(consts, params, state.f)
    batch.refresh_caches()
    batch.step(np.array([strain_increment]), step_cap=POINT_STEP_CAP)
    sigma = float(batch.sigma[0])
    return replace(
        state,
        eps_p=float(batch.eps_p[0]),
        f=float(batch.f[0]),
        f_star=float(batch.f_star[0]),
        sigma_eq=abs(sigma),
        sigma_m=triaxiality * sigma,
        failed=bool(batch.failed[0]),
    )
