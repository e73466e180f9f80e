"""Reduced-order specimen simulator.

Stand-in for a finite-element model of a holed tensile specimen.  A 2D grid
of independent GTN material points covers the near-hole window of the gauge
section; each point is driven by the elastic stress-concentration field of a
circular hole (Kirsch solution) scaled by the nominal axial strain and local
amplification factors:

    d_eps_local = T_sig(x, y) * d_eps_nominal
                  * (1 + kappa * f_star)          # damage feedback
                  * (1 + plastic_gain * eps_p)    # elastic-plastic concentration
                  * (1 + loc_gain * softening)    # post-peak band localization

The damage feedback concentrates strain where voids have grown.  The plastic
gain represents the growth of notch strain concentration beyond its elastic
value once the ligament yields (Neuber-type effect, linearized).  The
localization term applies only inside the net-section band and is driven by
the relative force drop from the running peak, standing in for the
deformation-rate concentration a softening structure develops under
displacement control; the amplification product is capped to keep the
explicit integration bounded.

The reported force is the engineering force over the net section,

    F = mean_over_net_row( sigma * exp(-eps_axial) ) * net_area,

where the exponential accounts for cross-section reduction under plastic
incompressibility.  This guarantees a Considere-type force peak even for
weakly damaging parameter sets, after which the localization feedback drives
the hottest point to f >= f_f (the analog of first element deletion), ending
the run.  The strain snapshot is captured at the first post-peak instant
where F <= capture_ratio * F_max.

Points in the net-section band also carry an elevated stress triaxiality,
representing the through-thickness constraint a plane model cannot resolve;
without it the uniaxial dilatation of the GTN flow rule is too weak to drive
void growth to failure at realistic displacements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CurveFormatError, NumericError, ParameterError, SimulationIncompleteError
from .material import (
    BATCH_STEP_CAP,
    FixedGtnConstants,
    GtnParams,
    GtnPointBatch,
    VoceParams,
)

NOMINAL_STEP_LIMIT = 1.0e-4


@dataclass(frozen=True)
class LoadingProgram:
    """Displacement-controlled loading and specimen geometry (mm, s)."""

    displacement_rate: float = 0.02
    max_displacement: float = 8.0
    time_step: float = 0.1953125
    gauge_length: float = 50.0
    width: float = 12.5
    thickness: float = 3.5
    hole_radius: float = 1.0

    def __post_init__(self) -> None:
        vals = (
            self.displacement_rate,
            self.max_displacement,
            self.time_step,
            self.gauge_length,
            self.width,
            self.thickness,
            self.hole_radius,
        )
        if any(v <= 0.0 for v in vals):
            raise ParameterError("all loading-program fields must be positive")
        if self.nominal_strain_increment >= NOMINAL_STEP_LIMIT:
            raise ParameterError(
                "time_step too large: nominal strain increment "
                f"{self.nominal_strain_increment:.2e} must stay below {NOMINAL_STEP_LIMIT:.0e}"
            )
        if 2.0 * self.hole_radius >= self.width:
            raise ParameterError("hole diameter must be smaller than the specimen width")

    @property
    def nominal_strain_increment(self) -> float:
        return self.displacement_rate * self.time_step / self.gauge_length

    @property
    def net_area(self) -> float:
        return (self.width - 2.0 * self.hole_radius) * self.thickness


@dataclass(frozen=True)
class SimulatorSettings:
    """Discretization and reduced-order model gains."""

    nx: int = 72
    ny: int = 36
    kappa: float = 2.0
    plastic_gain: float = 5.0
    loc_gain: float = 100.0
    amp_cap: float = 25.0
    triaxiality: float = 1.0
    far_triaxiality: float = 1.0 / 3.0
    elastic_modulus: float = 70.0e3
    poisson_ratio: float = 0.33
    capture_ratio: float = 0.98
    far_stride: int = 6

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 4:
            raise ParameterError("grid too coarse")
        if not 0.0 < self.capture_ratio < 1.0:
            raise ParameterError("capture_ratio must lie in (0, 1)")
        if self.amp_cap < 1.0 or self.loc_gain < 0.0 or self.plastic_gain < 0.0:
            raise ParameterError("amplification gains must be nonnegative, cap >= 1")
        if self.far_stride < 1:
            raise ParameterError("far_stride must be >= 1")


@dataclass
class CurveSegment:
    """Force-displacement record up to failure."""

    displacements: np.ndarray
    forces: np.ndarray
    failure_displacement: float

    def __post_init__(self) -> None:
        self.displacements = np.asarray(self.displacements, dtype=float)
        self.forces = np.asarray(self.forces, dtype=float)
        if self.displacements.shape != self.forces.shape or self.displacements.ndim != 1:
            raise CurveFormatError("displacements and forces must be equal-length vectors")
        if not np.all(np.diff(self.displacements) > 0.0):
            raise CurveFormatError("displacements must be strictly increasing")
        if not np.all(np.isfinite(self.forces)) or np.any(self.forces < 0.0):
            raise CurveFormatError("forces must be finite and nonnegative")

    def __len__(self) -> int:
        return self.displacements.size


@dataclass
class StrainSnapshot:
    """In-plane strain field on the simulator grid at the capture instant."""

    nx: int
    ny: int
    x: np.ndarray  # cell-center coordinates, shape (ny, nx)
    y: np.ndarray
    mask: np.ndarray  # True where material exists (hole excluded)
    e11: np.ndarray
    e12: np.ndarray
    e22: np.ndarray
    capture_ratio: float = 0.98
    achieved_ratio: float = float("nan")

    def __post_init__(self) -> None:
        for name in ("x", "y", "mask", "e11", "e12", "e22"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (self.ny, self.nx):
                raise ParameterError(f"{name} must have shape (ny, nx)")
            setattr(self, name, arr)
        for name in ("e11", "e12", "e22"):
            vals = getattr(self, name)[self.mask]
            if not np.all(np.isfinite(vals)):
                raise NumericError(f"non-finite strain values in {name}")


@dataclass
class SimulationResult:
    curve: CurveSegment
    snapshot: StrainSnapshot
    peak_force: float
    stress_field: np.ndarray
    vvf_field: np.ndarray
    params: GtnParams


@dataclass(frozen=True)
class _GridTemplates:
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    t_sig: np.ndarray  # sigma_yy / S, the material driving template
    t_e11: np.ndarray  # strain templates (unit far-field axial strain)
    t_e12: np.ndarray
    t_e22: np.ndarray
    triaxiality: np.ndarray
    net_row: np.ndarray  # bool, cells entering the force average
    flat_index: np.ndarray  # indices of masked-in cells, row-major


def kirsch_stress_field(x: np.ndarray, y: np.ndarray, a: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elastic stresses around a circular traction-free hole, unit far-field
    tension along y.  Returns (sxx, sxy, syy) normalized by the far field."""
    r2 = x * x + y * y
    r2 = np.maximum(r2, a * a)  # inside-hole values are masked downstream
    ar2 = a * a / r2
    ar4 = ar2 * ar2
    # Polar angle measured from the loading (y) axis.
    ct = y / np.sqrt(r2)
    stq = x / np.sqrt(r2)
    c2t = ct * ct - stq * stq
    s2t = 2.0 * ct * stq
    srr = 0.5 * (1.0 - ar2) + 0.5 * (1.0 - 4.0 * ar2 + 3.0 * ar4) * c2t
    stt = 0.5 * (1.0 + ar2) - 0.5 * (1.0 + 3.0 * ar4) * c2t
    srt = -0.5 * (1.0 + 2.0 * ar2 - 3.0 * ar4) * s2t
    # Back to Cartesian components in the rotated frame (load axis first),
    # then relabel: axial = yy, transverse = xx.
    syy = srr * ct * ct - 2.0 * srt * stq * ct + stt * stq * stq
    sxx = srr * stq * stq + 2.0 * srt * stq * ct + stt * ct * ct
    sxy = (srr - stt) * stq * ct + srt * (ct * ct - stq * stq)
    return sxx, sxy, syy


def build_templates(program: LoadingProgram, settings: SimulatorSettings) -> _GridTemplates:
    """Grid over the near-hole window: full width, height = width/2 above the
    hole centerline (square cells at roughly the DIC resolution)."""
    nx, ny = settings.nx, settings.ny
    dx = program.width / nx
    dy = (program.width / 2.0) / ny
    xc = (np.arange(nx) + 0.5) * dx - program.width / 2.0
    yc = (np.arange(ny) + 0.5) * dy
    x, y = np.meshgrid(xc, yc)
    a = program.hole_radius
    mask = x * x + y * y >= a * a

    sxx, sxy, syy = kirsch_stress_field(x, y, a)
    nu = settings.poisson_ratio
    t_e22 = syy - nu * sxx
    t_e11 = sxx - nu * syy
    t_e12 = (1.0 + nu) * sxy
    t_sig = syy

    net_row = np.zeros_like(mask)
    net_row[0, :] = mask[0, :]
    # Elevated constraint inside the net-section band (one hole radius high),
    # uniaxial far from it.
    band = mask & (y <= a)
    tri = np.where(band, settings.triaxiality, settings.far_triaxiality)

    flat_index = np.flatnonzero(mask.ravel())
    return _GridTemplates(
        x=x, y=y, mask=mask, t_sig=t_sig, t_e11=t_e11, t_e12=t_e12, t_e22=t_e22,
        triaxiality=tri, net_row=net_row, flat_index=flat_index,
    )


class _BatchState:
    """Per-run bookkeeping for a batched simulation sweep.

    Capture and completion arrays are indexed by the original run id; the
    evolving arrays follow the (repacked) live batch.
    """

    def __init__(self, n_runs: int, n_band: int, n_far: int, n_steps: int):
        self.alive = np.arange(n_runs)  # original ids of the live rows
        # Integrals of amplified nominal strain (snapshot strain = T * amp).
        self.amp_band = np.zeros((n_runs, n_band))
        self.amp_far = np.zeros((n_runs, n_far))
        self.nom_pending = np.zeros(n_runs)  # nominal strain since last far step
        self.last_force = np.zeros(n_runs)
        self.forces = np.zeros((n_runs, n_steps + 1))
        self.fmax = np.zeros(n_runs)
        self.captured = np.zeros(n_runs, dtype=bool)
        self.capture_force = np.full(n_runs, np.nan)
        self.capture_fmax = np.full(n_runs, np.nan)
        self.capture_amp_band = np.zeros((n_runs, n_band))
        self.capture_amp_far = np.zeros((n_runs, n_far))
        self.capture_sigma_band = np.zeros((n_runs, n_band))
        self.capture_sigma_far = np.zeros((n_runs, n_far))
        self.capture_f_band = np.zeros((n_runs, n_band))
        self.capture_f_far = np.zeros((n_runs, n_far))
        self.failed_step = np.full(n_runs, -1, dtype=int)

    def repack(self, keep: np.ndarray, batch, far) -> None:
        self.alive = self.alive[keep]
        self.amp_band = np.ascontiguousarray(self.amp_band[keep])
        self.amp_far = np.ascontiguousarray(self.amp_far[keep])
        self.nom_pending = self.nom_pending[keep]
        self.last_force = self.last_force[keep]
        batch.take_runs(keep)
        far.take_runs(keep)


def simulate_batch(
    params_list: list[GtnParams],
    consts: FixedGtnConstants | None = None,
    voce: VoceParams | None = None,
    program: LoadingProgram | None = None,
    settings: SimulatorSettings | None = None,
) -> list[SimulationResult | SimulationIncompleteError]:
    """Run many specimens side by side; per-run results are bit-identical to
    single-run calls because every operation is elementwise across runs."""
    consts = consts or FixedGtnConstants()
    voce = voce or VoceParams()
    program = program or LoadingProgram()
    settings = settings or SimulatorSettings()

    tpl = build_templates(program, settings)
    idx = tpl.flat_index
    n_runs = len(params_list)
    t_sig_all = tpl.t_sig.ravel()[idx]
    tri_all = tpl.triaxiality.ravel()[idx]
    band_cells = tri_all > settings.far_triaxiality
    far_cells = ~band_cells
    idx_band = idx[band_cells]
    idx_far = idx[far_cells]
    t_band = t_sig_all[band_cells][None, :]
    t_far = t_sig_all[far_cells][None, :]
    net = tpl.net_row.ravel()[idx_band]
    net_cols = np.flatnonzero(net)

    theta = np.array([[p.eps_n, p.f_n, p.f_c, p.f_f] for p in params_list])
    par = {
        "eps_n": theta[:, 0:1],
        "f_n": theta[:, 1:2],
        "f_c": theta[:, 2:3],
        "f_f": theta[:, 3:4],
    }
    batch = GtnPointBatch(
        (n_runs, idx_band.size), consts, par, voce, settings.elastic_modulus,
        triaxiality=np.broadcast_to(tri_all[band_cells][None, :], (n_runs, idx_band.size)),
    )
    # Far-field cells evolve slowly; they are advanced every far_stride-th
    # step with the accumulated nominal increment (uniaxial stress state).
    far = GtnPointBatch(
        (n_runs, idx_far.size), consts, par, voce, settings.elastic_modulus,
        triaxiality=settings.far_triaxiality,
    )

    d_eps_nom = program.nominal_strain_increment
    n_steps = int(math.ceil(program.max_displacement / (d_eps_nom * program.gauge_length)))
    state = _BatchState(n_runs, idx_band.size, idx_far.size, n_steps)
    t_sig_net = t_band[0, net_cols]

    area = program.net_area
    stride = settings.far_stride
    for k in range(1, n_steps + 1):
        ids = state.alive
        if ids.size == 0:
            break
        fmax = state.fmax[ids]
        softening = np.where(
            fmax > 0.0,
            np.maximum(0.0, 1.0 - state.last_force / np.maximum(fmax, 1e-300)),
            0.0,
        )
        amp = (1.0 + settings.kappa * batch.f_star) * (1.0 + settings.plastic_gain * batch.eps_p)
        amp *= 1.0 + settings.loc_gain * softening[:, None]
        np.minimum(amp, settings.amp_cap, out=amp)
        d_local = t_band * (d_eps_nom * amp)
        # Per-run substepping keeps every local increment under the batch
        # stability cap without coupling runs to each other.
        max_local = np.max(np.abs(d_local), axis=1)
        n_sub = np.maximum(1, np.ceil(max_local / BATCH_STEP_CAP).astype(int))
        if int(n_sub.max()) == 1:
            batch.step(d_local, step_cap=BATCH_STEP_CAP)
        else:
            d_sub = d_local / n_sub[:, None]
            for s in range(int(n_sub.max())):
                live = (s < n_sub)[:, None]
                batch.step(np.where(live, d_sub, 0.0), step_cap=BATCH_STEP_CAP)
        state.amp_band += d_eps_nom * amp
        state.nom_pending += d_eps_nom

        far_turn = (k % stride == 0) or (k == n_steps)
        if far_turn:
            amp_far = (1.0 + settings.kappa * far.f_star) * (
                1.0 + settings.plastic_gain * far.eps_p
            )
            np.minimum(amp_far, settings.amp_cap, out=amp_far)
            d_far = t_far * (state.nom_pending[:, None] * amp_far)
            max_far = np.max(np.abs(d_far), axis=1)
            n_sub = np.maximum(1, np.ceil(max_far / BATCH_STEP_CAP).astype(int))
            if int(n_sub.max()) == 1:
                far.step(d_far, step_cap=BATCH_STEP_CAP)
            else:
                d_sub = d_far / n_sub[:, None]
                for s in range(int(n_sub.max())):
                    live = (s < n_sub)[:, None]
                    far.step(np.where(live, d_sub, 0.0), step_cap=BATCH_STEP_CAP)
            state.amp_far += state.nom_pending[:, None] * amp_far
            state.nom_pending[:] = 0.0

        eps_row = t_sig_net * state.amp_band[:, net_cols]
        force = (batch.sigma[:, net_cols] * np.exp(-eps_row)).mean(axis=1) * area
        state.last_force = force
        state.forces[ids, k] = force
        newly_failed = batch.failed.any(axis=1)
        if far_turn:
            newly_failed = newly_failed | far.failed.any(axis=1)

        rising = force > fmax
        fmax = np.where(rising, force, fmax)
        state.fmax[ids] = fmax
        # Invalidate captures superseded by a new peak, then capture at the
        # first crossing below the ratio threshold.
        captured = state.captured[ids]
        invalid = rising & captured & (force > state.capture_fmax[ids])
        captured &= ~invalid
        crossing = ~captured & (force <= settings.capture_ratio * fmax) & (fmax > 0.0)
        state.captured[ids] = captured | crossing
        if crossing.any():
            rows = np.flatnonzero(crossing)
            orig = ids[rows]
            state.capture_force[orig] = force[rows]
            state.capture_fmax[orig] = fmax[rows]
            state.capture_amp_band[orig] = state.amp_band[rows]
            amp_far_now = (1.0 + settings.kappa * far.f_star[rows]) * (
                1.0 + settings.plastic_gain * far.eps_p[rows]
            )
            np.minimum(amp_far_now, settings.amp_cap, out=amp_far_now)
            state.capture_amp_far[orig] = (
                state.amp_far[rows] + state.nom_pending[rows, None] * amp_far_now
            )
            state.capture_sigma_band[orig] = batch.sigma[rows]
            state.capture_sigma_far[orig] = far.sigma[rows]
            state.capture_f_band[orig] = batch.f[rows]
            state.capture_f_far[orig] = far.f[rows]
        if newly_failed.any():
            state.failed_step[ids[newly_failed]] = k
            keep = np.flatnonzero(~newly_failed)
            state.repack(keep, batch, far)

    disps = np.arange(n_steps + 1) * (d_eps_nom * program.gauge_length)

    results: list[SimulationResult | SimulationIncompleteError] = []
    shape = (settings.ny, settings.nx)
    for i, params in enumerate(params_list):
        if state.failed_step[i] < 0:
            results.append(
                SimulationIncompleteError(
                    "no failure before max_displacement "
                    f"({program.max_displacement} mm) for params {params}"
                )
            )
            continue
        if not state.captured[i]:
            results.append(
                SimulationIncompleteError(
                    "no post-peak softening reached the capture ratio before failure "
                    f"for params {params}"
                )
            )
            continue
        last = int(state.failed_step[i])
        curve = CurveSegment(
            displacements=disps[: last + 1].copy(),
            forces=state.forces[i, : last + 1].copy(),
            failure_displacement=float(disps[last]),
        )
        g = np.zeros(shape).ravel()
        g[idx_band] = state.capture_amp_band[i]
        g[idx_far] = state.capture_amp_far[i]
        g = g.reshape(shape)
        snapshot = StrainSnapshot(
            nx=settings.nx,
            ny=settings.ny,
            x=tpl.x,
            y=tpl.y,
            mask=tpl.mask,
            e11=tpl.t_e11 * g,
            e12=tpl.t_e12 * g,
            e22=tpl.t_e22 * g,
            capture_ratio=settings.capture_ratio,
            achieved_ratio=float(state.capture_force[i] / state.fmax[i]),
        )
        sigma_field = np.zeros(shape).ravel()
        sigma_field[idx_band] = state.capture_sigma_band[i]
        sigma_field[idx_far] = state.capture_sigma_far[i]
        vvf_field = np.full(shape, consts.f0).ravel()
        vvf_field[idx_band] = state.capture_f_band[i]
        vvf_field[idx_far] = state.capture_f_far[i]
        results.append(
            SimulationResult(
                curve=curve,
                snapshot=snapshot,
                peak_force=float(state.fmax[i]),
                stress_field=sigma_field.reshape(shape),
                vvf_field=vvf_field.reshape(shape),
                params=params,
            )
        )
    return results


def simulate_specimen(
    params: GtnParams,
    consts: FixedGtnConstants | None = None,
    voce: VoceParams | None = None,
    program: LoadingProgram | None = None,
    settings: SimulatorSettings | None = None,
) -> tuple[CurveSegment, StrainSnapshot]:
    """Simulate one specimen; raises SimulationIncompleteError when the run
    produces no failure or no post-peak capture instant."""
    result = simulate_batch([params], consts, voce, program, settings)[0]
    if isinstance(result, SimulationIncompleteError):
        raise result
    return result.curve, result.snapshot


def simulate_specimen_full(
    params: GtnParams,
    consts: FixedGtnConstants | None = None,
    voce: VoceParams | None = None,
    program: LoadingProgram | None = None,
    settings: SimulatorSettings | None = None,
) -> SimulationResult:
    result = simulate_batch([params], consts, voce, program, settings)[0]
    if isinstance(result, SimulationIncompleteError):
        raise result
    return result


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def write_curve_csv(path: str | Path, curve: CurveSegment) -> None:
    data = np.column_stack([curve.displacements, curve.forces])
    np.savetxt(path, data, fmt=_FMT, delimiter=",", header="displacement,force", comments="")


def read_curve_csv(path: str | Path, failure_displacement: float | None = None) -> CurveSegment:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d_f = float(failure_displacement) if failure_displacement is not None else float(data[-1, 0])
    return CurveSegment(data[:, 0], data[:, 1], d_f)


def write_snapshot_csv(path: str | Path, snap: StrainSnapshot) -> None:
    m = snap.mask.ravel()
    data = np.column_stack(
        [
            snap.x.ravel()[m],
            snap.y.ravel()[m],
            snap.e11.ravel()[m],
            snap.e12.ravel()[m],
            snap.e22.ravel()[m],
        ]
    )
    np.savetxt(path, data, fmt=_FMT, delimiter=",", header="x,y,e11,e12,e22", comments="")


def read_snapshot_csv(
    path: str | Path, reference: StrainSnapshot
) -> StrainSnapshot:
    """Read a flat snapshot CSV onto the reference grid (coordinates must
    match the reference's masked cells exactly)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    m = reference.mask.ravel()
    if data.shape[0] != int(m.sum()):
        raise CurveFormatError("snapshot CSV row count does not match the grid mask")
    fields = {}
    for j, name in enumerate(("e11", "e12", "e22"), start=2):
        grid = np.zeros(reference.mask.shape).ravel()
        grid[m] = data[:, j]
        fields[name] = grid.reshape(reference.mask.shape)
    return StrainSnapshot(
        nx=reference.nx,
        ny=reference.ny,
        x=reference.x,
        y=reference.y,
        mask=reference.mask,
        capture_ratio=reference.capture_ratio,
        achieved_ratio=reference.achieved_ratio,
        **fields,
    )


def write_sidecar_json(
    path: str | Path,
    result: SimulationResult,
    extra: dict | None = None,
) -> None:
    payload = {
        "failure_displacement": result.curve.failure_displacement,
        "peak_force": result.peak_force,
        "capture_ratio": result.snapshot.capture_ratio,
        "achieved_ratio": result.snapshot.achieved_ratio,
        "params": {
            "eps_n": result.params.eps_n,
            "f_n": result.params.f_n,
            "f_c": result.params.f_c,
            "f_f": result.params.f_f,
        },
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
