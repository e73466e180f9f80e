import numpy as np
import pytest

from gtncal.errors import ParameterError, SimulationIncompleteError
from gtncal.material import GtnParams
from gtncal.simulator import (
    CurveSegment,
    LoadingProgram,
    SimulatorSettings,
    StrainSnapshot,
    build_templates,
    kirsch_stress_field,
    read_curve_csv,
    read_snapshot_csv,
    simulate_batch,
    simulate_specimen,
    simulate_specimen_full,
    write_curve_csv,
    write_snapshot_csv,
)

MID = GtnParams(0.3, 0.03, 0.08, 0.25)
FAST = GtnParams(0.1, 0.05, 0.01, 0.15)


@pytest.fixture(scope="module")
def mid_result():
    return simulate_specimen_full(MID)


class TestLoadingProgram:
    def test_defaults_satisfy_step_bound(self):
        prog = LoadingProgram()
        assert prog.nominal_strain_increment < 1e-4

    def test_oversized_time_step_rejected(self):
        with pytest.raises(ParameterError):
            LoadingProgram(time_step=0.5)

    def test_negative_field_rejected(self):
        with pytest.raises(ParameterError):
            LoadingProgram(hole_radius=-1.0)


class TestCurveSegment:
    def test_rejects_nonmonotone_displacement(self):
        with pytest.raises(Exception):
            CurveSegment(np.array([0.0, 1.0, 0.5]), np.array([0.0, 1.0, 2.0]), 0.5)

    def test_rejects_negative_force(self):
        with pytest.raises(Exception):
            CurveSegment(np.array([0.0, 1.0]), np.array([0.0, -1.0]), 1.0)


class TestKirschField:
    def test_stress_concentration_at_net_section(self):
        x = np.array([[1.0, 2.0, 100.0]])
        y = np.zeros((1, 3))
        _, _, syy = kirsch_stress_field(x, y, 1.0)
        assert syy[0, 0] == pytest.approx(3.0, abs=1e-12)
        assert syy[0, 1] == pytest.approx(1.0 + 0.5 / 4 + 1.5 / 16, abs=1e-12)
        assert syy[0, 2] == pytest.approx(1.0, abs=1e-3)

    def test_hole_pole_is_traction_free_with_transverse_compression(self):
        x = np.zeros((1, 1))
        y = np.array([[1.0]])
        sxx, _, syy = kirsch_stress_field(x, y, 1.0)
        assert syy[0, 0] == pytest.approx(0.0, abs=1e-12)  # radial = axial here
        assert sxx[0, 0] == pytest.approx(-1.0, abs=1e-12)  # hoop compression


class TestSimulateSpecimen:
    def test_determinism_bit_identical(self, mid_result):
        curve2, snap2 = simulate_specimen(MID)
        assert np.array_equal(mid_result.curve.forces, curve2.forces)
        assert np.array_equal(mid_result.curve.displacements, curve2.displacements)
        assert np.array_equal(mid_result.snapshot.e22, snap2.e22)

    def test_force_zero_at_zero_displacement(self, mid_result):
        assert mid_result.curve.displacements[0] == 0.0
        assert mid_result.curve.forces[0] == 0.0

    def test_curve_rises_peaks_softens(self, mid_result):
        forces = mid_result.curve.forces
        k_peak = int(np.argmax(forces))
        assert 0 < k_peak < len(forces) - 1
        assert forces[-1] < 0.985 * forces[k_peak]
        assert mid_result.peak_force == pytest.approx(forces[k_peak])

    def test_capture_ratio_near_target(self, mid_result):
        snap = mid_result.snapshot
        assert snap.capture_ratio == 0.98
        assert 0.96 <= snap.achieved_ratio <= 0.98

    def test_distinct_failure_displacements_at_corners(self):
        lower = GtnParams(0.1, 0.01, 0.01, 0.15)
        upper = GtnParams(0.5, 0.05, 0.15, 0.35)
        res = simulate_batch([lower, upper])
        assert not any(isinstance(r, SimulationIncompleteError) for r in res)
        assert res[0].curve.failure_displacement != res[1].curve.failure_displacement

    def test_batch_matches_single_run(self, mid_result):
        # SIMD lane alignment in transcendental ufuncs shifts with array
        # shape, so batched and single runs agree to round-off, not bitwise.
        res = simulate_batch([FAST, MID])
        np.testing.assert_allclose(res[1].curve.forces, mid_result.curve.forces, rtol=1e-11)
        np.testing.assert_allclose(
            res[1].snapshot.e22, mid_result.snapshot.e22, rtol=1e-10, atol=1e-14
        )
        assert res[1].curve.failure_displacement == mid_result.curve.failure_displacement

    def test_vvf_bounds_and_hot_spot_near_hole(self, mid_result):
        vvf = mid_result.vvf_field
        mask = mid_result.snapshot.mask
        assert np.all(vvf[mask] >= 0.001 - 1e-12)
        assert np.all(vvf[mask] <= MID.f_f + 1e-12)
        hot = np.unravel_index(np.argmax(np.where(mask, vvf, -1.0)), vvf.shape)
        r = np.hypot(mid_result.snapshot.x[hot], mid_result.snapshot.y[hot])
        assert r < 2.0  # within two hole radii

    def test_incomplete_when_displacement_too_small(self):
        prog = LoadingProgram(max_displacement=0.5)
        with pytest.raises(SimulationIncompleteError):
            simulate_specimen(MID, program=prog)

    def test_localization_grows_with_damage_feedback(self):
        # The kappa * f_star feedback is what couples nucleated damage into
        # strain localization: switching it on must sharpen the snapshot.
        def contrast(kappa):
            res = simulate_specimen_full(MID, settings=SimulatorSettings(kappa=kappa))
            e22 = res.snapshot.e22[res.snapshot.mask]
            return np.max(e22) / max(np.median(e22), 1e-12)

        c0, c2, c6 = contrast(0.0), contrast(2.0), contrast(6.0)
        assert c0 < c2 < c6


class TestSnapshotSymmetry:
    def test_mirror_symmetry_without_damage_feedback(self):
        settings = SimulatorSettings(kappa=0.0)
        res = simulate_specimen_full(MID, settings=settings)
        e22 = res.snapshot.e22
        mask = res.snapshot.mask
        flipped = e22[:, ::-1]
        both = mask & mask[:, ::-1]
        assert np.max(np.abs(e22[both] - flipped[both])) < 1e-10

    def test_mask_matches_hole_geometry(self):
        prog = LoadingProgram()
        tpl = build_templates(prog, SimulatorSettings())
        r = np.hypot(tpl.x, tpl.y)
        assert np.array_equal(tpl.mask, r >= prog.hole_radius)


class TestStepRefinement:
    def test_peak_force_converges_under_halved_step(self):
        base = LoadingProgram()
        fine = LoadingProgram(time_step=base.time_step / 2.0)
        res_base = simulate_specimen_full(FAST, program=base)
        res_fine = simulate_specimen_full(FAST, program=fine)
        rel = abs(res_base.peak_force - res_fine.peak_force) / res_fine.peak_force
        assert rel < 0.005


class TestSerialization:
    def test_curve_roundtrip(self, mid_result, tmp_path):
        path = tmp_path / "curve.csv"
        write_curve_csv(path, mid_result.curve)
        back = read_curve_csv(path)
        assert np.array_equal(back.forces, mid_result.curve.forces)
        assert back.failure_displacement == mid_result.curve.failure_displacement

    def test_snapshot_roundtrip(self, mid_result, tmp_path):
        path = tmp_path / "snap.csv"
        write_snapshot_csv(path, mid_result.snapshot)
        back = read_snapshot_csv(path, mid_result.snapshot)
        m = mid_result.snapshot.mask
        assert np.array_equal(back.e12[m], mid_result.snapshot.e12[m])
