"""Transverse stiffness, mode structure, and micromotion renormalization."""

import numpy as np
import pytest

from planartrap.errors import AmbiguousMatching, CoincidentIons, ImaginaryFrequency
from planartrap.transverse import (
    first_harmonic_coupling,
    mode_shift_report,
    rwa_perturbation_bound,
    static_coupling,
    time_averaged_coupling,
    transverse_mode_set,
)
from planartrap.trap_model import TrapConfig, solve_trap
from planartrap.units import COULOMB

from conftest import REFERENCE


@pytest.fixture(scope="module")
def nineteen(small_setup):
    return small_setup


class TestCoupling:
    def test_static_coupling_values(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 5.0]])
        c = static_coupling(pts)
        assert c[0, 1] == pytest.approx(1e-3, rel=1e-12)
        assert c[0, 2] == pytest.approx(5.0**-3, rel=1e-12)
        assert np.all(np.diag(c) == 0.0)
        np.testing.assert_allclose(c, c.T, atol=0.0)

    def test_coincident_pair_rejected(self):
        pts = np.array([[0.0, 0.0], [1e-4, 0.0]])
        with pytest.raises(CoincidentIons):
            static_coupling(pts)

    def test_time_average_exceeds_static(self, nineteen):
        # breathing spends more time at small separations than large in
        # the 1/r^3 sense: <1/r^3> >= 1/<r>^3 by convexity
        cfg, params, state, exp, avg, static = nineteen
        c_avg = time_averaged_coupling(exp)
        c_static = static_coupling(exp.r0)
        off = ~np.eye(19, dtype=bool)
        assert np.all(c_avg[off] >= c_static[off] * (1.0 - 1e-12))

    def test_first_harmonic_tracks_static_coupling(self, nineteen):
        # leading order: 2<cos * 1/r^3> = (3 q / 2) * static
        cfg, params, state, exp, avg, static = nineteen
        h = first_harmonic_coupling(exp)
        c = static_coupling(exp.r0)
        off = ~np.eye(19, dtype=bool)
        ratio = h[off] / c[off]
        expected = 1.5 * params.q_x
        assert np.all(np.abs(ratio - expected) < 0.12 * abs(expected))

    def test_phase_sampling_converged(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        a = time_averaged_coupling(exp, n_phase=64)
        b = time_averaged_coupling(exp, n_phase=256)
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(b)


class TestModeSet:
    def test_single_ion_reduces_to_bare_trap(self):
        cfg = TrapConfig(n_ions=1, **REFERENCE)
        params = solve_trap(cfg)
        modes = transverse_mode_set(cfg, params, np.zeros((1, 2)))
        assert modes.frequencies[0] == pytest.approx(params.omega_z, rel=1e-14)
        assert modes.vectors[0, 0] == 1.0

    def test_com_mode_exact_and_uniform(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        for modes in (avg, static):
            assert modes.frequencies[-1] == pytest.approx(params.omega_z, rel=1e-12)
            com = modes.vectors[:, -1]
            np.testing.assert_allclose(com, np.full(19, 19**-0.5), atol=1e-9)

    def test_all_other_modes_below_com(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        for modes in (avg, static):
            assert np.all(np.diff(modes.frequencies) >= 0.0)
            assert np.all(modes.frequencies[:-1] < params.omega_z)

    def test_vectors_orthonormal(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        np.testing.assert_allclose(avg.vectors.T @ avg.vectors, np.eye(19), atol=1e-12)

    def test_eigen_residual(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
        k = cpref * avg.coupling.copy()
        np.fill_diagonal(k, params.omega_z**2 - cpref * avg.coupling.sum(axis=1))
        res = k @ avg.vectors - avg.vectors * avg.frequencies**2
        assert np.max(np.abs(res)) < 1e-9 * params.omega_z**2

    def test_trace_sum_rule(self, nineteen):
        # sum omega_k^2 = N omega_z^2 - cpref * sum_offdiag coupling;
        # eigenvalues must conserve the stiffness trace exactly
        cfg, params, state, exp, avg, static = nineteen
        cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
        expected = 19.0 * params.omega_z**2 - cpref * avg.coupling.sum()
        assert np.sum(avg.frequencies**2) == pytest.approx(expected, rel=1e-12)

    def test_buckling_detected(self):
        # crank the rf down so the Coulomb softening wins at close range
        cfg = TrapConfig(n_ions=2, **REFERENCE)
        params = solve_trap(cfg)
        pts = np.array([[-0.6, 0.0], [0.6, 0.0]])  # far tighter than equilibrium
        with pytest.raises(ImaginaryFrequency):
            transverse_mode_set(cfg, params, pts)

    def test_flags_record_provenance(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        assert avg.includes_micromotion is True
        assert static.includes_micromotion is False


class TestShiftReport:
    def test_matches_are_bijective(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        report = mode_shift_report(avg, static)
        assert len(report) == 19
        assert sorted(r.index_static for r in report) == list(range(19))
        assert [r.index_avg for r in report] == list(range(19))

    def test_overlaps_and_shift_sign(self, nineteen):
        # averaging strengthens the coupling, which softens relative
        # modes: every non-COM shift is downward
        cfg, params, state, exp, avg, static = nineteen
        report = mode_shift_report(avg, static)
        assert all(r.overlap > 0.999 for r in report)
        com = max(report, key=lambda r: r.freq_avg)
        assert abs(com.shift) < 1e-10 * com.freq_avg
        others = [r for r in report if r is not com]
        assert all(r.shift < 0.0 for r in others)

    def test_threshold_raises_instead_of_mismatching(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        with pytest.raises(AmbiguousMatching):
            mode_shift_report(avg, static, min_overlap=1.0 - 1e-15)


class TestPerturbationBound:
    def test_bound_small_at_reference_point(self, nineteen):
        cfg, params, state, exp, avg, static = nineteen
        h = first_harmonic_coupling(exp)
        bound = rwa_perturbation_bound(cfg, params, avg, h)
        assert 0.0 < bound["harmonic_norm"] < bound["mode_scaling"]
        assert bound["mode_scaling"] == pytest.approx(
            abs(params.q_x) * (params.omega_z / cfg.rf_omega) ** 2, rel=1e-6)
        assert bound["mode_scaling"] < 1e-3
