"""Single-ion electrostatics and Mathieu stability."""

import math

import numpy as np
import pytest

from planartrap.errors import PlanarityWarning, UnstableRegion
from planartrap.oracles import floquet_exponent
from planartrap.trap_model import (
    TrapConfig,
    characteristic_exponent,
    mathieu_parameters,
    secular_frequencies,
    solve_trap,
)

from conftest import REFERENCE


@pytest.fixture(scope="module")
def cfg():
    return TrapConfig(n_ions=1, **REFERENCE)


class TestVoltageMap:
    def test_laplace_makes_a_and_q_traceless(self, cfg):
        p = mathieu_parameters(cfg)
        assert p.a_x + p.a_y + p.a_z == pytest.approx(0.0, abs=1e-18)
        assert p.q_x + p.q_y + p.q_z == pytest.approx(0.0, abs=1e-18)

    def test_rf_quadrupole_is_isotropic_in_plane(self, cfg):
        p = mathieu_parameters(cfg)
        assert p.q_x == p.q_y
        assert p.q_z == -2.0 * p.q_x

    def test_anisotropy_splits_dc_but_not_rf(self, cfg):
        p = mathieu_parameters(cfg)
        mean_a = 0.5 * (p.a_x + p.a_y)
        assert p.a_x == pytest.approx(mean_a * (1.0 + cfg.anisotropy) /
                                      (1.0 + 0.0), rel=1e-12)
        assert (p.a_x - p.a_y) == pytest.approx(2.0 * cfg.anisotropy * mean_a, rel=1e-12)

    def test_parameters_scale_inversely_with_drive_frequency_squared(self, cfg):
        from dataclasses import replace

        p1 = mathieu_parameters(cfg)
        p2 = mathieu_parameters(replace(cfg, rf_omega=2.0 * cfg.rf_omega))
        assert p2.q_z == pytest.approx(p1.q_z / 4.0, rel=1e-14)
        assert p2.a_z == pytest.approx(p1.a_z / 4.0, rel=1e-14)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrapConfig(dc_voltage=-1.0, ac_voltage=90.0, rf_omega=-1.0,
                       electrode_size=200.0)
        with pytest.raises(ValueError):
            TrapConfig(dc_voltage=-1.0, ac_voltage=90.0, rf_omega=1.0,
                       electrode_size=200.0, anisotropy=1.5)
        with pytest.raises(ValueError):
            TrapConfig(dc_voltage=-1.0, ac_voltage=90.0, rf_omega=1.0,
                       electrode_size=200.0, n_ions=0)


class TestCharacteristicExponent:
    def test_harmonic_limit(self):
        assert characteristic_exponent(0.04, 0.0) == pytest.approx(0.2, rel=1e-12)

    def test_small_q_expansion(self):
        # beta^2 ~ a + q^2/2 to leading order
        a, q = 1e-3, 1e-2
        beta = characteristic_exponent(a, q)
        assert beta**2 == pytest.approx(a + q**2 / 2.0, rel=1e-3)

    @pytest.mark.parametrize("q", [0.02, 0.05, 0.102905, 0.2, 0.4])
    @pytest.mark.parametrize("a", [-2e-3, 0.0, 1e-3, 2.5e-3, 0.01])
    def test_matches_monodromy_oracle(self, a, q):
        # Independent route: cos(pi beta) = tr(M)/2 from direct ODE
        # integration over one period.
        try:
            beta = characteristic_exponent(a, q)
        except UnstableRegion:
            ref = floquet_exponent(a, q)
            assert not ref.stable or ref.beta >= 1.0 - 1e-9
            return
        ref = floquet_exponent(a, q)
        assert ref.stable
        assert beta == pytest.approx(ref.beta, abs=1e-9)

    def test_rejects_negative_a_at_zero_q(self):
        with pytest.raises(UnstableRegion):
            characteristic_exponent(-1e-3, 0.0)

    def test_rejects_strong_drive(self):
        # q beyond ~0.908 leaves the lowest stability zone at a = 0
        with pytest.raises(UnstableRegion):
            characteristic_exponent(0.0, 1.2)

    def test_rejects_upper_zone(self):
        # a approaching 1 pushes beta to the zone boundary
        with pytest.raises(UnstableRegion):
            characteristic_exponent(1.05, 0.1)


class TestSecularFrequencies:
    def test_frequency_ordering_at_reference_point(self, cfg):
        p = mathieu_parameters(cfg)
        wx, wy, wz = secular_frequencies(p, cfg)
        assert wx < wy < wz  # gamma > 0 softens x; z is the stiff axis

    def test_pseudopotential_limit(self, cfg):
        # beta -> sqrt(a + q^2/2) as the drive weakens.  At the reference
        # point (q_z ~ 0.1) the O(q^2) relative correction is ~0.2%, so the
        # asymptotic check runs at weaker drive.
        assert characteristic_exponent(2.3e-4, 0.02) == pytest.approx(
            math.sqrt(2.3e-4 + 0.02**2 / 2.0), rel=2e-4)
        p = mathieu_parameters(cfg)
        _, _, wz = secular_frequencies(p, cfg)
        approx = 0.5 * cfg.rf_omega * math.sqrt(p.a_z + p.q_z**2 / 2.0)
        assert wz == pytest.approx(approx, rel=3e-3)

    def test_in_plane_stability_needs_enough_rf(self):
        # The in-plane axes ride on a < 0; rf confinement must supply
        # q^2/2 > |a| or the radial motion runs away.  Halving both
        # voltages keeps a/q fixed individually but breaks the balance.
        weak = TrapConfig(dc_voltage=-0.5, ac_voltage=20.0,
                          rf_omega=2.0 * math.pi * 50.0, electrode_size=200.0)
        p = mathieu_parameters(weak)
        assert abs(p.a_x) > p.q_x**2 / 2.0
        with pytest.raises(UnstableRegion):
            secular_frequencies(p, weak)

    def test_warns_when_out_of_plane_confinement_is_weak(self):
        cfg = TrapConfig(dc_voltage=-0.01, ac_voltage=90.0,
                         rf_omega=2.0 * math.pi * 50.0, electrode_size=200.0)
        p = mathieu_parameters(cfg)
        with pytest.warns(PlanarityWarning):
            secular_frequencies(p, cfg)

    def test_solve_trap_fills_everything(self, cfg):
        p = solve_trap(cfg)
        assert p.planar is True
        for name in ("beta_x", "beta_y", "beta_z", "omega_x", "omega_y", "omega_z"):
            assert getattr(p, name) is not None
        assert p.omega_z == pytest.approx(p.beta_z * cfg.rf_omega / 2.0, rel=1e-14)

    def test_solve_trap_does_not_leak_warnings(self):
        import warnings

        cfg = TrapConfig(dc_voltage=-0.01, ac_voltage=90.0,
                         rf_omega=2.0 * math.pi * 50.0, electrode_size=200.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", PlanarityWarning)
            p = solve_trap(cfg)  # planarity reported via the flag instead
        assert p.planar is False
