"""The brute-force reference implementations themselves.

These are the instruments the analytic code is measured against, so
they get their own checks against hand-computable cases.
"""

import math

import numpy as np
import pytest

from planartrap.errors import NoSettle, Runaway, TruncationTooSmall
from planartrap.gate import GateSystem, gate_fidelity, phase_map
from planartrap.micromotion import trajectory
from planartrap.oracles import (
    floquet_exponent,
    fock_fidelity,
    integrate_branch_dynamics,
    integrate_full_eom,
    mathieu_monodromy,
    run_eom,
    settle_to_periodic_orbit,
)
from planartrap.trap_model import TrapConfig, mathieu_parameters, solve_trap

from conftest import REFERENCE


class TestMonodromy:
    def test_determinant_is_one(self):
        for a, q in [(0.0, 0.0), (0.01, 0.1), (0.3, 0.5), (-0.05, 0.6)]:
            m = mathieu_monodromy(a, q)
            det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
            assert det == pytest.approx(1.0, abs=1e-10)

    def test_harmonic_oscillator_case(self):
        # q = 0: y'' + a y = 0 over [0, pi] is a rotation by pi sqrt(a)
        a = 0.25
        m = mathieu_monodromy(a, 0.0)
        th = math.pi * math.sqrt(a)
        expected = np.array([[math.cos(th), math.sin(th) / math.sqrt(a)],
                             [-math.sqrt(a) * math.sin(th), math.cos(th)]])
        np.testing.assert_allclose(m, expected, atol=1e-10)

    def test_exponent_and_stability_flags(self):
        r = floquet_exponent(0.04, 0.0)
        assert r.stable and r.beta == pytest.approx(0.2, abs=1e-10)
        r = floquet_exponent(0.0, 1.2)
        assert not r.stable and math.isnan(r.beta)
        assert abs(r.trace) > 2.0


@pytest.fixture(scope="module")
def two_ions():
    cfg = TrapConfig(n_ions=2, **REFERENCE)
    return cfg, solve_trap(cfg)


class TestDrivenCrystal:
    def test_restart_continuity(self, two_ions):
        cfg, params = two_ions
        start = np.array([[-10.0, 0.0], [10.0, 0.0]])
        once = run_eom(cfg, params, start, periods=2)
        half = run_eom(cfg, params, start, periods=1)
        rest = run_eom(cfg, params, half.positions, half.velocities,
                       periods=1, t0=half.t_final)
        np.testing.assert_allclose(rest.positions, once.positions, atol=1e-12)
        np.testing.assert_allclose(rest.velocities, once.velocities, atol=1e-12)

    def test_recording_grid(self, two_ions):
        cfg, params = two_ions
        start = np.array([[-10.0, 0.0], [10.0, 0.0]])
        out = run_eom(cfg, params, start, periods=1, steps_per_period=512,
                      record_every=64)
        assert out.recorded.shape == (8, 2, 2)
        dt = np.diff(out.record_times)
        np.testing.assert_allclose(dt, dt[0], rtol=1e-12)

    def test_friction_pulls_onto_the_attractor(self, two_ions):
        # start displaced from equilibrium: the damped run converges to
        # a reproducible stroboscopic point (the attractor snapshot,
        # micromotion excursion included) while the free run keeps its
        # secular oscillation energy
        from planartrap.crystal import relax

        cfg, params = two_ions
        eq = relax(cfg, params).positions
        start = eq * 1.3
        ref = run_eom(cfg, params, start, periods=1600, friction=1.0)
        damped = run_eom(cfg, params, start, periods=800, friction=1.0)
        free = run_eom(cfg, params, start, periods=800)
        assert np.abs(damped.positions - ref.positions).max() < 1e-3
        assert np.abs(free.positions - ref.positions).max() > 0.5

    def test_runaway_detected(self):
        # starving the rf of voltage leaves the in-plane DC saddle
        # unconfined; ions accelerate out and must trip the guard
        cfg = TrapConfig(dc_voltage=-1.1, ac_voltage=15.0,
                         rf_omega=2.0 * math.pi * 50.0, electrode_size=200.0,
                         anisotropy=0.01, n_ions=2)
        params = mathieu_parameters(cfg)
        start = np.array([[-20.0, 0.0], [20.0, 0.0]])
        with pytest.raises(Runaway):
            run_eom(cfg, params, start, periods=4000)

    def test_settle_reaches_a_periodic_orbit(self, two_ions):
        # the settled state is a fixed point of the damped stroboscopic
        # map, so the after-check must keep the same friction
        cfg, params = two_ions
        start = np.array([[-12.0, 2.0], [12.0, -2.0]])
        pos, vel, n_periods = settle_to_periodic_orbit(cfg, params, start)
        assert n_periods < 6000
        after = run_eom(cfg, params, pos, vel, periods=1, friction=0.1)
        assert np.max(np.abs(after.positions - pos)) < 2e-4

    def test_no_settle_raises(self, two_ions):
        cfg, params = two_ions
        start = np.array([[-12.0, 2.0], [12.0, -2.0]])
        with pytest.raises(NoSettle):
            settle_to_periodic_orbit(cfg, params, start, tol=1e-13,
                                     max_periods=5)

    def test_steady_orbit_matches_series_for_two_ions(self, two_ions):
        # the acceptance versions run 7 and 19 ions; this is the same
        # comparison at the smallest nontrivial size
        from planartrap.crystal import relax
        from planartrap.micromotion import self_consistent_positions

        cfg, params = two_ions
        state = relax(cfg, params)
        rec = integrate_full_eom(cfg, params, state.positions)
        exp = self_consistent_positions(cfg, params, state.positions)
        series = trajectory(exp, rec.times)
        rms = float(np.sqrt(np.mean((series - rec.positions) ** 2)))
        assert rec.settled
        assert rms < 1e-3

    def test_full_eom_size_guard(self, two_ions):
        cfg, params = two_ions
        from planartrap.errors import ConfigError

        with pytest.raises(ConfigError):
            integrate_full_eom(cfg, params, np.zeros((25, 2)))


class TestFockFidelity:
    def test_perfect_gate(self):
        # accuracy is capped by the 1e-8 thermal-tail truncation budget
        f = fock_fidelity(np.zeros((2, 2), dtype=complex), math.pi / 4.0,
                          np.array([0.0, 1.5]))
        assert f == pytest.approx(1.0, abs=1e-8)

    def test_zero_temperature_single_mode_by_hand(self):
        # cold mode, alpha on ion 1 only: branch displacements +-alpha,
        # overlaps <0|D(-a)D(b)|0> known in closed form
        alpha = 0.2 + 0.1j
        alphas = np.array([[alpha], [0.0]])
        f = fock_fidelity(alphas, math.pi / 4.0, np.array([0.0]))
        closed = gate_fidelity(alphas, math.pi / 4.0, np.array([0.0]))
        assert f == pytest.approx(closed, abs=1e-9)

    def test_matches_closed_form_randomized(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            k = int(rng.integers(1, 4))
            alphas = 0.3 * (rng.standard_normal((2, k))
                            + 1j * rng.standard_normal((2, k)))
            nbar = rng.uniform(0.0, 2.0, size=k)
            phi = rng.choice([0.0, math.pi / 8.0, math.pi / 4.0])
            f_ref = fock_fidelity(alphas, phi, nbar)
            f = gate_fidelity(alphas, phi, nbar)
            assert abs(f - f_ref) < 1e-6

    def test_insufficient_levels_raise(self):
        alphas = np.array([[0.3], [0.1]])
        with pytest.raises(TruncationTooSmall):
            fock_fidelity(alphas, math.pi / 4.0, np.array([1.5]), levels=10)


class TestBranchDynamics:
    def test_flat_pulse_against_closed_form(self):
        omega = 13.9
        mu = 12.8
        t_final = 3.0
        g1, g2 = 0.05, 0.04
        rabi = 1.0

        dyn = integrate_branch_dynamics(
            [lambda t: rabi, lambda t: rabi], (g1, g2), omega, mu, t_final,
            levels=24, steps=30_000)

        up = (np.exp(1j * (omega + mu) * t_final) - 1.0) / (1j * (omega + mu))
        dn = (np.exp(1j * (omega - mu) * t_final) - 1.0) / (1j * (omega - mu))
        integral = (up - dn) / 2.0j
        assert dyn.alpha1 == pytest.approx(1j * g1 * rabi * integral, abs=2e-6)
        assert dyn.alpha2 == pytest.approx(1j * g2 * rabi * integral, abs=2e-6)

        sys = GateSystem(
            omega=np.array([omega]), g=np.array([[g1], [g2]]),
            nbar=np.array([0.0]), beam=np.ones((2, 1)), rf_omega=math.tau,
            duration=t_final, n_segments=1, pair=(0, 1), waist=3.0,
            delta_k=8.0, kbt_over_hbar=0.0)
        phi_closed = phase_map(sys, mu, [rabi])
        assert dyn.phi12 == pytest.approx(phi_closed, abs=2e-6)

    def test_branch_structure(self):
        # alpha of branch (s1, s2) must be s1 a1 + s2 a2
        omega, mu, t_final = 13.9, 13.2, 2.0
        dyn = integrate_branch_dynamics(
            [lambda t: 1.0, lambda t: 0.7], (0.05, 0.05), omega, mu, t_final,
            levels=24, steps=20_000)
        for (s1, s2), a in dyn.branch_alphas.items():
            assert a == pytest.approx(s1 * dyn.alpha1 + s2 * dyn.alpha2, abs=1e-6)
