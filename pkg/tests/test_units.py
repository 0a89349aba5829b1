"""The frozen constants must match a fresh derivation from CODATA values."""

import math

import numpy as np
import pytest
from scipy import constants as sc

from planartrap.units import COULOMB, EVOLT, HBAR, KB, mean_occupation, thermal_energy

# um-us-u-e unit system: scale factors from SI
_M_TO_UM = 1e6
_S_TO_US = 1e6
_KG_TO_U = 1.0 / sc.atomic_mass


def _energy_si_to_internal(e_joule):
    # u um^2 / us^2
    return e_joule * _KG_TO_U * _M_TO_UM**2 / _S_TO_US**2


def test_coulomb_prefactor_matches_codata():
    si = sc.elementary_charge**2 / (4.0 * math.pi * sc.epsilon_0)  # J m
    internal = _energy_si_to_internal(si) * _M_TO_UM
    assert COULOMB == pytest.approx(internal, rel=1e-9)


def test_electron_volt_scale_matches_codata():
    assert EVOLT == pytest.approx(_energy_si_to_internal(sc.elementary_charge), rel=1e-9)


def test_hbar_matches_codata():
    internal = sc.hbar * _KG_TO_U * _M_TO_UM**2 / _S_TO_US
    assert HBAR == pytest.approx(internal, rel=1e-9)


def test_boltzmann_matches_codata():
    assert KB == pytest.approx(_energy_si_to_internal(sc.k), rel=1e-9)


def test_coulomb_over_evolt_is_the_1p44_volt_nanometer_rule():
    # e / (4 pi eps0) = 1.439964... V nm, a textbook mnemonic that does
    # not depend on our unit bookkeeping.
    assert COULOMB / EVOLT * 1e3 == pytest.approx(1.439964548, rel=1e-8)


def test_thermal_energy_scales_linearly():
    assert thermal_energy(2.0) == pytest.approx(2.0 * HBAR)
    assert thermal_energy(0.0) == 0.0


def test_mean_occupation_against_direct_bose_factor():
    omega = 13.9
    kbt = 62.8
    expected = 1.0 / (math.exp(omega / kbt) - 1.0)
    assert mean_occupation(omega, kbt) == pytest.approx(expected, rel=1e-12)


def test_mean_occupation_vectorizes_and_handles_zero_temperature():
    omegas = np.array([1.0, 2.0, 3.0])
    out = mean_occupation(omegas, 5.0)
    assert out.shape == omegas.shape
    assert np.all(np.diff(out) < 0)  # stiffer modes are colder
    assert mean_occupation(omegas, 0.0) == pytest.approx(np.zeros(3))
    assert mean_occupation(1.0, 0.0) == 0.0


def test_mean_occupation_classical_limit():
    # At kT >> hbar omega the occupation approaches kT / (hbar omega) - 1/2.
    omega = 0.01
    kbt = 100.0
    assert mean_occupation(omega, kbt) == pytest.approx(kbt / omega - 0.5, abs=1e-3)
