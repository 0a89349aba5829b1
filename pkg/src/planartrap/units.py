"""Internal unit system and physical constants.

All numerics in this package run in a fixed set of base units chosen so
that typical trap quantities are O(1):

    length   micrometer (um)
    time     microsecond (us)
    mass     unified atomic mass unit (u)
    charge   elementary charge (e)

Derived units follow directly: energy is u um^2 / us^2, angular
frequency is rad/us (so omega/(2 pi) reads in MHz), and electric
potential enters through the energy e * U of a unit charge at U volts.

The constants below were computed once from CODATA values (via
scipy.constants) and are frozen as documented literals.  The test suite
recomputes each one from scipy.constants and requires agreement to
better than six significant digits.
"""

# e^2 / (4 pi eps0): prefactor of the pair Coulomb energy kappa / r,
# in u um^3 / us^2.
COULOMB = 1.389354574041343e5

# Energy e * (1 volt) in u um^2 / us^2.  Multiply by a voltage in volts
# to convert electrode potentials to internal energy.
EVOLT = 9.6485332021850085e7

# Reduced Planck constant in u um^2 / us.
HBAR = 6.350779920715992e-2

# Boltzmann constant in u um^2 / us^2 per kelvin.  Temperatures are
# usually supplied as k_B T / hbar in rad/us, so this is rarely needed.
KB = 8.3144626094101e3


def thermal_energy(kbt_over_hbar):
    """Energy k_B T from a temperature given as k_B T / hbar in rad/us."""
    return HBAR * kbt_over_hbar


def mean_occupation(omega, kbt_over_hbar):
    """Bose-Einstein mean phonon number of a mode at omega (rad/us).

    The temperature is given as k_B T / hbar in rad/us.  Returns 0 for
    zero temperature.
    """
    import numpy as np

    if kbt_over_hbar <= 0.0:
        return np.zeros_like(np.asarray(omega, dtype=float)) if np.ndim(omega) else 0.0
    return 1.0 / np.expm1(np.asarray(omega, dtype=float) / kbt_over_hbar)
