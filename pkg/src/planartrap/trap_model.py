"""Quadrupole trap electrostatics and Mathieu stability analysis.

The electrode model is a DC quadrupole with in-plane anisotropy gamma
plus an rf quadrupole, both parameterized by voltage amplitudes and a
characteristic electrode distance d0.  Writing the single-ion equation
of motion per axis in the dimensionless time xi = Omega_rf t / 2 gives
the Mathieu form

    d^2 r / d xi^2 + (a - 2 q cos 2 xi) r = 0

with the standard voltage-to-parameter map implemented in
`mathieu_parameters`.  Secular frequencies follow from the Mathieu
characteristic exponent beta as omega = beta * Omega_rf / 2.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.optimize import brentq

from .errors import PlanarityWarning, UnstableRegion
from .oracles import mathieu_monodromy
from .units import EVOLT

__all__ = [
    "TrapConfig",
    "MathieuParams",
    "mathieu_parameters",
    "characteristic_exponent",
    "secular_frequencies",
    "solve_trap",
]

#: planarity requires the out-of-plane secular frequency to exceed the
#: in-plane ones by at least this ratio
PLANARITY_RATIO = 10.0


@dataclass(frozen=True)
class TrapConfig:
    """Static description of the trap and ion species.

    Parameters
    ----------
    dc_voltage : float
        DC quadrupole amplitude U0 in volts.  Negative values confine
        along z for positive ions.
    ac_voltage : float
        rf quadrupole amplitude V0 in volts.
    rf_omega : float
        rf drive angular frequency Omega_rf in rad/us.
    electrode_size : float
        Characteristic electrode distance d0 in um.
    anisotropy : float
        Dimensionless in-plane asymmetry gamma; gamma > 0 softens x
        relative to y.
    ion_mass : float
        Ion mass in u.
    ion_charge : float
        Ion charge in units of e.
    n_ions : int
        Number of ions for crystal stages.
    """

    dc_voltage: float
    ac_voltage: float
    rf_omega: float
    electrode_size: float
    anisotropy: float = 0.0
    ion_mass: float = 171.0
    ion_charge: float = 1.0
    n_ions: int = 1

    def __post_init__(self):
        if self.rf_omega <= 0.0:
            raise ValueError("rf_omega must be positive")
        if self.electrode_size <= 0.0:
            raise ValueError("electrode_size must be positive")
        if self.ion_mass <= 0.0:
            raise ValueError("ion_mass must be positive")
        if self.ion_charge == 0.0:
            raise ValueError("ion_charge must be nonzero")
        if not -1.0 < self.anisotropy < 1.0:
            raise ValueError("anisotropy must lie in (-1, 1)")
        if self.n_ions < 1:
            raise ValueError("n_ions must be at least 1")


@dataclass(frozen=True)
class MathieuParams:
    """Mathieu (a, q) per axis, optionally with exponents and frequencies."""

    a_x: float
    a_y: float
    a_z: float
    q_x: float
    q_y: float
    q_z: float
    beta_x: float | None = None
    beta_y: float | None = None
    beta_z: float | None = None
    omega_x: float | None = None
    omega_y: float | None = None
    omega_z: float | None = None
    planar: bool | None = None


def mathieu_parameters(cfg):
    """Voltage-to-Mathieu map for the three principal axes.

    a_x = 8 (1 + gamma) e U0 / (m d0^2 Omega^2), a_y with (1 - gamma),
    a_z = -16 e U0 / (m d0^2 Omega^2); q_x = q_y = -4 e V0 / (m d0^2
    Omega^2) and q_z = -2 q_x.  Both a and q sum to zero over the three
    axes because the potential is harmonic and satisfies Laplace's
    equation.
    """
    denom = cfg.ion_mass * cfg.electrode_size**2 * cfg.rf_omega**2
    e_u0 = cfg.ion_charge * EVOLT * cfg.dc_voltage
    e_v0 = cfg.ion_charge * EVOLT * cfg.ac_voltage
    a_x = 8.0 * (1.0 + cfg.anisotropy) * e_u0 / denom
    a_y = 8.0 * (1.0 - cfg.anisotropy) * e_u0 / denom
    a_z = -16.0 * e_u0 / denom
    q = -4.0 * e_v0 / denom
    return MathieuParams(a_x=a_x, a_y=a_y, a_z=a_z, q_x=q, q_y=q, q_z=-2.0 * q)


def characteristic_exponent(a, q, order=20):
    """Mathieu characteristic exponent beta in the lowest stability zone.

    Substituting the Floquet ansatz y = exp(i beta xi) sum_n c_n
    exp(2 i n xi) into the Mathieu equation turns the coefficient
    recurrence into a symmetric tridiagonal eigenproblem: a is an
    eigenvalue of H(beta) with diagonal (beta + 2 n)^2 and off-diagonal
    q, truncated at |n| <= order.  beta is found by root-finding the
    lowest eigenvalue branch over beta in (0, 1).

    Stability is gated beforehand on the monodromy-matrix trace over one
    drive period.  Raises UnstableRegion outside the lowest stability
    zone (parameters with beta >= 1 are reported unstable as well; only
    the fundamental zone is supported).
    """
    a = float(a)
    q = float(q)
    mono = mathieu_monodromy(a, q)
    trace = mono[0, 0] + mono[1, 1]
    if not abs(trace) < 2.0:
        raise UnstableRegion(
            f"no real characteristic exponent for a={a:.6g}, q={q:.6g} "
            f"(|monodromy trace| = {abs(trace):.6g} >= 2)"
        )
    if q == 0.0:
        # harmonic limit: beta = sqrt(a)
        if a <= 0.0 or a >= 1.0:
            raise UnstableRegion(f"a={a:.6g} with q=0 lies outside the fundamental zone")
        return float(np.sqrt(a))

    ns = np.arange(-order, order + 1, dtype=float)
    off = np.full(2 * order, q)

    def lowest_eig(beta):
        return eigvalsh_tridiagonal(
            (beta + 2.0 * ns) ** 2, off, select="i", select_range=(0, 0)
        )[0]

    eps = 1e-9
    f_lo = lowest_eig(eps) - a
    f_hi = lowest_eig(1.0 - eps) - a
    if not (f_lo < 0.0 < f_hi):
        raise UnstableRegion(
            f"(a={a:.6g}, q={q:.6g}) is outside the fundamental stability zone"
        )
    beta = brentq(lambda b: lowest_eig(b) - a, eps, 1.0 - eps, xtol=1e-14)
    return float(beta)


def secular_frequencies(params, cfg):
    """Secular frequencies (omega_x, omega_y, omega_z) in rad/us.

    omega_nu = beta_nu * Omega_rf / 2 with beta from
    `characteristic_exponent`.  Emits a PlanarityWarning when the
    out-of-plane frequency fails to dominate the in-plane ones by
    PLANARITY_RATIO.
    """
    beta = tuple(
        characteristic_exponent(a, q)
        for a, q in ((params.a_x, params.q_x), (params.a_y, params.q_y), (params.a_z, params.q_z))
    )
    omega = tuple(b * cfg.rf_omega / 2.0 for b in beta)
    if omega[2] < PLANARITY_RATIO * max(omega[0], omega[1]):
        warnings.warn(
            f"out-of-plane confinement omega_z/2pi = {omega[2] / (2 * np.pi):.4g} MHz is "
            f"less than {PLANARITY_RATIO:g}x the in-plane secular frequencies; the "
            "single-plane assumption may fail",
            PlanarityWarning,
            stacklevel=2,
        )
    return omega


def solve_trap(cfg):
    """Full single-ion analysis: (a, q), exponents, frequencies, planarity."""
    params = mathieu_parameters(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PlanarityWarning)
        omega = secular_frequencies(params, cfg)
    planar = omega[2] >= PLANARITY_RATIO * max(omega[0], omega[1])
    return replace(
        params,
        beta_x=2.0 * omega[0] / cfg.rf_omega,
        beta_y=2.0 * omega[1] / cfg.rf_omega,
        beta_z=2.0 * omega[2] / cfg.rf_omega,
        omega_x=omega[0],
        omega_y=omega[1],
        omega_z=omega[2],
        planar=planar,
    )
