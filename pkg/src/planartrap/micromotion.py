"""Micromotion-resolved periodic orbits of the driven crystal.

The crystal in the rf trap never sits still: each ion executes a
pi-periodic (in xi = Omega t / 2) orbit around its average position.
This module constructs that orbit from a quadratic expansion of the
Coulomb interaction.  Writing the in-plane coordinates as one vector u
of length 2N, the exact equations of motion per unit mass are

    u'' = -M_DC u + (Omega^2 / 2) q cos(Omega t) u + F_C(u) / m.

Linearizing F_C about a reference configuration r0 and keeping the
drive on the *absolute* coordinate (not the deviation; the distinction
feeds the DC self-consistency) gives, in the normal coordinates of
K = M_DC + Hess(V_C)/m, one driven Mathieu equation per mode:

    v_i'' + (a_i - 2 q cos 2 xi) v_i = f_i,    a_i = 4 lambda_i / Omega^2.

The pi-periodic response is an even cosine series in the drive
harmonics; its DC term feeds back into r0 until self-consistent.  The
result doubles as an initial condition generator for the exact
integrator in `oracles`, which is how the whole construction is
validated.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (CoincidentIons, ConfigError, NonConvergence,
                     ResonantDrive, UnstableRegion)
from .units import COULOMB

__all__ = [
    "QuadraticModel",
    "MicromotionExpansion",
    "coulomb_force_hessian",
    "quadratic_expansion",
    "solve_driven_mathieu",
    "self_consistent_positions",
    "trajectory",
    "micromotion_amplitudes",
]

#: relative size of the last kept drive-harmonic coefficient
_SERIES_RTOL = 1.0e-12
#: hard cap on the cosine-series order
_SERIES_NMAX = 20
#: a mode whose Mathieu index sits this close to 4 n^2 is resonantly driven
_RESONANCE_TOL = 1.0e-6


def coulomb_force_hessian(positions, cpref):
    """Per-mass Coulomb force (2N,) and Hessian of V_C/m (2N, 2N).

    positions is (N, 2) in um; cpref = kappa Q^2 / m.  The force uses
    the interleaved (x1, y1, x2, y2, ...) layout matching the flattened
    positions array.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    inv_r3 = r2**-1.5
    inv_r5 = r2**-2.5

    force = cpref * np.einsum("ijk,ij->ik", d, inv_r3).reshape(-1)

    # pair block of Hess(1/r): (3 d d^T - r^2 I) / r^5
    blocks = 3.0 * np.einsum("ija,ijb,ij->ijab", d, d, inv_r5)
    blocks -= np.einsum("ij,ab->ijab", inv_r3, np.eye(2))
    blocks *= cpref
    hess = -blocks.transpose(0, 2, 1, 3).copy()
    hess[np.arange(n), :, np.arange(n), :] = blocks.sum(axis=1)
    return force, hess.reshape(2 * n, 2 * n)


@dataclass
class QuadraticModel:
    """Normal-mode form of the driven crystal linearized about r0."""

    r0: np.ndarray           # (N, 2) reference configuration, um
    modes: np.ndarray        # (2N, 2N) orthonormal eigenvectors, columns
    stiffness: np.ndarray    # (2N,) per-mass eigenvalues lambda_i, 1/us^2
    a: np.ndarray            # (2N,) Mathieu index per mode
    f: np.ndarray            # (2N,) constant drive per mode, Mathieu-normalized
    q: float


def quadratic_expansion(cfg, params, positions, extra_accel=None):
    """Linearize the driven equations of motion about `positions`.

    `extra_accel` (flat 2N, um/us^2) is added to the constant term; the
    self-consistency loop uses it to feed back the period-averaged
    Coulomb anharmonicity of the previous orbit.
    """
    if abs(params.q_x - params.q_y) > 1.0e-15 * max(1.0, abs(params.q_x)):
        raise ConfigError("in-plane drive must be isotropic (q_x == q_y)")
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n > 1:
        d = pos[:, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        np.fill_diagonal(r2, np.inf)
        if float(r2.min()) < 1.0e-6:
            raise CoincidentIons("pair distance below 1e-3 um in reference "
                                 "configuration")
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
    u0 = pos.reshape(-1)

    w2 = cfg.rf_omega**2
    m_dc = np.tile([0.25 * w2 * params.a_x, 0.25 * w2 * params.a_y], n)
    force, m_c = coulomb_force_hessian(pos, cpref)
    k = m_c + np.diag(m_dc)
    lam, modes = np.linalg.eigh(k)

    # constant term of the linearized EOM, in absolute coordinates
    g = force + m_c @ u0
    if extra_accel is not None:
        g = g + extra_accel
    a = 4.0 * lam / w2
    f = (4.0 / w2) * (modes.T @ g)
    return QuadraticModel(r0=pos, modes=modes, stiffness=lam, a=a, f=f,
                          q=params.q_x)


def solve_driven_mathieu(a, q, *, rtol=_SERIES_RTOL, nmax=_SERIES_NMAX):
    """Cosine series of the pi-periodic solution of v'' + (a - 2q cos 2xi) v = 1.

    Returns coefficients c with v(xi) = sum_n c_n cos(2 n xi).  The
    truncated recurrence

        a c_0 - q c_1 = 1
        (a - 4) c_1 - q (2 c_0 + c_2) = 0
        (a - 4 n^2) c_n - q (c_{n-1} + c_{n+1}) = 0

    is solved at increasing order until the last coefficient falls below
    rtol * |c_0|.  A Mathieu index within _RESONANCE_TOL of 4 n^2
    raises ResonantDrive; a non-positive static response c_0 means the
    reference configuration is on the wrong side of the lowest stability
    boundary and raises UnstableRegion.
    """
    a = float(a)
    q = float(q)
    for nc in range(min(6, nmax), nmax + 1):
        res = np.abs(a - 4.0 * np.arange(nc + 1) ** 2)
        if res.min() < _RESONANCE_TOL:
            raise ResonantDrive(
                f"Mathieu index a={a:.6g} within {_RESONANCE_TOL:g} of a drive "
                f"resonance 4 n^2 (n={int(res.argmin())})"
            )
        m = np.diag(a - 4.0 * np.arange(nc + 1) ** 2).astype(float)
        for i in range(nc):
            m[i, i + 1] = -q
            m[i + 1, i] = -q
        if nc >= 1:
            m[1, 0] = -2.0 * q
        rhs = np.zeros(nc + 1)
        rhs[0] = 1.0
        c = np.linalg.solve(m, rhs)
        if not np.isfinite(c).all():
            raise UnstableRegion(f"driven response diverges at a={a:.6g}, q={q:.6g}")
        if abs(c[-1]) <= rtol * abs(c[0]) or q == 0.0:
            if c[0] <= 0.0:
                raise UnstableRegion(
                    f"static response is anti-restoring at a={a:.6g}, q={q:.6g} "
                    "(below the lowest Mathieu stability boundary)"
                )
            return c
    raise NonConvergence(
        f"cosine series for a={a:.6g}, q={q:.6g} not converged at order {nmax}"
    )


@dataclass
class MicromotionExpansion:
    """Self-consistent periodic orbit u(t) = sum_n harmonics[n] cos(n Omega t)."""

    harmonics: np.ndarray    # (n_harmonics, N, 2), um; harmonics[0] is r0
    model: QuadraticModel
    rf_omega: float
    iterations: int
    residual: float          # last DC position update, um

    @property
    def r0(self):
        return self.harmonics[0]

    @property
    def r1(self):
        return self.harmonics[1]

    @property
    def r2(self):
        return self.harmonics[2]


def _harmonics_from_model(model):
    """Stack U (f * c_n) over harmonics; returns (n_h, N, 2)."""
    n_modes = model.a.shape[0]
    fmax = float(np.abs(model.f).max())
    series = []
    for i in range(n_modes):
        try:
            series.append(solve_driven_mathieu(model.a[i], model.q))
        except UnstableRegion:
            # rotation-like zero modes of round crystals can sit a hair
            # outside the stability region; nothing drives them, so the
            # periodic response is zero and the marginal instability of
            # the free motion is irrelevant to the forced orbit
            if abs(model.f[i]) <= 1.0e-6 * fmax:
                series.append(np.zeros(1))
            else:
                raise
    n_h = max(3, max(len(c) for c in series))
    coeff = np.zeros((n_modes, n_h))
    for i, c in enumerate(series):
        coeff[i, : len(c)] = c
    weighted = model.f[:, None] * coeff
    flat = model.modes @ weighted          # (2N, n_h)
    return flat.T.reshape(n_h, -1, 2)


def _coulomb_force_flat(positions, cpref):
    """Pairwise Coulomb force for a (T, N, 2) stack, returned as (T, 2N)."""
    d = positions[:, :, None, :] - positions[:, None, :, :]
    r2 = np.einsum("tijk,tijk->tij", d, d)
    t, n = positions.shape[:2]
    r2[:, np.arange(n), np.arange(n)] = np.inf
    inv_r3 = r2**-1.5
    return cpref * np.einsum("tijk,tij->tik", d, inv_r3).reshape(t, -1)


def _anharmonic_mean_accel(harmonics, rf_omega, cpref, force0, m_c,
                           n_phase=64, chunk=16):
    """Period average of F_C(u(t)) minus its linearization about r0.

    The linear model replaces the Coulomb force along the orbit with
    F_C(r0) + M_C (u - r0); the convexity of 1/r^2 makes the true
    average slightly larger.  This residual is what pushes the DC
    positions outward beyond the pseudopotential equilibrium.
    """
    n_h = harmonics.shape[0]
    u0 = harmonics[0].reshape(-1)
    period = 2.0 * np.pi / rf_omega
    times = period * np.arange(n_phase) / n_phase
    acc = np.zeros_like(u0)
    for lo in range(0, n_phase, chunk):
        tt = times[lo:lo + chunk]
        phases = np.cos(np.outer(tt * rf_omega, np.arange(n_h)))
        orbit = np.einsum("tn,nia->tia", phases, harmonics)
        du = orbit.reshape(len(tt), -1) - u0
        resid = _coulomb_force_flat(orbit, cpref) - force0 - du @ m_c.T
        acc += resid.sum(axis=0)
    return acc / n_phase


def self_consistent_positions(cfg, params, positions, *, tol=1.0e-4,
                              max_iter=50):
    """Periodic orbit of the driven crystal, self-consistent in its DC part.

    Starting from a secular equilibrium, alternate between linearizing
    the Coulomb force about r0 and recomputing the driven response until
    the DC component of the orbit reproduces r0 within `tol` um.  The
    constant term carries the period-averaged Coulomb anharmonicity of
    the previous orbit, so the converged DC balance holds against the
    true time-averaged force, not just its linearization.
    """
    r0 = np.asarray(positions, dtype=float)
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
    n = r0.shape[0]
    model = None
    extra = None
    for it in range(1, max_iter + 1):
        model = quadratic_expansion(cfg, params, r0, extra_accel=extra)
        harmonics = _harmonics_from_model(model)
        delta = float(np.abs(harmonics[0] - r0).max())
        r0 = harmonics[0]
        if n > 1:
            force0, m_c = coulomb_force_hessian(r0, cpref)
            extra = _anharmonic_mean_accel(harmonics, cfg.rf_omega, cpref,
                                           force0, m_c)
        # first pass has no anharmonic term yet; require one refreshed cycle
        if delta < tol and it >= 2:
            return MicromotionExpansion(harmonics=harmonics, model=model,
                                        rf_omega=cfg.rf_omega, iterations=it,
                                        residual=delta)
    raise NonConvergence(
        f"DC component still moving {delta:.3g} um after {max_iter} iterations",
        best=MicromotionExpansion(harmonics=harmonics, model=model,
                                  rf_omega=cfg.rf_omega, iterations=max_iter,
                                  residual=delta),
    )


def trajectory(expansion, times):
    """Evaluate the periodic orbit at the given times; returns (T, N, 2) um."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n_h = expansion.harmonics.shape[0]
    phases = np.cos(np.outer(times * expansion.rf_omega, np.arange(n_h)))
    return np.einsum("tn,nia->tia", phases, expansion.harmonics)


def micromotion_amplitudes(expansion, n_phase=256):
    """Per-ion peak micromotion excursion max_t |r_i(t) - r0_i|, ascending.

    Sampled over one drive period; with the cosine series truncated at
    |c_n| < 1e-12 c_0 the sampling error is negligible against the 1e-4
    um convergence of the orbit itself.
    """
    period = 2.0 * np.pi / expansion.rf_omega
    times = period * np.arange(n_phase) / n_phase
    excursion = trajectory(expansion, times) - expansion.r0[None]
    return np.sort(np.linalg.norm(excursion, axis=2).max(axis=0))
