"""Independent cross-checks built from first principles.

Everything in this module deliberately avoids the analytic machinery it
is meant to validate: the Floquet exponent comes from direct monodromy
integration rather than the recurrence eigenproblem, crystal dynamics
come from brute-force integration of the time-dependent equations of
motion, and gate fidelities come from literal operator traces in a
truncated Fock space.  These routines are slow and simple on purpose.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, NoSettle, Runaway, TruncationTooSmall
from ._kernels import eom_run
from .units import COULOMB

__all__ = [
    "FloquetResult",
    "mathieu_monodromy",
    "floquet_exponent",
    "EOMRun",
    "run_eom",
    "TrajectoryRecord",
    "integrate_full_eom",
    "settle_to_periodic_orbit",
    "fock_fidelity",
    "BranchDynamics",
    "integrate_branch_dynamics",
]


# ---------------------------------------------------------------------------
# Mathieu equation by direct integration
# ---------------------------------------------------------------------------


def mathieu_monodromy(a, q, steps=2048):
    """Monodromy matrix of y'' + (a - 2 q cos 2 xi) y = 0 over xi in [0, pi].

    Fixed-step RK4 on the fundamental solution pair.  Columns are the
    solutions with initial conditions (1, 0) and (0, 1).  The
    determinant is 1 up to integration error (no damping term), which
    `floquet_exponent` reports as a consistency check.
    """
    h = np.pi / steps
    y = np.eye(2)

    def deriv(xi, y):
        out = np.empty_like(y)
        out[0] = y[1]
        out[1] = -(a - 2.0 * q * np.cos(2.0 * xi)) * y[0]
        return out

    xi = 0.0
    for n in range(steps):
        k1 = deriv(xi, y)
        k2 = deriv(xi + 0.5 * h, y + 0.5 * h * k1)
        k3 = deriv(xi + 0.5 * h, y + 0.5 * h * k2)
        k4 = deriv(xi + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xi = (n + 1) * h
    return y


@dataclass(frozen=True)
class FloquetResult:
    beta: float
    stable: bool
    trace: float
    det: float


def floquet_exponent(a, q, steps=2048):
    """Characteristic exponent from the monodromy trace.

    For stable parameters the Floquet multipliers are exp(+-i pi beta),
    so trace = 2 cos(pi beta) and beta = arccos(trace / 2) / pi, which
    lands in [0, 1] by construction.  Unstable parameters (|trace| > 2)
    are reported with beta = nan rather than an exception so callers can
    map out stability boundaries.
    """
    m = mathieu_monodromy(a, q, steps=steps)
    trace = float(m[0, 0] + m[1, 1])
    det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    stable = abs(trace) < 2.0
    beta = float(np.arccos(0.5 * trace) / np.pi) if stable else float("nan")
    return FloquetResult(beta=beta, stable=stable, trace=trace, det=det)


# ---------------------------------------------------------------------------
# full time-dependent equations of motion
# ---------------------------------------------------------------------------


@dataclass
class EOMRun:
    """Result of a full-EOM integration (in-plane coordinates, um and us)."""

    positions: np.ndarray
    velocities: np.ndarray
    t_final: float
    recorded: np.ndarray | None = None
    record_times: np.ndarray | None = None


def _eom_coefficients(cfg, params):
    # per-mass spring constants of the time-dependent quadrupole:
    # accel = -(omega^2/4) (a - 2 q cos(omega t)) r  per axis
    w2 = cfg.rf_omega**2
    kdc_x = 0.25 * w2 * params.a_x
    kdc_y = 0.25 * w2 * params.a_y
    kac = -0.5 * w2 * params.q_x
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
    return kdc_x, kdc_y, kac, cpref


def run_eom(cfg, params, positions, velocities=None, *, periods,
            steps_per_period=2048, friction=0.0, record_every=0,
            t0=0.0, runaway=1.0e3):
    """Integrate the driven, mutually interacting ions with no approximations.

    The in-plane equations of motion keep the full cos(Omega t) drive
    and the exact pairwise Coulomb force; `friction` is a viscous
    damping rate eta/m in 1/us used to relax onto the periodic
    attractor.  `record_every` > 0 stores every that-many-th step.
    Raises Runaway when any ion leaves a `runaway` um box or the state
    stops being finite.
    """
    pos = np.array(positions, dtype=float)
    if velocities is None:
        vel = np.zeros_like(pos)
    else:
        vel = np.array(velocities, dtype=float)
    kdc_x, kdc_y, kac, cpref = _eom_coefficients(cfg, params)
    h = (2.0 * np.pi / cfg.rf_omega) / steps_per_period
    n_steps = int(periods * steps_per_period)
    if record_every > 0:
        rec = np.empty((-(-n_steps // record_every), pos.shape[0], 2))
    else:
        rec = np.empty((0, pos.shape[0], 2))
    t_final, n_rec = eom_run(pos, vel, t0, n_steps, h, kdc_x, kdc_y, kac,
                             cfg.rf_omega, friction, cpref, record_every, rec)
    if not np.isfinite(pos).all() or np.abs(pos).max() > runaway:
        raise Runaway(f"ion left the {runaway:g} um region during full-EOM integration")
    times = t0 + h * record_every * np.arange(n_rec) if record_every > 0 else None
    return EOMRun(positions=pos, velocities=vel, t_final=t_final,
                  recorded=rec[:n_rec] if record_every > 0 else None,
                  record_times=times)


def _stroboscopic_energy(pos, vel, kdc_x, kdc_y, kac, cpref):
    # instantaneous mechanical energy per unit mass at drive phase zero,
    # where the quadrupole curvature is kdc + kac (confining in-plane)
    kin = 0.5 * float(np.sum(vel**2))
    pot = 0.5 * float((kdc_x + kac) * np.sum(pos[:, 0] ** 2)
                      + (kdc_y + kac) * np.sum(pos[:, 1] ** 2))
    d = pos[:, None, :] - pos[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    np.fill_diagonal(r, np.inf)
    return kin + pot + 0.5 * cpref * float(np.sum(1.0 / r))


def _settle(cfg, params, positions, velocities, *, friction, steps_per_period,
            tol, max_periods, runaway):
    pos = np.array(positions, dtype=float)
    vel = np.zeros_like(pos) if velocities is None else np.array(velocities, dtype=float)
    kdc_x, kdc_y, kac, cpref = _eom_coefficients(cfg, params)
    h = (2.0 * np.pi / cfg.rf_omega) / steps_per_period
    rec = np.empty((0, pos.shape[0], 2))
    t = 0.0
    delta = np.inf
    energies = [_stroboscopic_energy(pos, vel, kdc_x, kdc_y, kac, cpref)]
    for period in range(1, max_periods + 1):
        prev = pos.copy()
        t, _ = eom_run(pos, vel, t, steps_per_period, h, kdc_x, kdc_y, kac,
                       cfg.rf_omega, friction, cpref, 0, rec)
        if not np.isfinite(pos).all() or np.abs(pos).max() > runaway:
            raise Runaway(f"ion left the {runaway:g} um region after {period} drive periods")
        energies.append(_stroboscopic_energy(pos, vel, kdc_x, kdc_y, kac, cpref))
        delta = float(np.abs(pos - prev).max())
        if delta < tol:
            return pos, vel, t, period, np.array(energies)
    raise NoSettle(
        f"stroboscopic displacement still {delta:.3g} um after {max_periods} periods "
        f"(tolerance {tol:g})"
    )


def _kick_polish(cfg, params, pos, vel, t, *, kick=0.02, tol=2.0e-6,
                 max_periods=20000, steps_per_period=2048, runaway=1.0e3):
    """Remove the viscous-attractor bias from a nearly settled state.

    Viscous friction displaces the attractor itself (the damped orbit's
    DC component shifts in proportion to the damping rate).  The
    frictionless periodic orbit is even in time about a drive zero
    phase, so its stroboscopic velocity vanishes; bleeding a fraction of
    the velocity once per drive period therefore damps the residual
    secular transient without touching the orbit it converges to.

    A single small per-period displacement is not proof of convergence:
    a secular oscillation of amplitude A moves only ~A (omega T)^2 / 2
    per drive period near its turning points, so the displacement must
    stay below tolerance for half a period of the slowest secular mode
    before the orbit counts as found.
    """
    kdc_x, kdc_y, kac, cpref = _eom_coefficients(cfg, params)
    t_drive = 2.0 * np.pi / cfg.rf_omega
    h = t_drive / steps_per_period
    w_slow = min(params.omega_x, params.omega_y)
    window = int(np.ceil(np.pi / (w_slow * t_drive)))
    rec = np.empty((0, pos.shape[0], 2))
    delta = np.inf
    calm = 0
    for period in range(1, max_periods + 1):
        prev = pos.copy()
        t, _ = eom_run(pos, vel, t, steps_per_period, h, kdc_x, kdc_y, kac,
                       cfg.rf_omega, 0.0, cpref, 0, rec)
        vel *= 1.0 - kick
        if not np.isfinite(pos).all() or np.abs(pos).max() > runaway:
            raise Runaway(
                f"ion left the {runaway:g} um region during orbit polish"
            )
        delta = float(np.abs(pos - prev).max())
        calm = calm + 1 if delta < tol else 0
        if calm >= window:
            return pos, vel, t, period
    raise NoSettle(
        f"stroboscopic displacement still {delta:.3g} um after {max_periods} "
        f"polish periods (tolerance {tol:g})"
    )


def settle_to_periodic_orbit(cfg, params, positions, *, friction=0.1,
                             steps_per_period=2048, tol=1.0e-4,
                             max_periods=6000, velocities=None, runaway=1.0e3):
    """Damp the driven crystal onto its periodic orbit.

    Integrates period by period and compares stroboscopic snapshots; the
    orbit counts as settled when successive snapshots agree within `tol`
    um for every ion.  Returns (positions, velocities, n_periods) at a
    drive zero-phase.  Raises NoSettle when max_periods is exhausted.
    """
    pos, vel, _, period, _ = _settle(cfg, params, positions, velocities,
                                     friction=friction,
                                     steps_per_period=steps_per_period,
                                     tol=tol, max_periods=max_periods,
                                     runaway=runaway)
    return pos, vel, period


@dataclass
class TrajectoryRecord:
    """Periodic steady state of the driven crystal, densely sampled.

    times and positions cover the last two drive periods on a uniform
    grid; energies holds the stroboscopic mechanical energy per unit
    mass recorded once per period while the transient damps out.
    """

    times: np.ndarray
    positions: np.ndarray
    settled: bool
    periods: int
    energies: np.ndarray


def integrate_full_eom(cfg, params, seed, *, friction=0.1, tol=1.0e-4,
                       max_periods=6000, steps_per_period=2048,
                       samples_per_period=256, runaway=1.0e3,
                       polish_tol=2.0e-6):
    """Brute-force periodic orbit of the driven crystal.

    Damps the seed configuration onto the attractor (successive
    stroboscopic snapshots within `tol` um), polishes away the
    friction-induced attractor displacement with stroboscopic velocity
    kicks, then records two frictionless drive periods densely.  Ion
    counts above 19 are rejected up front: cost grows as N^2 per step
    and thousands of periods are typically needed.
    """
    seed = np.asarray(seed, dtype=float)
    if seed.shape[0] > 19:
        raise ConfigError(
            f"full-EOM reference limited to 19 ions (got {seed.shape[0]})"
        )
    pos, vel, t, period, energies = _settle(
        cfg, params, seed, None, friction=friction,
        steps_per_period=steps_per_period, tol=tol, max_periods=max_periods,
        runaway=runaway)
    pos, vel, t, extra = _kick_polish(
        cfg, params, pos, vel, t, tol=polish_tol,
        steps_per_period=steps_per_period, runaway=runaway)
    every = max(1, steps_per_period // samples_per_period)
    out = run_eom(cfg, params, pos, vel, periods=2,
                  steps_per_period=steps_per_period, friction=0.0,
                  record_every=every, t0=t, runaway=runaway)
    return TrajectoryRecord(times=out.record_times, positions=out.recorded,
                            settled=True, periods=period + extra,
                            energies=energies)


# ---------------------------------------------------------------------------
# gate fidelity by literal Fock-space traces
# ---------------------------------------------------------------------------

_BRANCHES = ((1, 1), (1, -1), (-1, 1), (-1, -1))

#: relative weight of the discarded thermal tail that is considered safe
_TAIL_TOL = 1.0e-8


def _thermal_levels(nbar, beta_max):
    if nbar <= 0.0:
        tail = 0
    else:
        x = nbar / (1.0 + nbar)
        tail = int(np.ceil(np.log(_TAIL_TOL) / np.log(x)))
    # headroom for the displacement to act inside the truncated space,
    # with a hard floor of 10 (nbar + |beta|^2 + 1)
    floor = int(np.ceil(10.0 * (nbar + beta_max**2 + 1.0)))
    return max(24, tail + 6, floor) + int(np.ceil(6.0 * beta_max))


def fock_fidelity(alphas, phi12, nbars, *, levels=None):
    """Entangling-gate fidelity by brute-force operator traces.

    `alphas` has shape (2, K): residual coherent displacement of mode k
    driven through ion j.  Each spin branch s = (s1, s2) displaces mode
    k by s1 alpha_1k + s2 alpha_2k and acquires the two-spin phase
    s1 s2 phi12.  The fidelity against the conditional-phase target
    exp(i pi/4 sigma_z sigma_z) on the |++> input is assembled from
    per-mode traces tr[rho_k D(beta')^dag D(beta)] with rho_k thermal at
    occupation nbar_k, evaluated with dense truncated operators and
    scipy's expm.  Per-mode factorization keeps the cost linear in K.

    `levels` pins the per-mode truncation; too small a value raises
    TruncationTooSmall instead of silently biasing the result.
    """
    alphas = np.asarray(alphas, dtype=complex)
    if alphas.ndim != 2 or alphas.shape[0] != 2:
        raise ValueError("alphas must have shape (2, n_modes)")
    nbars = np.asarray(nbars, dtype=float)
    n_modes = alphas.shape[1]
    delta = phi12 - np.pi / 4.0

    # per-branch displacement of each mode
    betas = np.array([s1 * alphas[0] + s2 * alphas[1] for s1, s2 in _BRANCHES])

    traces = np.empty((len(_BRANCHES), len(_BRANCHES), n_modes), dtype=complex)
    for k in range(n_modes):
        nbar = float(nbars[k])
        beta_max = float(np.abs(betas[:, k]).max())
        L = _thermal_levels(nbar, beta_max) if levels is None else int(levels)
        if nbar > 0.0:
            x = nbar / (1.0 + nbar)
            if x**L > _TAIL_TOL:
                raise TruncationTooSmall(
                    f"levels={L} leaves thermal tail {x**L:.3g} > {_TAIL_TOL:g} "
                    f"at nbar={nbar:g}"
                )
            pops = (1.0 - x) * x ** np.arange(L)
        else:
            pops = np.zeros(L)
            pops[0] = 1.0
        n_idx = np.arange(1, L)
        a_op = np.zeros((L, L))
        a_op[n_idx - 1, n_idx] = np.sqrt(n_idx)
        disp = {}
        for b in set(betas[:, k]):
            disp[b] = expm(b * a_op.T - np.conj(b) * a_op)
        for i, (s1, s2) in enumerate(_BRANCHES):
            for j, (s1p, s2p) in enumerate(_BRANCHES):
                d = disp[betas[j, k]].conj().T @ disp[betas[i, k]]
                traces[i, j, k] = np.sum(pops * np.diagonal(d))

    total = 0.0 + 0.0j
    for i, (s1, s2) in enumerate(_BRANCHES):
        for j, (s1p, s2p) in enumerate(_BRANCHES):
            phase = np.exp(1j * delta * (s1 * s2 - s1p * s2p))
            total += phase * np.prod(traces[i, j])
    return float(total.real) / 16.0


# ---------------------------------------------------------------------------
# spin-dependent force by direct Schrodinger integration
# ---------------------------------------------------------------------------


@dataclass
class BranchDynamics:
    """Coherent displacements and phases recovered from wavefunction evolution."""

    alpha1: complex
    alpha2: complex
    phi12: float
    branch_alphas: dict
    branch_phases: dict


def integrate_branch_dynamics(rabi_fns, gs, mode_omega, mu, t_final, *,
                              levels=40, steps=200_000):
    """Evolve one motional mode under the spin-dependent force, per branch.

    The interaction-picture Hamiltonian on spin branch (s1, s2) is

        H(t) = -(s1 c1(t) + s2 c2(t)) (a exp(-i w t) + a^dag exp(i w t)),

    with c_j(t) = g_j * rabi_fns[j](t) * sin(mu t).  Starting from the
    motional ground state, fixed-step RK4 integration yields a coherent
    state whose amplitude <a> must match i g_j int rabi sin(mu t)
    exp(i w t) dt summed over branches, and whose global phase isolates
    the two-spin geometric phase phi12 = (1/4) sum_s s1 s2 theta_s.
    The overlap phase theta(t) = arg<alpha(t)|psi(t)> is sampled along
    the evolution and unwrapped, so branch phases beyond +-pi are
    tracked correctly.

    Pure validation tool: O(steps * levels) per branch, no numba.
    """
    sqrt_n = np.sqrt(np.arange(1, levels))
    n_arr = np.arange(levels)
    log_fact = np.cumsum(np.log(np.maximum(n_arr, 1)))

    def overlap_phase(psi):
        # phase of <alpha|psi> with alpha = <a>; for alpha = 0 the
        # reference collapses to <0|psi>
        alpha = complex(np.vdot(psi, lower(psi)))
        if alpha == 0:
            return alpha, float(np.angle(psi[0]))
        coh = np.exp(-(abs(alpha) ** 2) / 2.0
                     + n_arr * np.log(complex(alpha)) - 0.5 * log_fact)
        return alpha, float(np.angle(np.vdot(coh, psi)))

    def lower(psi):
        out = np.zeros_like(psi)
        out[:-1] = sqrt_n * psi[1:]
        return out

    def raise_(psi):
        out = np.zeros_like(psi)
        out[1:] = sqrt_n * psi[:-1]
        return out

    h = t_final / steps
    sample_every = max(1, steps // 512)
    branch_alphas = {}
    branch_phases = {}
    for s1, s2 in _BRANCHES:

        def deriv(t, psi):
            c = (s1 * gs[0] * rabi_fns[0](t) + s2 * gs[1] * rabi_fns[1](t)) * np.sin(mu * t)
            # i dpsi/dt = H psi  with  H = -c (a e^{-iwt} + a^dag e^{iwt})
            return 1j * c * (np.exp(-1j * mode_omega * t) * lower(psi)
                             + np.exp(1j * mode_omega * t) * raise_(psi))

        psi = np.zeros(levels, dtype=complex)
        psi[0] = 1.0
        t = 0.0
        phases = [0.0]
        for n in range(steps):
            k1 = deriv(t, psi)
            k2 = deriv(t + 0.5 * h, psi + 0.5 * h * k1)
            k3 = deriv(t + 0.5 * h, psi + 0.5 * h * k2)
            k4 = deriv(t + h, psi + h * k3)
            psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = (n + 1) * h
            if (n + 1) % sample_every == 0 or n + 1 == steps:
                phases.append(overlap_phase(psi)[1])
        tail = float(np.abs(psi[-4:]).max())
        if tail > 1.0e-6:
            raise TruncationTooSmall(
                f"Fock amplitude {tail:.3g} near truncation level {levels}"
            )
        alpha, _ = overlap_phase(psi)
        branch_alphas[(s1, s2)] = alpha
        branch_phases[(s1, s2)] = float(np.unwrap(np.array(phases))[-1])

    phi12 = 0.25 * sum(s1 * s2 * branch_phases[(s1, s2)] for s1, s2 in _BRANCHES)
    alpha1 = 0.25 * sum(s1 * branch_alphas[(s1, s2)] for s1, s2 in _BRANCHES)
    alpha2 = 0.25 * sum(s2 * branch_alphas[(s1, s2)] for s1, s2 in _BRANCHES)
    return BranchDynamics(alpha1=alpha1, alpha2=alpha2, phi12=phi12,
                          branch_alphas=branch_alphas, branch_phases=branch_phases)
