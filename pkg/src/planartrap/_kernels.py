"""Hot numeric kernels: pairwise Coulomb sums and damped integrators.

Two interchangeable backends live here.  The default compiles the
scalar-loop kernels with numba's @njit; setting the environment variable
``PLANARTRAP_NO_NUMBA=1`` (or running without numba installed) selects a
vectorized pure-numpy implementation of the same algorithms instead.
Both backends use identical update rules and tolerances; trajectories
agree to floating-point roundoff (summation order differs).

All kernels work in per-mass quantities: stiffnesses are omega^2 in
1/us^2, the Coulomb prefactor is kappa q^2 / m in um^3/us^2, and the
friction coefficient is eta/m in 1/us.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("PLANARTRAP_NO_NUMBA", "0") != "1"
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "pair_accel",
    "pair_min_dist",
    "coulomb_energy",
    "relax_run",
    "eom_run",
]


# ---------------------------------------------------------------------------
# pure-python reference implementations (compiled by numba when available)
# ---------------------------------------------------------------------------


def _pair_accel_loop(pos, cpref, out):
    n = pos.shape[0]
    out[:] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r2 = dx * dx + dy * dy
            inv_r3 = 1.0 / (r2 * np.sqrt(r2))
            fx = cpref * dx * inv_r3
            fy = cpref * dy * inv_r3
            out[i, 0] += fx
            out[i, 1] += fy
            out[j, 0] -= fx
            out[j, 1] -= fy
    return out


def _pair_min_dist_loop(pos):
    n = pos.shape[0]
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = np.sqrt(dx * dx + dy * dy)
            if d < best:
                best = d
    return best


def _coulomb_energy_loop(pos, cpref):
    n = pos.shape[0]
    e = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            e += cpref / np.sqrt(dx * dx + dy * dy)
    return e


def _relax_run_loop(pos, vel, kx, ky, eta_m, cpref, dt, max_steps, atol,
                    guard, check_every, energy_every, energies):
    """Damped velocity-Verlet descent to a stationary crystal.

    Returns (steps, status, max_accel, n_energy) where status is
    0 = converged, 1 = step cap hit, 2 = collision under guard distance.
    The energies array receives per-mass total energy samples.
    """
    n = pos.shape[0]
    acc = np.zeros_like(pos)
    acc_new = np.zeros_like(pos)
    _pair_accel_loop(pos, cpref, acc)
    for i in range(n):
        acc[i, 0] += -kx * pos[i, 0] - eta_m * vel[i, 0]
        acc[i, 1] += -ky * pos[i, 1] - eta_m * vel[i, 1]
    steps = 0
    n_energy = 0
    max_acc = np.inf
    status = 1
    while steps < max_steps:
        for i in range(n):
            vel[i, 0] += 0.5 * dt * acc[i, 0]
            vel[i, 1] += 0.5 * dt * acc[i, 1]
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
        _pair_accel_loop(pos, cpref, acc_new)
        for i in range(n):
            acc_new[i, 0] += -kx * pos[i, 0] - eta_m * vel[i, 0]
            acc_new[i, 1] += -ky * pos[i, 1] - eta_m * vel[i, 1]
        for i in range(n):
            vel[i, 0] += 0.5 * dt * acc_new[i, 0]
            vel[i, 1] += 0.5 * dt * acc_new[i, 1]
            acc[i, 0] = acc_new[i, 0]
            acc[i, 1] = acc_new[i, 1]
        steps += 1
        if steps % energy_every == 0 and n_energy < energies.shape[0]:
            e = _coulomb_energy_loop(pos, cpref)
            for i in range(n):
                e += 0.5 * (vel[i, 0] ** 2 + vel[i, 1] ** 2)
                e += 0.5 * (kx * pos[i, 0] ** 2 + ky * pos[i, 1] ** 2)
            energies[n_energy] = e
            n_energy += 1
        if steps % check_every == 0:
            if _pair_min_dist_loop(pos) < guard:
                status = 2
                break
            # conservative force only: damping does not count toward the
            # stationarity criterion
            _pair_accel_loop(pos, cpref, acc_new)
            max_acc = 0.0
            for i in range(n):
                fx = acc_new[i, 0] - kx * pos[i, 0]
                fy = acc_new[i, 1] - ky * pos[i, 1]
                f = np.sqrt(fx * fx + fy * fy)
                if f > max_acc:
                    max_acc = f
            if max_acc <= atol:
                status = 0
                break
    return steps, status, max_acc, n_energy


def _eom_run_loop(pos, vel, t0, n_steps, h, kdc_x, kdc_y, kac, om_rf, eta_m,
                  cpref, record_every, rec):
    """Fixed-step RK4 for the full time-dependent in-plane equations of motion.

    Trap acceleration per ion: -(kdc + kac cos(om_rf t)) r - eta_m v,
    plus the pairwise Coulomb term.  Records positions every
    `record_every` steps into rec (shape (n_rec, n, 2)); pass
    record_every = 0 to disable recording.  Returns (t_end, n_recorded).
    """
    n = pos.shape[0]
    k1x = np.zeros_like(pos)
    k2x = np.zeros_like(pos)
    k3x = np.zeros_like(pos)
    k4x = np.zeros_like(pos)
    k1v = np.zeros_like(pos)
    k2v = np.zeros_like(pos)
    k3v = np.zeros_like(pos)
    k4v = np.zeros_like(pos)
    tmp_p = np.zeros_like(pos)
    tmp_v = np.zeros_like(pos)
    t = t0
    n_rec = 0

    for step in range(n_steps):
        if record_every > 0 and step % record_every == 0 and n_rec < rec.shape[0]:
            for i in range(n):
                rec[n_rec, i, 0] = pos[i, 0]
                rec[n_rec, i, 1] = pos[i, 1]
            n_rec += 1

        c1 = np.cos(om_rf * t)
        c2 = np.cos(om_rf * (t + 0.5 * h))
        c4 = np.cos(om_rf * (t + h))

        _pair_accel_loop(pos, cpref, k1v)
        for i in range(n):
            k1v[i, 0] += -(kdc_x + kac * c1) * pos[i, 0] - eta_m * vel[i, 0]
            k1v[i, 1] += -(kdc_y + kac * c1) * pos[i, 1] - eta_m * vel[i, 1]
            k1x[i, 0] = vel[i, 0]
            k1x[i, 1] = vel[i, 1]

        for i in range(n):
            tmp_p[i, 0] = pos[i, 0] + 0.5 * h * k1x[i, 0]
            tmp_p[i, 1] = pos[i, 1] + 0.5 * h * k1x[i, 1]
            tmp_v[i, 0] = vel[i, 0] + 0.5 * h * k1v[i, 0]
            tmp_v[i, 1] = vel[i, 1] + 0.5 * h * k1v[i, 1]
        _pair_accel_loop(tmp_p, cpref, k2v)
        for i in range(n):
            k2v[i, 0] += -(kdc_x + kac * c2) * tmp_p[i, 0] - eta_m * tmp_v[i, 0]
            k2v[i, 1] += -(kdc_y + kac * c2) * tmp_p[i, 1] - eta_m * tmp_v[i, 1]
            k2x[i, 0] = tmp_v[i, 0]
            k2x[i, 1] = tmp_v[i, 1]

        for i in range(n):
            tmp_p[i, 0] = pos[i, 0] + 0.5 * h * k2x[i, 0]
            tmp_p[i, 1] = pos[i, 1] + 0.5 * h * k2x[i, 1]
            tmp_v[i, 0] = vel[i, 0] + 0.5 * h * k2v[i, 0]
            tmp_v[i, 1] = vel[i, 1] + 0.5 * h * k2v[i, 1]
        _pair_accel_loop(tmp_p, cpref, k3v)
        for i in range(n):
            k3v[i, 0] += -(kdc_x + kac * c2) * tmp_p[i, 0] - eta_m * tmp_v[i, 0]
            k3v[i, 1] += -(kdc_y + kac * c2) * tmp_p[i, 1] - eta_m * tmp_v[i, 1]
            k3x[i, 0] = tmp_v[i, 0]
            k3x[i, 1] = tmp_v[i, 1]

        for i in range(n):
            tmp_p[i, 0] = pos[i, 0] + h * k3x[i, 0]
            tmp_p[i, 1] = pos[i, 1] + h * k3x[i, 1]
            tmp_v[i, 0] = vel[i, 0] + h * k3v[i, 0]
            tmp_v[i, 1] = vel[i, 1] + h * k3v[i, 1]
        _pair_accel_loop(tmp_p, cpref, k4v)
        for i in range(n):
            k4v[i, 0] += -(kdc_x + kac * c4) * tmp_p[i, 0] - eta_m * tmp_v[i, 0]
            k4v[i, 1] += -(kdc_y + kac * c4) * tmp_p[i, 1] - eta_m * tmp_v[i, 1]
            k4x[i, 0] = tmp_v[i, 0]
            k4x[i, 1] = tmp_v[i, 1]

        for i in range(n):
            pos[i, 0] += h / 6.0 * (k1x[i, 0] + 2 * k2x[i, 0] + 2 * k3x[i, 0] + k4x[i, 0])
            pos[i, 1] += h / 6.0 * (k1x[i, 1] + 2 * k2x[i, 1] + 2 * k3x[i, 1] + k4x[i, 1])
            vel[i, 0] += h / 6.0 * (k1v[i, 0] + 2 * k2v[i, 0] + 2 * k3v[i, 0] + k4v[i, 0])
            vel[i, 1] += h / 6.0 * (k1v[i, 1] + 2 * k2v[i, 1] + 2 * k3v[i, 1] + k4v[i, 1])
        t = t0 + (step + 1) * h
    return t, n_rec


# ---------------------------------------------------------------------------
# vectorized numpy backend
# ---------------------------------------------------------------------------


def _pair_accel_numpy(pos, cpref, out):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    inv_r3 = r2 ** -1.5
    np.einsum("ijk,ij->ik", d, inv_r3, out=out)
    out *= cpref
    return out


def _pair_min_dist_numpy(pos):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    return float(np.sqrt(r2.min()))


def _coulomb_energy_numpy(pos, cpref):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    iu = np.triu_indices(pos.shape[0], k=1)
    return float(cpref * np.sum(r2[iu] ** -0.5))


def _relax_run_numpy(pos, vel, kx, ky, eta_m, cpref, dt, max_steps, atol,
                     guard, check_every, energy_every, energies):
    stiff = np.array([kx, ky])
    acc = np.empty_like(pos)
    acc_new = np.empty_like(pos)
    _pair_accel_numpy(pos, cpref, acc)
    acc += -stiff * pos - eta_m * vel
    steps = 0
    n_energy = 0
    max_acc = np.inf
    status = 1
    while steps < max_steps:
        vel += 0.5 * dt * acc
        pos += dt * vel
        _pair_accel_numpy(pos, cpref, acc_new)
        acc_new += -stiff * pos - eta_m * vel
        vel += 0.5 * dt * acc_new
        acc[:] = acc_new
        steps += 1
        if steps % energy_every == 0 and n_energy < energies.shape[0]:
            e = _coulomb_energy_numpy(pos, cpref)
            e += 0.5 * float(np.sum(vel * vel))
            e += 0.5 * float(np.sum(stiff * pos * pos))
            energies[n_energy] = e
            n_energy += 1
        if steps % check_every == 0:
            if _pair_min_dist_numpy(pos) < guard:
                status = 2
                break
            _pair_accel_numpy(pos, cpref, acc_new)
            acc_new -= stiff * pos
            max_acc = float(np.sqrt((acc_new ** 2).sum(axis=1)).max())
            if max_acc <= atol:
                status = 0
                break
    return steps, status, max_acc, n_energy


def _eom_run_numpy(pos, vel, t0, n_steps, h, kdc_x, kdc_y, kac, om_rf, eta_m,
                   cpref, record_every, rec):
    kdc = np.array([kdc_x, kdc_y])
    acc = np.empty_like(pos)

    def deriv(p, v, t, out):
        _pair_accel_numpy(p, cpref, out)
        out -= (kdc + kac * np.cos(om_rf * t)) * p
        out -= eta_m * v
        return out

    t = t0
    n_rec = 0
    for step in range(n_steps):
        if record_every > 0 and step % record_every == 0 and n_rec < rec.shape[0]:
            rec[n_rec] = pos
            n_rec += 1
        k1v = deriv(pos, vel, t, np.empty_like(pos))
        k1x = vel.copy()
        k2v = deriv(pos + 0.5 * h * k1x, vel + 0.5 * h * k1v, t + 0.5 * h, np.empty_like(pos))
        k2x = vel + 0.5 * h * k1v
        k3v = deriv(pos + 0.5 * h * k2x, vel + 0.5 * h * k2v, t + 0.5 * h, np.empty_like(pos))
        k3x = vel + 0.5 * h * k2v
        k4v = deriv(pos + h * k3x, vel + h * k3v, t + h, np.empty_like(pos))
        k4x = vel + h * k3v
        pos += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        vel += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = t0 + (step + 1) * h
    return t, n_rec


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

if USE_NUMBA:
    _pair_accel_loop = njit(cache=True)(_pair_accel_loop)
    _pair_min_dist_loop = njit(cache=True)(_pair_min_dist_loop)
    _coulomb_energy_loop = njit(cache=True)(_coulomb_energy_loop)
    _relax_run_loop = njit(cache=True)(_relax_run_loop)
    _eom_run_loop = njit(cache=True)(_eom_run_loop)
    pair_accel = _pair_accel_loop
    pair_min_dist = _pair_min_dist_loop
    coulomb_energy = _coulomb_energy_loop
    relax_run = _relax_run_loop
    eom_run = _eom_run_loop
else:
    pair_accel = _pair_accel_numpy
    pair_min_dist = _pair_min_dist_numpy
    coulomb_energy = _coulomb_energy_numpy
    relax_run = _relax_run_numpy
    eom_run = _eom_run_numpy
