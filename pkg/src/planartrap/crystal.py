"""Planar crystal equilibria in the pseudopotential.

The in-plane problem is N ions in a 2D anisotropic harmonic well with
mutual Coulomb repulsion; equilibria are found by damped velocity-Verlet
descent from a hexagonal seed.  Everything here works in the secular
(time-averaged) picture; the full rf-driven motion is layered on top by
the micromotion and oracle modules.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import CoincidentIons, CollisionDetected, NonConvergence
from ._kernels import coulomb_energy, pair_min_dist, relax_run
from .units import COULOMB

__all__ = [
    "CrystalState",
    "seed_hexagonal",
    "relax",
    "nn_distances",
    "bond_pairs",
    "bond_distances",
    "nn_statistics",
    "select_ion_pair",
]


@dataclass
class CrystalState:
    """Relaxed (or best-effort) crystal configuration.

    positions are in um, energy is the total potential plus kinetic
    energy in u um^2/us^2, max_residual_accel is the largest
    conservative acceleration in um/us^2, and energy_samples holds the
    periodically recorded total energy during the descent.
    """

    positions: np.ndarray
    energy: float
    steps: int
    converged: bool
    max_residual_accel: float
    energy_samples: np.ndarray


def seed_hexagonal(n, spacing):
    """First n sites of a hexagonal lattice, filled ring by ring.

    Ring r carries 6r sites: the six corners at radius r * spacing plus
    evenly spaced points along each edge.  Sites within a ring are taken
    in angular order, so a partially filled outer ring stays contiguous.
    """
    if n < 1:
        raise ValueError("need at least one ion")
    pts = [np.zeros(2)]
    r = 1
    while len(pts) < n:
        corners = [
            r * spacing * np.array([np.cos(np.pi * k / 3.0), np.sin(np.pi * k / 3.0)])
            for k in range(6)
        ]
        ring = []
        for k in range(6):
            a, b = corners[k], corners[(k + 1) % 6]
            for m in range(r):
                ring.append(a + (b - a) * (m / r))
        ring.sort(key=lambda p: np.arctan2(p[1], p[0]))
        pts.extend(ring)
        r += 1
    return np.array(pts[:n])


def relax(cfg, params, seed=None, *, dt=None, damping=None, accel_tol=None,
          max_steps=1_000_000, guard=0.1, check_every=100, energy_every=100):
    """Damp the crystal to a stationary point of the secular potential.

    params must carry secular frequencies (see solve_trap).  The
    defaults tie the integration scales to the trap: dt = 0.02 / max
    in-plane frequency, critical-ish damping eta/m = 0.5 max frequency,
    and a stationarity threshold of 1e-8 * omega_x^2 * 1 um on the
    conservative acceleration.  Ions closing within `guard` um abort
    with CollisionDetected; hitting max_steps raises NonConvergence with
    the best state attached.
    """
    kx = params.omega_x**2
    ky = params.omega_y**2
    wmax = max(params.omega_x, params.omega_y)
    if dt is None:
        dt = 0.02 / wmax
    if damping is None:
        damping = 0.5 * wmax
    if accel_tol is None:
        accel_tol = 1.0e-8 * kx
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass

    if seed is None:
        # the two-ion equilibrium distance sets the length scale; a
        # slightly tighter seed relaxes outward without ring hopping
        spacing = 0.75 * (2.0 * cpref / kx) ** (1.0 / 3.0)
        seed = seed_hexagonal(cfg.n_ions, spacing)
    pos = np.array(seed, dtype=float)
    if pos.shape != (cfg.n_ions, 2):
        raise ValueError(f"seed must have shape ({cfg.n_ions}, 2), got {pos.shape}")
    if pos.shape[0] > 1 and pair_min_dist(pos) < 1.0e-9:
        raise CoincidentIons("seed has coincident ions")

    vel = np.zeros_like(pos)
    energies = np.empty(max_steps // energy_every + 1)
    steps, status, max_acc, n_energy = relax_run(
        pos, vel, kx, ky, damping, cpref, dt, max_steps, accel_tol,
        guard, check_every, energy_every, energies,
    )
    if status == 2:
        raise CollisionDetected(
            f"pair separation fell below the {guard:g} um guard after {steps} steps"
        )
    e_per_mass = coulomb_energy(pos, cpref)
    e_per_mass += 0.5 * float(np.sum(vel * vel))
    e_per_mass += 0.5 * float(np.sum(np.array([kx, ky]) * pos * pos))
    state = CrystalState(
        positions=pos,
        energy=cfg.ion_mass * e_per_mass,
        steps=steps,
        converged=(status == 0),
        max_residual_accel=max_acc,
        energy_samples=cfg.ion_mass * energies[:n_energy],
    )
    if status != 0:
        raise NonConvergence(
            f"residual acceleration {max_acc:.3g} um/us^2 above tolerance "
            f"{accel_tol:.3g} after {steps} steps",
            best=state,
        )
    return state


def _nn_distances(positions):
    d = positions[:, None, :] - positions[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    np.fill_diagonal(r, np.inf)
    return r


def nn_distances(positions):
    """Per-ion nearest-neighbor distance in um, one entry per ion."""
    return _nn_distances(np.asarray(positions, dtype=float)).min(axis=1)


def bond_pairs(positions):
    """Bonded index pairs (i, j) with i < j, as a sorted list of tuples.

    Two ions are bonded when no third ion k has max(d_ik, d_jk) < d_ij,
    i.e. nothing sits in the lens between them (the relative
    neighborhood graph).  Candidates come from the Delaunay
    triangulation, which the bond graph is a subgraph of; tiny crystals
    that Delaunay cannot triangulate fall back to all pairs.
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n < 2:
        return []
    r = _nn_distances(positions)
    if n <= 3:
        cand = {(i, j) for i in range(n) for j in range(i + 1, n)}
    else:
        cand = set()
        for s in Delaunay(positions).simplices:
            a, b, c = sorted(int(v) for v in s)
            cand.update({(a, b), (a, c), (b, c)})
    bonds = []
    for i, j in sorted(cand):
        # inf diagonal of r masks k = i and k = j automatically; the
        # relative slack keeps exact ties (symmetric lattices) from being
        # pruned or kept on floating-point noise
        if not np.any(np.maximum(r[i], r[j]) < (1.0 - 1e-9) * r[i, j]):
            bonds.append((i, j))
    return bonds


def bond_distances(positions):
    """Bond lengths in um, one entry per bonded pair."""
    positions = np.asarray(positions, dtype=float)
    return np.array(
        [float(np.hypot(*(positions[i] - positions[j])))
         for i, j in bond_pairs(positions)]
    )


def nn_statistics(positions):
    """(min, max, mean) bond length of the crystal in um.

    Runs over the bond graph rather than each ion's single nearest
    neighbor, so the longer links that bridge lattice rows toward the
    rim count alongside the tight interior spacings.
    """
    d = bond_distances(positions)
    if d.size == 0:
        raise ValueError("need at least two ions for spacing statistics")
    return float(d.min()), float(d.max()), float(d.mean())


def select_ion_pair(positions, rule):
    """Pick a gate ion pair by geometry.

    'center' takes the two ions closest to the trap axis.  'edge' takes
    the nearest-neighbor pair whose midpoint sits farthest from the
    axis.  Returns index-sorted (i, j); ties break on index order so the
    choice is deterministic.
    """
    positions = np.asarray(positions)
    if rule == "center":
        radii = np.hypot(positions[:, 0], positions[:, 1])
        order = np.lexsort((np.arange(len(radii)), radii))
        return tuple(sorted(order[:2].tolist()))
    if rule == "edge":
        r = _nn_distances(positions)
        nearest = r.argmin(axis=1)
        pairs = sorted({(min(i, int(j)), max(i, int(j))) for i, j in enumerate(nearest)})
        mid = [0.5 * (positions[i] + positions[j]) for i, j in pairs]
        radii = [float(np.hypot(m[0], m[1])) for m in mid]
        return pairs[int(np.argmax(radii))]
    raise ValueError(f"unknown pair rule {rule!r}; use 'center' or 'edge'")
