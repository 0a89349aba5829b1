"""Out-of-plane phonon modes of the planar crystal.

Expanding the Coulomb interaction to second order in the out-of-plane
displacements gives

    V_z = (m omega_z^2 / 2) sum_i z_i^2
          - (kappa Q^2 / 4) sum_{i != j} (z_i - z_j)^2 / r_ij^3,

so the per-mass stiffness is

    K[i][j] = c_ij              (i != j)
    K[i][i] = omega_z^2 - sum_j c_ij,   c_ij = kappa Q^2 / (m r_ij^3).

The zero row sums of the coupling part make the center-of-mass mode sit
exactly at omega_z and, because that part softens only relative motion,
every other mode lies below it.  Micromotion modifies the couplings
through the drive-phase average of 1/r^3; sampling the periodic orbit
resolves both that average and its first harmonic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousMatching, CoincidentIons, ImaginaryFrequency
from .micromotion import trajectory
from .units import COULOMB

__all__ = [
    "TransverseModes",
    "ModeShift",
    "static_coupling",
    "time_averaged_coupling",
    "first_harmonic_coupling",
    "transverse_mode_set",
    "mode_shift_report",
    "rwa_perturbation_bound",
]

#: pair distances below this, at any sampled drive phase, are treated as
#: a collapsed configuration rather than averaged over
_COINCIDENCE_GUARD = 1.0e-3


def _inv_r3(positions):
    d = positions[..., :, None, :] - positions[..., None, :, :]
    r2 = np.einsum("...ijk,...ijk->...ij", d, d)
    n = positions.shape[-2]
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        if float(r2[..., off].min()) < _COINCIDENCE_GUARD**2:
            raise CoincidentIons(
                f"pair distance below {_COINCIDENCE_GUARD:g} um in coupling sample"
            )
    r2[..., np.arange(n), np.arange(n)] = np.inf
    return r2**-1.5


def static_coupling(positions):
    """1/r_ij^3 for the frozen configuration; zero diagonal, um^-3."""
    return _inv_r3(np.asarray(positions, dtype=float))


def _phase_samples(expansion, n_phase):
    period = 2.0 * np.pi / expansion.rf_omega
    times = period * np.arange(n_phase) / n_phase
    return times, _inv_r3(trajectory(expansion, times))


def time_averaged_coupling(expansion, n_phase=256):
    """Drive-phase average of 1/r_ij^3 over the periodic orbit.

    Uniform phase sampling of a smooth periodic quantity converges
    spectrally, so 256 samples are far beyond the accuracy of the orbit
    itself.
    """
    _, samples = _phase_samples(expansion, n_phase)
    return samples.mean(axis=0)


def first_harmonic_coupling(expansion, n_phase=256):
    """Signed cos(Omega t) Fourier component of 1/r_ij^3, i.e. 2 <cos * 1/r^3>.

    For small drive this is (3 q / 2) times the static coupling: the
    breathing of each pair distance at the drive frequency modulates the
    coupling in phase with the drive and with the sign of q.
    """
    times, samples = _phase_samples(expansion, n_phase)
    weights = 2.0 * np.cos(expansion.rf_omega * times)
    return np.einsum("t,tij->ij", weights, samples) / n_phase


@dataclass
class TransverseModes:
    """Out-of-plane normal modes, sorted by ascending frequency.

    frequencies are in rad/us; vectors holds orthonormal mode shapes as
    columns, sign-fixed so the largest-magnitude component is positive.
    The last mode is the center-of-mass mode at exactly omega_z.
    """

    frequencies: np.ndarray
    vectors: np.ndarray
    coupling: np.ndarray
    includes_micromotion: bool


def transverse_mode_set(cfg, params, positions, expansion=None, n_phase=256):
    """Diagonalize the transverse stiffness about the planar crystal.

    With `expansion` given, the Coulomb couplings are averaged over the
    micromotion orbit; otherwise the frozen `positions` are used.  A
    non-positive stiffness eigenvalue means the planar crystal is
    unstable against buckling and raises ImaginaryFrequency.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
    if expansion is not None:
        coupling = time_averaged_coupling(expansion, n_phase=n_phase)
    else:
        coupling = static_coupling(pos)

    k = cpref * coupling.copy()
    np.fill_diagonal(k, params.omega_z**2 - cpref * coupling.sum(axis=1))
    lam, vec = np.linalg.eigh(k)
    if lam[0] <= 0.0:
        raise ImaginaryFrequency(
            f"{int(np.sum(lam <= 0.0))} transverse mode(s) with non-positive "
            "stiffness: planar crystal buckles out of plane"
        )
    # eigh returns ascending eigenvalues; keep that order
    for j in range(n):
        i = int(np.argmax(np.abs(vec[:, j])))
        if vec[i, j] < 0.0:
            vec[:, j] = -vec[:, j]
    return TransverseModes(frequencies=np.sqrt(lam), vectors=vec,
                           coupling=coupling,
                           includes_micromotion=expansion is not None)


@dataclass
class ModeShift:
    index_avg: int
    index_static: int
    overlap: float
    freq_avg: float
    freq_static: float

    @property
    def shift(self):
        return self.freq_avg - self.freq_static


def mode_shift_report(modes_avg, modes_static, *, min_overlap=0.9):
    """Match micromotion-averaged modes to static ones and list the shifts.

    Greedy assignment by descending overlap |<b_avg | b_static>|, ties
    broken by frequency proximity; any mode whose best remaining overlap
    falls below `min_overlap` raises AmbiguousMatching rather than
    reporting a shift between unrelated shapes (near-degenerate pairs
    can hybridize arbitrarily).
    """
    ov = np.abs(modes_avg.vectors.T @ modes_static.vectors)
    n = ov.shape[0]
    taken = np.zeros(n, dtype=bool)
    report = []
    for i in range(n):
        masked = np.where(taken, -1.0, ov[i])
        best = float(masked.max())
        if best < min_overlap:
            raise AmbiguousMatching(
                f"mode {i} best remaining overlap {best:.3f} < {min_overlap:g}"
            )
        near = np.nonzero(masked >= best - 1.0e-12)[0]
        j = int(near[np.argmin(np.abs(modes_static.frequencies[near]
                                      - modes_avg.frequencies[i]))])
        taken[j] = True
        report.append(ModeShift(index_avg=i, index_static=j,
                                overlap=float(masked[j]),
                                freq_avg=float(modes_avg.frequencies[i]),
                                freq_static=float(modes_static.frequencies[j])))
    return report


def rwa_perturbation_bound(cfg, params, modes, first_harmonic):
    """Size of the leading drive-frequency correction to the secular modes.

    Two estimates of the same effect, neither folded into the mode set:
    'mode_scaling' is max_k |q| (omega_k / Omega_rf)^2, the parametric
    estimate; 'harmonic_norm' weighs the actual first-harmonic coupling
    matrix against the full stiffness, times the same (omega_k/Omega)^2
    factor.
    """
    cpref = COULOMB * cfg.ion_charge**2 / cfg.ion_mass
    scale = float(np.max((modes.frequencies / cfg.rf_omega) ** 2))
    k = cpref * modes.coupling.copy()
    np.fill_diagonal(k, params.omega_z**2 - cpref * modes.coupling.sum(axis=1))
    h = cpref * first_harmonic.copy()
    np.fill_diagonal(h, -cpref * first_harmonic.sum(axis=1))
    norm_ratio = float(np.linalg.norm(h, 2) / np.linalg.norm(k, 2))
    return {
        "mode_scaling": float(abs(params.q_x)) * scale,
        "harmonic_norm": norm_ratio * scale,
    }
