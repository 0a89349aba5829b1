"""Planar Paul trap ion crystals: micromotion-resolved dynamics,
transverse phonon modes, and segmented-pulse entangling gate design."""

from . import errors, io, oracles, units
from .crystal import (
    CrystalState,
    bond_distances,
    bond_pairs,
    nn_distances,
    nn_statistics,
    relax,
    seed_hexagonal,
    select_ion_pair,
)
from .gate import (
    BeamModulation,
    GateConfig,
    GateSystem,
    PulseSolution,
    alpha_map,
    alpha_map_quadrature,
    beam_modulation,
    build_gate_system,
    build_static_gate_system,
    error_budget,
    evaluate_pulse,
    flat_pulse_check,
    gate_fidelity,
    infidelity_quadratic_proxy,
    optimize_pulse,
    phase_map,
    phase_map_quadrature,
    scan_detuning,
    static_pulse_crosscheck,
)
from .micromotion import (
    MicromotionExpansion,
    micromotion_amplitudes,
    quadratic_expansion,
    self_consistent_positions,
    solve_driven_mathieu,
    trajectory,
)
from .transverse import (
    TransverseModes,
    first_harmonic_coupling,
    mode_shift_report,
    rwa_perturbation_bound,
    time_averaged_coupling,
    transverse_mode_set,
)
from .trap_model import (
    MathieuParams,
    TrapConfig,
    characteristic_exponent,
    mathieu_parameters,
    secular_frequencies,
    solve_trap,
)

__version__ = "0.1.0"
