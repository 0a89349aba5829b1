"""Batch command-line surface.

Stages chain through snapshot files: `relax` writes the crystal and its
micromotion series, `modes` reads that and writes both transverse mode
sets, `gate` reads both and writes the detuning-scan CSV plus the best
pulse snapshot.  Every snapshot embeds the resolved config and content
hashes so a stage can refuse mismatched inputs.

Exit codes: 0 success, 2 config or input error, 3 non-convergence,
4 instability or collision, 5 imaginary transverse frequency, 6 no scan
point under the infidelity target, 7 verification tolerance breach.
"""

import argparse
import hashlib
import json
import sys

import numpy as np

from . import io
from .crystal import nn_statistics, relax, select_ion_pair
from .errors import (AmbiguousMatching, CollisionDetected, CoincidentIons,
                     ConfigError, ImaginaryFrequency, InfeasiblePhase,
                     NonConvergence, NoSettle, ResonantDrive, Runaway,
                     TruncationTooSmall, UnstableRegion)
from .gate import (GateConfig, build_gate_system, build_static_gate_system,
                   error_budget, gate_fidelity, scan_detuning,
                   static_pulse_crosscheck)
from .micromotion import (MicromotionExpansion, micromotion_amplitudes,
                          self_consistent_positions, trajectory)
from .oracles import floquet_exponent, fock_fidelity, integrate_full_eom
from .transverse import (TransverseModes, first_harmonic_coupling,
                         mode_shift_report, rwa_perturbation_bound,
                         transverse_mode_set)
from .trap_model import TrapConfig, characteristic_exponent, solve_trap

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_UNSTABLE = 4
EXIT_IMAGINARY = 5
EXIT_NO_TARGET = 6
EXIT_VERIFY = 7

#: reference trap used by `verify` when no config file is given
_REFERENCE = dict(dc_voltage=-1.1, ac_voltage=90.0,
                  rf_omega=2.0 * np.pi * 50.0, electrode_size=200.0,
                  anisotropy=0.01, ion_mass=171.0, ion_charge=1, n_ions=127)


def _file_sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _load_snapshot(path, kind):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from exc
    if doc.get("schema") != io.SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema {doc.get('schema')!r}, expected "
                          f"{io.SCHEMA_VERSION}")
    if doc.get("kind") != kind:
        raise ConfigError(f"{path}: snapshot kind {doc.get('kind')!r}, "
                          f"expected {kind!r}")
    return doc


def _cfg_from_snapshot(doc):
    return TrapConfig(**doc["config"])


def _expansion_from_snapshot(doc, cfg):
    mm = doc["micromotion"]
    return MicromotionExpansion(harmonics=np.asarray(mm["harmonics"]),
                                model=None, rf_omega=cfg.rf_omega,
                                iterations=int(mm["iterations"]),
                                residual=float(mm["residual"]))


def _resolve_pair(spec_str, positions):
    if spec_str in ("center", "edge"):
        return select_ion_pair(positions, spec_str)
    try:
        i, j = (int(tok) for tok in spec_str.split(","))
    except ValueError:
        raise ConfigError(
            f"--pair must be 'center', 'edge', or 'i,j' (got {spec_str!r})"
        ) from None
    n = positions.shape[0]
    if not (0 <= i < n and 0 <= j < n and i != j):
        raise ConfigError(f"--pair {spec_str!r} out of range for {n} ions")
    return tuple(sorted((i, j)))


def _gate_config(args, params):
    return GateConfig(
        kbt_over_hbar=2.0 * np.pi * args.temperature,
        delta_k=args.dk,
        waist=args.waist,
        n_segments=args.segments,
        duration=args.tau_cycles * 2.0 * np.pi / params.omega_z,
        phase_offset=args.phase_offset,
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_relax(args):
    cfg = io.read_config(args.config)
    params = solve_trap(cfg)
    state = relax(cfg, params)
    exp = self_consistent_positions(cfg, params, state.positions)
    nn_min, nn_max, nn_mean = nn_statistics(exp.r0)
    amps = micromotion_amplitudes(exp)
    shift = np.linalg.norm(exp.r0 - state.positions, axis=1)
    payload = {
        "kind": "crystal",
        "mathieu": {
            "a_x": params.a_x, "a_y": params.a_y, "a_z": params.a_z,
            "q": params.q_x, "q_z": params.q_z,
            "beta_x": params.beta_x, "beta_y": params.beta_y,
            "beta_z": params.beta_z,
            "omega_x": params.omega_x, "omega_y": params.omega_y,
            "omega_z": params.omega_z,
        },
        "crystal": {
            "converged": state.converged,
            "steps": state.steps,
            "energy": state.energy,
            "max_residual_accel": state.max_residual_accel,
            "pseudopotential_positions": state.positions,
            "nn_min_um": nn_min, "nn_max_um": nn_max, "nn_mean_um": nn_mean,
        },
        "micromotion": {
            "harmonics": exp.harmonics,
            "iterations": exp.iterations,
            "residual": exp.residual,
            "amplitudes_um": amps,
            "mean_shift_um": float(shift.mean()),
            "max_shift_um": float(shift.max()),
        },
    }
    io.write_snapshot(args.out, payload, cfg)
    print(f"relaxed {cfg.n_ions} ions in {state.steps} steps; "
          f"bond length {nn_min:.2f}..{nn_max:.2f} um (mean {nn_mean:.2f}); "
          f"peak micromotion {amps[-1]:.3f} um; "
          f"mean dc shift {shift.mean():.4f} um")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_modes(args):
    doc = _load_snapshot(args.crystal, "crystal")
    cfg = _cfg_from_snapshot(doc)
    params = solve_trap(cfg)
    exp = _expansion_from_snapshot(doc, cfg)
    r0 = exp.r0
    modes_avg = transverse_mode_set(cfg, params, r0, exp)
    modes_static = transverse_mode_set(cfg, params, r0)
    report = mode_shift_report(modes_avg, modes_static)
    rwa = rwa_perturbation_bound(cfg, params, modes_avg,
                                 first_harmonic_coupling(exp))
    shifts_khz = np.array([1.0e3 * s.shift / (2.0 * np.pi) for s in report])
    payload = {
        "kind": "modes",
        "crystal_sha256": _file_sha(args.crystal),
        "averaged": {"frequencies": modes_avg.frequencies,
                     "vectors": modes_avg.vectors},
        "static": {"frequencies": modes_static.frequencies,
                   "vectors": modes_static.vectors},
        "band": {"low_over_omega_z": float(modes_avg.frequencies[0] / params.omega_z),
                 "high_over_omega_z": float(modes_avg.frequencies[-1] / params.omega_z)},
        "shifts": [{"index_avg": s.index_avg, "index_static": s.index_static,
                    "overlap": s.overlap, "freq_avg": s.freq_avg,
                    "freq_static": s.freq_static} for s in report],
        "mean_abs_shift_kHz": float(np.abs(shifts_khz).mean()),
        "max_abs_shift_kHz": float(np.abs(shifts_khz).max()),
        "rwa_bound": rwa,
    }
    io.write_snapshot(args.out, payload, cfg)
    print(f"{len(modes_avg.frequencies)} transverse modes in "
          f"[{payload['band']['low_over_omega_z']:.4f}, "
          f"{payload['band']['high_over_omega_z']:.4f}] omega_z; "
          f"mean |shift| {payload['mean_abs_shift_kHz']:.3f} kHz")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gate(args):
    crystal_doc = _load_snapshot(args.crystal, "crystal")
    modes_doc = _load_snapshot(args.modes, "modes")
    if modes_doc["crystal_sha256"] != _file_sha(args.crystal):
        raise ConfigError(
            f"{args.modes} was computed from a different crystal snapshot "
            f"than {args.crystal}"
        )
    cfg = _cfg_from_snapshot(crystal_doc)
    params = solve_trap(cfg)
    exp = _expansion_from_snapshot(crystal_doc, cfg)
    pair = _resolve_pair(args.pair, exp.r0)
    modes = TransverseModes(
        frequencies=np.asarray(modes_doc["averaged"]["frequencies"]),
        vectors=np.asarray(modes_doc["averaged"]["vectors"]),
        coupling=None, includes_micromotion=True)
    gcfg = _gate_config(args, params)
    system = build_gate_system(cfg, params, exp, modes, pair, gcfg)

    try:
        lo, hi, steps = args.mu_scan.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
        if steps < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(
            f"--mu-scan must be lo:hi:steps (got {args.mu_scan!r})"
        ) from None
    mus = np.linspace(lo, hi, steps) * params.omega_z

    solutions = scan_detuning(system, mus, jobs=args.jobs,
                              polish=not args.no_polish)

    columns = ["mu_rad_per_us", "mu_over_omega_z", "infidelity",
               "max_rabi_2pi_MHz"]
    columns += [f"amp_{p + 1}" for p in range(gcfg.n_segments)]

    baseline = None
    if args.static_baseline:
        static_modes = TransverseModes(
            frequencies=np.asarray(modes_doc["static"]["frequencies"]),
            vectors=np.asarray(modes_doc["static"]["vectors"]),
            coupling=None, includes_micromotion=False)
        static_system = build_static_gate_system(cfg, params, static_modes,
                                                 pair, gcfg)
        columns += ["fidelity_static_design", "fidelity_static_on_micromotion"]
        baseline = []
        for mu in mus:
            try:
                baseline.append(static_pulse_crosscheck(
                    static_system, system, float(mu),
                    polish=not args.no_polish))
            except InfeasiblePhase:
                baseline.append(None)

    nan = float("nan")
    rows = []
    for i, sol in enumerate(solutions):
        if sol.feasible:
            row = [sol.mu, sol.mu / params.omega_z, sol.infidelity,
                   sol.max_rabi / (2.0 * np.pi)]
            row += list(sol.amplitudes)
        else:
            row = [sol.mu, sol.mu / params.omega_z, nan, nan]
            row += [nan] * gcfg.n_segments
        if baseline is not None:
            b = baseline[i]
            row += ([b["fidelity_static"], b["fidelity_micromotion"]]
                    if b is not None else [nan, nan])
        rows.append(row)
    io.write_csv(args.out, columns, rows)

    feasible = [s for s in solutions if s.feasible]
    if not feasible:
        print("no feasible detuning in the scan", file=sys.stderr)
        return EXIT_NO_TARGET
    best = min(feasible, key=lambda s: s.infidelity)
    best_out = args.best_out or f"{args.out}.best.json"
    io.write_snapshot(best_out, {
        "kind": "pulse",
        "pair": list(pair),
        "n_segments": gcfg.n_segments,
        "duration_us": system.duration,
        "mu_rad_per_us": best.mu,
        "mu_over_omega_z": best.mu / params.omega_z,
        "amplitudes_rad_per_us": best.amplitudes,
        "alphas": best.alphas,
        "phi12": best.phi12,
        "antiphase": best.antiphase,
        "infidelity": best.infidelity,
        "proxy_infidelity": best.proxy_infidelity,
        "max_rabi_2pi_MHz": best.max_rabi / (2.0 * np.pi),
        "polished": best.polished,
    }, cfg)
    print(f"wrote {args.out} ({steps} points) and {best_out}")
    print(f"best: mu/omega_z = {best.mu / params.omega_z:.5f}, "
          f"infidelity = {best.infidelity:.3e}, "
          f"max Rabi/2pi = {best.max_rabi / (2.0 * np.pi):.2f} MHz")
    if best.infidelity > args.target:
        print(f"no scan point under target infidelity {args.target:g}",
              file=sys.stderr)
        return EXIT_NO_TARGET
    return EXIT_OK


_BUDGET_FORMULAS = {
    "beam_crosstalk": "exp(-2 d^2 / w^2), d = nearest spectator distance",
    "beam_displacement": "(pi^2/4) (delta_r / w)^4",
    "lamb_dicke_quartic": "pi^2 eta^4 (nbar^2 + nbar + 1/8), COM mode",
    "micromotion_phase_scale": "|q|^3",
}


def cmd_error_budget(args):
    doc = _load_snapshot(args.crystal, "crystal")
    cfg = _cfg_from_snapshot(doc)
    params = solve_trap(cfg)
    exp = _expansion_from_snapshot(doc, cfg)
    pair = _resolve_pair(args.pair, exp.r0)
    modes = transverse_mode_set(cfg, params, exp.r0, exp)
    gcfg = _gate_config(args, params)
    system = build_gate_system(cfg, params, exp, modes, pair, gcfg)
    budget = error_budget(cfg, params, exp, system, delta_r=args.delta_r)
    for key, formula in _BUDGET_FORMULAS.items():
        print(f"{key:24s} {budget[key]:12.4e}   {formula}")
    for key in ("nearest_spectator_um", "displacement_spread_um",
                "micromotion_excursion_um", "thermal_spread_um", "eta_com",
                "nbar_com"):
        print(f"{key:24s} {budget[key]:12.6g}")
    if args.out:
        io.write_snapshot(args.out, {
            "kind": "budget",
            "pair": list(pair),
            "budget": budget,
            "formulas": _BUDGET_FORMULAS,
        }, cfg)
        print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify: oracle-vs-analytic comparisons
# ---------------------------------------------------------------------------


def _verify_trap():
    qs = [0.02, 0.05, 0.102905, 0.2, 0.4]
    a_grid = [-1.0e-3, 1.0e-3, 2.515464e-3, 7.81e-3, 2.0e-2, 5.0e-2]
    worst = 0.0
    checked = 0
    for q in qs:
        for a in a_grid:
            ref = floquet_exponent(a, q, steps=4096)
            if not ref.stable or not 0.02 < ref.beta < 0.98:
                continue
            beta = characteristic_exponent(a, q)
            worst = max(worst, abs(beta - ref.beta))
            checked += 1
    print(f"trap: {checked} stable (a, q) points, max |beta - beta_oracle| "
          f"= {worst:.3e} (tolerance 1e-9)")
    return worst < 1.0e-9


def _verify_micromotion(n):
    cfg = TrapConfig(**{**_REFERENCE, "n_ions": int(n)})
    params = solve_trap(cfg)
    state = relax(cfg, params)
    exp = self_consistent_positions(cfg, params, state.positions)
    record = integrate_full_eom(cfg, params, state.positions)
    series = trajectory(exp, record.times)
    rms = float(np.sqrt(np.mean((series - record.positions) ** 2)))
    print(f"micromotion: n={n}, settled after {record.periods} periods, "
          f"RMS series-vs-integration deviation = {rms:.3e} um "
          f"(tolerance 1e-3)")
    return rms < 1.0e-3


def _verify_fidelity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(12):
        k = int(rng.integers(1, 4))
        alphas = (rng.uniform(-0.3, 0.3, (2, k))
                  + 1j * rng.uniform(-0.3, 0.3, (2, k)))
        scale = np.abs(alphas).max()
        if scale > 0.3:
            alphas *= 0.3 / scale
        nbars = rng.uniform(0.0, 2.0, k)
        phi = float(rng.choice([0.0, np.pi / 8.0, np.pi / 4.0]))
        closed = gate_fidelity(alphas, phi, nbars)
        exact = fock_fidelity(alphas, phi, nbars)
        worst = max(worst, abs(closed - exact))
    print(f"fidelity: 12 random thermal cases, max |closed form - Fock| "
          f"= {worst:.3e} (tolerance 1e-6)")
    return worst < 1.0e-6


def cmd_verify(args):
    ok = True
    if args.scope in ("trap", "all"):
        ok = _verify_trap() and ok
    if args.scope in ("micromotion", "all"):
        ok = _verify_micromotion(args.n) and ok
    if args.scope in ("fidelity", "all"):
        ok = _verify_fidelity() and ok
    print("verify: OK" if ok else "verify: TOLERANCE BREACH")
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_gate_flags(p):
    p.add_argument("--pair", default="center",
                   help="'center', 'edge', or explicit 'i,j' (default center)")
    p.add_argument("--segments", type=int, default=13,
                   help="pulse segments (default 13)")
    p.add_argument("--tau-cycles", type=float, default=50.0,
                   help="gate time in transverse-COM periods (default 50)")
    p.add_argument("--temperature", type=float, default=10.0,
                   help="k_B T / hbar as an ordinary frequency in MHz "
                        "(default 10)")
    p.add_argument("--dk", type=float, default=8.0,
                   help="effective wavevector in 1/um (default 8)")
    p.add_argument("--waist", type=float, default=3.0,
                   help="beam waist in um (default 3)")
    p.add_argument("--phase-offset", type=float, default=0.0,
                   help="drive phase of the force at t=0 in rad (default 0)")


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="planartrap",
        description="Planar Paul trap crystals, transverse modes, and "
                    "entangling-gate pulse design.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("relax", help="relax a crystal and solve its "
                                     "micromotion orbit")
    p.add_argument("--config", required=True, help="trap config file")
    p.add_argument("--out", required=True, help="crystal snapshot (JSON)")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("modes", help="transverse mode sets and shift report")
    p.add_argument("--crystal", required=True, help="crystal snapshot")
    p.add_argument("--out", required=True, help="modes snapshot (JSON)")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("gate", help="detuning scan of the segmented pulse "
                                    "design")
    p.add_argument("--crystal", required=True, help="crystal snapshot")
    p.add_argument("--modes", required=True, help="modes snapshot")
    p.add_argument("--out", required=True, help="scan table (CSV)")
    p.add_argument("--best-out", default=None,
                   help="best pulse snapshot (default <out>.best.json)")
    _add_gate_flags(p)
    p.add_argument("--mu-scan", default="0.84:1.01:200",
                   help="lo:hi:steps in units of omega_z (default "
                        "0.84:1.01:200)")
    p.add_argument("--static-baseline", action="store_true",
                   help="also design against frozen-crystal modes and "
                        "evaluate under micromotion")
    p.add_argument("--target", type=float, default=1.0e-3,
                   help="exit 6 unless some point beats this infidelity "
                        "(default 1e-3)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel scan workers (default 1)")
    p.add_argument("--no-polish", action="store_true",
                   help="skip the simplex polish stage")
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("error-budget", help="dominant infidelity mechanisms")
    p.add_argument("--crystal", required=True, help="crystal snapshot")
    p.add_argument("--out", default=None, help="budget snapshot (JSON)")
    _add_gate_flags(p)
    p.add_argument("--delta-r", type=float, default=None,
                   help="beam-displacement spread in um (default: peak "
                        "micromotion plus thermal spread)")
    p.set_defaults(func=cmd_error_budget)

    p = sub.add_parser("verify", help="oracle-vs-analytic spot checks")
    p.add_argument("scope", choices=["trap", "micromotion", "fidelity",
                                     "all"])
    p.add_argument("--n", type=int, default=7,
                   help="crystal size for the micromotion scope (default 7)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, NoSettle, AmbiguousMatching,
            TruncationTooSmall) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (UnstableRegion, ResonantDrive, Runaway, CollisionDetected,
            CoincidentIons) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ImaginaryFrequency as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IMAGINARY


if __name__ == "__main__":
    sys.exit(main())
