"""Shared fixtures.

The 127-ion reference crystal is the only expensive input, so everything
derived from it is session-scoped and wall-clock timed; the acceptance
suite asserts on the recorded times as part of its runtime budgets.
Smaller 7- and 19-ion crystals back the per-module tests.
"""

import math
import time
from dataclasses import dataclass
from typing import Any

import pytest

from planartrap.crystal import relax, select_ion_pair
from planartrap.gate import (
    GateConfig,
    build_gate_system,
    build_static_gate_system,
)
from planartrap.micromotion import self_consistent_positions
from planartrap.transverse import transverse_mode_set
from planartrap.trap_model import TrapConfig, solve_trap

# Reference operating point used throughout: planar trap at 50 MHz drive
# with a slight in-plane anisotropy so the crystal orientation is pinned.
REFERENCE = dict(
    dc_voltage=-1.1,
    ac_voltage=90.0,
    rf_omega=2.0 * math.pi * 50.0,
    electrode_size=200.0,
    anisotropy=0.01,
)

DOPPLER_KBT_OVER_HBAR = 2.0 * math.pi * 10.0  # rad/us


@dataclass
class Timed:
    value: Any
    seconds: float


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return Timed(out, time.perf_counter() - t0)


def _pipeline(n_ions):
    cfg = TrapConfig(n_ions=n_ions, **REFERENCE)
    params = solve_trap(cfg)
    return cfg, params


@pytest.fixture(scope="session")
def bench_cfg():
    return TrapConfig(n_ions=127, **REFERENCE)


@pytest.fixture(scope="session")
def bench_params(bench_cfg):
    return solve_trap(bench_cfg)


@pytest.fixture(scope="session")
def bench_crystal(bench_cfg, bench_params):
    """Relaxed 127-ion crystal, timed (acceptance budget: 60 s)."""
    return timed(relax, bench_cfg, bench_params)


@pytest.fixture(scope="session")
def bench_expansion(bench_cfg, bench_params, bench_crystal):
    """Self-consistent micromotion expansion of the 127-ion crystal."""
    return timed(
        self_consistent_positions,
        bench_cfg,
        bench_params,
        bench_crystal.value.positions,
    )


@pytest.fixture(scope="session")
def bench_modes(bench_cfg, bench_params, bench_expansion):
    """Micromotion-averaged and static transverse mode sets, timed together."""
    exp = bench_expansion.value
    t0 = time.perf_counter()
    avg = transverse_mode_set(bench_cfg, bench_params, exp.r0, expansion=exp)
    static = transverse_mode_set(bench_cfg, bench_params, exp.r0)
    return Timed((avg, static), time.perf_counter() - t0)


@pytest.fixture(scope="session")
def gate_cfg():
    return GateConfig(kbt_over_hbar=DOPPLER_KBT_OVER_HBAR)


@pytest.fixture(scope="session")
def bench_gate_systems(bench_cfg, bench_params, bench_expansion, bench_modes, gate_cfg):
    """Gate descriptions for the center and edge pairs, plus their
    static-design twins (frozen crystal, no beam modulation)."""
    exp = bench_expansion.value
    avg, static = bench_modes.value
    out = {}
    for rule in ("center", "edge"):
        pair = select_ion_pair(exp.r0, rule)
        out[rule] = build_gate_system(
            bench_cfg, bench_params, exp, avg, pair, gate_cfg
        )
        out[rule + "_static"] = build_static_gate_system(
            bench_cfg, bench_params, static, pair, gate_cfg
        )
    return out


@pytest.fixture(scope="session")
def small_setup():
    """19-ion crystal with its expansion and both mode sets."""
    cfg, params = _pipeline(19)
    state = relax(cfg, params)
    exp = self_consistent_positions(cfg, params, state.positions)
    avg = transverse_mode_set(cfg, params, exp.r0, expansion=exp)
    static = transverse_mode_set(cfg, params, exp.r0)
    return cfg, params, state, exp, avg, static


@pytest.fixture(scope="session")
def tiny_setup():
    """7-ion crystal; cheap enough for dynamics cross-checks."""
    cfg, params = _pipeline(7)
    state = relax(cfg, params)
    exp = self_consistent_positions(cfg, params, state.positions)
    return cfg, params, state, exp


@pytest.fixture(scope="session")
def small_gate_system(small_setup, gate_cfg):
    cfg, params, state, exp, avg, static = small_setup
    pair = select_ion_pair(exp.r0, "center")
    return build_gate_system(cfg, params, exp, avg, pair, gate_cfg)
