"""Config files, JSON result snapshots, and CSV scan tables.

Snapshots are written deterministically: same inputs, byte-identical
file.  Anything that varies run to run (timestamps, host) goes into a
sidecar manifest so results can be diffed and cached by content.
"""

import hashlib
import json
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError
from .trap_model import TrapConfig

__all__ = [
    "SCHEMA_VERSION",
    "read_config",
    "config_dict",
    "config_hash",
    "write_snapshot",
    "write_csv",
]

SCHEMA_VERSION = 1

# config-file key -> (TrapConfig field, converter). Frequencies are given
# as ordinary frequencies in MHz and carried internally as rad/us.
_KEYS = {
    "dc_voltage": ("dc_voltage", float),
    "ac_voltage": ("ac_voltage", float),
    "rf_freq_MHz": ("rf_omega", lambda s: 2.0 * np.pi * float(s)),
    "electrode_size": ("electrode_size", float),
    "anisotropy": ("anisotropy", float),
    "ion_mass": ("ion_mass", float),
    "ion_charge": ("ion_charge", int),
    "n_ions": ("n_ions", int),
}

_REQUIRED = ("dc_voltage", "ac_voltage", "rf_freq_MHz", "electrode_size")


def read_config(path):
    """Parse a flat key = value trap description into a TrapConfig.

    Lines are `key = value`, blank, or `#` comments; voltages in volts,
    lengths in um, masses in u.  Unknown keys, repeats, bad values, and
    missing required keys all raise ConfigError with the offending line.
    """
    fields = {}
    seen = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            field, conv = _KEYS[key]
            try:
                fields[field] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    missing = [k for k in _REQUIRED if _KEYS[k][0] not in fields]
    if missing:
        raise ConfigError(f"{path}: missing required key(s): {', '.join(missing)}")
    try:
        return TrapConfig(**fields)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_dict(cfg):
    """TrapConfig as a plain dict in internal units (rad/us, um, u, e)."""
    return {
        "dc_voltage": cfg.dc_voltage,
        "ac_voltage": cfg.ac_voltage,
        "rf_omega": cfg.rf_omega,
        "electrode_size": cfg.electrode_size,
        "anisotropy": cfg.anisotropy,
        "ion_mass": cfg.ion_mass,
        "ion_charge": cfg.ion_charge,
        "n_ions": cfg.n_ions,
    }


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      allow_nan=True)


def config_hash(cfg):
    """sha256 over the canonical internal-unit form of the config."""
    return hashlib.sha256(_canonical(config_dict(cfg)).encode()).hexdigest()


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} into a snapshot")


def write_snapshot(path, payload, cfg=None):
    """Write a versioned, deterministic JSON result file plus manifest.

    The main file carries only reproducible content (schema version,
    config echo and hash, the payload); the `<path>.manifest.json`
    sidecar records the creation timestamp and the content digest of the
    main file.
    """
    doc = {"schema": SCHEMA_VERSION}
    if cfg is not None:
        doc["config"] = config_dict(cfg)
        doc["config_hash"] = config_hash(cfg)
    doc.update(_jsonify(payload))
    blob = json.dumps(doc, sort_keys=True, indent=1).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
    manifest = {
        "file": str(path),
        "sha256": hashlib.sha256(blob).hexdigest(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "schema": SCHEMA_VERSION,
    }
    with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return doc


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path, columns, rows):
    """Write a CSV table with %.17g floats and a fixed column order.

    `rows` is an iterable of sequences matching `columns`; no quoting is
    performed, so column names and string cells must not contain commas.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(
                    f"row has {len(row)} cells, expected {len(columns)}"
                )
            fh.write(",".join(_fmt(v) for v in row) + "\n")
