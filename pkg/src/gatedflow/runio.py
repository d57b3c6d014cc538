"""Run configuration parsing and result persistence.

Config files are INI-style with a [run] section and an optional [overrides]
section whose keys patch preset fields; command-line flags override file
values. Every output directory gets a manifest.json echoing the resolved
configuration, so re-running from the manifest reproduces the artifacts.
"""

from __future__ import annotations

import configparser
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, backend
from .presets import PRESETS, ExperimentPreset, get_preset
from .record import FLOAT_FMT, RunRecord

DEFAULT_OUT_ENV = "GATEDFLOW_OUT"


class ConfigError(ValueError):
    pass


_RUN_KEYS = {
    "preset": str,
    "seed": int,
    "seeds": int,
    "out": str,
    "stride": int,
    "mode": str,          # sampled | expectation
    "regime": str,        # flexible | forgetful
    "workers": int,
}

_OVERRIDE_TYPES = {
    "P": int, "M": int, "d_in": int, "d_out": int, "d_hid": int,
    "batch_size": int, "seeds": int, "n_blocks": int,
    "lambda_nonneg": float, "lambda_norm_l1": float, "lambda_norm_l2": float,
    "lambda_w": float, "tau_w": float, "tau_c": float, "tau_B": float,
    "dt": float, "sigma": float, "gate_scale": float, "dt_effective": float,
    "control_tau_c": float, "control_lambda_nonneg": float,
    "control_lambda_norm_l1": float, "control_lambda_norm_l2": float,
    "orthogonality": str, "fc_norm_group": str, "weight_scale": str,
}


@dataclass
class RunConfig:
    """Declarative description of one run or sweep."""

    preset: str = "main"
    seed: int = 0
    seeds: int | None = None
    out: str | None = None
    stride: int | None = None
    mode: str = "sampled"
    regime: str = "flexible"
    workers: int | None = None
    overrides: dict = field(default_factory=dict)

    def resolved_preset(self) -> ExperimentPreset:
        preset = get_preset(self.preset)
        if self.overrides:
            preset = preset.with_overrides(**self.overrides)
        return preset

    def echo(self) -> dict:
        d = asdict(self)
        d["effective"] = asdict(
            self.resolved_preset().effective(forgetful=self.regime == "forgetful")
        )
        return d


def _convert(key: str, value: str, types: dict, where: str):
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in {where}")
    typ = types[key]
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def parse_config(path: str | Path | None = None, flag_values: dict | None = None,
                 flag_overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus flag values.

    Unknown keys are rejected by name; flags override file entries.
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section == "run":
                for key, value in parser.items("run"):
                    setattr(cfg, key, _convert(key, value, _RUN_KEYS, "[run]"))
            elif section == "overrides":
                for key, value in parser.items("overrides"):
                    cfg.overrides[key] = _convert(key, value, _OVERRIDE_TYPES, "[overrides]")
            else:
                raise ConfigError(f"unknown section [{section}]")
    for key, value in (flag_values or {}).items():
        if value is not None:
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown option {key!r}")
            setattr(cfg, key, value)
    for key, value in (flag_overrides or {}).items():
        cfg.overrides[key] = _convert(key, str(value), _OVERRIDE_TYPES, "--set")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}")
    if cfg.mode not in ("sampled", "expectation"):
        raise ConfigError(f"mode must be sampled or expectation, got {cfg.mode!r}")
    if cfg.regime not in ("flexible", "forgetful"):
        raise ConfigError(f"regime must be flexible or forgetful, got {cfg.regime!r}")
    try:
        cfg.resolved_preset()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def parse_set_flags(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_manifest(out_dir: str | Path, cfg: RunConfig, seeds: list[int],
                   wall_time: float, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "preset": cfg.preset,
        "config": cfg.echo(),
        "seeds": seeds,
        "code_version": __version__,
        "backend": backend.backend_name(),
        "wall_time_s": wall_time,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v)}")


def write_run_outputs(out_dir: str | Path, seed: int, record: RunRecord) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [record.to_csv(out_dir / f"run_{seed}.csv")]
    paths.append(record.write_summary(out_dir / f"summary_{seed}.json"))
    return paths


def write_grid_csv(out_dir: str | Path, grid) -> Path:
    """Grid CSV contract: axis1, axis2, seed, total_alignment."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    n1, n2, S = grid.total_alignment.shape
    for i in range(n1):
        for j in range(n2):
            for s in range(S):
                rows.append((grid.axis1[i], grid.axis2[j], s, grid.total_alignment[i, j, s]))
    path = out_dir / "grid.csv"
    header = f"{grid.axis_names[0]},{grid.axis_names[1]},seed,total_alignment"
    np.savetxt(path, np.array(rows), delimiter=",", fmt=FLOAT_FMT,
               header=header, comments="")
    return path


def write_matrix_csv(path: str | Path, matrix: np.ndarray) -> Path:
    """One matrix per file, row-major (teacher sets, W2 snapshots)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt=FLOAT_FMT)
    return path


def report_directory(out_dir: str | Path) -> dict:
    """Aggregate the artifacts in a results directory into one summary."""
    out_dir = Path(out_dir)
    if not out_dir.exists():
        raise FileNotFoundError(f"no such results directory: {out_dir}")
    report: dict = {"directory": str(out_dir)}
    manifest = out_dir / "manifest.json"
    if manifest.exists():
        report["manifest"] = json.loads(manifest.read_text())
    summaries = sorted(out_dir.glob("summary_*.json"))
    if summaries:
        per_seed = [json.loads(p.read_text()) for p in summaries]
        report["runs"] = per_seed
        vals = [s.get("final_total_alignment") for s in per_seed
                if s.get("final_total_alignment") is not None]
        if vals:
            arr = np.array(vals, dtype=float)
            report["final_total_alignment"] = {
                "mean": float(arr.mean()),
                "stderr": float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0,
                "n": len(arr),
            }
    grid = out_dir / "grid.csv"
    if grid.exists():
        with grid.open() as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(grid, delimiter=",", skiprows=1, ndmin=2)
        cells: dict[tuple, list] = {}
        for row in data:
            cells.setdefault((row[0], row[1]), []).append(row[3])
        report["grid"] = {
            "axes": header[:2],
            "cells": [
                {
                    header[0]: a, header[1]: b,
                    "mean": float(np.mean(v)),
                    "stderr": float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0,
                }
                for (a, b), v in sorted(cells.items())
            ],
        }
    return report
