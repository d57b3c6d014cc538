"""Time-indexed run logs and their CSV/JSON serialization.

The CSV header contract (stable across versions) for a P-path, M-teacher run:

    t, block, loss_task, loss_reg,
    c1..cP                (per-neuron runs log the per-path row means),
    dw_norm_1..dw_norm_P, dc_norm,
    align_p{p}_m{m} for p in 1..P, m in 1..M (row-major),
    total_align,
    resid_1..resid_P

Floats are written with 17 significant digits so a reread reproduces them
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


@dataclass
class RunRecord:
    t: np.ndarray
    block: np.ndarray
    loss_task: np.ndarray
    loss_reg: np.ndarray
    gates: np.ndarray        # (n, P)
    dw_norms: np.ndarray     # (n, P)
    dc_norm: np.ndarray      # (n,)
    align: np.ndarray        # (n, P, M)
    total_align: np.ndarray  # (n,)
    resid: np.ndarray        # (n, P)
    tau_B: float
    n_blocks: int
    summary: dict = field(default_factory=dict)
    final_state: dict = field(default_factory=dict)   # arrays not part of the grid

    @property
    def P(self) -> int:
        return self.gates.shape[1]

    @property
    def M(self) -> int:
        return self.align.shape[2]

    def header(self) -> list[str]:
        cols = ["t", "block", "loss_task", "loss_reg"]
        cols += [f"c{p+1}" for p in range(self.P)]
        cols += [f"dw_norm_{p+1}" for p in range(self.P)]
        cols += ["dc_norm"]
        cols += [f"align_p{p+1}_m{m+1}" for p in range(self.P) for m in range(self.M)]
        cols += ["total_align"]
        cols += [f"resid_{p+1}" for p in range(self.P)]
        return cols

    def as_matrix(self) -> np.ndarray:
        n = len(self.t)
        parts = [
            self.t[:, None], self.block[:, None].astype(float),
            self.loss_task[:, None], self.loss_reg[:, None],
            self.gates, self.dw_norms, self.dc_norm[:, None],
            self.align.reshape(n, -1), self.total_align[:, None], self.resid,
        ]
        return np.hstack(parts)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.as_matrix(), delimiter=",", fmt=FLOAT_FMT,
                   header=",".join(self.header()), comments="")
        return path

    def summary_json(self) -> dict:
        return {k: _jsonable(v) for k, v in self.summary.items()}

    def write_summary(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary_json(), indent=2, sort_keys=True))
        return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def read_run_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def record_from_csv(path: str | Path, tau_B: float, n_blocks: int) -> RunRecord:
    header, data = read_run_csv(path)
    P = sum(1 for h in header if h.startswith("c") and h[1:].isdigit())
    M = sum(1 for h in header if h.startswith("align_p1_m"))
    col = {h: i for i, h in enumerate(header)}
    n = data.shape[0]
    return RunRecord(
        t=data[:, col["t"]],
        block=data[:, col["block"]].astype(int),
        loss_task=data[:, col["loss_task"]],
        loss_reg=data[:, col["loss_reg"]],
        gates=data[:, [col[f"c{p+1}"] for p in range(P)]],
        dw_norms=data[:, [col[f"dw_norm_{p+1}"] for p in range(P)]],
        dc_norm=data[:, col["dc_norm"]],
        align=data[:, [col[f"align_p{p+1}_m{m+1}"] for p in range(P) for m in range(M)]].reshape(n, P, M),
        total_align=data[:, col["total_align"]],
        resid=data[:, [col[f"resid_{p+1}"] for p in range(P)]],
        tau_B=tau_B,
        n_blocks=n_blocks,
    )
