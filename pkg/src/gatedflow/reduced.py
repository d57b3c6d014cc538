"""Two-dimensional effective dynamics, specialization coordinates, exact
solutions, and projections from the full model.

The reduced state lives in the plane spanned by the two teachers' modes:
y = sum_p c^p w^p, with targets y* in {e1, e2}. The update equations are

    tau_w dw^p/dt = c^p (y* - y)
    tau_c dc^p/dt = w^p . (y* - y) - dL_reg/dc^p

and the reduced task loss is 1/2 ||y* - y||^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernel_py import NORM_L1, NORM_L2, NORM_NONE, gate_reg_terms
from .curriculum import TeacherSet
from .model import GatedStudent, NumericalBlowup, RegularizerConfig


@dataclass
class ReducedState:
    w: np.ndarray          # (P, 2)
    c: np.ndarray          # (P,)
    tau_w: float
    tau_c: float

    @classmethod
    def specialized(cls, tau_w: float, tau_c: float) -> "ReducedState":
        """Complete specialization and separation: w^p_m = delta_pm, c^p = delta_p1."""
        return cls(w=np.eye(2), c=np.array([1.0, 0.0]), tau_w=tau_w, tau_c=tau_c)

    def copy(self) -> "ReducedState":
        return ReducedState(self.w.copy(), self.c.copy(), self.tau_w, self.tau_c)

    def output(self) -> np.ndarray:
        return self.c @ self.w


@dataclass
class SpecCoords:
    """Linear functionals of the reduced state measuring specialization."""

    wbar1: float
    wbar2: float
    wbar: float
    cbar: float
    wbarbar: float


def spec_coords(state: ReducedState) -> SpecCoords:
    w, c = state.w, state.c
    wbar1 = w[0, 0] - w[1, 0]
    wbar2 = w[1, 1] - w[0, 1]
    return SpecCoords(
        wbar1=float(wbar1),
        wbar2=float(wbar2),
        wbar=float(0.5 * (wbar1 + wbar2)),
        cbar=float(c[0] - c[1]),
        wbarbar=float(0.5 * ((w[0, 0] - w[0, 1]) + (w[1, 0] - w[1, 1]))),
    )


def reduced_error(state: ReducedState, y_star: np.ndarray) -> np.ndarray:
    return y_star - state.output()


def reduced_task_loss(state: ReducedState, y_star: np.ndarray) -> float:
    eps = reduced_error(state, y_star)
    return float(0.5 * eps @ eps)


def _norm_args(reg: RegularizerConfig | None):
    if reg is None:
        return 0.0, 0.0, NORM_NONE
    if reg.lambda_norm_l1 > 0:
        return reg.lambda_nonneg, reg.lambda_norm_l1, NORM_L1
    if reg.lambda_norm_l2 > 0:
        return reg.lambda_nonneg, reg.lambda_norm_l2, NORM_L2
    return reg.lambda_nonneg, 0.0, NORM_NONE


def reduced_step(
    state: ReducedState,
    y_star: np.ndarray,
    dt: float,
    reg: RegularizerConfig | None = None,
    project_symmetric: bool = False,
) -> ReducedState:
    """One Euler step; `project_symmetric` replaces the error by its
    antisymmetric part (eps1 = -eps2), the test-only variant used for the
    conservation-law audit."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    eps = reduced_error(state, y_star)
    if project_symmetric:
        ebar = 0.5 * (eps[0] - eps[1])
        eps = np.array([ebar, -ebar])
    lam_nn, lam_norm, kind = _norm_args(reg)
    _, rgrad = gate_reg_terms(state.c, lam_nn, lam_norm, kind)
    dw = state.c[:, None] * eps[None, :] / state.tau_w
    dc = (state.w @ eps - rgrad) / state.tau_c
    w = state.w + dt * dw
    c = state.c + dt * dc
    if not (np.isfinite(w).all() and np.isfinite(c).all()):
        raise NumericalBlowup("reduced state")
    return ReducedState(w=w, c=c, tau_w=state.tau_w, tau_c=state.tau_c)


def exact_wbar(cbar, tau_c: float, tau_w: float):
    """Exact specialization curve wbar(cbar) for a symmetric flexible-regime
    adaptation starting from wbar = cbar = 1.

    Raises on a negative radicand rather than clamping: outside the domain the
    symmetric-solution regime does not apply.
    """
    cbar = np.asarray(cbar, dtype=float)
    radicand = 1.0 - 0.5 * (tau_c / tau_w) * (1.0 - cbar**2)
    if np.any(radicand < 0):
        raise ValueError(
            f"exact solution undefined: radicand {radicand.min():.3g} < 0 "
            f"(tau_c/tau_w={tau_c/tau_w:.3g})"
        )
    out = np.sqrt(radicand)
    return float(out) if out.ndim == 0 else out


def conserved_quantity(state: ReducedState) -> float:
    """tau_c*cbar^2 - 2*tau_w*wbar^2, constant along symmetric trajectories."""
    sc = spec_coords(state)
    return float(state.tau_c * sc.cbar**2 - 2.0 * state.tau_w * sc.wbar**2)


def ntk_descent_rate(state: ReducedState, eps: np.ndarray | None = None,
                     y_star: np.ndarray | None = None) -> float:
    """eps^T NTK eps = sum_p ||eps||^2 (c^p)^2 + (w^p . eps)^2, the
    instantaneous loss-descent speed at unit learning rate."""
    if eps is None:
        eps = reduced_error(state, y_star)
    e2 = float(eps @ eps)
    total = 0.0
    for p in range(state.c.shape[0]):
        total += e2 * state.c[p] ** 2 + float(state.w[p] @ eps) ** 2
    return total


def blocklength_prediction(wbar0: float, eps_norm: float, tau_B: float) -> float:
    """Second-order specialization growth over a two-period window (four
    blocks' worth of time at block length tau_B)."""
    return 2.0 * (2.0 * abs(wbar0) * eps_norm) * tau_B**2


@dataclass
class ReducedTrajectory:
    """Per-step log of a reduced-model run.

    CSV columns (contract): t, c1, c2, w11, w12, w21, w22, wbar, cbar,
    wbarbar, eps1, eps2, ntk_rate.
    """

    data: np.ndarray          # (n, 13)
    tau_B: float
    n_blocks: int
    summary: dict = field(default_factory=dict)

    COLUMNS = ("t", "c1", "c2", "w11", "w12", "w21", "w22",
               "wbar", "cbar", "wbarbar", "eps1", "eps2", "ntk_rate")

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.COLUMNS.index(name)]

    def to_csv(self, path) -> None:
        from pathlib import Path

        from .record import FLOAT_FMT
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.data, delimiter=",", fmt=FLOAT_FMT,
                   header=",".join(self.COLUMNS), comments="")

    @property
    def loss(self) -> np.ndarray:
        return 0.5 * (self.col("eps1") ** 2 + self.col("eps2") ** 2)


def run_reduced(
    state: ReducedState,
    targets: list[np.ndarray],
    tau_B: float,
    dt: float,
    reg: RegularizerConfig | None = None,
    stride: int = 1,
    project_symmetric: bool = False,
) -> ReducedTrajectory:
    """Integrate one target per block, logging every `stride` steps."""
    steps = int(round(tau_B / dt))
    rows = []
    s = state.copy()
    for b, y_star in enumerate(targets):
        for k in range(steps):
            if k % stride == 0:
                eps = reduced_error(s, y_star)
                sc = spec_coords(s)
                rows.append([
                    b * tau_B + k * dt, s.c[0], s.c[1],
                    s.w[0, 0], s.w[0, 1], s.w[1, 0], s.w[1, 1],
                    sc.wbar, sc.cbar, sc.wbarbar, eps[0], eps[1],
                    ntk_descent_rate(s, eps),
                ])
            s = reduced_step(s, y_star, dt, reg, project_symmetric)
    traj = ReducedTrajectory(np.array(rows), tau_B=tau_B, n_blocks=len(targets))
    traj.summary["final_state"] = {"w": s.w.tolist(), "c": s.c.tolist()}
    return traj


def symmetry_residuals(traj: ReducedTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-step audit of the symmetric-specialization assumptions:
    (eps1 + eps2, wbar1 - wbar2)."""
    eps_sum = traj.col("eps1") + traj.col("eps2")
    w = traj.data
    wbar1 = w[:, 3] - w[:, 5]
    wbar2 = w[:, 6] - w[:, 4]
    return eps_sum, wbar1 - wbar2


def project_full(
    student: GatedStudent,
    teachers: TeacherSet,
    basis: str = "rows",
    force: bool = False,
):
    """Project full-model students onto the teachers' basis.

    basis="rows" (default) uses each row's teacher-row pair and averages the
    coefficients over rows, returning per-path 2-vectors plus the pooled
    out-of-span residual fraction; basis="svd" projects onto each teacher's
    singular modes and returns per-mode coefficients s[p, m, alpha].

    Refuses non-orthogonal teacher bases unless `force`, reporting the Gram
    matrix in the error.
    """
    T = teachers.W_star
    M = T.shape[0]
    if basis == "rows":
        gram_max = 0.0
        for i in range(T.shape[1]):
            rows = T[:, i, :]
            gram = rows @ rows.T - np.eye(M)
            gram_max = max(gram_max, float(np.abs(gram).max()))
        if gram_max > 1e-8 and not force:
            raise ValueError(
                f"teacher rows are not orthonormal (max off-diagonal Gram entry {gram_max:.3g}); "
                "pass force=True to project anyway"
            )
        coeffs = np.einsum("pij,mij->pmi", student.W, T)     # (P, M, d_out)
        pooled = coeffs.mean(axis=2)                          # (P, M)
        recon = np.einsum("pmi,mij->pij", coeffs, T)
        res = student.W - recon
        res_frac = np.sqrt((res**2).sum(axis=(1, 2)) /
                           np.maximum((student.W**2).sum(axis=(1, 2)), 1e-300))
        return pooled, coeffs, res_frac
    if basis == "svd":
        P = student.P
        k = min(T.shape[1], T.shape[2])
        s = np.zeros((P, M, k))
        for m in range(M):
            U, _, Vt = np.linalg.svd(T[m], full_matrices=False)
            for p in range(P):
                s[p, m] = np.einsum("ia,ij,aj->a", U, student.W[p], Vt)
        return s
    raise ValueError(f"unknown basis {basis!r}")


def reduced_twin_from_full(student: GatedStudent, teachers: TeacherSet,
                           tau_w: float, tau_c: float) -> ReducedState:
    """Reduced state matching a full model's pooled row projection, used to
    start side-by-side integrations from equivalent initial conditions."""
    pooled, _, _ = project_full(student, teachers)
    return ReducedState(w=pooled.copy(), c=np.asarray(student.c, dtype=float).copy(),
                        tau_w=tau_w, tau_c=tau_c)
