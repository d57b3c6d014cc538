"""Gated linear student model: losses, analytic gradients, Euler integration.

The model output is y = sum_p c^p W^p x (per-path gates) or, in per-neuron
mode, y_i = sum_p c^p_i (W^p x)_i. The task loss averages over both the batch
and the output dimension, L = 1/(2 B d_out) sum_b ||y*_b - y_b||^2; in
expectation mode (whitened infinite batch) it becomes
1/(2 d_out) ||W* - sum_p c^p W^p||_F^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class NumericalBlowup(RuntimeError):
    """Raised when an Euler step produces a non-finite parameter."""

    def __init__(self, param: str, t: float | None = None, block: int | None = None):
        self.param = param
        self.t = t
        self.block = block
        where = "" if t is None else f" at t={t:g}, block={block}"
        super().__init__(f"non-finite value in {param}{where}")


@dataclass
class RegularizerConfig:
    """Gate and weight regularization coefficients.

    At most one of the two gate-norm variants may be nonzero; both zero is the
    unregularized (forgetful-control) configuration. `per_neuron_norm_group`
    selects how per-neuron gates are grouped for the norm term: "row" drives
    each output row's gate vector (across paths) to unit norm, "tensor" the
    whole gate tensor.
    """

    lambda_nonneg: float = 0.0
    lambda_norm_l1: float = 0.0
    lambda_norm_l2: float = 0.0
    lambda_w: float = 0.0
    per_neuron_norm_group: str = "row"

    def __post_init__(self):
        for name in ("lambda_nonneg", "lambda_norm_l1", "lambda_norm_l2", "lambda_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.lambda_norm_l1 > 0 and self.lambda_norm_l2 > 0:
            raise ValueError("at most one of lambda_norm_l1, lambda_norm_l2 may be nonzero")
        if self.per_neuron_norm_group not in ("row", "tensor"):
            raise ValueError("per_neuron_norm_group must be 'row' or 'tensor'")

    def scaled(self, factor: float) -> "RegularizerConfig":
        return replace(
            self,
            lambda_nonneg=self.lambda_nonneg * factor,
            lambda_norm_l1=self.lambda_norm_l1 * factor,
            lambda_norm_l2=self.lambda_norm_l2 * factor,
            lambda_w=self.lambda_w * factor,
        )


@dataclass
class GatedStudent:
    """P weight matrices with gates, plus the two gradient-flow timescales.

    `c` has shape (P,) in per-path mode and (P, d_out) in per-neuron mode; the
    mode is fixed at construction.
    """

    W: np.ndarray            # (P, d_out, d_in)
    c: np.ndarray            # (P,) or (P, d_out)
    tau_w: float
    tau_c: float
    sigma: float = 0.01

    @property
    def P(self) -> int:
        return self.W.shape[0]

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    @property
    def d_in(self) -> int:
        return self.W.shape[2]

    @property
    def per_neuron(self) -> bool:
        return self.c.ndim == 2

    @classmethod
    def init(
        cls,
        P: int,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        tau_w: float,
        tau_c: float,
        sigma: float = 0.01,
        per_neuron: bool = False,
    ) -> "GatedStudent":
        """Small i.i.d. Gaussian weights (variance sigma^2/d_in), all gates 1/2."""
        W = rng.standard_normal((P, d_out, d_in)) * (sigma / np.sqrt(d_in))
        c = np.full((P, d_out) if per_neuron else P, 0.5)
        return cls(W=W, c=c, tau_w=tau_w, tau_c=tau_c, sigma=sigma)

    def copy(self) -> "GatedStudent":
        return GatedStudent(self.W.copy(), self.c.copy(), self.tau_w, self.tau_c, self.sigma)

    def combined(self) -> np.ndarray:
        """Effective linear map sum_p c^p W^p (rows gated in per-neuron mode)."""
        if self.per_neuron:
            return np.einsum("pi,pij->ij", self.c, self.W)
        return np.tensordot(self.c, self.W, axes=1)


@dataclass
class Batch:
    """Inputs and targets for one gradient step.

    In sampled mode X is (d_in, B) with i.i.d. standard-normal entries and
    Y_star = W_eff X. In expectation mode (B -> infinity, identity input
    covariance) only the effective teacher is stored.
    """

    teacher: np.ndarray                 # (d_out, d_in) effective teacher
    X: np.ndarray | None = None         # (d_in, B) or None in expectation mode
    Y_star: np.ndarray | None = None    # (d_out, B) or None
    expectation: bool = False

    @property
    def B(self) -> int:
        return 0 if self.expectation else self.X.shape[1]


def forward(student: GatedStudent, X: np.ndarray) -> np.ndarray:
    """Model output for an input matrix with d_in rows."""
    if X.shape[0] != student.d_in:
        raise ValueError(f"input has {X.shape[0]} rows, expected d_in={student.d_in}")
    return student.combined() @ X


def _residual(student: GatedStudent, batch: Batch) -> np.ndarray:
    """W_eff_teacher - sum_p c^p W^p, the expectation-mode error map."""
    return batch.teacher - student.combined()


def task_loss(student: GatedStudent, batch: Batch) -> float:
    if batch.expectation:
        R = _residual(student, batch)
        return float((R * R).sum() / (2.0 * student.d_out))
    E = batch.Y_star - forward(student, batch.X)
    return float((E * E).sum() / (2.0 * batch.B * student.d_out))


def _gate_rows(c: np.ndarray) -> np.ndarray:
    """Gates as a 2-d view (P, groups); per-path mode has a single group."""
    return c[:, None] if c.ndim == 1 else c


def reg_loss(student: GatedStudent, reg: RegularizerConfig) -> float:
    c = student.c
    total = reg.lambda_nonneg * np.maximum(0.0, -c).sum()
    norm_lam, ordk = _norm_variant(reg)
    if norm_lam > 0.0:
        for g in _norm_groups(c, reg):
            total += norm_lam * 0.5 * (np.linalg.norm(g, ord=ordk) - 1.0) ** 2
    if reg.lambda_w > 0.0:
        total += reg.lambda_w / (2.0 * student.P * student.d_in) * (student.W ** 2).sum()
    return float(total)


def _norm_variant(reg: RegularizerConfig) -> tuple[float, int]:
    if reg.lambda_norm_l1 > 0.0:
        return reg.lambda_norm_l1, 1
    return reg.lambda_norm_l2, 2


def _norm_groups(c: np.ndarray, reg: RegularizerConfig):
    """Gate vectors the norm regularizer acts on."""
    if c.ndim == 1 or reg.per_neuron_norm_group == "tensor":
        yield c.ravel()
    else:
        for i in range(c.shape[1]):
            yield c[:, i]


def gate_reg_grad(c: np.ndarray, reg: RegularizerConfig) -> np.ndarray:
    """Subgradient of the gate regularizers.

    Kink selections: d/dc max(0,-c) = 0 at c=0; sign(0)=0 for the L1 norm; the
    L2 norm term is 0 at ||c||=0.
    """
    g = -reg.lambda_nonneg * (c < 0).astype(float)
    if reg.lambda_norm_l1 > 0.0:
        if c.ndim == 1 or reg.per_neuron_norm_group == "tensor":
            g = g + reg.lambda_norm_l1 * (np.abs(c).sum() - 1.0) * np.sign(c)
        else:
            dev = np.abs(c).sum(axis=0, keepdims=True) - 1.0
            g = g + reg.lambda_norm_l1 * dev * np.sign(c)
    elif reg.lambda_norm_l2 > 0.0:
        if c.ndim == 1 or reg.per_neuron_norm_group == "tensor":
            n = np.linalg.norm(c)
            if n > 0.0:
                g = g + reg.lambda_norm_l2 * (n - 1.0) * c / n
        else:
            n = np.linalg.norm(c, axis=0, keepdims=True)
            safe = np.maximum(n, 1e-300)
            g = g + np.where(n > 0.0, reg.lambda_norm_l2 * (n - 1.0) * c / safe, 0.0)
    return g


def grad_weights(student: GatedStudent, batch: Batch, reg: RegularizerConfig) -> np.ndarray:
    """dL/dW^p for every path; shape (P, d_out, d_in)."""
    if batch.expectation:
        G = _residual(student, batch)
        nb = 1.0
    else:
        E = batch.Y_star - forward(student, batch.X)
        G = E @ batch.X.T
        nb = float(batch.B)
    scale = 1.0 / (nb * student.d_out)
    if student.per_neuron:
        gW = -scale * student.c[:, :, None] * G[None, :, :]
    else:
        gW = -scale * student.c[:, None, None] * G[None, :, :]
    if reg.lambda_w > 0.0:
        gW = gW + (reg.lambda_w / (student.P * student.d_in)) * student.W
    return gW


def grad_gates(student: GatedStudent, batch: Batch, reg: RegularizerConfig) -> np.ndarray:
    """dL/dc, same shape as the gates."""
    if batch.expectation:
        G = _residual(student, batch)
        nb = 1.0
    else:
        E = batch.Y_star - forward(student, batch.X)
        G = E @ batch.X.T
        nb = float(batch.B)
    scale = 1.0 / (nb * student.d_out)
    if student.per_neuron:
        task = -scale * (student.W * G[None, :, :]).sum(axis=2)
    else:
        task = -scale * np.einsum("pij,ij->p", student.W, G)
    return task + gate_reg_grad(student.c, reg)


def euler_step(
    student: GatedStudent,
    batch: Batch,
    reg: RegularizerConfig,
    dt: float,
) -> GatedStudent:
    """One explicit Euler step of the gradient flow.

    Both gradients are evaluated at the pre-step state (simultaneous update).
    Raises NumericalBlowup if any parameter leaves the finite range.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    gW = grad_weights(student, batch, reg)
    gc = grad_gates(student, batch, reg)
    W = student.W - (dt / student.tau_w) * gW
    c = student.c - (dt / student.tau_c) * gc
    if not np.isfinite(c).all():
        raise NumericalBlowup("gates")
    if not np.isfinite(W).all():
        raise NumericalBlowup("weights")
    return GatedStudent(W=W, c=c, tau_w=student.tau_w, tau_c=student.tau_c, sigma=student.sigma)
