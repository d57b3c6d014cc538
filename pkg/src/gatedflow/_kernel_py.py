"""Pure-NumPy step engine for the gated-student gradient flow.

Same contract as the compiled extension in _kernel.pyx: `advance` integrates
n_steps Euler steps in place and reports the losses and update norms of the
first substep (the state the caller just logged). Sampled mode consumes
exactly one rng.standard_normal(out=xbuf) call per step, so both backends
share one random stream.
"""

from __future__ import annotations

import numpy as np

NORM_NONE, NORM_L1, NORM_L2 = 0, 1, 2


def gate_reg_terms(c, lam_nonneg, lam_norm, norm_kind, per_neuron_row_group=True):
    """(reg_loss, reg_grad) for the gate regularizers on effective coefficients."""
    loss = lam_nonneg * np.maximum(0.0, -c).sum()
    grad = -lam_nonneg * (c < 0).astype(float)
    if norm_kind == NORM_L1:
        if c.ndim == 1 or not per_neuron_row_group:
            dev = np.abs(c).sum() - 1.0
            loss += lam_norm * 0.5 * dev * dev
            grad = grad + lam_norm * dev * np.sign(c)
        else:
            dev = np.abs(c).sum(axis=0, keepdims=True) - 1.0
            loss += lam_norm * 0.5 * (dev * dev).sum()
            grad = grad + lam_norm * dev * np.sign(c)
    elif norm_kind == NORM_L2:
        if c.ndim == 1 or not per_neuron_row_group:
            n = np.linalg.norm(c)
            loss += lam_norm * 0.5 * (n - 1.0) ** 2
            if n > 0.0:
                grad = grad + lam_norm * (n - 1.0) * c / n
        else:
            n = np.linalg.norm(c, axis=0, keepdims=True)
            loss += lam_norm * 0.5 * ((n - 1.0) ** 2).sum()
            safe = np.maximum(n, 1e-300)
            grad = grad + np.where(n > 0.0, lam_norm * (n - 1.0) * c / safe, 0.0)
    return float(loss), grad


def advance(
    W: np.ndarray,
    c: np.ndarray,
    teacher: np.ndarray,
    n_steps: int,
    dt: float,
    tau_w: float,
    tau_c: float,
    lam_nonneg: float,
    lam_norm: float,
    norm_kind: int,
    lam_w: float,
    B: int,
    rng: np.random.Generator | None,
    xbuf: np.ndarray | None,
    per_neuron_row_group: bool = True,
):
    """Integrate n_steps in place; returns (loss0, reg0, dw_norms0, dc_norm0, ok)."""
    P, d_out, d_in = W.shape
    per_neuron = c.ndim == 2
    loss0 = reg0 = 0.0
    dwn0 = np.zeros(P)
    dcn0 = 0.0
    for k in range(n_steps):
        if per_neuron:
            A = np.einsum("pi,pij->ij", c, W)
        else:
            A = np.tensordot(c, W, axes=1)
        R = teacher - A
        if B > 0:
            rng.standard_normal(out=xbuf)
            E = R @ xbuf
            G = E @ xbuf.T
            nb = float(B)
            loss = (E * E).sum() / (2.0 * nb * d_out)
        else:
            G = R
            nb = 1.0
            loss = (R * R).sum() / (2.0 * d_out)
        scale = 1.0 / (nb * d_out)
        if per_neuron:
            gW = -scale * c[:, :, None] * G[None]
            gc = -scale * (W * G[None]).sum(axis=2)
        else:
            gW = -scale * c[:, None, None] * G[None]
            gc = -scale * np.einsum("pij,ij->p", W, G)
        if lam_w > 0.0:
            gW += (lam_w / (P * d_in)) * W
        rloss, rgrad = gate_reg_terms(c, lam_nonneg, lam_norm, norm_kind, per_neuron_row_group)
        if lam_w > 0.0:
            rloss += lam_w / (2.0 * P * d_in) * (W * W).sum()
        gc = gc + rgrad
        dW = (dt / tau_w) * gW
        dc = (dt / tau_c) * gc
        if k == 0:
            loss0, reg0 = float(loss), float(rloss)
            dwn0 = np.sqrt((dW * dW).sum(axis=(1, 2)))
            dcn0 = float(np.linalg.norm(dc))
        W -= dW
        c -= dc
        if not (np.isfinite(c).all() and np.isfinite(W).all()):
            return loss0, reg0, dwn0, dcn0, False
    return loss0, reg0, dwn0, dcn0, True
