"""Two-layer fully-connected deep linear student with gate-style second layer.

Output is y = W2 W1 x; each entry of W2 is treated as a gate for the
regularizers. Differential timescales (tau_w2 < tau_w1) plus the second-layer
regularization push the network into the flexible regime, with the first
layer splitting into teacher-aligned students and the second layer gating
them along the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .curriculum import TeacherSet
from .model import Batch, NumericalBlowup, RegularizerConfig


@dataclass
class TwoLayerNet:
    W1: np.ndarray          # (d_hid, d_in)
    W2: np.ndarray          # (d_out, d_hid)
    tau_w1: float
    tau_w2: float

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def d_hid(self) -> int:
        return self.W1.shape[0]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]

    @classmethod
    def init(
        cls,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        tau_w1: float,
        tau_w2: float,
        d_hid: int | None = None,
        sigma: float = 0.01,
    ) -> "TwoLayerNet":
        d_hid = 2 * d_out if d_hid is None else d_hid
        W1 = rng.standard_normal((d_hid, d_in)) * (sigma / np.sqrt(d_in))
        W2 = rng.standard_normal((d_out, d_hid)) * (sigma / np.sqrt(d_hid))
        return cls(W1=W1, W2=W2, tau_w1=tau_w1, tau_w2=tau_w2)

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(self.W1.copy(), self.W2.copy(), self.tau_w1, self.tau_w2)

    def combined(self) -> np.ndarray:
        return self.W2 @ self.W1


def fc_forward(net: TwoLayerNet, X: np.ndarray) -> np.ndarray:
    return net.W2 @ (net.W1 @ X)


def fc_task_loss(net: TwoLayerNet, batch: Batch) -> float:
    if batch.expectation:
        R = batch.teacher - net.combined()
        return float((R * R).sum() / (2.0 * net.d_out))
    E = batch.Y_star - fc_forward(net, batch.X)
    return float((E * E).sum() / (2.0 * batch.B * net.d_out))


def _w2_reg(net: TwoLayerNet, reg: RegularizerConfig, norm_group: str):
    """(loss, grad) of the gate regularizers applied to the W2 entries."""
    W2 = net.W2
    loss = reg.lambda_nonneg * np.maximum(0.0, -W2).sum()
    grad = -reg.lambda_nonneg * (W2 < 0).astype(float)
    lam = reg.lambda_norm_l2 if reg.lambda_norm_l2 > 0 else reg.lambda_norm_l1
    ordk = 2 if reg.lambda_norm_l2 > 0 else 1
    if lam > 0:
        if norm_group == "tensor":
            groups = [W2.ravel()]
            views = [grad.ravel()]
        elif norm_group == "row":
            groups = [W2[i] for i in range(net.d_out)]
            views = [grad[i] for i in range(net.d_out)]
        else:
            raise ValueError(f"unknown norm_group {norm_group!r}")
        for g, gv in zip(groups, views):
            n = np.linalg.norm(g, ord=ordk)
            loss += lam * 0.5 * (n - 1.0) ** 2
            if ordk == 2:
                if n > 0:
                    gv += lam * (n - 1.0) * g / n
            else:
                gv += lam * (n - 1.0) * np.sign(g)
    return float(loss), grad


def fc_grads(
    net: TwoLayerNet,
    batch: Batch,
    reg: RegularizerConfig,
    norm_group: str = "tensor",
) -> tuple[np.ndarray, np.ndarray]:
    """Task gradients through both layers plus W2-as-gates regularization."""
    if batch.expectation:
        R = batch.teacher - net.combined()
        g2 = -(R @ net.W1.T) / net.d_out
        g1 = -(net.W2.T @ R) / net.d_out
    else:
        H = net.W1 @ batch.X
        E = batch.Y_star - net.W2 @ H
        nb = float(batch.B)
        g2 = -(E @ H.T) / (nb * net.d_out)
        g1 = -(net.W2.T @ (E @ batch.X.T)) / (nb * net.d_out)
    _, rgrad = _w2_reg(net, reg, norm_group)
    return g1, g2 + rgrad


def fc_euler_step(
    net: TwoLayerNet,
    batch: Batch,
    reg: RegularizerConfig,
    dt: float,
    norm_group: str = "tensor",
) -> TwoLayerNet:
    g1, g2 = fc_grads(net, batch, reg, norm_group)
    W1 = net.W1 - (dt / net.tau_w1) * g1
    W2 = net.W2 - (dt / net.tau_w2) * g2
    if not np.isfinite(W1).all():
        raise NumericalBlowup("W1")
    if not np.isfinite(W2).all():
        raise NumericalBlowup("W2")
    return TwoLayerNet(W1=W1, W2=W2, tau_w1=net.tau_w1, tau_w2=net.tau_w2)


@dataclass
class SortResult:
    """Hidden-row permutation grouping the network into per-teacher students.

    Applying `perm` to the W1 rows and W2 columns leaves the network function
    unchanged. `slot_cosines[s]` is the cosine between the hidden row placed
    at slot s and that slot's teacher row; `emergent_gates[m]` is the mean of
    student m's sorted W2 block.
    """

    perm: np.ndarray
    W1_sorted: np.ndarray
    W2_sorted: np.ndarray
    slot_cosines: np.ndarray
    emergent_gates: np.ndarray
    assignment_method: str

    def student_block(self, m: int, d_out: int) -> np.ndarray:
        return self.W2_sorted[:, m * d_out:(m + 1) * d_out]


def _row_cosines(W1: np.ndarray, teachers: TeacherSet) -> np.ndarray:
    """(d_hid, M*d_out) cosine of each hidden row against each teacher row."""
    T = teachers.W_star.reshape(teachers.M * teachers.d_out, teachers.d_in)
    n1 = np.linalg.norm(W1, axis=1, keepdims=True)
    tn = np.linalg.norm(T, axis=1, keepdims=True)
    denom = np.maximum(n1, 1e-300) * np.maximum(tn.T, 1e-300)
    C = (W1 @ T.T) / denom
    # zero-norm rows tie-break to cosine 0
    C[(n1 <= 0).ravel()] = 0.0
    return C


def sort_students(
    net: TwoLayerNet,
    teachers: TeacherSet,
    method: str = "assignment",
) -> SortResult:
    """Group hidden rows into per-teacher students and permute W2 to match.

    method="assignment" solves the global one-to-one matching of hidden rows
    to (teacher, row) slots; method="greedy" assigns each row to its
    best-matching teacher with capacity d_out per teacher (overflow spills to
    the next-best teacher), then matches rows within each student block.
    """
    M, d_out = teachers.M, teachers.d_out
    d_hid = net.d_hid
    if d_hid != M * d_out:
        raise ValueError("sorting assumes d_hid == M * d_out")
    C = _row_cosines(net.W1, teachers)
    perm = np.empty(d_hid, dtype=int)
    if method == "assignment":
        rows, slots = linear_sum_assignment(-C)
        for h, s in zip(rows, slots):
            perm[s] = h
    elif method == "greedy":
        best_per_teacher = C.reshape(d_hid, M, d_out).max(axis=2)   # (d_hid, M)
        order = np.argsort(-best_per_teacher.max(axis=1))
        capacity = {m: d_out for m in range(M)}
        groups: dict[int, list[int]] = {m: [] for m in range(M)}
        for h in order:
            for m in np.argsort(-best_per_teacher[h]):
                if capacity[m] > 0:
                    groups[m].append(int(h))
                    capacity[m] -= 1
                    break
        for m in range(M):
            sub = C[groups[m], m * d_out:(m + 1) * d_out]
            r, s = linear_sum_assignment(-sub)
            for ri, si in zip(r, s):
                perm[m * d_out + si] = groups[m][ri]
    else:
        raise ValueError(f"unknown sorting method {method!r}")
    W1s = net.W1[perm]
    W2s = net.W2[:, perm]
    slot_cos = C[perm, np.arange(d_hid)]
    gates = np.array([W2s[:, m * d_out:(m + 1) * d_out].mean() for m in range(M)])
    return SortResult(perm=perm, W1_sorted=W1s, W2_sorted=W2s,
                      slot_cosines=slot_cos, emergent_gates=gates,
                      assignment_method=method)


def sorted_total_alignment(sort: SortResult, teachers: TeacherSet) -> float:
    """Cosine between the concatenated sorted first layer and the teachers."""
    flat_s = sort.W1_sorted.ravel()
    flat_t = teachers.W_star.reshape(-1)
    ns, nt = np.linalg.norm(flat_s), np.linalg.norm(flat_t)
    if ns == 0 or nt == 0:
        return 0.0
    return float(flat_s @ flat_t / (ns * nt))
