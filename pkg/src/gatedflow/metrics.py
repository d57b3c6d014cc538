"""Alignment, specialization, timing and update-size measurements."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .curriculum import TeacherSet
from .model import Batch, GatedStudent, RegularizerConfig, grad_gates


def _as_weight_stack(student) -> np.ndarray:
    if isinstance(student, GatedStudent):
        return student.W
    return np.asarray(student)


def pair_alignment(student, teachers: TeacherSet | np.ndarray) -> np.ndarray:
    """(P, M) matrix of mean row-cosines between students and teachers.

    Zero-norm rows contribute cosine 0.
    """
    W = _as_weight_stack(student)
    T = teachers.W_star if isinstance(teachers, TeacherSet) else np.asarray(teachers)
    P, M = W.shape[0], T.shape[0]
    tn = np.linalg.norm(T, axis=2)                      # (M, d_out)
    out = np.zeros((P, M))
    for p in range(P):
        wn = np.linalg.norm(W[p], axis=1)               # (d_out,)
        dots = np.einsum("ij,mij->mi", W[p], T)         # (M, d_out)
        denom = wn[None, :] * tn
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
        out[p] = cos.mean(axis=1)
    return out


def assign_students(align: np.ndarray, method: str = "optimal") -> list[int | None]:
    """Map each student to a teacher.

    "optimal" maximizes the summed pair alignment over bijections of the best
    min(P, M) pairs (exhaustive; presets keep P <= 4); unmatched students get
    None. "greedy" is the highest-cosine rule and may collide.
    """
    P, M = align.shape
    if method == "greedy":
        return [int(np.argmax(align[p])) for p in range(P)]
    if method != "optimal":
        raise ValueError(f"unknown assignment method {method!r}")
    k = min(P, M)
    best_score, best = -np.inf, None
    for students in itertools.permutations(range(P), k):
        for teachers_perm in itertools.permutations(range(M), k):
            score = sum(align[s, m] for s, m in zip(students, teachers_perm))
            if score > best_score:
                best_score, best = score, (students, teachers_perm)
    assignment: list[int | None] = [None] * P
    for s, m in zip(*best):
        assignment[s] = m
    return assignment


def total_alignment(
    student,
    teachers: TeacherSet | np.ndarray,
    method: str = "optimal",
) -> tuple[float, list[int | None]]:
    """Cosine between the concatenated assigned students and teachers.

    Students without a matched teacher (P > M) are excluded and reported as
    None in the assignment.
    """
    W = _as_weight_stack(student)
    T = teachers.W_star if isinstance(teachers, TeacherSet) else np.asarray(teachers)
    align = pair_alignment(W, T)
    assignment = assign_students(align, method)
    s_parts, t_parts = [], []
    for p, m in enumerate(assignment):
        if m is None:
            continue
        s_parts.append(W[p].ravel())
        t_parts.append(T[m].ravel())
    s_vec, t_vec = np.concatenate(s_parts), np.concatenate(t_parts)
    ns, nt = np.linalg.norm(s_vec), np.linalg.norm(t_vec)
    if ns == 0 or nt == 0:
        return 0.0, assignment
    return float(s_vec @ t_vec / (ns * nt)), assignment


def specialization_gap(align: np.ndarray, assignment: list[int | None] | None = None) -> float:
    """Mean over teachers of (assigned student's alignment minus the best
    other student's). 1 at perfect specialization, ~0 when students are
    interchangeable; robust to teachers being mutually similar."""
    P, M = align.shape
    if assignment is None:
        assignment = assign_students(align)
    gaps = []
    for p, m in enumerate(assignment):
        if m is None:
            continue
        others = [align[q, m] for q in range(P) if q != p]
        gaps.append(align[p, m] - (max(others) if others else 0.0))
    return float(np.mean(gaps)) if gaps else 0.0


def out_of_span_residual(student, teachers: TeacherSet | np.ndarray) -> np.ndarray:
    """Per-path fraction of weight norm outside the teachers' row span.

    Row beta of each student is projected onto span{teacher_m row beta}_m via
    least squares (exact for orthonormal teacher rows).
    """
    W = _as_weight_stack(student)
    T = teachers.W_star if isinstance(teachers, TeacherSet) else np.asarray(teachers)
    P, d_out, _ = W.shape
    frac = np.zeros(P)
    for p in range(P):
        res_sq = tot_sq = 0.0
        for i in range(d_out):
            basis = T[:, i, :]                       # (M, d_in)
            coef, *_ = np.linalg.lstsq(basis.T, W[p, i], rcond=None)
            r = W[p, i] - basis.T @ coef
            res_sq += float(r @ r)
            tot_sq += float(W[p, i] @ W[p, i])
        frac[p] = np.sqrt(res_sq / tot_sq) if tot_sq > 0 else 0.0
    return frac


def time_to_threshold(record, threshold: float = 0.1):
    """Per-block time from block start to the first logged loss below the
    threshold. Blocks that never cross are censored at the block length and
    flagged False in the reached mask."""
    t2t = np.full(record.n_blocks, record.tau_B)
    reached = np.zeros(record.n_blocks, dtype=bool)
    for b in range(record.n_blocks):
        sel = record.block == b
        if not sel.any():
            continue
        ts, ls = record.t[sel], record.loss_task[sel]
        below = np.nonzero(ls < threshold)[0]
        if below.size:
            t2t[b] = ts[below[0]] - b * record.tau_B
            reached[b] = True
    return t2t, reached


def switch_aligned_loss(record, window: float) -> np.ndarray:
    """Per-block mean loss over the first `window` time units after each
    switch; the early-vs-late comparison of these values is the
    task-switching-speed metric."""
    out = np.full(record.n_blocks, np.nan)
    for b in range(record.n_blocks):
        sel = (record.block == b) & (record.t - b * record.tau_B < window)
        if sel.any():
            out[b] = record.loss_task[sel].mean()
    return out


def rank_gate_speed(
    d: int,
    ranks: list[int] | np.ndarray,
    gate: float = 0.5,
    student_scale: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Gate-update magnitude tau_c*dc/dt of a single-path probe y = c W x vs
    teacher rank, in expectation mode at fixed alignment (the student is the
    rank-r teacher scaled by `student_scale`)."""
    if rng is None:
        rng = np.random.default_rng(0)
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
    U = np.linalg.qr(rng.standard_normal((d, d)))[0]
    out = np.zeros(len(ranks))
    reg = RegularizerConfig()
    for k, r in enumerate(ranks):
        T = U[:, :r] @ Q[:, :r].T if r > 0 else np.zeros((d, d))
        student = GatedStudent(
            W=(student_scale * T)[None, :, :], c=np.array([gate]), tau_w=1.0, tau_c=1.0
        )
        g = grad_gates(student, Batch(teacher=T, expectation=True), reg)
        out[k] = -float(g[0])
    return out


@dataclass
class GateActivityStats:
    """Terminal gate activity, summarized over the final full task cycle."""

    peaks: np.ndarray         # (P,) max end-of-block gate over the last cycle
    active_threshold: float
    decayed_threshold: float

    @property
    def n_active(self) -> int:
        return int((self.peaks > self.active_threshold).sum())

    @property
    def n_decayed(self) -> int:
        return int((self.peaks < self.decayed_threshold).sum())


def gate_activity(
    block_end_gates: np.ndarray,
    M: int,
    active_threshold: float = 0.5,
    decayed_threshold: float = 0.1,
) -> GateActivityStats:
    """Summarize per-path activity from end-of-block gate values (n_blocks, P).

    A path counts active when its gate exceeds the threshold at the end of
    some block within the final cycle of M blocks (each task's specialist
    peaks in its own block)."""
    peaks = np.asarray(block_end_gates)[-M:].max(axis=0)
    return GateActivityStats(peaks, active_threshold, decayed_threshold)
