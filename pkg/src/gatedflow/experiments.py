"""Experiment drivers binding curriculum, model and metrics.

All drivers are deterministic given (preset, seed): a master seed spawns
independent streams for teacher generation, weight init, and batch sampling.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend, metrics, reduced as red
from .curriculum import (
    BlockSchedule,
    TeacherSet,
    expectation_batch,
    make_composite_tasks,
    make_teachers,
    sample_batch,
    seed_streams,
    single_tasks,
)
from .deepnet import TwoLayerNet, fc_euler_step, fc_task_loss, sort_students, sorted_total_alignment
from .model import Batch, GatedStudent, NumericalBlowup, RegularizerConfig
from .presets import ExperimentPreset, RunParams, get_preset
from .record import RunRecord

_NORM_KIND = {"none": 0, "l1": 1, "l2": 2}


def _norm_args(reg: RegularizerConfig) -> tuple[float, int]:
    if reg.lambda_norm_l1 > 0:
        return reg.lambda_norm_l1, 1
    if reg.lambda_norm_l2 > 0:
        return reg.lambda_norm_l2, 2
    return 0.0, 0


def default_stride(params: RunParams) -> int:
    steps_per_block = int(round(params.tau_B / params.dt))
    return max(1, steps_per_block // 200)


def simulate(
    params: RunParams,
    seed: int,
    schedule: BlockSchedule | None = None,
    teachers: TeacherSet | None = None,
    similarity: float = 0.0,
    expectation: bool = False,
    stride: int | None = None,
    on_blowup: str = "raise",
) -> RunRecord:
    """Integrate one blocked-curriculum run and log the standard record.

    Each logged row holds the state at its time stamp: the batch loss and the
    update norms of the step leaving that state, plus alignment diagnostics
    computed on the state itself.
    """
    streams = seed_streams(seed)
    if teachers is None:
        teachers = make_teachers(
            params.M, params.d_in, params.d_out, similarity,
            rng=streams["teachers"], orthogonality=params.orthogonality,
        )
    if schedule is None:
        schedule = BlockSchedule(single_tasks(params.M), params.tau_B, params.n_blocks)
    student = GatedStudent.init(
        params.P, params.d_in, params.d_out, streams["init"],
        tau_w=params.tau_w, tau_c=params.tau_c, sigma=params.sigma,
        per_neuron=params.per_neuron,
    )
    W, c = student.W, student.c
    lam_norm, norm_kind = _norm_args(params.reg)
    B = 0 if expectation else params.batch_size
    xbuf = np.empty((params.d_in, B)) if B > 0 else None
    rng = streams["batches"]
    steps_per_block = int(round(schedule.tau_B / params.dt))
    if stride is None:
        stride = max(1, steps_per_block // 200)

    rows: list[list[float]] = []
    blobs = {"t": [], "block": [], "gates": [], "dwn": [], "dcn": [],
             "align": [], "total": [], "resid": []}
    losses: list[float] = []
    regs: list[float] = []
    block_end_gates = []
    aborted = None
    orthonormal = similarity == 0.0

    def snapshot():
        al = metrics.pair_alignment(W, teachers)
        tot, _ = metrics.total_alignment(W, teachers)
        resid = metrics.out_of_span_residual(W, teachers) if orthonormal else np.zeros(params.P)
        gates = c.mean(axis=1) if params.per_neuron else c.copy()
        return al, tot, resid, gates

    try:
        for b in range(schedule.n_blocks):
            teacher_eff = schedule.task_for_block(b).effective_teacher(teachers)
            done = 0
            while done < steps_per_block:
                n = min(stride, steps_per_block - done)
                al, tot, resid, gates = snapshot()
                loss0, reg0, dwn, dcn, ok = backend.advance(
                    W, c, teacher_eff, n, params.dt, params.tau_w, params.tau_c,
                    params.reg.lambda_nonneg, lam_norm, norm_kind, params.reg.lambda_w,
                    B, rng, xbuf, params.reg.per_neuron_norm_group == "row",
                )
                t = b * schedule.tau_B + done * params.dt
                blobs["t"].append(t)
                blobs["block"].append(b)
                losses.append(loss0)
                regs.append(reg0)
                blobs["gates"].append(gates)
                blobs["dwn"].append(dwn)
                blobs["dcn"].append(dcn)
                blobs["align"].append(al)
                blobs["total"].append(tot)
                blobs["resid"].append(resid)
                if not ok:
                    raise NumericalBlowup("parameters", t=t, block=b)
                done += n
            block_end_gates.append(c.mean(axis=1) if params.per_neuron else c.copy())
    except NumericalBlowup as exc:
        if on_blowup == "raise":
            raise
        aborted = {"t": exc.t, "block": exc.block, "param": exc.param}

    record = RunRecord(
        t=np.array(blobs["t"]),
        block=np.array(blobs["block"], dtype=int),
        loss_task=np.array(losses),
        loss_reg=np.array(regs),
        gates=np.array(blobs["gates"]),
        dw_norms=np.array(blobs["dwn"]),
        dc_norm=np.array(blobs["dcn"]),
        align=np.array(blobs["align"]),
        total_align=np.array(blobs["total"]),
        resid=np.array(blobs["resid"]),
        tau_B=schedule.tau_B,
        n_blocks=schedule.n_blocks,
    )
    final_align = metrics.pair_alignment(W, teachers)
    final_total, assignment = metrics.total_alignment(W, teachers)
    t2t, reached = metrics.time_to_threshold(record)
    record.summary = {
        "seed": seed,
        "final_total_alignment": final_total,
        "assignment": assignment,
        "final_pair_alignment": final_align,
        "per_block_time_to_threshold": t2t,
        "threshold_reached": reached,
        "regime_label": "flexible" if final_total > 0.8 else "forgetful",
        "regime_cut": 0.8,
        "final_gates": np.asarray(c).copy(),
        "backend": backend.backend_name(params.per_neuron),
    }
    if aborted:
        record.summary["aborted"] = aborted
    record.final_state = {
        "W": W.copy(),
        "c": np.asarray(c).copy(),
        "teachers": teachers.W_star.copy(),
        "block_end_gates": np.array(block_end_gates) if block_end_gates else np.zeros((0, params.P)),
    }
    return record


def run_curriculum(
    preset: ExperimentPreset | str,
    seed: int,
    regime: str = "flexible",
    expectation: bool = False,
    stride: int | None = None,
    on_blowup: str = "raise",
) -> RunRecord:
    """One run of a named preset in the flexible or forgetful configuration."""
    if isinstance(preset, str):
        preset = get_preset(preset)
    if regime not in ("flexible", "forgetful"):
        raise ValueError("regime must be 'flexible' or 'forgetful'")
    params = preset.effective(forgetful=regime == "forgetful")
    rec = simulate(params, seed, expectation=expectation, stride=stride, on_blowup=on_blowup)
    rec.summary["preset"] = preset.name
    rec.summary["regime"] = regime
    return rec


# ---------------------------------------------------------------------------
# generalization (task / subtask composition)
# ---------------------------------------------------------------------------

def generalization_run(
    mode: str,
    regime: str,
    seed: int,
    preset: ExperimentPreset | None = None,
    phase_split: int | None = None,
    stride: int | None = None,
) -> RunRecord:
    """Train on single teachers, then cycle the pairwise composites.

    Model parameters carry over the phase boundary unchanged; the summary
    reports adaptation statistics for the first composite block and the gate
    placed on the non-contributing student at composite block ends.
    """
    if preset is None:
        preset = get_preset("task-composition" if mode == "task" else "subtask-composition")
    params = preset.effective(forgetful=regime == "forgetful")
    streams = seed_streams(seed)
    teachers = make_teachers(params.M, params.d_in, params.d_out,
                             rng=streams["teachers"], orthogonality=params.orthogonality)
    composites = make_composite_tasks(teachers, mode)
    if phase_split is None:
        phase_split = preset.n_blocks // 2
    schedule = BlockSchedule(
        single_tasks(params.M), params.tau_B, preset.n_blocks,
        phase2_tasks=composites, phase_split=phase_split,
    )
    rec = simulate(params, seed, schedule=schedule, teachers=teachers, stride=stride)
    rec.summary["preset"] = preset.name
    rec.summary["regime"] = regime
    rec.summary["mode"] = mode
    rec.summary["phase_split"] = phase_split

    first = rec.block == phase_split
    rec.summary["first_composite_min_loss"] = float(rec.loss_task[first].min())
    t2t, reached = metrics.time_to_threshold(rec)
    rec.summary["first_composite_t2t"] = float(t2t[phase_split])
    rec.summary["first_composite_reached"] = bool(reached[phase_split])

    # gate on the non-member student at the end of each composite's last block
    al_end = metrics.pair_alignment(rec.final_state["W"], teachers)
    assignment = metrics.assign_students(al_end)
    student_of = {m: p for p, m in enumerate(assignment) if m is not None}
    gates_by_block = rec.final_state["block_end_gates"]
    off_gates = {}
    for k, comp in enumerate(composites):
        blocks = [b for b in range(phase_split, preset.n_blocks)
                  if (b - phase_split) % len(composites) == k]
        b_last = blocks[-1]
        non_members = [m for m in range(params.M) if m not in comp.members]
        g = gates_by_block[b_last]
        off_gates[comp.name] = {f"t{m}": float(g[student_of[m]]) for m in non_members
                                if m in student_of}
    rec.summary["non_member_gates"] = off_gates
    return rec


# ---------------------------------------------------------------------------
# representational cost (P > M with weight decay)
# ---------------------------------------------------------------------------

def repr_cost_run(
    seed: int,
    lambda_w: float | None = None,
    active_threshold: float = 0.5,
    decayed_threshold: float = 0.1,
    stride: int | None = None,
) -> RunRecord:
    """Redundant-path run; lambda_w None uses the preset value, 0 the control
    (which also swaps in the control gate regularizers)."""
    preset = get_preset("repr-cost")
    control = lambda_w is not None and lambda_w == 0.0
    params = preset.effective()
    if control:
        reg = RegularizerConfig(
            lambda_nonneg=preset.control_lambda_nonneg,
            lambda_norm_l1=preset.control_lambda_norm_l1,
            lambda_w=0.0,
        )
        params = RunParams(**{**params.__dict__, "reg": reg})
    elif lambda_w is not None:
        reg = RegularizerConfig(
            lambda_nonneg=params.reg.lambda_nonneg,
            lambda_norm_l1=params.reg.lambda_norm_l1,
            lambda_w=lambda_w / params.d_out,
        )
        params = RunParams(**{**params.__dict__, "reg": reg})
    rec = simulate(params, seed, stride=stride)
    stats = metrics.gate_activity(
        rec.final_state["block_end_gates"], preset.M, active_threshold, decayed_threshold,
    )
    rec.summary["preset"] = preset.name
    rec.summary["lambda_w"] = preset.lambda_w if lambda_w is None else lambda_w
    rec.summary["gate_peaks"] = stats.peaks
    rec.summary["n_active"] = stats.n_active
    rec.summary["n_decayed"] = stats.n_decayed
    rec.summary["active_threshold"] = active_threshold
    rec.summary["decayed_threshold"] = decayed_threshold
    return rec


# ---------------------------------------------------------------------------
# full vs reduced side-by-side
# ---------------------------------------------------------------------------

def full_vs_reduced(seed: int, stride: int | None = None, reduced_tau_c: float | None = None):
    """Integrate the full model and its reduced twin side by side.

    The comparison runs in expectation mode (where the reduction is exact) and
    derives the reduced clocks from the full preset's pooled row dynamics;
    `reduced_tau_c` overrides the gate clock for diagnostic runs.
    """
    preset = get_preset("full-vs-reduced")
    params = preset.effective()
    streams = seed_streams(seed)
    teachers = make_teachers(params.M, params.d_in, params.d_out,
                             rng=streams["teachers"], orthogonality=params.orthogonality)
    rec = simulate(params, seed, teachers=teachers, expectation=True, stride=stride)

    student0 = GatedStudent.init(
        params.P, params.d_in, params.d_out, seed_streams(seed)["init"],
        tau_w=params.tau_w, tau_c=params.tau_c, sigma=params.sigma,
    )
    state = red.reduced_twin_from_full(
        student0, teachers,
        tau_w=preset.tau_w,                                   # per-mode weight clock
        tau_c=reduced_tau_c if reduced_tau_c is not None else preset.tau_c,
    )
    targets = [np.eye(2)[b % 2] for b in range(preset.n_blocks)]
    if stride is None:
        stride = max(1, int(round(preset.tau_B / params.dt)) // 200)
    traj = red.run_reduced(state, targets, preset.tau_B, params.dt,
                           reg=params.reg, stride=stride)

    n = min(len(rec.t), traj.data.shape[0])
    loss_diff = np.abs(rec.loss_task[:n] - traj.loss[:n])
    gate_diff = np.abs(rec.gates[:n] - traj.data[:n, 1:3]).max(axis=1)
    # pooled singular-value (row-basis coefficient) discrepancy at the end
    final_student = GatedStudent(rec.final_state["W"], rec.final_state["c"],
                                 params.tau_w, params.tau_c)
    pooled, _, _ = red.project_full(final_student, teachers)
    w_red = traj.summary["final_state"]["w"]
    sv_diff = float(np.abs(pooled - np.array(w_red)).max())
    report = {
        "loss_sup": float(loss_diff.max()),
        "gate_sup": float(gate_diff.max()),
        "sv_final_max_diff": sv_diff,
        "reduced_tau_c": state.tau_c,
        "reduced_tau_w": state.tau_w,
    }
    return rec, traj, report


# ---------------------------------------------------------------------------
# reduced-model checks (exact solution, conservation)
# ---------------------------------------------------------------------------

def exact_solution_check(
    tau_cs=(0.1, 0.18, 0.32, 0.56, 1.0),
    tau_w: float = 5.0,
    tau_B: float = 1.0,
    dt: float = 1e-3,
    with_reg: bool = True,
):
    """Post-switch reduced trajectories vs the exact wbar(cbar) curve."""
    reg = get_preset("reduced").effective().reg if with_reg else None
    results = []
    for tau_c in tau_cs:
        state = red.ReducedState.specialized(tau_w=tau_w, tau_c=tau_c)
        traj = red.run_reduced(state, [np.array([0.0, 1.0])], tau_B, dt, reg=reg, stride=1)
        cbar, wbar = traj.col("cbar"), traj.col("wbar")
        exact = red.exact_wbar(cbar, tau_c, tau_w)
        results.append({
            "tau_c": tau_c,
            "trajectory": traj,
            "sup_dev": float(np.abs(wbar - exact).max()),
            "final_loss": float(traj.loss[-1]),
            "min_loss": float(traj.loss.min()),
            "reached_1e2": bool(traj.loss.min() < 1e-2),
        })
    return results


def conservation_check(
    tau_w: float = 5.0,
    tau_c: float = 0.7,
    tau_B: float = 1.0,
    dt: float = 1e-3,
):
    """Drift of tau_c*cbar^2 - 2*tau_w*wbar^2 along the symmetry-enforced
    post-switch trajectory over one block."""
    state = red.ReducedState.specialized(tau_w=tau_w, tau_c=tau_c)
    traj = red.run_reduced(state, [np.array([0.0, 1.0])], tau_B, dt,
                           stride=1, project_symmetric=True)
    q = tau_c * traj.col("cbar") ** 2 - 2.0 * tau_w * traj.col("wbar") ** 2
    drift = float(np.abs(q - q[0]).max())
    return {"q0": float(q[0]), "drift_abs": drift, "drift_rel": drift / abs(q[0]),
            "trajectory": traj}


def blocklen_ratio(
    tau_B: float = 0.025,
    factor: float = 2.0,
    total_time: float | None = None,
    a: float = 0.1,
    wbar0: float = 0.01,
    dt: float = 1e-5,
    tau_c: float = 1.0,
    tau_w: float = 1.0,
):
    """Specialization growth for block lengths tau_B vs factor*tau_B at equal
    total time, in the early-learning regime of the second-order theory.

    Gates are re-prepared (cbar = 0) at every block start: the theory expands
    each block from an indifferent gate state, and the gate value carried
    across a switch otherwise cancels the growth at leading order.
    """
    if total_time is None:
        total_time = 4 * factor * tau_B

    def growth(tb: float) -> float:
        w = np.array([[a + wbar0, a], [a, a + wbar0]])
        state = red.ReducedState(w=w, c=np.array([0.5, 0.5]), tau_w=tau_w, tau_c=tau_c)
        n_blocks = int(round(total_time / tb))
        steps = int(round(tb / dt))
        for b in range(n_blocks):
            state.c = np.array([0.5, 0.5])
            y_star = np.eye(2)[b % 2]
            for _ in range(steps):
                state = red.reduced_step(state, y_star, dt)
        return red.spec_coords(state).wbar - wbar0

    g_short = growth(tau_B)
    g_long = growth(factor * tau_B)
    eps0 = np.array([1.0, 0.0]) - np.array([0.5, 0.5]) @ np.array(
        [[a + wbar0, a], [a, a + wbar0]])
    return {
        "tau_B": tau_B,
        "factor": factor,
        "total_time": total_time,
        "growth_short": g_short,
        "growth_long": g_long,
        "ratio": g_long / g_short,
        "predicted_two_period_growth": red.blocklength_prediction(
            wbar0, float(np.linalg.norm(eps0)), tau_B),
    }


# ---------------------------------------------------------------------------
# few-shot, switch speed, rank speed, non-orthogonality
# ---------------------------------------------------------------------------

def fewshot_run(n_seeds: int = 100, tail_fraction: float = 0.2):
    """Single-sample (B=1) runs; returns the seed-averaged end-of-block loss."""
    preset = get_preset("fewshot")
    params = preset.effective()
    end_loss = np.zeros((n_seeds, preset.n_blocks))
    for seed in range(n_seeds):
        rec = simulate(params, seed, stride=1)
        for b in range(preset.n_blocks):
            sel = (rec.block == b) & (rec.t - b * rec.tau_B >= (1 - tail_fraction) * rec.tau_B)
            end_loss[seed, b] = rec.loss_task[sel].mean()
    mean = end_loss.mean(axis=0)
    return {
        "end_loss_mean": mean,
        "end_loss_all": end_loss,
        "late_over_first_switch": float(mean[-1] / mean[1]),
    }


def switch_speed_run(seeds: int = 10, window: float = 0.2,
                     early=(2, 6), late_blocks: int = 4):
    """Mean post-switch loss early vs late in training, flexible vs forgetful."""
    preset = get_preset("switch-speed")
    out = {}
    for regime in ("flexible", "forgetful"):
        early_vals, late_vals = [], []
        for seed in range(seeds):
            rec = run_curriculum(preset, seed, regime=regime, stride=1)
            prof = metrics.switch_aligned_loss(rec, window)
            early_vals.append(np.nanmean(prof[early[0]:early[1]]))
            late_vals.append(np.nanmean(prof[-late_blocks:]))
        out[regime] = {
            "early": float(np.mean(early_vals)),
            "late": float(np.mean(late_vals)),
            "trend": "accelerating" if np.mean(late_vals) < np.mean(early_vals)
                     else "decelerating",
        }
    return out


def rank_speed_curve(ranks=None):
    """Gate-update magnitude vs teacher rank plus its linear fit."""
    preset = get_preset("rank-speed")
    if ranks is None:
        ranks = list(range(1, preset.d_in + 1))
    vals = metrics.rank_gate_speed(preset.d_in, ranks)
    coef = np.polyfit(ranks, vals, 1)
    fit = np.polyval(coef, ranks)
    ss_res = float(((vals - fit) ** 2).sum())
    ss_tot = float(((vals - vals.mean()) ** 2).sum())
    return {"ranks": np.array(ranks), "values": vals,
            "slope": float(coef[0]), "intercept": float(coef[1]),
            "r_squared": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0}


def similarity_sweep(similarities=(0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9),
                     seeds: int = 5):
    """Final specialization gap as teacher cosine rises (graceful decay)."""
    preset = get_preset("nonortho-teachers")
    params = preset.effective()
    gaps = np.zeros((len(similarities), seeds))
    for i, s in enumerate(similarities):
        for seed in range(seeds):
            rec = simulate(params, seed, similarity=s)
            al = rec.summary["final_pair_alignment"]
            gaps[i, seed] = metrics.specialization_gap(al)
    return {"similarity": np.array(similarities), "gap": gaps,
            "gap_mean": gaps.mean(axis=1)}


def nonortho_tasks_run(seed: int, stride: int | None = None) -> RunRecord:
    """Cycle the three pairwise-sum tasks from scratch; latent teachers must
    be recovered even though every task overlaps every other."""
    preset = get_preset("nonortho-tasks")
    params = preset.effective()
    streams = seed_streams(seed)
    teachers = make_teachers(params.M, params.d_in, params.d_out,
                             rng=streams["teachers"], orthogonality=params.orthogonality)
    schedule = BlockSchedule(make_composite_tasks(teachers, "task"),
                             params.tau_B, params.n_blocks)
    rec = simulate(params, seed, schedule=schedule, teachers=teachers, stride=stride)
    al = rec.summary["final_pair_alignment"]
    assignment = metrics.assign_students(al)
    rec.summary["preset"] = preset.name
    rec.summary["latent_pair_alignment"] = [
        float(al[p, m]) for p, m in enumerate(assignment) if m is not None
    ]
    return rec


# ---------------------------------------------------------------------------
# fully-connected runs
# ---------------------------------------------------------------------------

@dataclass
class FcRunResult:
    t: np.ndarray
    block: np.ndarray
    loss_task: np.ndarray
    g1_norm: np.ndarray
    g2_norm: np.ndarray
    emergent_gates: np.ndarray      # (n, M) sorted-block means
    sorted_alignment: np.ndarray    # (n,)
    tau_B: float
    n_blocks: int
    summary: dict = field(default_factory=dict)
    final_state: dict = field(default_factory=dict)


def fc_run(seed: int, regime: str = "flexible",
           preset: ExperimentPreset | None = None,
           stride: int | None = None,
           sort_method: str = "assignment") -> FcRunResult:
    """Two-layer fully-connected run with per-block W2 snapshots."""
    if preset is None:
        preset = get_preset("fc")
    params = preset.effective(forgetful=regime == "forgetful")
    streams = seed_streams(seed)
    teachers = make_teachers(params.M, params.d_in, params.d_out,
                             rng=streams["teachers"], orthogonality=params.orthogonality)
    net = TwoLayerNet.init(params.d_in, params.d_out, streams["init"],
                           tau_w1=params.tau_w, tau_w2=params.tau_c,
                           d_hid=params.d_hid, sigma=params.sigma)
    rng = streams["batches"]
    steps_per_block = int(round(params.tau_B / params.dt))
    stride = stride or max(1, steps_per_block // 100)
    rows = {k: [] for k in ("t", "block", "loss", "g1", "g2", "gates", "salign")}
    w2_snapshots = []
    schedule = BlockSchedule(single_tasks(params.M), params.tau_B, params.n_blocks)
    for b in range(params.n_blocks):
        teacher_eff = schedule.task_for_block(b).effective_teacher(teachers)
        for k in range(steps_per_block):
            batch = sample_batch(teacher_eff, params.batch_size, rng)
            if k % stride == 0:
                sort = sort_students(net, teachers, method=sort_method)
                rows["t"].append(b * params.tau_B + k * params.dt)
                rows["block"].append(b)
                rows["loss"].append(fc_task_loss(net, batch))
                rows["gates"].append(sort.emergent_gates)
                rows["salign"].append(sorted_total_alignment(sort, teachers))
                prev1, prev2 = net.W1.copy(), net.W2.copy()
                net = fc_euler_step(net, batch, params.reg, params.dt,
                                    norm_group=params.fc_norm_group)
                rows["g1"].append(float(np.linalg.norm(net.W1 - prev1)))
                rows["g2"].append(float(np.linalg.norm(net.W2 - prev2)))
            else:
                net = fc_euler_step(net, batch, params.reg, params.dt,
                                    norm_group=params.fc_norm_group)
        sort = sort_students(net, teachers, method=sort_method)
        w2_snapshots.append({
            "block": b, "task": b % params.M,
            "W2": net.W2.copy(), "W2_sorted": sort.W2_sorted.copy(),
            "emergent_gates": sort.emergent_gates.copy(),
        })
    sort = sort_students(net, teachers, method=sort_method)
    d_out = params.d_out
    block_means = [float(sort.W2_sorted[:, m * d_out:(m + 1) * d_out].mean())
                   for m in range(params.M)]
    last_task = (params.n_blocks - 1) % params.M
    result = FcRunResult(
        t=np.array(rows["t"]), block=np.array(rows["block"], dtype=int),
        loss_task=np.array(rows["loss"]),
        g1_norm=np.array(rows["g1"]), g2_norm=np.array(rows["g2"]),
        emergent_gates=np.array(rows["gates"]),
        sorted_alignment=np.array(rows["salign"]),
        tau_B=params.tau_B, n_blocks=params.n_blocks,
    )
    result.summary = {
        "seed": seed,
        "regime": regime,
        "total_sorted_alignment": float(result.sorted_alignment[-1]),
        "w2_block_means": block_means,
        "matched_block_mean": block_means[last_task],
        "off_block_mean": max(bm for m, bm in enumerate(block_means) if m != last_task),
        "last_task": last_task,
        "slot_cosines_mean": float(sort.slot_cosines.mean()),
    }
    result.final_state = {
        "W1": net.W1, "W2": net.W2, "teachers": teachers.W_star,
        "w2_snapshots": w2_snapshots, "perm": sort.perm,
    }
    return result


# ---------------------------------------------------------------------------
# grid sweeps
# ---------------------------------------------------------------------------

@dataclass
class GridResult:
    axis_names: tuple[str, str]
    axis1: np.ndarray
    axis2: np.ndarray
    total_alignment: np.ndarray      # (n1, n2, seeds)
    failures: list
    meta: dict = field(default_factory=dict)

    def mean(self) -> np.ndarray:
        return self.total_alignment.mean(axis=2)


def _sweep_cell(args):
    (i, j, seed, name, block_len, ratio_or_lambda, axis_kind, total_time) = args
    preset = get_preset(name)
    if axis_kind == "ratio":
        tau_c = preset.tau_w / ratio_or_lambda
        p = preset.with_overrides(tau_c=tau_c)
    else:
        lam = ratio_or_lambda
        if preset.fc:
            p = preset.with_overrides(lambda_nonneg=10 * lam / 11,
                                      lambda_norm_l2=5 * lam / 11,
                                      tau_c=preset.tau_w / 4)
        else:
            p = preset.with_overrides(lambda_nonneg=5 * lam / 3,
                                      lambda_norm_l1=25 * lam / 6,
                                      tau_c=preset.tau_w / 20)
    n_blocks = max(1, int(round(total_time / block_len)))
    p = p.with_overrides(tau_B=block_len, n_blocks=n_blocks)
    params = p.effective()
    # finer Euler step when the swept gate clock gets fast (constant data
    # along the block-length axis: dt depends only on the other axis)
    fast = params.tau_c if not p.fc else params.tau_c
    dt = min(p.dt, fast / 5.0)
    params = RunParams(**{**params.__dict__, "dt": dt})
    try:
        rec = simulate(params, seed, stride=max(1, int(round(block_len / dt)) // 20))
        return i, j, seed, rec.summary["final_total_alignment"], None
    except NumericalBlowup as exc:
        return i, j, seed, np.nan, str(exc)


def grid_sweep(
    preset: ExperimentPreset | str,
    axis: str = "ratio",                 # "ratio" or "lambda" (x block length)
    n_points: tuple[int, int] = (8, 8),
    seeds: int = 3,
    block_range: tuple[float, float] = (0.1, 10.0),
    ratio_range: tuple[float, float] = (1.0, 100.0),
    lambda_range: tuple[float, float] = (0.0, 2.0),
    total_time: float = 25.0,
    workers: int | None = None,
) -> GridResult:
    """Final total alignment over a 2-d hyperparameter grid.

    Total simulated time (and with it the sample count) is identical across
    the block-length axis. Cells run in parallel; results are stored in
    deterministic cell order.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    blocks = np.geomspace(*block_range, n_points[0])
    if axis == "ratio":
        other = np.geomspace(*ratio_range, n_points[1])
    elif axis == "lambda":
        other = np.linspace(*lambda_range, n_points[1])
    else:
        raise ValueError("axis must be 'ratio' or 'lambda'")
    jobs = [
        (i, j, s, preset.name, float(blocks[i]), float(other[j]), axis, total_time)
        for i in range(n_points[0]) for j in range(n_points[1]) for s in range(seeds)
    ]
    values = np.full((n_points[0], n_points[1], seeds), np.nan)
    failures = []
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, j, s, v, err in pool.map(_sweep_cell, jobs, chunksize=4):
                values[i, j, s] = v
                if err:
                    failures.append({"cell": (i, j, s), "error": err})
    else:
        for job in jobs:
            i, j, s, v, err = _sweep_cell(job)
            values[i, j, s] = v
            if err:
                failures.append({"cell": (i, j, s), "error": err})
    return GridResult(
        axis_names=("block_length", axis),
        axis1=blocks, axis2=other, total_alignment=values, failures=failures,
        meta={"preset": preset.name, "total_time": total_time, "seeds": seeds,
              "block_range": block_range,
              "other_range": ratio_range if axis == "ratio" else lambda_range},
    )
