"""Teacher generation, task composition, block schedules and batch sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Batch

_MAX_RESAMPLE = 32
_DEGENERACY_EPS = 1e-8


def seed_streams(master_seed: int, extra: tuple[str, ...] = ()) -> dict[str, np.random.Generator]:
    """Independent, reproducible generators for the distinct random roles.

    Splitting off a master seed keeps teacher generation, weight init and
    batch sampling decoupled: changing how batches are drawn never changes
    the teachers.
    """
    names = ("teachers", "init", "batches") + tuple(extra)
    children = np.random.SeedSequence(master_seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


@dataclass
class TeacherSet:
    """M ground-truth linear maps with unit-norm rows and controlled overlap.

    Corresponding rows of distinct teachers have cosine `similarity` against
    teacher 0 (0 = orthogonal). When `full_orthogonal` is set, all M*d_out rows
    are mutually orthogonal (possible when M*d_out <= d_in).
    """

    W_star: np.ndarray          # (M, d_out, d_in)
    similarity: float = 0.0
    full_orthogonal: bool = False

    @property
    def M(self) -> int:
        return self.W_star.shape[0]

    @property
    def d_out(self) -> int:
        return self.W_star.shape[1]

    @property
    def d_in(self) -> int:
        return self.W_star.shape[2]

    def __getitem__(self, m: int) -> np.ndarray:
        return self.W_star[m]


def _orthonormal_rows(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n mutually orthogonal unit vectors in R^d by Gram-Schmidt; resamples on
    (probability-zero) near-degeneracy."""
    if n > d:
        raise ValueError(f"cannot fit {n} orthogonal rows in dimension {d}")
    rows = np.empty((n, d))
    for i in range(n):
        for _ in range(_MAX_RESAMPLE):
            v = rng.standard_normal(d)
            v -= rows[:i].T @ (rows[:i] @ v)
            norm = np.linalg.norm(v)
            if norm > _DEGENERACY_EPS:
                rows[i] = v / norm
                break
        else:
            raise RuntimeError("row orthogonalization failed to find an independent vector")
    return rows


def make_teachers(
    M: int,
    d_in: int,
    d_out: int,
    similarity: float = 0.0,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    orthogonality: str = "auto",
) -> TeacherSet:
    """Generate M teachers with Gaussian-derived unit rows.

    orthogonality: "full" makes every row of every teacher orthogonal to every
    other (needs M*d_out <= d_in), "rows" orthogonalizes only corresponding
    rows across teachers, "auto" picks "full" when feasible. similarity s > 0
    then remixes each later teacher's row i as
    s * (teacher-0 row i) + sqrt(1-s^2) * (its orthogonal direction),
    so corresponding-row cosines against teacher 0 equal s exactly.
    """
    if not (0.0 <= similarity < 1.0):
        raise ValueError("similarity must be in [0, 1)")
    if M < 1 or M > d_in:
        raise ValueError("need 1 <= M <= d_in for row-wise orthogonalization")
    if rng is None:
        rng = np.random.default_rng(seed)
    if orthogonality == "auto":
        orthogonality = "full" if M * d_out <= d_in else "rows"
    if orthogonality == "full":
        rows = _orthonormal_rows(M * d_out, d_in, rng)
        W = rows.reshape(M, d_out, d_in).copy()
        full = True
    elif orthogonality == "rows":
        W = np.empty((M, d_out, d_in))
        for i in range(d_out):
            W[:, i, :] = _orthonormal_rows(M, d_in, rng)
        full = False
    else:
        raise ValueError(f"unknown orthogonality mode {orthogonality!r}")
    if similarity > 0.0:
        s, t = similarity, np.sqrt(1.0 - similarity**2)
        for m in range(1, M):
            W[m] = s * W[0] + t * W[m]
        full = False
    return TeacherSet(W_star=W, similarity=similarity, full_orthogonal=full)


@dataclass
class TaskSpec:
    """One task: a single teacher, an elementwise sum of teachers, or a
    row-interleave assigning each output row to a teacher."""

    kind: str                               # "single" | "sum" | "interleave"
    members: tuple[int, ...] = ()
    row_assignment: tuple[int, ...] = ()    # teacher index per output row (interleave)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("single", "sum", "interleave"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not self.name:
            if self.kind == "single":
                self.name = f"t{self.members[0]}"
            elif self.kind == "sum":
                self.name = "+".join(f"t{m}" for m in self.members)
            else:
                self.name = "ilv(" + ",".join(map(str, self.row_assignment)) + ")"

    def effective_teacher(self, teachers: TeacherSet) -> np.ndarray:
        if self.kind == "single":
            return teachers[self.members[0]]
        if self.kind == "sum":
            return sum(teachers[m] for m in self.members)
        if len(self.row_assignment) != teachers.d_out:
            raise ValueError("row assignment length must equal d_out")
        out = np.empty((teachers.d_out, teachers.d_in))
        for i, m in enumerate(self.row_assignment):
            out[i] = teachers[m][i]
        return out


def single_tasks(M: int) -> list[TaskSpec]:
    return [TaskSpec("single", (m,)) for m in range(M)]


def make_composite_tasks(teachers: TeacherSet, mode: str) -> list[TaskSpec]:
    """The three pairwise composites of three teachers.

    "task" mode sums teacher pairs; "subtask" mode interleaves their rows
    (even rows from the first member, odd rows from the second).
    """
    if teachers.M < 2:
        raise ValueError("composite tasks need at least two teachers")
    pairs = [(a, b) for a in range(teachers.M) for b in range(a + 1, teachers.M)]
    if mode == "task":
        return [TaskSpec("sum", pair) for pair in pairs]
    if mode == "subtask":
        out = []
        for a, b in pairs:
            assign = tuple(a if i % 2 == 0 else b for i in range(teachers.d_out))
            out.append(TaskSpec("interleave", (a, b), assign, name=f"ilv(t{a},t{b})"))
        return out
    raise ValueError(f"unknown composition mode {mode!r}")


@dataclass
class BlockSchedule:
    """Blocked curriculum: tasks cycle every tau_B time units, optionally
    switching to a second task list at a phase boundary."""

    tasks: list[TaskSpec]
    tau_B: float
    n_blocks: int
    phase2_tasks: list[TaskSpec] | None = None
    phase_split: int | None = None          # first block index of phase 2

    def __post_init__(self):
        if self.tau_B <= 0 or self.n_blocks < 1:
            raise ValueError("need tau_B > 0 and n_blocks >= 1")
        if (self.phase2_tasks is None) != (self.phase_split is None):
            raise ValueError("phase2_tasks and phase_split go together")
        if self.phase_split is not None and not (0 < self.phase_split < self.n_blocks):
            raise ValueError("phase_split must lie inside the run")

    @property
    def total_time(self) -> float:
        return self.n_blocks * self.tau_B

    def task_for_block(self, block: int) -> TaskSpec:
        if not (0 <= block < self.n_blocks):
            raise ValueError(f"block {block} outside schedule of {self.n_blocks}")
        if self.phase_split is not None and block >= self.phase_split:
            ts = self.phase2_tasks
            return ts[(block - self.phase_split) % len(ts)]
        return self.tasks[block % len(self.tasks)]

    def active_task(self, t: float) -> tuple[TaskSpec, int, float]:
        """Task, block index and time-within-block at time t."""
        if not (0.0 <= t < self.total_time):
            raise ValueError(f"t={t} outside [0, {self.total_time})")
        block = int(t // self.tau_B)
        return self.task_for_block(block), block, t - block * self.tau_B


def sample_batch(
    teacher_eff: np.ndarray,
    B: int,
    rng: np.random.Generator,
) -> Batch:
    """Draw B i.i.d. standard-Gaussian inputs and their teacher targets.

    Consecutive calls advance `rng`, giving a deterministic sample stream.
    """
    if B < 1:
        raise ValueError("B must be >= 1 (use expectation_batch for the limit)")
    X = rng.standard_normal((teacher_eff.shape[1], B))
    return Batch(teacher=teacher_eff, X=X, Y_star=teacher_eff @ X, expectation=False)


def expectation_batch(teacher_eff: np.ndarray) -> Batch:
    """The B -> infinity batch: gradients use the identity input covariance."""
    return Batch(teacher=teacher_eff, expectation=True)
