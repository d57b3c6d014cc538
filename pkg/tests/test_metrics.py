"""Alignment, assignment, timing and rank-speed metrics."""

import numpy as np
import pytest

from gatedflow.curriculum import make_teachers
from gatedflow.metrics import (
    assign_students,
    gate_activity,
    out_of_span_residual,
    pair_alignment,
    rank_gate_speed,
    specialization_gap,
    switch_aligned_loss,
    time_to_threshold,
    total_alignment,
)
from gatedflow.record import RunRecord


def _record(t, block, loss, tau_B=1.0, n_blocks=None):
    n = len(t)
    n_blocks = n_blocks or int(max(block)) + 1
    z = np.zeros(n)
    return RunRecord(
        t=np.asarray(t, float), block=np.asarray(block, int),
        loss_task=np.asarray(loss, float), loss_reg=z,
        gates=np.zeros((n, 2)), dw_norms=np.zeros((n, 2)), dc_norm=z,
        align=np.zeros((n, 2, 2)), total_align=z, resid=np.zeros((n, 2)),
        tau_B=tau_B, n_blocks=n_blocks,
    )


class TestPairAlignment:
    def test_identical(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        al = pair_alignment(T.W_star.copy(), T)
        np.testing.assert_allclose(np.diag(al), 1.0, atol=1e-12)
        np.testing.assert_allclose(al[0, 1], 0.0, atol=1e-10)

    def test_negated(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        al = pair_alignment(-T.W_star.copy(), T)
        np.testing.assert_allclose(np.diag(al), -1.0, atol=1e-12)

    def test_zero_rows_score_zero(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        W = np.zeros((2, 5, 12))
        np.testing.assert_array_equal(pair_alignment(W, T), 0.0)

    def test_scale_invariance(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        W = rng.standard_normal((2, 5, 12))
        al1 = pair_alignment(W, T)
        al2 = pair_alignment(W * np.array([3.0, 0.2])[:, None, None], T)
        np.testing.assert_allclose(al1, al2, rtol=1e-12)
        assert assign_students(al1) == assign_students(al2)


class TestTotalAlignment:
    def test_identity(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        val, assignment = total_alignment(T.W_star.copy(), T)
        assert val == pytest.approx(1.0)
        assert assignment == [0, 1]

    def test_swapped_order_reassigned(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        val, assignment = total_alignment(T.W_star[::-1].copy(), T)
        assert val == pytest.approx(1.0)
        assert assignment == [1, 0]

    def test_permutation_invariance(self, rng):
        T = make_teachers(3, 18, 6, rng=rng)
        W = rng.standard_normal((3, 6, 18))
        v1, _ = total_alignment(W, T)
        v2, _ = total_alignment(W[[2, 0, 1]], T)
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_more_students_than_teachers(self, rng):
        T = make_teachers(2, 20, 5, rng=rng)
        W = np.concatenate([T.W_star, rng.standard_normal((2, 5, 20))])
        val, assignment = total_alignment(W, T)
        assert val == pytest.approx(1.0, abs=1e-9)
        assert assignment[:2] == [0, 1] and assignment[2:] == [None, None]

    def test_greedy_option_can_collide(self, rng):
        T = make_teachers(2, 12, 5, rng=rng)
        W = np.stack([T[0], T[0]])
        assert assign_students(pair_alignment(W, T), "greedy") == [0, 0]
        optimal = assign_students(pair_alignment(W, T), "optimal")
        assert sorted(optimal) == [0, 1]

    def test_both_track_current_floor(self, rng):
        # two copies of one teacher score 1/2 under the optimal bijection
        T = make_teachers(2, 20, 10, rng=rng)
        W = np.stack([T[1], T[1]])
        val, _ = total_alignment(W, T)
        assert val == pytest.approx(0.5, abs=1e-9)


class TestSpecializationGap:
    def test_perfect(self):
        assert specialization_gap(np.eye(2)) == pytest.approx(1.0)

    def test_interchangeable_students(self):
        assert specialization_gap(np.full((2, 2), 0.7)) == pytest.approx(0.0)


class TestTimeToThreshold:
    def test_already_below_at_block_start(self):
        rec = _record([0.0, 0.5, 1.0, 1.5], [0, 0, 1, 1], [0.05, 0.04, 0.2, 0.05])
        t2t, reached = time_to_threshold(rec, 0.1)
        assert t2t[0] == 0.0 and reached[0]
        assert t2t[1] == pytest.approx(0.5) and reached[1]

    def test_censored_block(self):
        rec = _record([0.0, 0.5], [0, 0], [0.5, 0.4])
        t2t, reached = time_to_threshold(rec, 0.1)
        assert t2t[0] == rec.tau_B and not reached[0]

    def test_stride_invariance_up_to_one_stride(self):
        t = np.arange(0, 1.0, 0.01)
        loss = np.linspace(1.0, 0.0, len(t))
        rec1 = _record(t, np.zeros(len(t)), loss, n_blocks=1)
        rec2 = _record(t[::5], np.zeros(len(t[::5])), loss[::5], n_blocks=1)
        a, _ = time_to_threshold(rec1, 0.1)
        b, _ = time_to_threshold(rec2, 0.1)
        assert abs(a[0] - b[0]) <= 5 * 0.01 + 1e-12


class TestSwitchAlignedLoss:
    def test_window_mean(self):
        rec = _record([0.0, 0.1, 0.5, 1.0, 1.1], [0, 0, 0, 1, 1],
                      [1.0, 0.8, 0.1, 0.6, 0.4])
        prof = switch_aligned_loss(rec, window=0.2)
        assert prof[0] == pytest.approx(0.9)
        assert prof[1] == pytest.approx(0.5)


class TestRankGateSpeed:
    def test_zero_rank_zero(self):
        vals = rank_gate_speed(10, [0])
        assert vals[0] == 0.0

    def test_linear_in_rank(self):
        ranks = np.arange(1, 31)
        vals = rank_gate_speed(30, ranks)
        # exact proportionality in expectation mode
        ratio = vals / ranks
        np.testing.assert_allclose(ratio, ratio[0], rtol=0.05)

    def test_unit_rank_one_scale(self):
        vals = rank_gate_speed(30, [1], gate=0.5, student_scale=1.0)
        assert vals[0] == pytest.approx(0.5 / 30, rel=1e-9)


class TestResidual:
    def test_in_span_student(self, rng):
        T = make_teachers(2, 20, 10, rng=rng)
        W = np.stack([0.3 * T[0] + 0.7 * T[1], T[1]])
        np.testing.assert_allclose(out_of_span_residual(W, T), 0.0, atol=1e-8)

    def test_fraction_of_norm(self, rng):
        T = make_teachers(2, 20, 4, rng=rng)
        W = T.W_star.copy()
        # add an out-of-span direction to path 0, row 0
        v = rng.standard_normal(20)
        for m in range(2):
            for i in range(4):
                v -= (v @ T[m][i]) * T[m][i]
        v /= np.linalg.norm(v)
        W[0, 0] = v  # entire row out of span
        frac = out_of_span_residual(W, T)
        assert frac[0] == pytest.approx(0.5, abs=1e-9)  # 1 of 4 unit rows
        assert frac[1] == pytest.approx(0.0, abs=1e-9)


class TestGateActivity:
    def test_peak_over_final_cycle(self):
        ends = np.array([
            [1.0, 0.0, 0.3, 0.0],
            [0.0, 1.0, 0.0, 0.3],
            [0.9, 0.02, 0.05, 0.03],
            [0.04, 0.95, 0.03, 0.02],
        ])
        stats = gate_activity(ends, M=2)
        np.testing.assert_allclose(stats.peaks, [0.9, 0.95, 0.05, 0.03])
        assert stats.n_active == 2
        assert stats.n_decayed == 2
