"""Driver-level behavior: records, schedules, sweeps, phase continuity."""

import numpy as np
import pytest

from gatedflow import experiments as exp
from gatedflow.curriculum import BlockSchedule, make_teachers, single_tasks
from gatedflow.model import NumericalBlowup
from gatedflow.presets import get_preset
from gatedflow.record import RunRecord, record_from_csv


@pytest.fixture(scope="module")
def short_main():
    preset = get_preset("main").with_overrides(n_blocks=4)
    return exp.run_curriculum(preset, 0, stride=100)


class TestSimulate:
    def test_record_shapes(self, short_main):
        rec = short_main
        n = len(rec.t)
        assert rec.gates.shape == (n, 2)
        assert rec.align.shape == (n, 2, 2)
        assert rec.dw_norms.shape == (n, 2)
        assert np.all(np.diff(rec.t) > 0)
        assert rec.block.max() == 3

    def test_summary_fields(self, short_main):
        s = short_main.summary
        for key in ("final_total_alignment", "assignment",
                    "per_block_time_to_threshold", "regime_label", "backend"):
            assert key in s
        assert len(s["per_block_time_to_threshold"]) == 4

    def test_csv_roundtrip(self, short_main, tmp_path):
        path = short_main.to_csv(tmp_path / "run.csv")
        back = record_from_csv(path, short_main.tau_B, short_main.n_blocks)
        np.testing.assert_array_equal(back.loss_task, short_main.loss_task)
        np.testing.assert_array_equal(back.gates, short_main.gates)
        np.testing.assert_array_equal(back.align, short_main.align)

    def test_expectation_mode_deterministic_teachers(self):
        preset = get_preset("main").with_overrides(n_blocks=2)
        a = exp.run_curriculum(preset, 1, expectation=True, stride=100)
        b = exp.run_curriculum(preset, 1, expectation=True, stride=100)
        np.testing.assert_array_equal(a.loss_task, b.loss_task)

    def test_blowup_partial_record(self):
        preset = get_preset("main").with_overrides(dt=1.0, n_blocks=2, tau_c=1e-7)
        with np.errstate(over="ignore", invalid="ignore"):
            rec = exp.run_curriculum(preset, 0, stride=1, on_blowup="partial")
        assert "aborted" in rec.summary
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalBlowup):
            exp.run_curriculum(preset, 0, stride=1, on_blowup="raise")


class TestGeneralization:
    def test_phase_boundary_continuity(self):
        # parameters carry over the boundary: the state at the end of phase 1
        # equals the state of a singles-only run of the same length
        preset = get_preset("task-composition").with_overrides(n_blocks=6)
        rec = exp.generalization_run("task", "flexible", 0, preset=preset,
                                     phase_split=3, stride=50)
        params = preset.with_overrides(n_blocks=3).effective()
        solo = exp.simulate(params, 0, stride=50)
        sel = rec.block < 3
        np.testing.assert_allclose(rec.loss_task[sel], solo.loss_task, rtol=1e-12)
        assert rec.summary["phase_split"] == 3
        assert "first_composite_min_loss" in rec.summary
        assert "non_member_gates" in rec.summary

    def test_subtask_uses_per_neuron(self):
        preset = get_preset("subtask-composition").with_overrides(n_blocks=4)
        rec = exp.generalization_run("subtask", "flexible", 0, preset=preset,
                                     phase_split=2, stride=50)
        assert rec.final_state["c"].ndim == 2


class TestSweep:
    def test_cells_and_constant_data(self):
        grid = exp.grid_sweep("sweep-lr-block", axis="ratio", n_points=(2, 2),
                              seeds=1, block_range=(0.5, 1.0),
                              ratio_range=(5.0, 20.0), total_time=2.0, workers=1)
        assert grid.total_alignment.shape == (2, 2, 1)
        assert np.isfinite(grid.total_alignment).all()
        # constant total time across the block-length axis
        assert grid.meta["total_time"] == 2.0
        for i, b in enumerate(grid.axis1):
            assert int(round(2.0 / b)) * b == pytest.approx(2.0, rel=0.5)

    def test_lambda_axis_scaling_rules(self):
        grid = exp.grid_sweep("sweep-reg-block", axis="lambda", n_points=(1, 2),
                              seeds=1, block_range=(1.0, 1.0),
                              lambda_range=(0.0, 1.2), total_time=1.0, workers=1)
        assert grid.axis_names == ("block_length", "lambda")
        np.testing.assert_allclose(grid.axis2, [0.0, 1.2])


class TestDrivers:
    def test_repr_cost_summary(self):
        rec = exp.repr_cost_run(0)
        assert rec.summary["lambda_w"] == 0.77
        assert rec.summary["n_active"] + rec.summary["n_decayed"] <= 4
        rec0 = exp.repr_cost_run(0, lambda_w=0.0)
        assert rec0.summary["lambda_w"] == 0.0

    def test_rank_speed_curve(self):
        res = exp.rank_speed_curve(ranks=[1, 5, 10, 20, 30])
        assert res["r_squared"] > 0.99
        assert res["slope"] > 0

    def test_blocklen_ratio_dict(self):
        res = exp.blocklen_ratio(tau_B=0.05, total_time=0.2, dt=1e-4)
        assert set(res) >= {"ratio", "growth_short", "growth_long",
                            "predicted_two_period_growth"}

    def test_full_vs_reduced_report(self):
        preset = get_preset("full-vs-reduced")
        rec, traj, report = exp.full_vs_reduced(0, stride=100)
        assert report["loss_sup"] < 0.05
        assert report["reduced_tau_c"] == pytest.approx(preset.tau_c)

    def test_fc_run_summary(self):
        preset = get_preset("fc").with_overrides(n_blocks=4)
        res = exp.fc_run(0, preset=preset, stride=30)
        assert res.emergent_gates.shape[1] == 2
        assert "total_sorted_alignment" in res.summary
        assert len(res.final_state["w2_snapshots"]) == 4
