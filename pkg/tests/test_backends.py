"""Compiled and NumPy engines integrate the same discrete dynamics."""

import numpy as np
import pytest

from gatedflow import _kernel_py, backend
from gatedflow.curriculum import expectation_batch, make_teachers, sample_batch
from gatedflow.model import Batch, GatedStudent, RegularizerConfig, euler_step

try:
    from gatedflow import _kernel as _kernel_c
except ImportError:
    _kernel_c = None

needs_compiled = pytest.mark.skipif(_kernel_c is None, reason="extension not built")


def _setup(seed=0, P=2, d_in=12, d_out=5, B=32):
    rng = np.random.default_rng(seed)
    T = make_teachers(2, d_in, d_out, rng=rng)
    W = rng.standard_normal((P, d_out, d_in)) * 0.3
    c = rng.uniform(0.1, 0.9, P)
    return T, W, c


@needs_compiled
@pytest.mark.parametrize("norm_kind,lam_w", [(0, 0.0), (1, 0.0), (2, 0.0), (1, 0.77)])
@pytest.mark.parametrize("B", [0, 32])
def test_engines_agree(norm_kind, lam_w, B):
    T, W0, c0 = _setup()
    args = dict(n_steps=50, dt=1e-3, tau_w=0.2, tau_c=0.05,
                lam_nonneg=0.1, lam_norm=0.5 if norm_kind else 0.0,
                norm_kind=norm_kind, lam_w=lam_w, B=B)
    out = {}
    for name, kern in (("py", _kernel_py), ("c", _kernel_c)):
        W, c = W0.copy(), c0.copy()
        rng = np.random.default_rng(99)
        xbuf = np.empty((W.shape[2], B)) if B else None
        res = kern.advance(W, c, np.ascontiguousarray(T[0]), rng=rng, xbuf=xbuf, **args)
        out[name] = (W, c, res)
    Wp, cp, rp = out["py"]
    Wc, cc, rc = out["c"]
    np.testing.assert_allclose(Wc, Wp, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cc, cp, rtol=1e-12, atol=1e-14)
    assert rc[0] == pytest.approx(rp[0], rel=1e-12)   # loss0
    assert rc[1] == pytest.approx(rp[1], rel=1e-12)   # reg0
    np.testing.assert_allclose(rc[2], rp[2], rtol=1e-10)
    assert rc[3] == pytest.approx(rp[3], rel=1e-10)


@pytest.mark.parametrize("B", [0, 16])
def test_python_engine_matches_reference_steps(B):
    """The chunked engine reproduces n applications of the contract-level
    euler_step exactly (same batches, same order)."""
    T, W0, c0 = _setup(seed=1)
    reg = RegularizerConfig(lambda_nonneg=0.1, lambda_norm_l1=0.5)
    n, dt = 20, 1e-3
    # engine path
    W, c = W0.copy(), c0.copy()
    rng = np.random.default_rng(7)
    xbuf = np.empty((W.shape[2], B)) if B else None
    _kernel_py.advance(W, c, T[0], n, dt, 0.2, 0.05,
                       reg.lambda_nonneg, reg.lambda_norm_l1, 1, 0.0,
                       B, rng, xbuf)
    # reference path
    student = GatedStudent(W=W0.copy(), c=c0.copy(), tau_w=0.2, tau_c=0.05)
    rng2 = np.random.default_rng(7)
    for _ in range(n):
        if B:
            X = np.empty((student.d_in, B))
            rng2.standard_normal(out=X)
            batch = Batch(teacher=T[0], X=X, Y_star=T[0] @ X)
        else:
            batch = expectation_batch(T[0])
        student = euler_step(student, batch, reg, dt)
    np.testing.assert_allclose(W, student.W, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(c, student.c, rtol=1e-12, atol=1e-15)


def test_within_backend_determinism():
    """Identical seed and config produce bit-identical trajectories."""
    from gatedflow.experiments import run_curriculum
    a = run_curriculum("main", 3, stride=200)
    b = run_curriculum("main", 3, stride=200)
    np.testing.assert_array_equal(a.loss_task, b.loss_task)
    np.testing.assert_array_equal(a.gates, b.gates)
    np.testing.assert_array_equal(a.final_state["W"], b.final_state["W"])


def test_nonfinite_flag(rng):
    T, W0, c0 = _setup()
    W, c = W0.copy(), c0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        *_, ok = _kernel_py.advance(W, c, T[0], 2000, 1.0, 1e-6, 1e-6,
                                    0.0, 0.0, 0, 0.0, 0, None, None)
    assert not ok


def test_backend_name_reports():
    assert backend.backend_name(per_neuron=True) == "python"
    assert backend.backend_name() in ("python", "compiled")
