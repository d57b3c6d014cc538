import numpy as np
import pytest

from gatedflow.curriculum import make_teachers
from gatedflow.model import Batch, GatedStudent, RegularizerConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_student(rng, P=2, d_in=6, d_out=4, per_neuron=False, scale=0.5,
                   tau_w=1.0, tau_c=1.0):
    """Generic random instance with O(1) parameters (away from subgradient kinks)."""
    W = rng.standard_normal((P, d_out, d_in)) * scale
    if per_neuron:
        c = rng.uniform(0.2, 1.2, size=(P, d_out)) * rng.choice([-1.0, 1.0], size=(P, d_out))
    else:
        c = rng.uniform(0.2, 1.2, size=P) * rng.choice([-1.0, 1.0], size=P)
    return GatedStudent(W=W, c=c, tau_w=tau_w, tau_c=tau_c)


def random_batch(rng, student, B=7):
    teachers = make_teachers(2, student.d_in, student.d_out, rng=rng)
    X = rng.standard_normal((student.d_in, B))
    return Batch(teacher=teachers[0], X=X, Y_star=teachers[0] @ X)


def central_diff(f, arr, h=1e-5):
    """Central finite differences of a scalar function over an array."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-10):
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


REG_VARIANTS = [
    RegularizerConfig(),
    RegularizerConfig(lambda_nonneg=0.7),
    RegularizerConfig(lambda_nonneg=0.3, lambda_norm_l1=1.1),
    RegularizerConfig(lambda_nonneg=0.3, lambda_norm_l2=0.9),
    RegularizerConfig(lambda_norm_l1=0.5, lambda_w=0.77),
    RegularizerConfig(lambda_norm_l2=0.4, lambda_w=1.3),
]
