"""Step-engine selection: compiled extension when available, NumPy fallback.

Both engines integrate identical discrete dynamics and consume the batch
random stream identically (one standard_normal draw per step), so a run is
reproducible within a backend; tiny float differences between backends come
only from summation order. Set GATEDFLOW_BACKEND=python|compiled to force.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernel_py

try:
    from . import _kernel as _kernel_c
except ImportError:
    _kernel_c = None

_FORCED = os.environ.get("GATEDFLOW_BACKEND", "").strip().lower()
if _FORCED == "python":
    _kernel_c = None
elif _FORCED == "compiled" and _kernel_c is None:
    raise ImportError("GATEDFLOW_BACKEND=compiled but the extension is not built")


def backend_name(per_neuron: bool = False) -> str:
    """Engine used for per-path runs ('compiled' or 'python'); per-neuron runs
    always use the NumPy engine."""
    if per_neuron or _kernel_c is None:
        return "python"
    return "compiled"


def advance(W, c, teacher, n_steps, dt, tau_w, tau_c,
            lam_nonneg, lam_norm, norm_kind, lam_w,
            B, rng, xbuf, per_neuron_row_group=True):
    """Dispatch one log-chunk of Euler steps to the selected engine."""
    if c.ndim == 1 and _kernel_c is not None:
        return _kernel_c.advance(
            W, c, np.ascontiguousarray(teacher), n_steps, dt, tau_w, tau_c,
            lam_nonneg, lam_norm, norm_kind, lam_w, B, rng, xbuf,
        )
    return _kernel_py.advance(
        W, c, teacher, n_steps, dt, tau_w, tau_c,
        lam_nonneg, lam_norm, norm_kind, lam_w, B, rng, xbuf,
        per_neuron_row_group,
    )
