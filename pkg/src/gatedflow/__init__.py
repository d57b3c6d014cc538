"""Gradient-flow simulator for gated linear teacher-student networks.

Simulates joint gradient descent on path weights and gates over blocked task
curricula, the reduced two-dimensional effective dynamics with exact solutions,
and a two-layer fully-connected variant with emergent gating. Experiment
drivers, metrics and a CLI reproduce the flexible-vs-forgetful phenomenology
at desk scale.
"""

from .backend import backend_name
from .curriculum import BlockSchedule, TaskSpec, TeacherSet, make_composite_tasks, make_teachers
from .model import Batch, GatedStudent, NumericalBlowup, RegularizerConfig

__all__ = [
    "backend_name",
    "Batch",
    "BlockSchedule",
    "GatedStudent",
    "NumericalBlowup",
    "RegularizerConfig",
    "TaskSpec",
    "TeacherSet",
    "make_composite_tasks",
    "make_teachers",
]

__version__ = "0.1.0"
