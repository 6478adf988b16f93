"""Safety-filtered multi-agent target pursuit."""
from .dynamics import (
    Circle,
    Custom,
    DisturbanceModel,
    FigureEight,
    Obstacle,
    PursuerState,
    TargetState,
    WorldState,
)
from .cbf import ConstraintContext, ConstraintRow, RowKind, SafetyParams
from .estimator import EstimatorConfig, EstimatorState
from .qp import QpSolution, QpStatus
from .filter import Region, SwitchDecision, hybrid_control
from .policy import NominalPolicy
from .sim import Metrics, Scenario, SimLog, metrics, nominal_only_run, preset, run

__version__ = "0.1.0"
