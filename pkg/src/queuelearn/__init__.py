"""Learning, approachability and information in queueing systems."""

from .blackwell import (
    GameState,
    MixedAction,
    PayoffTensor,
    ScriptedAdversary,
    blackwell_decision,
    check_halfspace_approachable,
    payoff,
    run_game,
    update_average,
)
from .exceptions import DimensionMismatch, InfeasibleThreshold, NonSeparable, NotApproachable, NotSupercritical
from .geometry import Box, HalfSpace, Hyperplane, NonpositiveOrthant, Singleton, project, supporting_halfspace
from .harness import ExperimentSpec, SummaryStats, run_experiment, summarize
from .lindley import MarginPerceptron
from .matrix_game import solve_matrix_game

__version__ = "0.1.0"
