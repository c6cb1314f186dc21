"""Real-time safety assessment of candidate vehicle trajectories."""
from .checker import Assessment, TrajectoryAssessment, Violation, check_frame, earliest_violation
from .config import CheckerConfig, defaults
from .kernel import BACKEND
from .world import AssumptionSet, ObstacleState, RoadModel, Trajectory, TrajectoryPoint, WorldFrame

__version__ = "0.1.0"

__all__ = [
    "Assessment", "AssumptionSet", "BACKEND", "CheckerConfig", "ObstacleState", "RoadModel",
    "Trajectory", "TrajectoryAssessment", "TrajectoryPoint", "Violation", "WorldFrame",
    "check_frame", "defaults", "earliest_violation",
]
