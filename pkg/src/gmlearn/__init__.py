"""Graph matching with learned node and edge compatibilities."""
from .core import (AttributedGraph, CompatibilityTables, Matching, MatchingError, TrainingInstance,
                   WeightVector, objective_value, validate_matching)
from .features import ShapeContextConfig, build_graph, delaunay_adjacency, joint_feature, psi, shape_context
from .learn import LearnerConfig, TrainerState, build_tables, most_violated, predict, train
from .loss import LossKind, endpoint_loss, hamming_loss
from .solvers import GraduatedAssignmentConfig, graduated_assignment, linear_assignment, sinkhorn

__version__ = "0.1.0"
