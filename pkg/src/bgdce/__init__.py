"""Bandit gradient descent with Caratheodory exploration for congestion games on DAGs."""

from .game import CongestionGame, expected_potential, nash_gap, potential_gradient, run_dynamics
from .graph import Dag, enumerate_paths, path_vector, shortest_path
from .harness import ExperimentConfig, adversary_costs, load_config, run_experiment
from .learner import Learner, Schedule
from .polytope import DagSpace, caratheodory_dag, caratheodory_distribution, project_bounded_away
from .spanner import Spanner, build_dag_spanner, decompose_in_spanner

__version__ = "0.1.0"
