"""
rrdag — random recursive DAGs, two ways.

Samples random recursive directed acyclic graphs either vertex by vertex
(each new vertex points at m distinct uniform earlier vertices) or through
the (m,n)-coalescent relabeled by loss step. An exact oracle shows the two
agree at small n; a seeded Monte Carlo engine and goodness-of-fit harness
check degree, count, depth and label statistics against their limit laws.

Quick start::

    from rrdag import generate_recursive, validate

    g = generate_recursive(1000, 2, seed=7)
    assert validate(g)
    print(g.in_degrees.max())

Command line: ``rrdag generate|oracle|experiment|replay`` (see ``rrdag -h``).
"""

__version__ = "0.1.0"

from .graph import LabeledDag, validate, degree_of, ungreedy_depth_walk, serialize, deserialize
from .recursive import generate_recursive
from .coalescent import CoalescentTrace, sample_trace, replay_trace, relabel, to_labeled_dag, generate_coalescent
from .oracle import count_increasing_dags, exhaust_coalescent, exact_degree_law, verify_inclusion_exclusion
from .montecarlo import ExperimentConfig, run_experiment, evaluate

__all__ = [
    "LabeledDag",
    "validate",
    "degree_of",
    "ungreedy_depth_walk",
    "serialize",
    "deserialize",
    "generate_recursive",
    "CoalescentTrace",
    "sample_trace",
    "replay_trace",
    "relabel",
    "to_labeled_dag",
    "generate_coalescent",
    "count_increasing_dags",
    "exhaust_coalescent",
    "exact_degree_law",
    "verify_inclusion_exclusion",
    "ExperimentConfig",
    "run_experiment",
    "evaluate",
]
