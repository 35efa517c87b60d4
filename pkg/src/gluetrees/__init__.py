"""Simulation and exact/limit laws for random trees built by gluing segments."""
from .sequences import LengthSequence, SequenceError
from .glue_tree import GluedTree, MarkedPoint, MarkResult, TreeCorruptionError
from .mc_stats import ComparisonReport, EmpiricalSummary, ks_distance, moment_compare, run_replicas, tv_distance

__version__ = "0.1.0"

__all__ = [
    "LengthSequence",
    "SequenceError",
    "GluedTree",
    "MarkedPoint",
    "MarkResult",
    "TreeCorruptionError",
    "ComparisonReport",
    "EmpiricalSummary",
    "ks_distance",
    "moment_compare",
    "run_replicas",
    "tv_distance",
]
