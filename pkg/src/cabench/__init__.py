"""Benchmark toolkit for rule-inference and state-tracking tasks.

Generates, serves, and scores two families of synthetic reasoning tasks:
multi-step prediction on one-dimensional binary cellular automata (with
analytic oracles that bound achievable accuracy), and prefix-product
labeling over small finite groups.
"""

__version__ = "0.1.0"

from .ca import CaState, Orbit, Rule, neighborhood_index, orbit, rule_decode, rule_encode, step

__all__ = [
    "__version__",
    "Rule",
    "CaState",
    "Orbit",
    "neighborhood_index",
    "step",
    "orbit",
    "rule_encode",
    "rule_decode",
]
