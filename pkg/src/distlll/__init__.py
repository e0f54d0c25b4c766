"""Distributed Lovász Local Lemma solvers, applications and exact oracles."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    BLACK,
    WHITE,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    VariableSpec,
    binary_variable,
    build_dependency_graph,
    conditional_prob,
    count_event,
    evaluate,
    merge,
)
from .graph import Graph, GraphGenSpec, generate  # noqa: E402
from .postshatter import decompose, solve_postshatter  # noqa: E402
from .resample import solve_cps  # noqa: E402
from .shatter import solve_binary_lowrisk, solve_disjoint, two_set_instance  # noqa: E402

__all__ = [
    "BLACK",
    "WHITE",
    "EventSpec",
    "Graph",
    "GraphGenSpec",
    "LLLInstance",
    "PartialAssignment",
    "VariableSpec",
    "binary_variable",
    "build_dependency_graph",
    "conditional_prob",
    "count_event",
    "decompose",
    "evaluate",
    "generate",
    "merge",
    "solve_binary_lowrisk",
    "solve_cps",
    "solve_disjoint",
    "solve_postshatter",
    "two_set_instance",
]
