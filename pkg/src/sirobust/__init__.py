"""Robustness of transactional programs against snapshot isolation.

A program is robust when running it under snapshot isolation produces no
behaviour (trace) that serializability does not. The package decides this by
explicit enumeration, by a reduction to serializable reachability through an
instrumented program, and proves it through commutativity dependency graphs.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .generate import GenConfig, generate_program
from .instrument import check_robustness_via_reduction, instrument_program
from .ir import ParseError, Program, SemanticError, load_program, parse_program, print_program, validate_program
from .movers import check_robustness_cdg, compute_nonmover_relations, syntactic_robustness_check
from .reach import ReachQuery, reachable_error, reachable_valuation
from .semantics import SER, SI, enumerate_executions, replay
from .traces import (
    check_robustness_enumerative,
    find_minimal_anomaly,
    happens_before,
    is_serializable,
    trace_of,
    trace_of_value_aware,
)

__all__ = [
    "GenConfig", "ParseError", "Program", "ReachQuery", "SER", "SI", "SemanticError",
    "check_robustness_cdg", "check_robustness_enumerative", "check_robustness_via_reduction",
    "compute_nonmover_relations", "enumerate_executions", "find_minimal_anomaly",
    "generate_program", "happens_before", "instrument_program", "is_serializable",
    "load_program", "parse_program", "print_program", "reachable_error", "reachable_valuation",
    "replay", "syntactic_robustness_check", "trace_of", "trace_of_value_aware", "validate_program",
]
