"""Differentiable first-order rule induction over symbolic, embedded-constant, and instance data."""

from ruleforge.logic import (
    Atom,
    Const,
    ConstantTable,
    EvaluationError,
    FactBase,
    LogicError,
    LogicProgram,
    Metrics,
    PredicateKind,
    PredicateSymbol,
    Rule,
    Var,
    evaluate_rules,
    parse_facts,
    parse_rules,
    serialize_facts,
    serialize_rules,
    tp_fixpoint,
    tp_step,
)

__all__ = [
    "Atom",
    "Const",
    "ConstantTable",
    "EvaluationError",
    "FactBase",
    "LogicError",
    "LogicProgram",
    "Metrics",
    "PredicateKind",
    "PredicateSymbol",
    "Rule",
    "Var",
    "evaluate_rules",
    "parse_facts",
    "parse_rules",
    "serialize_facts",
    "serialize_rules",
    "tp_fixpoint",
    "tp_step",
]

__version__ = "0.1.0"
