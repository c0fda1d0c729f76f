"""Workflow engine for a Pig Latin fragment with fine-grained provenance graphs."""

from .evalengine import AnnotatedRelation, AnnotatedTuple, BBRegistry, EvalEnv, eval_program
from .pigparse import PigProgram, parse, resolve_and_typecheck
from .provgraph import Polynomial, ProvGraph, deserialize, eval_polynomial, serialize, stats
from .provquery import delete_propagate, depends_on, subgraph, zoom_in, zoom_out
from .relmodel import Bag, Schema, canonicalize, validate_against_schema
from .workflow import ModuleSpec, Runner, Workflow, run_workflow, validate_workflow

__version__ = "0.1.0"

__all__ = [
    "AnnotatedRelation", "AnnotatedTuple", "BBRegistry", "Bag", "EvalEnv", "ModuleSpec", "PigProgram",
    "Polynomial", "ProvGraph", "Runner", "Schema", "Workflow", "canonicalize", "delete_propagate",
    "depends_on", "deserialize", "eval_polynomial", "eval_program", "parse", "resolve_and_typecheck",
    "run_workflow", "serialize", "stats", "subgraph", "validate_against_schema", "validate_workflow",
    "zoom_in", "zoom_out",
]
