"""Minimal reverse-mode automatic differentiation over float64 numpy arrays."""

from . import ops
from .gradcheck import GradCheckError, GradCheckReport, finite_diff_check
from .module import Module
from .node import ADError, DomainError, Node, Parameter, ShapeError, as_node, backward
from .ops import eval_op

__all__ = [
    "ADError", "DomainError", "GradCheckError", "GradCheckReport", "Module", "Node",
    "Parameter", "ShapeError", "as_node", "backward", "eval_op", "finite_diff_check", "ops",
]
