"""Minimal computer-algebra kernel over jet variables."""

from ..errors import DomainError, InconclusiveDomain, UnboundVariable
from .calculus import differentiate, jacobian, rebuild, substitute, substitute_all, time_shift
from .core import (
    AUX, INPUT, JET_KINDS, NEWINPUT, ONE, OUTPUT, PARAM, REF, STATE, UBAR, ZERO,
    Aux, Expr, InputJet, NewInputJet, OutputJet, Param, RefJet, State, UbarJet, VarId,
    add, as_expr, atan, atan2, const, cos, dag_size, div, exp, free_vars, free_vars_all,
    func, ln, mul, neg, nodes, pow_, sin, sqrt, sub, tan, to_text, var,
)
from .numeric import (
    Compiled, Domain, evaluate, evaluate_many, evaluate_matrix, evaluate_scaled, is_zero,
    make_rng, numeric_rank, rank_of, sample_matrices,
)
from .parser import parse_expr, parse_var

__all__ = [name for name in dir() if not name.startswith("_")]
