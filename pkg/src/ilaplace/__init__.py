"""Improved Laplace approximation of integrals of exp(-h(x)) over R^d."""

from .engine import (EngineOptions, ILaplaceResult, glmm_marginal_loglik, improved_laplace,
                     standard_laplace)
from .errors import (BudgetExceeded, DimensionTooLarge, HessianNotPD, ILaplaceError,
                     NoConvergence, NonFiniteObjective, ToleranceNotMet, UnboundedProfile,
                     UnknownModel)
from .function_model import EvaluationBudget, Objective, evaluate, gradient, hessian
from .laplace import LaplaceResult, log_laplace
from .optimize import ModeInfo, approx_conditional_minimum, conditional_minimize, minimize

__version__ = "0.1.0"
