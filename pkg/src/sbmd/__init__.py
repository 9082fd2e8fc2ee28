"""Stochastic block mirror descent: solvers, stepsize plans, test problems and bounds."""

from .core import (
    BlockStructure, BlockVector, EntropySimplex, EuclideanBall, EuclideanBox, ProxSetup,
    SeparableRegularizer, block_norms, bregman, composite_prox_step, omega_range, prox_step,
)
from .errors import SBMDError
from .plans import (
    StepsizePlan, plan_composite, plan_composite_strongly, plan_nonconvex, plan_nonsmooth_a,
    plan_nonsmooth_b, plan_strongly,
)
from .problems import make_p1_nonsmooth, make_p2_strongly, make_p3_composite, make_p4_nonconvex, make_problem
from .solvers import RunRecord, md_sa_run, sbmd_composite_run, sbmd_nonconvex_run, sbmd_run

__version__ = "0.1.0"

__all__ = [
    "BlockStructure", "BlockVector", "EntropySimplex", "EuclideanBall", "EuclideanBox", "ProxSetup",
    "SeparableRegularizer", "block_norms", "bregman", "composite_prox_step", "omega_range", "prox_step",
    "SBMDError", "StepsizePlan", "plan_composite", "plan_composite_strongly", "plan_nonconvex",
    "plan_nonsmooth_a", "plan_nonsmooth_b", "plan_strongly", "make_p1_nonsmooth", "make_p2_strongly",
    "make_p3_composite", "make_p4_nonconvex", "make_problem", "RunRecord", "md_sa_run",
    "sbmd_composite_run", "sbmd_nonconvex_run", "sbmd_run",
]
