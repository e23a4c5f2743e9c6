"""Doubly stochastic block-parallel SGD (RAPSA) and its block-wise oLBFGS variant."""

from .arapsa import BlockCurvatureMemory, arapsa_step, dense_hessian_recursion, two_loop_direction
from .core import (
    BlockPartition,
    Constant,
    DomainError,
    Hybrid,
    InverseTime,
    RngState,
    make_partition,
    make_rng,
    read_block,
    step_size,
    write_block,
)
from .engine import EngineConfig, IterationPlan, Trace, TraceRecord, features_processed, rapsa_step, run
from .problems import (
    LinearRegressionProblem,
    LogisticProblem,
    closed_form_optimum,
    estimate_constants,
    estimate_K,
    generate_lmmse,
)
from .theory import RateConstants, accuracy_plan, constant_C, linear_envelope, plateau, sublinear_bound

__version__ = "0.1.0"
