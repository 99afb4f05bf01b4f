"""Exact and approximate gradients of weighted model counts."""

from .exact import (
    CompileBudgetExceeded,
    DecisionDnnf,
    GradientVector,
    WmcResult,
    compile_cnf,
    enumerate_models,
    wmc_brute,
    wmc_eval,
    wmc_grad,
)
from .logic import (
    CnfFormula,
    DimacsError,
    WeightMap,
    clause_prob,
    condition,
    encode_categorical,
    evaluate,
    fuzzy_eval,
    interpretation_prob,
    is_implicant,
    parse_dimacs,
    serialize_dimacs,
)
from .samplers import HashSampler, RngStream, SamplerSpec
from .sat import MpeResult, SatInstance, Unsatisfiable, k_optimal_dnf, mpe, solve, top_k_models

__version__ = "0.1.0"

__all__ = [
    "CnfFormula", "CompileBudgetExceeded", "DecisionDnnf", "DimacsError", "GradientVector", "HashSampler",
    "MpeResult", "RngStream", "SamplerSpec", "SatInstance", "Unsatisfiable", "WeightMap", "WmcResult",
    "clause_prob", "compile_cnf", "condition", "encode_categorical", "enumerate_models", "evaluate",
    "fuzzy_eval", "interpretation_prob", "is_implicant", "k_optimal_dnf", "mpe", "parse_dimacs",
    "serialize_dimacs", "solve", "top_k_models", "wmc_brute", "wmc_eval", "wmc_grad",
]
