"""Equation discovery with probabilistic context-free grammars.

Sample candidate equations from a PCFG, canonicalize and deduplicate them,
fit their constants with differential evolution, and analyse how many
samples a target needs (tree counting, coverage, parse probabilities).
"""
from .analytics import (
    ambiguity_corrected_rate,
    count_table,
    count_trees,
    coverage,
    coverage_table,
    expected_samples_cfg,
    expected_samples_pcfg,
    expected_success_rate,
    linear_closed_forms,
    reconstruction_ratio,
    spearman,
)
from .chart import ParseResult, parse, target_probability, tokenize
from .discovery import (
    CandidateEquation,
    DiscoveryConfig,
    DiscoveryResult,
    collect_candidates,
    mc_gbed,
    resample_success_curve,
    run_report,
)
from .estimator import PCFGRegressor
from .expr import CanonicalForm, canonicalize, complexity, evaluate, parse_expression, tree_to_expression
from .fitting import Dataset, FitConfig, FitResult, fit_parameters, rermse
from .grammar import (
    BIASED,
    UNIFORM,
    BiasRatios,
    Pcfg,
    Rule,
    StructuralProbs,
    builtin_grammar,
    linear_grammar,
    load_grammar,
    parse_grammar,
    render_grammar,
    universal_grammar,
    validate,
)
from .sampler import ParseTree, generate_sample, sample_many, tree_height, tree_probability, tree_yield

__version__ = "0.1.0"
