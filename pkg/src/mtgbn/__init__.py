"""Multitask Gaussian Bayesian network structure learning with a shared hyper inverse Wishart prior."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ChainDiverged,
    CycleError,
    DimensionMismatch,
    DomainError,
    MtgbnError,
    NonFinite,
    NotDecomposable,
    NotPositiveDefinite,
    Overflow,
    RetriesExhausted,
)
from .graph import CliqueSequence, Dag, UGraph, clique_sequence, decomposable_cover, moralize, triangulate  # noqa: F401
from .likelihood import HyperParams, TaskData  # noqa: F401
from .hmc import Chain, HmcConfig, sample_sigma_h  # noqa: F401
from .search import ScoredDag, SearchConfig, hill_climb, learn_avg, learn_sig, mc_score  # noqa: F401
from .mcem import McemResult, RunConfig, q_tilde, run_mcem  # noqa: F401
