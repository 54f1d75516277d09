"""Optimum exact designs for second-order response-surface models."""
from .criteria import (
    CRITERIA,
    CriterionConfig,
    CriterionValue,
    EfficiencyTable,
    compound_value,
    default_weights,
    efficiency_table,
)
from .graphs import ContractError, GraphConfig, GraphSeries, dfds, dvdg, fds, graph, vdg
from .model import CandidateSet, Design, ModelSpec, candidate_set, central_composite, read_design, write_design
from .numerics import SingularMatrixError, f_quantile
from .optimizer import InfeasibleSearchError, SearchConfig, SearchResult, exchange_search, verify_optimal
from .region import Region, moment_matrix, shell_moment_matrix, volume_fraction

__version__ = "0.1.0"

__all__ = [
    "CRITERIA",
    "CandidateSet",
    "ContractError",
    "CriterionConfig",
    "CriterionValue",
    "Design",
    "EfficiencyTable",
    "GraphConfig",
    "GraphSeries",
    "InfeasibleSearchError",
    "ModelSpec",
    "Region",
    "SearchConfig",
    "SearchResult",
    "SingularMatrixError",
    "candidate_set",
    "central_composite",
    "compound_value",
    "default_weights",
    "dfds",
    "dvdg",
    "efficiency_table",
    "exchange_search",
    "f_quantile",
    "fds",
    "graph",
    "moment_matrix",
    "read_design",
    "shell_moment_matrix",
    "vdg",
    "verify_optimal",
    "volume_fraction",
    "write_design",
]
