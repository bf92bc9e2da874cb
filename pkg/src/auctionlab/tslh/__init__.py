"""Three-stage latent hierarchical model: structure, simulation, Gibbs, analysis."""

from .analysis import (
    CausalityResult,
    FitReport,
    ResidualCorrelation,
    causality_test,
    credible_interval,
    fit_report,
    residual_correlation_rpv,
    summary_table,
)
from .draws_io import read_draws, write_draws
from .gibbs import (
    MONITORED_KEYS,
    PosteriorChain,
    convergence_report,
    derived_statistics,
    pooled,
    run_gibbs,
    split_rhat,
)
from .model import log_joint
from .params import TslhParams
from .simulate import SimulationResult, simulate, synthetic_structure, uniform_state
from .structure import (
    TslhDataset,
    TslhStructure,
    combo_masks,
    flat_index,
    from_lots,
    gg_product,
    gg_row,
)

__all__ = [
    "CausalityResult", "FitReport", "ResidualCorrelation", "causality_test",
    "credible_interval", "fit_report", "residual_correlation_rpv",
    "summary_table", "read_draws", "write_draws", "MONITORED_KEYS",
    "PosteriorChain", "convergence_report", "derived_statistics", "pooled",
    "run_gibbs", "split_rhat", "log_joint", "TslhParams", "SimulationResult",
    "simulate", "synthetic_structure", "uniform_state", "TslhDataset",
    "TslhStructure", "combo_masks", "flat_index", "from_lots", "gg_product",
    "gg_row",
]
