"""Orthogonal parallel MCMC: vertical chains coupled by horizontal population kernels."""

from .adaptation import AdaptationState, adapt_mixture, adapt_update
from .baselines import BaselineConfig, importance_resample, resampling_distribution, run_ipc, run_pmc
from .core import (
    ConfigError,
    ContractError,
    CovarianceError,
    DegenerateWeights,
    OMCMCError,
    Population,
    RngStream,
    log_sum_exp,
    multinomial_draw,
    mvn_logpdf,
    mvn_sample,
)
from .horizontal import (
    HorizontalConfig,
    basic_mixture_step,
    bimtm_block,
    circular_permutations,
    penm_step,
    pmtm_step,
    smh_step,
    variant_mixture_step,
)
from .orchestrator import (
    OMCMCConfig,
    SampleStore,
    estimate_mean,
    mse,
    relative_error,
    run_omcmc,
    run_sa_optimize,
)
from .proposals import GaussianProposal, MixtureProposal, RandomWalkProposal, build_mixture, rw_propose
from .schedule import CostCounters, Schedule, cost_closed_forms
from .targets import (
    GaussianMixtureTarget,
    SinusoidPosterior,
    Target,
    gaussian_mixture_5,
    sinusoid_posterior,
    temper,
)
from .vertical import ChainState, CoolingSchedule, mh_step, sa_step

__version__ = "0.1.0"
