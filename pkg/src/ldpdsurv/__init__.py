"""Bayesian mixture survival analysis for doubly-interval-censored data.

The package fits a dependent mixture model to multivariate onset and
time-to-event data where both times are only known up to intervals (for
example from periodic examinations).  A blocked Gibbs sampler explores the
posterior over a truncated stick-breaking mixture whose weights follow a
two-parameter (discount, strength) law, with a spike-and-slab prior that
lets the data choose between the one- and two-parameter process.

Typical use::

    from ldpdsurv import LDPDSurvival, simgen
    from ldpdsurv.functionals import CovariateProfile

    sim = simgen.generate("I", n_per_group=250, seed=20260823)
    model = LDPDSurvival(iterations=20000, burn_in=5000, thin=10, seed=1)
    model.fit(sim.dataset)
    profile = CovariateProfile([1.0, 0.0], [1.0, 0.0], target="onset")
    band = model.curve(profile)            # survival curve with HPD band
    bf = model.bayes_factor()              # spike-vs-slab Bayes factor

The same pipeline is available from the command line via ``ldpdsurv
simulate | fit | summarize | diagnose``.
"""

from .data import (
    CensoringInterval,
    CsvSchema,
    DataError,
    Dataset,
    IntervalObservation,
    build_design,
    export_csv,
    ingest_csv,
)
from .diagnostics import (
    effective_sample_size,
    mann_kendall_pvalue,
    potential_scale_reduction,
)
from .estimator import LDPDSurvival
from .functionals import (
    CovariateProfile,
    FunctionalGrid,
    bayes_factor_spike,
    cdf_at,
    default_time_grid,
    density_at,
    hazard_at,
    hpd_interval,
    log_scale_correlations,
    mean_at,
    median_at,
    posterior_curves,
    spike_probability,
    survival_at,
)
from .mcmc import (
    BlockedGibbsSampler,
    ChainConfig,
    PosteriorDraws,
    load_draws,
    resume_chain,
    run_chain,
    save_draws,
)
from .model import GroupTruth, ModelState, PriorSpec, ScenarioTruth, default_prior
from .pdprocess import PDParams, StickState
from .simgen import VisitSchedule, generate, scenario_truth
from . import data, diagnostics, distributions, functionals, mcmc, model, pdprocess, simgen

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CensoringInterval",
    "CsvSchema",
    "DataError",
    "Dataset",
    "IntervalObservation",
    "build_design",
    "export_csv",
    "ingest_csv",
    "effective_sample_size",
    "mann_kendall_pvalue",
    "potential_scale_reduction",
    "LDPDSurvival",
    "CovariateProfile",
    "FunctionalGrid",
    "bayes_factor_spike",
    "cdf_at",
    "default_time_grid",
    "density_at",
    "hazard_at",
    "hpd_interval",
    "log_scale_correlations",
    "mean_at",
    "median_at",
    "posterior_curves",
    "spike_probability",
    "survival_at",
    "BlockedGibbsSampler",
    "ChainConfig",
    "PosteriorDraws",
    "load_draws",
    "resume_chain",
    "run_chain",
    "save_draws",
    "GroupTruth",
    "ModelState",
    "PriorSpec",
    "ScenarioTruth",
    "default_prior",
    "PDParams",
    "StickState",
    "VisitSchedule",
    "generate",
    "scenario_truth",
]
