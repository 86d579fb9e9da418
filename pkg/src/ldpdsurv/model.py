"""Model specification: priors, sampler state, and likelihood terms.

The observation model, per unit i with n items, is a mixture of multivariate
lognormal kernels.  Writing z_i for the 2n-vector of log onset times followed
by log gap times and X_i for the unit's block-diagonal design,

    z_i | coeffs_i, kernel_cov  ~  N(X_i coeffs_i, kernel_cov)

with the coefficient vector drawn from a discrete random measure: atom l is a
stacked coefficient vector drawn from the base measure N(base_mean, base_cov)
and carries stick-breaking weight w_l (see :mod:`ldpdsurv.pdprocess`).  The
base measure location and covariance get conjugate hyperpriors, the kernel
covariance an inverse Wishart prior, and the stick-breaking parameters a
spike-and-slab prior on the discount (point mass at zero against a Beta slab)
with a truncated normal prior on the strength given the discount.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .distributions import InverseWishart, MvNormal, mvn_logpdf, _spd_cholesky
from .pdprocess import PDParams, StickState

__all__ = [
    "PriorSpec",
    "default_prior",
    "ModelState",
    "GroupTruth",
    "ScenarioTruth",
    "log_likelihood_unit",
    "mixture_density",
    "sample_prior_params",
]


@dataclass
class PriorSpec:
    """Hyperparameters of the full model, validated on construction.

    Dimensions: ``n_items`` items per unit, ``n_onset_covariates`` onset and
    ``n_event_covariates`` event covariates per item, so coefficient vectors
    have length ``n_items * (n_onset_covariates + n_event_covariates)`` and
    the kernel covariance is ``2 * n_items`` square.
    """

    n_items: int
    n_onset_covariates: int
    n_event_covariates: int
    # spike-and-slab prior on the stick-breaking discount
    spike_weight: float = 0.5
    slab_shape1: float = 1.0
    slab_shape2: float = 1.0
    # truncated normal prior on the strength given the discount
    strength_loc: float = 10.0
    strength_scale: float = 200.0
    # inverse Wishart prior on the kernel covariance
    kernel_cov_df: float = 0.0
    kernel_cov_scale: np.ndarray = None
    # base measure hyperpriors: mean ~ normal, covariance ~ inverse Wishart
    base_mean_loc: np.ndarray = None
    base_mean_cov: np.ndarray = None
    base_cov_df: float = 0.0
    base_cov_scale: np.ndarray = None
    truncation_level: int = 50

    def __post_init__(self):
        n, p, q = self.n_items, self.n_onset_covariates, self.n_event_covariates
        if n < 1 or p < 1 or q < 1:
            raise ValueError("need n_items >= 1 and at least one covariate per block")
        d = self.coefficient_dim
        k = 2 * n
        if self.kernel_cov_scale is None:
            self.kernel_cov_scale = np.eye(k)
        if self.kernel_cov_df == 0.0:
            self.kernel_cov_df = k + 2.0
        if self.base_mean_loc is None:
            self.base_mean_loc = np.zeros(d)
        if self.base_mean_cov is None:
            self.base_mean_cov = 100.0 * np.eye(d)
        if self.base_cov_scale is None:
            self.base_cov_scale = np.eye(d)
        if self.base_cov_df == 0.0:
            self.base_cov_df = d + 1.0
        self.kernel_cov_scale = np.asarray(self.kernel_cov_scale, dtype=float)
        self.base_mean_loc = np.asarray(self.base_mean_loc, dtype=float).ravel()
        self.base_mean_cov = np.asarray(self.base_mean_cov, dtype=float)
        self.base_cov_scale = np.asarray(self.base_cov_scale, dtype=float)
        self.validate()

    @property
    def coefficient_dim(self) -> int:
        return self.n_items * (self.n_onset_covariates + self.n_event_covariates)

    def validate(self):
        d = self.coefficient_dim
        k = 2 * self.n_items
        if not 0.0 <= self.spike_weight <= 1.0:
            raise ValueError("spike_weight must lie in [0, 1]")
        if self.slab_shape1 <= 0 or self.slab_shape2 <= 0:
            raise ValueError("slab shapes must be positive")
        if self.strength_scale <= 0:
            raise ValueError("strength_scale must be positive")
        if self.truncation_level < 2:
            raise ValueError("truncation_level must be at least 2")
        if self.kernel_cov_scale.shape != (k, k):
            raise ValueError(f"kernel_cov_scale must be {k} x {k}")
        if self.kernel_cov_df <= k - 1:
            raise ValueError("kernel_cov_df must exceed dim - 1")
        if self.base_mean_loc.size != d:
            raise ValueError(f"base_mean_loc must have length {d}")
        if self.base_mean_cov.shape != (d, d):
            raise ValueError(f"base_mean_cov must be {d} x {d}")
        if self.base_cov_scale.shape != (d, d):
            raise ValueError(f"base_cov_scale must be {d} x {d}")
        if self.base_cov_df <= d - 1:
            raise ValueError("base_cov_df must exceed dim - 1")
        _spd_cholesky(self.kernel_cov_scale, "kernel_cov_scale")
        _spd_cholesky(self.base_mean_cov, "base_mean_cov")
        _spd_cholesky(self.base_cov_scale, "base_cov_scale")

    def matches(self, dataset: Dataset) -> bool:
        return (
            dataset.n_items == self.n_items
            and dataset.n_onset_covariates == self.n_onset_covariates
            and dataset.n_event_covariates == self.n_event_covariates
        )


def default_prior(
    n_items: int,
    n_onset_covariates: int,
    n_event_covariates: int,
    truncation_level: int = 50,
    **overrides,
) -> PriorSpec:
    """Reference prior: weakly informative and proper in every block.

    Kernel covariance df is ``2 n + 2`` with identity scale, base covariance
    df is ``d + 1`` with identity scale, base mean is centred at zero with
    covariance ``100 I``, the discount is an even mixture of the spike at
    zero and a uniform slab, and the strength prior is a diffuse truncated
    normal centred at 10 with scale 200.
    """
    return PriorSpec(
        n_items=n_items,
        n_onset_covariates=n_onset_covariates,
        n_event_covariates=n_event_covariates,
        truncation_level=truncation_level,
        **overrides,
    )


@dataclass
class ModelState:
    """One configuration of every unobserved quantity in the sampler."""

    log_times: np.ndarray      # (n_units, 2 * n_items)
    allocations: np.ndarray    # (n_units,) int, cluster label per unit
    sticks: StickState
    atoms: np.ndarray          # (truncation_level, coefficient_dim)
    kernel_cov: np.ndarray     # (2 * n_items, 2 * n_items)
    pd_params: PDParams
    base_mean: np.ndarray      # (coefficient_dim,)
    base_cov: np.ndarray       # (coefficient_dim, coefficient_dim)

    def validate(self, dataset: Dataset | None = None):
        level = self.sticks.truncation_level
        n_units, two_n = self.log_times.shape
        d = self.atoms.shape[1]
        if self.atoms.shape[0] != level:
            raise ValueError("atom count must equal the truncation level")
        if self.allocations.shape != (n_units,):
            raise ValueError("allocations must be one label per unit")
        if n_units and (self.allocations.min() < 0 or self.allocations.max() >= level):
            raise ValueError("allocations out of range")
        if self.kernel_cov.shape != (two_n, two_n):
            raise ValueError("kernel covariance has the wrong shape")
        if self.base_mean.shape != (d,) or self.base_cov.shape != (d, d):
            raise ValueError("base measure dimensions disagree with atoms")
        if not np.all(np.isfinite(self.log_times)):
            raise ValueError("latent log times must be finite")
        if not (np.all(np.isfinite(self.atoms)) and np.all(np.isfinite(self.base_mean))):
            raise ValueError("atoms and base mean must be finite")
        _spd_cholesky(self.kernel_cov, "kernel covariance")
        _spd_cholesky(self.base_cov, "base covariance")
        self.sticks.validate()
        if self.sticks.consistency_error() > 1e-12:
            raise ValueError("weights inconsistent with sticks")
        if dataset is not None:
            self._check_feasible(dataset)

    def _check_feasible(self, dataset: Dataset):
        n = dataset.n_items
        onset = np.exp(self.log_times[:, :n])
        gap = np.exp(self.log_times[:, n:])
        event = onset + gap
        for i, obs in enumerate(dataset.units):
            for j in range(n):
                if not obs.present[j]:
                    continue
                if not obs.onset[j].contains(onset[i, j]):
                    raise ValueError(
                        f"unit {obs.unit_id}, item {j + 1}: onset {onset[i, j]} "
                        f"outside its censoring interval"
                    )
                if not obs.event[j].contains(event[i, j]):
                    raise ValueError(
                        f"unit {obs.unit_id}, item {j + 1}: event {event[i, j]} "
                        f"outside its censoring interval"
                    )


def log_likelihood_unit(
    log_times_unit: np.ndarray,
    design_unit: np.ndarray,
    atom: np.ndarray,
    kernel_chol: np.ndarray,
) -> float:
    """Gaussian log likelihood of one unit's latent log times under one atom."""
    mean = design_unit @ atom
    return float(mvn_logpdf(log_times_unit, mean, kernel_chol))


def mixture_density(
    times: np.ndarray,
    design_unit: np.ndarray,
    sticks: StickState,
    atoms: np.ndarray,
    kernel_cov: np.ndarray,
) -> np.ndarray:
    """Joint mixture density of positive onset/gap time vectors.

    ``times`` has shape (..., 2 * n_items) on the original time scale; the
    density includes the product of reciprocal times from the log transform.
    """
    t = np.asarray(times, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("mixture density is defined for positive times only")
    z = np.log(t)
    kernel_chol = _spd_cholesky(kernel_cov, "kernel covariance")
    means = atoms @ design_unit.T  # (level, 2n)
    flat = z.reshape(-1, z.shape[-1])
    logs = np.stack([mvn_logpdf(flat, mu, kernel_chol) for mu in means])
    log_jac = -np.sum(flat, axis=1)
    with np.errstate(divide="ignore"):
        logw = np.log(sticks.weights)
    comb = logs + logw[:, None]
    peak = comb.max(axis=0)
    dens = np.exp(peak + np.log(np.sum(np.exp(comb - peak), axis=0)) + log_jac)
    return dens.reshape(z.shape[:-1])


def sample_prior_params(prior: PriorSpec, rng: np.random.Generator) -> dict:
    """Exact draw of all parameters (not latent data) from the prior.

    Returns a dict with keys ``pd_params``, ``sticks``, ``base_mean``,
    ``base_cov``, ``atoms`` and ``kernel_cov``, suitable for assembling a
    :class:`ModelState`.
    """
    from .distributions import sample_truncated_normal
    from .pdprocess import sample_sticks_prior

    if rng.random() < prior.spike_weight:
        discount = 0.0
    else:
        discount = float(rng.beta(prior.slab_shape1, prior.slab_shape2))
    strength = sample_truncated_normal(
        prior.strength_loc, prior.strength_scale, -discount, np.inf, rng
    )
    pd_params = PDParams(discount=discount, strength=strength)
    sticks = sample_sticks_prior(pd_params, prior.truncation_level, rng)
    base_cov = InverseWishart(prior.base_cov_df, prior.base_cov_scale).sample(rng)
    base_mean = MvNormal(prior.base_mean_loc, prior.base_mean_cov).sample(rng)
    atoms = MvNormal(base_mean, base_cov).sample(rng, size=prior.truncation_level)
    kernel_cov = InverseWishart(prior.kernel_cov_df, prior.kernel_cov_scale).sample(rng)
    return {
        "pd_params": pd_params,
        "sticks": sticks,
        "base_mean": base_mean,
        "base_cov": base_cov,
        "atoms": atoms,
        "kernel_cov": kernel_cov,
    }


# ---------------------------------------------------------------------------
# ground truth for simulation studies
# ---------------------------------------------------------------------------

@dataclass
class GroupTruth:
    """A finite mixture of bivariate normals on the log (onset, gap) scale."""

    weights: np.ndarray
    means: np.ndarray        # (n_components, 2)
    covariances: np.ndarray  # (n_components, 2, 2)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        c = self.weights.size
        if self.means.shape != (c, 2) or self.covariances.shape != (c, 2, 2):
            raise ValueError("component arrays must agree on the number of components")
        if np.any(self.weights <= 0.0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must be positive and sum to 1")
        for k in range(c):
            _spd_cholesky(self.covariances[k], f"component {k} covariance")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw (onset, gap) time pairs on the original scale, shape (n, 2)."""
        comp = rng.choice(self.n_components, size=n, p=self.weights / self.weights.sum())
        z = np.empty((n, 2))
        for k in range(self.n_components):
            mask = comp == k
            if not np.any(mask):
                continue
            chol_k = np.linalg.cholesky(self.covariances[k])
            eps = rng.standard_normal((mask.sum(), 2))
            z[mask] = self.means[k] + eps @ chol_k.T
        return np.exp(z)

    def _marginal(self, target: str):
        try:
            idx = {"onset": 0, "gap": 1}[target]
        except KeyError:
            raise ValueError(f"unknown target {target!r}, expected 'onset' or 'gap'") from None
        locs = self.means[:, idx]
        sds = np.sqrt(self.covariances[:, idx, idx])
        return locs, sds

    def marginal_survival(self, target: str, t) -> np.ndarray:
        from .distributions import lognormal_sf

        locs, sds = self._marginal(target)
        t = np.asarray(t, dtype=float)
        vals = sum(
            w * lognormal_sf(t, locs[k], sds[k]) for k, w in enumerate(self.weights)
        )
        return vals

    def marginal_density(self, target: str, t) -> np.ndarray:
        from .distributions import lognormal_pdf

        locs, sds = self._marginal(target)
        t = np.asarray(t, dtype=float)
        vals = sum(
            w * lognormal_pdf(t, locs[k], sds[k]) for k, w in enumerate(self.weights)
        )
        return vals


@dataclass
class ScenarioTruth:
    """Ground truth per group label for a simulation scenario."""

    name: str
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.groups:
            raise ValueError("scenario truth needs at least one group")
        for label, truth in self.groups.items():
            if not isinstance(truth, GroupTruth):
                raise ValueError(f"group {label!r} is not a GroupTruth")

    @property
    def labels(self) -> list:
        return sorted(self.groups)
