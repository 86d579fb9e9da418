"""Posterior functionals of the fitted mixture.

Every retained draw induces, for a covariate profile and a chosen coordinate
(an item's onset time or its gap time), a finite lognormal mixture: atom l
contributes log-scale location ``x'beta_l`` and the kernel variance of that
coordinate.  The functions here evaluate the CDF, survival, density, hazard,
mean and median of that mixture per draw, and reduce curves over draws to
pointwise posterior means with highest-posterior-density bands.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import ndtr

__all__ = [
    "CovariateProfile",
    "FunctionalGrid",
    "CorrelationSummary",
    "cdf_at",
    "survival_at",
    "density_at",
    "hazard_at",
    "mean_at",
    "median_at",
    "posterior_curves",
    "posterior_scalars",
    "hpd_interval",
    "default_time_grid",
    "log_scale_correlations",
    "spike_probability",
    "bayes_factor_spike",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# survival values below this are treated as vanished; hazards there are NaN
HAZARD_SURVIVAL_FLOOR = 1e-12
_CHUNK = 256


@dataclass(frozen=True)
class CovariateProfile:
    """A covariate setting plus the coordinate whose law is requested.

    ``target`` selects either the onset time or the gap (onset-to-event) time
    of item ``item_index`` (1-based).  ``label`` identifies the profile in
    exported tables.
    """

    onset_covariates: np.ndarray
    event_covariates: np.ndarray
    item_index: int = 1
    target: str = "onset"
    label: str = "profile"

    def __post_init__(self):
        object.__setattr__(
            self, "onset_covariates", np.asarray(self.onset_covariates, dtype=float)
        )
        object.__setattr__(
            self, "event_covariates", np.asarray(self.event_covariates, dtype=float)
        )
        if self.target not in ("onset", "gap"):
            raise ValueError(f"target must be 'onset' or 'gap', got {self.target!r}")
        if self.item_index < 1:
            raise ValueError("item_index is 1-based and must be positive")
        if self.onset_covariates.ndim != 1 or self.event_covariates.ndim != 1:
            raise ValueError("covariate vectors must be one-dimensional")

    def coefficient_slice(self, n_items: int) -> slice:
        """Columns of the atom matrix that multiply this profile's covariates."""
        p = self.onset_covariates.size
        q = self.event_covariates.size
        j = self.item_index
        if j > n_items:
            raise ValueError(f"item_index {j} exceeds the {n_items} modelled items")
        if self.target == "onset":
            return slice((j - 1) * p, j * p)
        return slice(n_items * p + (j - 1) * q, n_items * p + j * q)

    def coordinate(self, n_items: int) -> int:
        """Row/column of the kernel covariance for this profile's coordinate."""
        if self.item_index > n_items:
            raise ValueError(
                f"item_index {self.item_index} exceeds the {n_items} modelled items"
            )
        if self.target == "onset":
            return self.item_index - 1
        return n_items + self.item_index - 1

    @property
    def covariates(self) -> np.ndarray:
        return self.onset_covariates if self.target == "onset" else self.event_covariates


@dataclass
class FunctionalGrid:
    """Per-draw curve values on a time grid with pointwise summaries."""

    times: np.ndarray
    values: np.ndarray
    mean: np.ndarray
    hpd_lower: np.ndarray
    hpd_upper: np.ndarray
    level: float = 0.95
    profile: CovariateProfile | None = None
    functional: str = ""

    def validate(self) -> None:
        t = np.asarray(self.times)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a nonempty vector")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing and positive")
        if self.values.shape != (self.values.shape[0], t.size):
            raise ValueError("values must be draws x times")
        for name in ("mean", "hpd_lower", "hpd_upper"):
            if getattr(self, name).shape != t.shape:
                raise ValueError(f"{name} must match the grid length")
        finite = ~np.isnan(self.hpd_lower)
        if np.any(self.hpd_lower[finite] > self.hpd_upper[finite] + 1e-12):
            raise ValueError("HPD lower bound exceeds upper bound")


@dataclass(frozen=True)
class CorrelationSummary:
    """Posterior summary of one log-scale Pearson correlation."""

    first: str
    second: str
    mean: float
    hpd_lower: float
    hpd_upper: float


# ---------------------------------------------------------------------------
# per-draw mixture parameters
# ---------------------------------------------------------------------------

def _mixture_params(snapshot, profile: CovariateProfile, n_items: int):
    """Log-scale shifts (one per atom), weights and the coordinate sd."""
    shifts = snapshot.atoms[:, profile.coefficient_slice(n_items)] @ profile.covariates
    c = profile.coordinate(n_items)
    var = float(snapshot.kernel_cov[c, c])
    if var <= 0:
        raise ValueError("kernel covariance has a nonpositive diagonal entry")
    return shifts, snapshot.weights, math.sqrt(var)


def _infer_n_items(snapshot, profile: CovariateProfile) -> int:
    """Number of items implied by the atom dimension and the profile lengths."""
    d = snapshot.atoms.shape[-1]
    per_item = profile.onset_covariates.size + profile.event_covariates.size
    n_items, rem = divmod(d, per_item)
    if rem or n_items < 1:
        raise ValueError(
            f"atom dimension {d} is not a multiple of the covariate length {per_item}"
        )
    return n_items


def cdf_at(snapshot, profile: CovariateProfile, t, n_items: int | None = None):
    """Mixture CDF at time t (scalar or array), a weighted sum of lognormal CDFs."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)
    shifts, weights, sd = _mixture_params(snapshot, profile, n_items)
    u = (np.log(t)[..., None] - shifts) / sd
    out = ndtr(u) @ weights
    return float(out) if out.ndim == 0 else out


def survival_at(snapshot, profile: CovariateProfile, t, n_items: int | None = None):
    """Mixture survival at time t, computed from the complementary normal CDF
    directly so the right tail keeps full relative precision."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)
    shifts, weights, sd = _mixture_params(snapshot, profile, n_items)
    u = (np.log(t)[..., None] - shifts) / sd
    out = ndtr(-u) @ weights
    return float(out) if out.ndim == 0 else out


def density_at(snapshot, profile: CovariateProfile, t, n_items: int | None = None):
    """Mixture density at time t; each atom contributes a lognormal density."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)
    shifts, weights, sd = _mixture_params(snapshot, profile, n_items)
    u = (np.log(t)[..., None] - shifts) / sd
    kernel = np.exp(-0.5 * u * u) / (_SQRT_2PI * sd)
    out = (kernel @ weights) / t
    return float(out) if out.ndim == 0 else out


def hazard_at(snapshot, profile: CovariateProfile, t, n_items: int | None = None):
    """density / survival; NaN where survival has underflowed to ~0.

    Reporting NaN (missing) instead of a huge ratio keeps exported hazard
    curves plottable beyond the effective support of the mixture.
    """
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)
    surv = survival_at(snapshot, profile, t, n_items)
    dens = density_at(snapshot, profile, t, n_items)
    surv_arr = np.asarray(surv, dtype=float)
    dens_arr = np.asarray(dens, dtype=float)
    out = np.full_like(surv_arr, np.nan)
    ok = surv_arr >= HAZARD_SURVIVAL_FLOOR
    out[ok] = dens_arr[ok] / surv_arr[ok]
    return float(out) if out.ndim == 0 else out


def mean_at(snapshot, profile: CovariateProfile, n_items: int | None = None) -> float:
    """Mixture mean: sum of weights times exp(shift + variance/2).

    Saturates at +inf with a warning if an atom's shift overflows the
    exponential.
    """
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)
    shifts, weights, sd = _mixture_params(snapshot, profile, n_items)
    with np.errstate(over="ignore"):
        per_atom = np.exp(shifts + 0.5 * sd * sd)
        value = float(per_atom @ weights)
    if not np.isfinite(value):
        warnings.warn("mixture mean overflowed; saturating at +inf", RuntimeWarning)
        return math.inf
    return value


_BRACKET = (1e-6, 1e3)
_WIDE_BRACKET = (1e-12, 1e6)


def median_at(snapshot, profile: CovariateProfile, n_items: int | None = None) -> float:
    """Unique root of cdf = 1/2 by bisection; widens the bracket once."""
    if n_items is None:
        n_items = _infer_n_items(snapshot, profile)

    def objective(t):
        return cdf_at(snapshot, profile, t, n_items) - 0.5

    for lo, hi in (_BRACKET, _WIDE_BRACKET):
        if objective(lo) < 0.0 <= objective(hi):
            return float(bisect(objective, lo, hi, xtol=1e-8))
    raise ValueError(
        "median not bracketed inside (1e-12, 1e6); the mixture is degenerate"
    )


# ---------------------------------------------------------------------------
# reductions over draws
# ---------------------------------------------------------------------------

def hpd_interval(samples: np.ndarray, level: float = 0.95):
    """Shortest interval containing a ``level`` fraction of sorted samples.

    Accepts a vector or a draws-by-grid matrix (interval per column).  Columns
    containing NaN yield NaN bounds.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    arr = np.asarray(samples, dtype=float)
    vector = arr.ndim == 1
    if vector:
        arr = arr[:, None]
    n = arr.shape[0]
    if n == 0:
        raise ValueError("need at least one sample")
    k = math.ceil(level * n)
    srt = np.sort(arr, axis=0)
    if k >= n:
        lower, upper = srt[0].copy(), srt[-1].copy()
    else:
        widths = srt[k - 1 :, :] - srt[: n - k + 1, :]
        best = np.argmin(widths, axis=0)
        cols = np.arange(arr.shape[1])
        lower = srt[best, cols]
        upper = srt[best + k - 1, cols]
    bad = np.isnan(arr).any(axis=0)
    lower[bad] = np.nan
    upper[bad] = np.nan
    if vector:
        return float(lower[0]), float(upper[0])
    return lower, upper


def _curve_matrix(draws, profile, times, functional, n_items):
    """Evaluate one functional for every retained draw, chunked over draws."""
    times = np.asarray(times, dtype=float)
    log_t = np.log(times)
    n_draws = draws.n_draws
    out = np.empty((n_draws, times.size))
    coef_slice = profile.coefficient_slice(n_items)
    coord = profile.coordinate(n_items)
    x = profile.covariates
    sds = np.sqrt(draws.kernel_cov[:, coord, coord])
    for start in range(0, n_draws, _CHUNK):
        stop = min(start + _CHUNK, n_draws)
        shifts = draws.atoms[start:stop, :, coef_slice] @ x  # (chunk, N)
        w = draws.weights[start:stop]
        sd = sds[start:stop, None, None]
        u = (log_t[None, None, :] - shifts[:, :, None]) / sd
        if functional in ("cdf", "survival"):
            vals = np.einsum("klt,kl->kt", ndtr(u), w)
            out[start:stop] = 1.0 - vals if functional == "survival" else vals
        elif functional in ("density", "hazard"):
            kernel = np.exp(-0.5 * u * u) / (_SQRT_2PI * sd)
            dens = np.einsum("klt,kl->kt", kernel, w) / times[None, :]
            if functional == "density":
                out[start:stop] = dens
            else:
                surv = 1.0 - np.einsum("klt,kl->kt", ndtr(u), w)
                haz = np.full_like(dens, np.nan)
                ok = surv >= HAZARD_SURVIVAL_FLOOR
                haz[ok] = dens[ok] / surv[ok]
                out[start:stop] = haz
        else:
            raise ValueError(f"unknown functional {functional!r}")
    return out


def posterior_curves(
    draws,
    profile: CovariateProfile,
    times,
    functional: str = "survival",
    level: float = 0.95,
) -> FunctionalGrid:
    """Pointwise posterior mean and HPD band of a curve functional.

    ``functional`` is one of survival, cdf, density, hazard.  Hazard values
    are NaN beyond the support of a draw's mixture; grid points where any
    draw is NaN get NaN bands and are excluded from the pointwise mean.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty vector")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    if draws.n_draws == 0:
        raise ValueError("no retained draws")
    if draws.n_draws < 50:
        warnings.warn(
            f"only {draws.n_draws} draws; HPD bands will be coarse", RuntimeWarning
        )
    n_items = int(draws.meta["n_items"])
    values = _curve_matrix(draws, profile, times, functional, n_items)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(values, axis=0)
    lower, upper = hpd_interval(values, level)
    grid = FunctionalGrid(
        times=times,
        values=values,
        mean=mean,
        hpd_lower=lower,
        hpd_upper=upper,
        level=level,
        profile=profile,
        functional=functional,
    )
    grid.validate()
    return grid


def posterior_scalars(draws, profile: CovariateProfile, functional: str = "median"):
    """Per-draw mean or median of the profile's mixture, as a vector.

    The median uses the same bisection bracket as :func:`median_at` but runs
    all draws through a shared vectorised bisection.
    """
    n_items = int(draws.meta["n_items"])
    coef_slice = profile.coefficient_slice(n_items)
    coord = profile.coordinate(n_items)
    x = profile.covariates
    shifts = draws.atoms[:, :, coef_slice] @ x
    sds = np.sqrt(draws.kernel_cov[:, coord, coord])
    weights = draws.weights
    if functional == "mean":
        with np.errstate(over="ignore"):
            vals = np.einsum(
                "kl,kl->k", np.exp(shifts + 0.5 * (sds * sds)[:, None]), weights
            )
        if np.any(~np.isfinite(vals)):
            warnings.warn("mixture mean overflowed; saturating at +inf", RuntimeWarning)
            vals[~np.isfinite(vals)] = np.inf
        return vals
    if functional != "median":
        raise ValueError(f"unknown scalar functional {functional!r}")

    def mix_cdf(t):
        u = (np.log(t)[:, None] - shifts) / sds[:, None]
        return np.einsum("kl,kl->k", ndtr(u), weights)

    k = draws.n_draws
    lo = np.full(k, _BRACKET[0])
    hi = np.full(k, _BRACKET[1])
    bad = mix_cdf(lo) >= 0.5
    bad |= mix_cdf(hi) < 0.5
    if np.any(bad):
        lo[bad] = _WIDE_BRACKET[0]
        hi[bad] = _WIDE_BRACKET[1]
        still = (mix_cdf(lo) >= 0.5) | (mix_cdf(hi) < 0.5)
        if np.any(still):
            raise ValueError(
                "median not bracketed inside (1e-12, 1e6) for some draws"
            )
    while np.max(hi - lo) > 1e-8:
        mid = 0.5 * (lo + hi)
        high = mix_cdf(mid) >= 0.5
        hi[high] = mid[high]
        lo[~high] = mid[~high]
    return 0.5 * (lo + hi)


def default_time_grid(draws, profiles, n_points: int = 201):
    """Log-spaced grid spanning the pooled 0.1%-99.9% predictive quantiles.

    The bounds come from the posterior-mean CDF of every profile, so one grid
    serves all requested profiles.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    if isinstance(profiles, CovariateProfile):
        profiles = [profiles]
    n_items = int(draws.meta["n_items"])
    stride = max(1, draws.n_draws // 200)
    lo_all, hi_all = [], []
    for profile in profiles:
        coef_slice = profile.coefficient_slice(n_items)
        coord = profile.coordinate(n_items)
        shifts = draws.atoms[::stride, :, coef_slice] @ profile.covariates
        sds = np.sqrt(draws.kernel_cov[::stride, coord, coord])
        weights = draws.weights[::stride]
        scale = weights.sum()

        def mean_cdf(t):
            u = (math.log(t) - shifts) / sds[:, None]
            return float(np.sum(ndtr(u) * weights)) / scale

        lo_all.append(_cdf_quantile(mean_cdf, 0.001))
        hi_all.append(_cdf_quantile(mean_cdf, 0.999))
    lo, hi = min(lo_all), max(hi_all)
    if not hi > lo:
        raise ValueError("degenerate predictive distribution; specify a grid")
    return np.geomspace(lo, hi, n_points)


def _cdf_quantile(fn, q):
    lo, hi = 1e-12, 1e12
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo >= q:
        return lo
    if f_hi <= q:
        return hi
    return float(brentq(lambda t: fn(t) - q, lo, hi, xtol=1e-12, rtol=1e-10))


# ---------------------------------------------------------------------------
# covariance and model-choice summaries
# ---------------------------------------------------------------------------

def coordinate_labels(n_items: int) -> list:
    return [f"onset{j + 1}" for j in range(n_items)] + [
        f"gap{j + 1}" for j in range(n_items)
    ]


def log_scale_correlations(draws, labels=None, level: float = 0.95):
    """Posterior mean and HPD of every pairwise log-scale correlation.

    The correlations are those of the latent Gaussian kernel, i.e. entry
    (j, k) of the kernel covariance normalised by its diagonal.
    """
    covs = draws.kernel_cov
    dim = covs.shape[-1]
    if dim < 2:
        raise ValueError("need at least two coordinates for correlations")
    if labels is None:
        labels = coordinate_labels(dim // 2)
    if len(labels) != dim:
        raise ValueError(f"expected {dim} coordinate labels, got {len(labels)}")
    sd = np.sqrt(covs[:, np.arange(dim), np.arange(dim)])
    rows = []
    for j in range(dim):
        for k in range(j + 1, dim):
            rho = covs[:, j, k] / (sd[:, j] * sd[:, k])
            lower, upper = hpd_interval(rho, level)
            rows.append(
                CorrelationSummary(
                    first=labels[j],
                    second=labels[k],
                    mean=float(np.mean(rho)),
                    hpd_lower=lower,
                    hpd_upper=upper,
                )
            )
    return rows


def spike_probability(draws) -> float:
    """Fraction of retained draws with the discount exactly at zero."""
    return float(np.mean(draws.discount == 0.0))


def bayes_factor_spike(draws, spike_weight: float | None = None) -> float:
    """Bayes factor for a free discount against the point mass at zero.

    Posterior odds of leaving the spike divided by the prior odds.  Returns
    +inf when no draw sits in the spike and 0 when all do, with a warning in
    both degenerate cases.
    """
    if spike_weight is None:
        spike_weight = draws.meta.get("spike_weight")
    if spike_weight is None:
        raise ValueError("spike_weight not recorded in the draws; pass it explicitly")
    if not 0.0 < spike_weight < 1.0:
        raise ValueError("spike_weight must lie strictly between 0 and 1")
    pi0 = spike_probability(draws)
    prior_odds = (1.0 - spike_weight) / spike_weight
    if pi0 == 0.0:
        warnings.warn("no draws in the spike; Bayes factor is +inf", RuntimeWarning)
        return math.inf
    if pi0 == 1.0:
        warnings.warn("all draws in the spike; Bayes factor is 0", RuntimeWarning)
        return 0.0
    return ((1.0 - pi0) / pi0) / prior_odds
