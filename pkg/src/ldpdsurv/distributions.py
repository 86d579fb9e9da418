"""Shared sampling and density primitives.

Everything draws from an explicit :class:`numpy.random.Generator`, so a run
is a pure function of its seed.  Densities are computed in log space via
triangular factorisations; covariance matrices are never inverted directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import betaln, log_ndtr, ndtr, ndtri

__all__ = [
    "MvNormal",
    "InverseWishart",
    "mvn_logpdf",
    "sample_truncated_normal",
    "truncated_normal_mean",
    "log_truncated_normal_pdf",
    "log_beta_pdf",
    "lognormal_cdf",
    "lognormal_sf",
    "lognormal_pdf",
    "conditional_normal_coefficients",
]

_LOG_2PI = math.log(2.0 * math.pi)
_TAIL = 4.0  # standardised bound beyond which rejection sampling takes over


def _spd_cholesky(matrix: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        return cholesky(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc


class MvNormal:
    """Multivariate normal stored with its lower Cholesky factor."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float).ravel()
        self.cov = np.asarray(cov, dtype=float)
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("mean and covariance dimensions disagree")
        self.chol = _spd_cholesky(self.cov, "covariance")

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        eps = rng.standard_normal(shape)
        return self.mean + eps @ self.chol.T

    def logpdf(self, x) -> np.ndarray:
        return mvn_logpdf(np.asarray(x, dtype=float), self.mean, self.chol)


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, chol_lower: np.ndarray):
    """Log density of N(mean, L L') evaluated at ``x`` (leading axes batched)."""
    d = mean.size
    dev = np.atleast_2d(x) - mean
    sol = solve_triangular(chol_lower, dev.T, lower=True)
    quad = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol_lower)))
    out = -0.5 * (d * _LOG_2PI + logdet + quad)
    return out[0] if np.ndim(x) == 1 else out.reshape(np.shape(x)[:-1])


@dataclass(frozen=True)
class InverseWishart:
    """Inverse Wishart with degrees of freedom ``df`` and scale matrix ``scale``.

    Parameterised so that the mean is ``scale / (df - dim - 1)`` whenever
    ``df > dim + 1``.  Sampling uses a Bartlett factor of a standard Wishart
    plus triangular solves, so no explicit matrix inverse is formed.
    """

    df: float
    scale: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scale, dtype=float)
        object.__setattr__(self, "scale", s)
        d = s.shape[0]
        if self.df <= d - 1:
            raise ValueError(f"inverse Wishart needs df > dim - 1, got df={self.df}, dim={d}")
        object.__setattr__(self, "_scale_chol", _spd_cholesky(s, "scale"))

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    def mean(self) -> np.ndarray:
        if self.df <= self.dim + 1:
            raise ValueError("mean requires df > dim + 1")
        return self.scale / (self.df - self.dim - 1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        bartlett = np.zeros((d, d))
        for i in range(d):
            bartlett[i, i] = math.sqrt(rng.chisquare(self.df - i))
        if d > 1:
            rows, cols = np.tril_indices(d, k=-1)
            bartlett[rows, cols] = rng.standard_normal(rows.size)
        # bartlett @ bartlett.T is Wishart(df, I); mapping through the scale
        # factor C gives  C A^{-T} A^{-1} C' = (A^{-1} C')' (A^{-1} C'),
        # an inverse Wishart draw with the requested scale.
        m = solve_triangular(bartlett, self._scale_chol.T, lower=True)
        return m.T @ m


# ---------------------------------------------------------------------------
# truncated normal
# ---------------------------------------------------------------------------

def _tail_right(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal conditioned on (a, b] with a >= _TAIL, vectorised.

    Shifted-exponential rejection with rate (a + sqrt(a^2 + 4)) / 2.  The
    acceptance probability is bounded away from zero for one-sided intervals;
    for very thin two-sided slices in the far tail the loop can stall, so
    after a fixed number of rounds the remainder falls back to inverse-CDF
    sampling through the mirrored survival function, which stays accurate for
    standardised bounds up to about 8.
    """
    n = a.size
    out = np.empty(n)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    todo = np.arange(n)
    for _ in range(64):
        if todo.size == 0:
            break
        cand = a[todo] - np.log1p(-rng.random(todo.size)) / lam[todo]
        logu = np.log(rng.random(todo.size))
        diff = cand - lam[todo]
        ok = (cand <= b[todo]) & (logu <= -0.5 * diff * diff)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    if todo.size:
        sf_hi = ndtr(-a[todo])
        sf_lo = ndtr(-b[todo])
        u = sf_lo + (sf_hi - sf_lo) * rng.random(todo.size)
        out[todo] = -ndtri(u)
    return out


def sample_truncated_normal(mean, sd, lower, upper, rng: np.random.Generator):
    """Draw from N(mean, sd^2) restricted to the interval (lower, upper].

    All four parameters broadcast; infinite bounds are allowed.  In the body
    of the distribution the draw is an inverse-CDF transform of a uniform;
    once the whole interval sits beyond ``4`` standardised units the sampler
    switches to exponential rejection, which remains exact for standardised
    bounds of magnitude 8 and beyond.  Returned values never leave
    ``(lower, upper]``.
    """
    scalar = all(np.ndim(v) == 0 for v in (mean, sd, lower, upper))
    mean, sd, lower, upper = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mean, sd, lower, upper))
    )
    mean = np.atleast_1d(mean).ravel()
    sd = np.atleast_1d(sd).ravel()
    lower = np.atleast_1d(lower).ravel()
    upper = np.atleast_1d(upper).ravel()
    if np.any(~(sd > 0.0)):
        raise ValueError("sd must be positive")
    if np.any(~(upper > lower)):
        raise ValueError("need lower < upper")
    if np.any(np.isnan(mean)) or np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
        raise ValueError("truncation parameters must not be NaN")

    a = (lower - mean) / sd
    b = (upper - mean) / sd
    z = np.empty(a.size)

    right = a >= _TAIL
    left = b <= -_TAIL
    body = ~(right | left)

    if np.any(body):
        ab, bb = a[body], b[body]
        # Work in whichever tail keeps the uniforms away from 1, where the
        # normal quantile function loses accuracy.  Doubly unbounded entries
        # (a = -inf, b = +inf) need no flip.
        with np.errstate(invalid="ignore"):
            centre = ab + bb
        centre[np.isneginf(ab) & np.isposinf(bb)] = 0.0
        flip = centre > 0.0
        lo = np.where(flip, -bb, ab)
        hi = np.where(flip, -ab, bb)
        u_lo = ndtr(lo)
        u_hi = ndtr(hi)
        u = u_lo + (u_hi - u_lo) * rng.random(ab.size)
        draw = ndtri(u)
        z[body] = np.where(flip, -draw, draw)
    if np.any(right):
        z[right] = _tail_right(a[right], b[right], rng)
    if np.any(left):
        z[left] = -_tail_right(-b[left], -a[left], rng)

    x = mean + sd * z
    x = np.minimum(np.maximum(x, np.nextafter(lower, upper)), upper)
    if scalar:
        return float(x[0])
    shape = np.broadcast_shapes(*(np.shape(v) for v in (mean, sd, lower, upper)))
    return x.reshape(shape) if shape else x


def truncated_normal_mean(mean: float, sd: float, lower: float, upper: float) -> float:
    """Exact mean of N(mean, sd^2) restricted to (lower, upper)."""
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    phi_a = 0.0 if np.isinf(a) else math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
    phi_b = 0.0 if np.isinf(b) else math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
    # Phi(b) - Phi(a) computed as a difference of survival values when both
    # bounds sit in the right tail, to dodge cancellation.
    if a > 0:
        mass = ndtr(-a) - ndtr(-b)
    else:
        mass = ndtr(b) - ndtr(a)
    if mass <= 0.0:
        raise ValueError("truncation interval carries no probability mass")
    return mean + sd * (phi_a - phi_b) / mass


def log_truncated_normal_pdf(x: float, loc: float, scale: float, lower: float) -> float:
    """Log density of N(loc, scale^2) truncated to (lower, inf) at ``x``.

    Returns ``-inf`` below the truncation point.  The normaliser uses
    ``log_ndtr`` so a far-away truncation point costs no precision.
    """
    if x <= lower:
        return -math.inf
    z = (x - loc) / scale
    log_norm = log_ndtr((loc - lower) / scale)
    return -0.5 * (z * z + _LOG_2PI) - math.log(scale) - log_norm


def log_beta_pdf(x, shape1, shape2):
    """Log Beta(shape1, shape2) density, vectorised over all arguments."""
    x = np.asarray(x, dtype=float)
    s1 = np.asarray(shape1, dtype=float)
    s2 = np.asarray(shape2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (s1 - 1.0) * np.log(x) + (s2 - 1.0) * np.log1p(-x) - betaln(s1, s2)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# lognormal building blocks for the survival functionals
# ---------------------------------------------------------------------------

def lognormal_cdf(t, log_loc, sd):
    """P(T <= t) for log T ~ N(log_loc, sd^2); zero at and below t = 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(t) - log_loc) / sd
    out = np.where(t > 0.0, ndtr(z), 0.0)
    return out if out.ndim else float(out)


def lognormal_sf(t, log_loc, sd):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(t) - log_loc) / sd
    out = np.where(t > 0.0, ndtr(-z), 1.0)
    return out if out.ndim else float(out)


def lognormal_pdf(t, log_loc, sd):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (np.log(t) - log_loc) / sd
        dens = np.exp(-0.5 * z * z) / (t * sd * math.sqrt(2 * math.pi))
    out = np.where(t > 0.0, dens, 0.0)
    return out if out.ndim else float(out)


def conditional_normal_coefficients(cov: np.ndarray):
    """Per-coordinate regression weights and variances for Gibbs updates.

    For each coordinate k of a zero-mean normal with covariance ``cov``, the
    conditional of coordinate k given the rest is normal with variance
    ``1 / P[k, k]`` and mean ``-sum_{j != k} P[k, j] dev_j / P[k, k]`` where
    ``P`` is the precision matrix.  Returns (weights, variances) with
    ``weights[k]`` of length d and ``weights[k, k] = 0``.
    """
    chol_factor = _spd_cholesky(cov, "covariance")
    d = cov.shape[0]
    precision = cho_solve((chol_factor, True), np.eye(d))
    diag = np.diag(precision).copy()
    weights = -precision / diag[:, None]
    np.fill_diagonal(weights, 0.0)
    variances = 1.0 / diag
    return weights, variances
