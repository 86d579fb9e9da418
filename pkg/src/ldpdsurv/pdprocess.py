"""Two-parameter stick-breaking priors over mixture weights.

The weight sequence is built from independent sticks

    V_j ~ Beta(1 - discount, strength + j * discount),    j = 1, 2, ...

with weights  w_l = V_l * prod_{j < l} (1 - V_j).  ``discount = 0`` gives the
familiar one-parameter (Dirichlet) special case, where the number of occupied
clusters among m draws grows like ``strength * log(m)``; a positive discount
thickens the weight tail and switches the growth rate to ``m ** discount``.

Finite computation truncates the sequence at a fixed level and forces the
last stick to one, so the final weight absorbs whatever mass remains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PDParams",
    "StickState",
    "sample_sticks_prior",
    "prior_cluster_counts",
    "measure_variance",
    "measure_covariance",
    "measure_correlation",
    "expected_tail_mass",
    "truncation_level_for_tail",
]

# Sticks are kept strictly inside (0, 1) so that Beta log densities with
# shape parameters below one stay finite.
_STICK_FLOOR = 1e-300
_STICK_CEIL = 1.0 - 1e-12


@dataclass(frozen=True)
class PDParams:
    """Discount and strength of the two-parameter stick-breaking prior.

    Valid range: ``0 <= discount < 1`` and ``strength > -discount``.
    """

    discount: float
    strength: float

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if not (self.strength > -self.discount):
            raise ValueError(
                f"strength must exceed -discount, got strength={self.strength}, "
                f"discount={self.discount}"
            )

    @property
    def is_dirichlet(self) -> bool:
        """True when the discount is exactly zero."""
        return self.discount == 0.0


@dataclass
class StickState:
    """Truncated stick-breaking weights together with the sticks behind them.

    Invariants: both arrays share one length, the last stick equals one, every
    weight is nonnegative and the weights sum to one in floating point.
    """

    sticks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.sticks = np.asarray(self.sticks, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.validate()

    @property
    def truncation_level(self) -> int:
        return self.sticks.size

    @classmethod
    def from_sticks(cls, sticks) -> "StickState":
        v = np.asarray(sticks, dtype=float).copy()
        if v.size < 1:
            raise ValueError("need at least one stick")
        v[-1] = 1.0
        if np.any(v <= 0.0) or np.any(v > 1.0):
            raise ValueError("sticks must lie in (0, 1]")
        leftover = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
        w = v * leftover
        # Nudge the final weight so the float sum lands exactly on 1.
        for _ in range(5):
            residue = 1.0 - w.sum()
            if residue == 0.0:
                break
            w[-1] += residue
        if w[-1] < 0.0:
            w[np.argmax(w)] += w[-1]
            w[-1] = 0.0
        return cls(v, w)

    def validate(self):
        if self.sticks.shape != self.weights.shape or self.sticks.ndim != 1:
            raise ValueError("sticks and weights must be 1-d arrays of equal length")
        if self.sticks[-1] != 1.0:
            raise ValueError("last stick must equal 1")
        if np.any(self.sticks <= 0.0) or np.any(self.sticks > 1.0):
            raise ValueError("sticks must lie in (0, 1]")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    def consistency_error(self) -> float:
        """Max absolute gap between stored weights and those implied by sticks."""
        leftover = np.concatenate(([1.0], np.cumprod(1.0 - self.sticks[:-1])))
        return float(np.max(np.abs(self.weights - self.sticks * leftover)))


def stick_shape2(params: PDParams, indices) -> np.ndarray:
    """Second Beta shape for sticks at the given 1-based indices."""
    return params.strength + np.asarray(indices, dtype=float) * params.discount


def sample_sticks_prior(params: PDParams, level: int, rng: np.random.Generator) -> StickState:
    """Draw the truncated stick sequence from its prior."""
    if level < 1:
        raise ValueError("truncation level must be at least 1")
    v = np.ones(level)
    if level > 1:
        j = np.arange(1, level)
        v[:-1] = rng.beta(1.0 - params.discount, stick_shape2(params, j))
        np.clip(v[:-1], _STICK_FLOOR, _STICK_CEIL, out=v[:-1])
    return StickState.from_sticks(v)


def prior_cluster_counts(
    params: PDParams, n_customers: int, n_replicates: int, rng: np.random.Generator
) -> np.ndarray:
    """Distribution of the number of clusters among ``n_customers`` draws.

    Simulates the sequential seating scheme: after i customers are seated at
    k clusters, customer i + 1 opens a new cluster with probability
    ``(strength + k * discount) / (i + strength)`` and otherwise joins an
    existing one.  Because that probability depends on the seating only
    through k, the cluster count is itself a Markov chain and the individual
    cluster sizes never need to be tracked; this lets the replicates run as
    one vectorised recursion.

    Returns an integer array of shape (n_replicates,).
    """
    if n_customers < 1:
        raise ValueError("need at least one customer")
    a, b = params.discount, params.strength
    counts = np.ones(n_replicates, dtype=np.int64)
    for i in range(1, n_customers):
        p_new = (b + counts * a) / (i + b)
        counts += rng.random(n_replicates) < p_new
    return counts


def measure_variance(params: PDParams, base_mass: float) -> float:
    """Variance of the random measure of a set with the given base mass."""
    if not 0.0 <= base_mass <= 1.0:
        raise ValueError("base_mass must lie in [0, 1]")
    return base_mass * (1.0 - base_mass) * (1.0 - params.discount) / (params.strength + 1.0)

def measure_covariance(params: PDParams, base_mass_1: float, base_mass_2: float) -> float:
    """Covariance of the random masses of two disjoint sets."""
    for v in (base_mass_1, base_mass_2):
        if not 0.0 <= v <= 1.0:
            raise ValueError("base masses must lie in [0, 1]")
    if base_mass_1 + base_mass_2 > 1.0 + 1e-12:
        raise ValueError("disjoint sets cannot carry total base mass above 1")
    return -base_mass_1 * base_mass_2 * (1.0 - params.discount) / (params.strength + 1.0)


def measure_correlation(base_mass_1: float, base_mass_2: float) -> float:
    """Correlation of the masses of two disjoint sets.

    Does not depend on the discount or strength, which is why those two
    parameters cannot be identified from correlations alone.
    """
    p1, p2 = base_mass_1, base_mass_2
    return -np.sqrt(p1 * p2 / ((1.0 - p1) * (1.0 - p2)))


def expected_tail_mass(params: PDParams, level: int) -> float:
    """Expected weight beyond the first ``level - 1`` sticks under the prior.

    This is the mass the truncation lumps into its final atom, namely
    ``E prod_{j < level} (1 - V_j)``, which factorises over the independent
    sticks.  Computed in log space.
    """
    if level < 1:
        raise ValueError("truncation level must be at least 1")
    if level == 1:
        return 1.0
    j = np.arange(1, level)
    s2 = stick_shape2(params, j)
    return float(np.exp(np.sum(np.log(s2) - np.log(s2 + 1.0 - params.discount))))


def truncation_level_for_tail(
    params: PDParams, tolerance: float, max_level: int = 1_000_000
) -> int:
    """Smallest truncation level whose expected tail mass is below ``tolerance``.

    Raises if no level up to ``max_level`` suffices, which happens for large
    discounts: the tail then shrinks only polynomially in the level.
    """
    if not 0.0 < tolerance < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    j = np.arange(1, max_level)
    s2 = stick_shape2(params, j)
    log_tail = np.cumsum(np.log(s2) - np.log(s2 + 1.0 - params.discount))
    hits = np.nonzero(log_tail < np.log(tolerance))[0]
    if hits.size == 0:
        raise ValueError(
            f"no truncation level up to {max_level} reaches tail mass {tolerance}"
        )
    return int(hits[0]) + 2  # +1 for 1-based stick index, +1 for the final stick
