"""Blocked Gibbs sampler over the truncated stick-breaking representation.

One sweep updates, in order: latent log times, cluster allocations, sticks,
atoms, the kernel covariance, the base measure location and covariance, and
finally the stick-breaking discount and strength.  All conditionals are
conjugate except the last block, which uses three Metropolis moves: an
independence proposal that hops between the spike (discount exactly zero) and
the slab, a random walk on the logit of the discount, and a random walk on
``log(strength + discount)``.

A chain is a pure function of its seed: every random draw comes from one
``numpy.random.Generator`` owned by the chain, and draws are consumed in a
fixed order.  Multiple chains use independent streams spawned from the master
seed and are merged only after completion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import betaln, expit

from .data import Dataset, feasible_point
from .distributions import (
    InverseWishart,
    _spd_cholesky,
    conditional_normal_coefficients,
    log_truncated_normal_pdf,
    sample_truncated_normal,
)
from .model import ModelState, PriorSpec, sample_prior_params
from .pdprocess import (
    PDParams,
    StickState,
    _STICK_CEIL,
    _STICK_FLOOR,
    sample_sticks_prior,
)

__all__ = [
    "ChainConfig",
    "DrawSnapshot",
    "PosteriorDraws",
    "BlockedGibbsSampler",
    "run_chain",
    "resume_chain",
    "concatenate_runs",
    "save_draws",
    "load_draws",
    "save_checkpoint",
    "load_checkpoint",
]

_LOG_2PI = math.log(2.0 * math.pi)
_WALK_STEP = 0.3  # random-walk scale for both Metropolis walks

_MOVE_NAMES = ("swap", "discount_walk", "strength_walk")


def _metropolis_accept(rng: np.random.Generator, log_ratio: float) -> bool:
    """One uniform per decision; NaN ratios reject."""
    u = rng.random()
    if log_ratio >= 0.0:
        return True
    return u < math.exp(log_ratio)


def _chol(matrix: np.ndarray, name: str) -> np.ndarray:
    """Lower Cholesky factor without the symmetry checks of the public
    helper; sampler-internal matrices are symmetric by construction."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


def _sample_inv_wishart(df: float, scale: np.ndarray, rng: np.random.Generator):
    """Bartlett-factor inverse Wishart draw, trusted inputs."""
    d = scale.shape[0]
    bartlett = np.zeros((d, d))
    for i in range(d):
        bartlett[i, i] = math.sqrt(rng.chisquare(df - i))
    if d > 1:
        rows, cols = np.tril_indices(d, k=-1)
        bartlett[rows, cols] = rng.standard_normal(rows.size)
    m = solve_triangular(bartlett, _chol(scale, "scale").T, lower=True)
    return m.T @ m


@dataclass
class ChainConfig:
    """How long to run and what to keep.

    ``thin`` and ``burn_in`` refer to sweeps; the number of retained draws is
    ``(iterations - burn_in) // thin`` per chain and must be at least one.
    ``validate_every_sweep`` turns on full state validation after each sweep,
    which is meant for tests, not production runs.
    """

    iterations: int
    burn_in: int = 0
    thin: int = 1
    n_chains: int = 1
    seed: int | None = None
    validate_every_sweep: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if self.n_retained < 1:
            raise ValueError("configuration retains no draws")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


class DrawSnapshot(NamedTuple):
    """Reduced state snapshot, the unit of posterior summarisation."""

    weights: np.ndarray
    atoms: np.ndarray
    kernel_cov: np.ndarray
    discount: float
    strength: float
    base_mean: np.ndarray
    base_cov: np.ndarray


# arrays written to / read from a draw store, in a fixed order
_DRAW_ARRAYS = (
    "sticks",
    "weights",
    "atoms",
    "kernel_cov",
    "discount",
    "strength",
    "base_mean",
    "base_cov",
    "kept_sweeps",
    "chain_ids",
    "log_likelihood",
    "occupied_clusters",
)


@dataclass
class PosteriorDraws:
    """Thinned snapshots plus per-sweep bookkeeping, possibly multi-chain.

    Snapshot arrays are stacked over retained sweeps (axis 0), with
    ``chain_ids`` recording which chain produced each row.  The bookkeeping
    traces keep every sweep and are stacked per chain: ``log_likelihood`` is
    the complete-data Gaussian log likelihood of the latent log times under
    the allocated atoms, and ``occupied_clusters`` counts distinct labels in
    use.  ``acceptance`` maps each Metropolis move to attempt/accept counts.
    """

    sticks: np.ndarray
    weights: np.ndarray
    atoms: np.ndarray
    kernel_cov: np.ndarray
    discount: np.ndarray
    strength: np.ndarray
    base_mean: np.ndarray
    base_cov: np.ndarray
    kept_sweeps: np.ndarray
    chain_ids: np.ndarray
    log_likelihood: np.ndarray
    occupied_clusters: np.ndarray
    acceptance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.discount.size

    @property
    def n_chains(self) -> int:
        return int(self.log_likelihood.shape[0])

    @property
    def truncation_level(self) -> int:
        return self.weights.shape[1]

    def snapshot(self, k: int) -> DrawSnapshot:
        return DrawSnapshot(
            weights=self.weights[k],
            atoms=self.atoms[k],
            kernel_cov=self.kernel_cov[k],
            discount=float(self.discount[k]),
            strength=float(self.strength[k]),
            base_mean=self.base_mean[k],
            base_cov=self.base_cov[k],
        )

    def iter_snapshots(self):
        for k in range(self.n_draws):
            yield self.snapshot(k)

    def acceptance_rates(self) -> dict:
        out = {}
        for name, counts in self.acceptance.items():
            att = counts.get("attempts", 0)
            out[name] = counts.get("accepts", 0) / att if att else float("nan")
        return out

    @classmethod
    def merge(cls, parts: list) -> "PosteriorDraws":
        """Stack draws of distinct chains (same sweep schedule per chain)."""
        if not parts:
            raise ValueError("nothing to merge")
        arrays = {}
        for name in _DRAW_ARRAYS:
            values = [getattr(p, name) for p in parts]
            arrays[name] = np.concatenate(values, axis=0)
        acceptance = {}
        for name in _MOVE_NAMES:
            acceptance[name] = {
                "attempts": sum(p.acceptance.get(name, {}).get("attempts", 0) for p in parts),
                "accepts": sum(p.acceptance.get(name, {}).get("accepts", 0) for p in parts),
            }
        meta = dict(parts[0].meta)
        meta["n_chains"] = sum(p.n_chains for p in parts)
        return cls(acceptance=acceptance, meta=meta, **arrays)


def concatenate_runs(earlier: PosteriorDraws, later: PosteriorDraws) -> PosteriorDraws:
    """Join draws from a run and its resumed continuation.

    The two parts must come from the same chains: per-sweep traces are
    concatenated along the sweep axis, retained draws are stacked and then
    reordered by (chain, sweep) so the result is indistinguishable from an
    unbroken run.
    """
    if earlier.n_chains != later.n_chains:
        raise ValueError("runs have different chain counts")
    arrays = {}
    for name in _DRAW_ARRAYS:
        a, b = getattr(earlier, name), getattr(later, name)
        if name in ("log_likelihood", "occupied_clusters"):
            arrays[name] = np.concatenate([a, b], axis=1)
        else:
            arrays[name] = np.concatenate([a, b], axis=0)
    order = np.lexsort((arrays["kept_sweeps"], arrays["chain_ids"]))
    for name in _DRAW_ARRAYS:
        if name not in ("log_likelihood", "occupied_clusters"):
            arrays[name] = arrays[name][order]
    acceptance = {}
    for name in _MOVE_NAMES:
        acceptance[name] = {
            key: earlier.acceptance.get(name, {}).get(key, 0)
            + later.acceptance.get(name, {}).get(key, 0)
            for key in ("attempts", "accepts")
        }
    meta = dict(later.meta)
    return PosteriorDraws(acceptance=acceptance, meta=meta, **arrays)


def save_draws(draws: PosteriorDraws, path) -> None:
    """Write a draw store: one .npy file per array plus ``manifest.json``.

    Plain .npy files are used instead of a zipped archive so that identical
    draws produce byte-identical stores (archives embed timestamps).
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    parameters = []
    for name in _DRAW_ARRAYS:
        arr = np.asarray(getattr(draws, name))
        np.save(root / f"{name}.npy", arr)
        parameters.append(
            {"name": name, "shape": [int(s) for s in arr.shape], "dtype": str(arr.dtype)}
        )
    manifest = {
        "format": "ldpdsurv-draws",
        "version": 1,
        "parameters": parameters,
        "acceptance": draws.acceptance,
        "meta": draws.meta,
    }
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_draws(path) -> PosteriorDraws:
    root = Path(path)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "ldpdsurv-draws":
        raise ValueError(f"{root} does not look like a draw store")
    arrays = {}
    for entry in manifest["parameters"]:
        name = entry["name"]
        arr = np.load(root / f"{name}.npy")
        if list(arr.shape) != entry["shape"]:
            raise ValueError(f"{name}.npy does not match the manifest")
        arrays[name] = arr
    return PosteriorDraws(
        acceptance=manifest.get("acceptance", {}),
        meta=manifest.get("meta", {}),
        **arrays,
    )


class BlockedGibbsSampler:
    """Gibbs transition kernel bound to one dataset and prior.

    ``dataset=None`` runs the same kernel with zero units, in which case every
    update samples from its conditional prior; chains then explore the prior
    itself, which is what the calibration tests exercise.
    """

    def __init__(self, dataset: Dataset | None, prior: PriorSpec):
        self.prior = prior
        self.dataset = dataset
        n = prior.n_items
        d = prior.coefficient_dim
        if dataset is not None:
            if not prior.matches(dataset):
                raise ValueError("prior dimensions do not match the dataset")
            self.n_units = dataset.n_units
            self.design = dataset.design_tensor()
            bounds = dataset.interval_arrays()
            self.onset_lo = bounds["onset_lo"]
            self.onset_hi = bounds["onset_hi"]
            self.event_lo = bounds["event_lo"]
            self.event_hi = bounds["event_hi"]
            self.present = bounds["present"]
            self.fallback_times = dataset.feasible_times()
            flat = self.design.reshape(self.n_units, -1)
            _, first, gidx = np.unique(
                flat, axis=0, return_index=True, return_inverse=True
            )
            self.design_group = np.asarray(gidx, dtype=np.int64).reshape(-1)
            self.unique_design = self.design[first]
        else:
            self.n_units = 0
            self.design = np.zeros((0, 2 * n, d))
            self.onset_lo = np.zeros((0, n))
            self.onset_hi = np.zeros((0, n))
            self.event_lo = np.zeros((0, n))
            self.event_hi = np.zeros((0, n))
            self.present = np.zeros((0, n), dtype=bool)
            self.fallback_times = np.zeros((0, n, 2))
            self.design_group = np.zeros(0, dtype=np.int64)
            self.unique_design = np.zeros((0, 2 * n, d))
        # fixed prior quantities
        ubm_chol = _spd_cholesky(prior.base_mean_cov, "base_mean_cov")
        self._base_mean_prec = cho_solve((ubm_chol, True), np.eye(d))
        self._base_mean_prec_loc = self._base_mean_prec @ prior.base_mean_loc
        self._log_spike = math.log(prior.spike_weight) if prior.spike_weight > 0 else -math.inf
        self._log_slab = math.log1p(-prior.spike_weight) if prior.spike_weight < 1 else -math.inf

    # ------------------------------------------------------------------
    # state construction
    # ------------------------------------------------------------------

    def initial_state(self, rng: np.random.Generator) -> ModelState:
        """Starting state: an exact prior draw without data, a data-informed
        configuration with data.

        With units present, the latent log times start at feasible interior
        points, the base mean at the pooled least squares coefficients, the
        base covariance at the prior scale matrix, the kernel covariance at
        the residual scatter, and the stick-breaking parameters at the
        one-parameter reference point (discount zero, strength one).
        Starting values only affect mixing, never the invariant
        distribution, but here they matter a great deal: the hyperpriors
        are diffuse enough that raw prior draws routinely start either the
        base measure far from the data or the strength in the hundreds,
        where the truncated stick prior dumps nearly all weight on the
        final atom.  Both regions take far longer to leave than any
        realistic burn-in.
        """
        prior = self.prior
        params = sample_prior_params(prior, rng)
        m = self.n_units
        n = prior.n_items
        d = prior.coefficient_dim
        level = prior.truncation_level
        if m == 0:
            weights = params["sticks"].weights
            alloc = rng.choice(level, size=0, p=weights / weights.sum())
            return ModelState(
                log_times=np.zeros((0, 2 * n)),
                allocations=alloc.astype(np.int64),
                sticks=params["sticks"],
                atoms=params["atoms"],
                kernel_cov=params["kernel_cov"],
                pd_params=params["pd_params"],
                base_mean=params["base_mean"],
                base_cov=params["base_cov"],
            )
        pd0 = PDParams(discount=0.0, strength=1.0)
        sticks0 = sample_sticks_prior(pd0, level, rng)
        alloc = rng.choice(level, size=m, p=sticks0.weights / sticks0.weights.sum())
        z = np.log(
            np.concatenate(
                [self.fallback_times[:, :, 0], self.fallback_times[:, :, 1]], axis=1
            )
        )
        coef_hat, *_ = np.linalg.lstsq(
            self.design.reshape(m * 2 * n, d), z.reshape(-1), rcond=None
        )
        resid = z - np.einsum("ikd,d->ik", self.design, coef_hat)
        kernel0 = resid.T @ resid / m + prior.kernel_cov_scale / prior.kernel_cov_df
        base_cov0 = prior.base_cov_scale.copy()
        atoms = coef_hat + rng.standard_normal((level, d)) @ _chol(
            base_cov0, "base covariance scale"
        ).T
        return ModelState(
            log_times=z,
            allocations=alloc.astype(np.int64),
            sticks=sticks0,
            atoms=atoms,
            kernel_cov=kernel0,
            pd_params=pd0,
            base_mean=coef_hat,
            base_cov=base_cov0,
        )

    # ------------------------------------------------------------------
    # individual updates
    # ------------------------------------------------------------------

    def _coordinate_bounds(self, z: np.ndarray, k: int):
        """Log-scale truncation bounds for coordinate k of every unit.

        Onset coordinates are bounded by their own interval intersected with
        the event interval shifted by the current gap; gap coordinates by the
        event interval shifted by the current onset.  Nonpositive lower bounds
        map to -inf.  Returns (log_lo, log_hi, empty_mask).
        """
        n = self.prior.n_items
        m = z.shape[0]
        if k < n:
            j = k
            gap = np.exp(z[:, n + j])
            lo_t = np.maximum(self.onset_lo[:, j], self.event_lo[:, j] - gap)
            hi_t = np.where(
                np.isinf(self.event_hi[:, j]),
                self.onset_hi[:, j],
                np.minimum(self.onset_hi[:, j], self.event_hi[:, j] - gap),
            )
        else:
            j = k - n
            onset = np.exp(z[:, j])
            lo_t = self.event_lo[:, j] - onset
            hi_t = np.where(
                np.isinf(self.event_hi[:, j]), np.inf, self.event_hi[:, j] - onset
            )
        empty = hi_t <= np.maximum(lo_t, 0.0)
        log_lo = np.full(m, -np.inf)
        pos = lo_t > 0.0
        log_lo[pos] = np.log(lo_t[pos])
        log_hi = np.full(m, np.inf)
        usable = np.isfinite(hi_t) & ~empty
        log_hi[usable] = np.log(hi_t[usable])
        return log_lo, log_hi, empty

    def update_latent_times(self, state: ModelState, rng: np.random.Generator) -> None:
        """Single-site Gibbs over the 2n log-time coordinates of every unit.

        Units are conditionally independent, so each coordinate is updated
        for all units at once with a vectorised truncated-normal draw.
        """
        if self.n_units == 0:
            return
        n = self.prior.n_items
        z = state.log_times
        coef, cond_var = conditional_normal_coefficients(state.kernel_cov)
        cond_sd = np.sqrt(cond_var)
        means = np.einsum("ikd,id->ik", self.design, state.atoms[state.allocations])
        dev = z - means
        for k in range(2 * n):
            log_lo, log_hi, empty = self._coordinate_bounds(z, k)
            if np.any(empty):
                self._repair_empty(state, means, dev, k, np.nonzero(empty)[0], rng)
                log_lo, log_hi, empty = self._coordinate_bounds(z, k)
                if np.any(empty):
                    bad = int(np.nonzero(empty)[0][0])
                    raise RuntimeError(
                        f"unit index {bad}: empty feasible interval for latent "
                        f"coordinate {k} even after resampling its counterpart"
                    )
            cond_mean = means[:, k] + dev @ coef[k]
            z[:, k] = sample_truncated_normal(cond_mean, cond_sd[k], log_lo, log_hi, rng)
            dev[:, k] = z[:, k] - means[:, k]

    def _repair_empty(self, state, means, dev, k, bad_units, rng):
        """Resample the counterpart coordinate of an item whose current value
        leaves coordinate k with an empty interval.  Can only trigger through
        rounding at interval endpoints, so it handles units one at a time."""
        n = self.prior.n_items
        z = state.log_times
        counterpart = k + n if k < n else k - n
        coef, cond_var = conditional_normal_coefficients(state.kernel_cov)
        sd = math.sqrt(cond_var[counterpart])
        for i in bad_units:
            log_lo, log_hi, empty = self._coordinate_bounds(z, counterpart)
            if empty[i]:
                raise RuntimeError(
                    f"unit index {int(i)}: both latent coordinates of item "
                    f"{(k % n) + 1} have empty feasible intervals"
                )
            cond_mean = means[i, counterpart] + dev[i] @ coef[counterpart]
            z[i, counterpart] = sample_truncated_normal(
                cond_mean, sd, log_lo[i], log_hi[i], rng
            )
            dev[i, counterpart] = z[i, counterpart] - means[i, counterpart]

    def update_allocations(self, state: ModelState, rng: np.random.Generator) -> None:
        """Draw each unit's label from its exact conditional over all atoms.

        Categorical sampling uses the Gumbel argmax identity, which vectorises
        over units without renormalising in probability space.
        """
        if self.n_units == 0:
            return
        log_prob = self._allocation_logdensity(state)
        with np.errstate(divide="ignore"):
            logw = np.log(state.sticks.weights)
        scores = log_prob + logw + rng.gumbel(size=log_prob.shape)
        state.allocations = np.argmax(scores, axis=1).astype(np.int64)

    def _allocation_logdensity(self, state: ModelState) -> np.ndarray:
        """Gaussian log density of each unit's log times under every atom.

        Atom means are shared within groups of identical designs, and the
        quadratic form is expanded through the precision matrix, which keeps
        the cost at a handful of elementwise products of (units, atoms)
        arrays.
        """
        two_n = 2 * self.prior.n_items
        kernel_chol = _chol(state.kernel_cov, "kernel covariance")
        prec = cho_solve((kernel_chol, True), np.eye(two_n))
        group_means = np.einsum("gkd,ld->gkl", self.unique_design, state.atoms)
        dev = state.log_times[:, :, None] - group_means[self.design_group]
        quad = np.zeros((dev.shape[0], dev.shape[2]))
        for r in range(two_n):
            quad += prec[r, r] * dev[:, r, :] * dev[:, r, :]
            for s in range(r + 1, two_n):
                quad += (2.0 * prec[r, s]) * dev[:, r, :] * dev[:, s, :]
        logdet = 2.0 * np.sum(np.log(np.diag(kernel_chol)))
        return -0.5 * (two_n * _LOG_2PI + logdet + quad)

    def update_sticks(self, state: ModelState, rng: np.random.Generator) -> None:
        """Conjugate Beta update given the allocation counts."""
        level = self.prior.truncation_level
        a = state.pd_params.discount
        b = state.pd_params.strength
        counts = np.bincount(state.allocations, minlength=level)
        beyond = np.concatenate((counts[::-1].cumsum()[::-1][1:], [0]))
        j = np.arange(1, level)
        v = np.ones(level)
        v[:-1] = rng.beta(
            1.0 - a + counts[:-1], b + j * a + beyond[:-1]
        )
        np.clip(v[:-1], _STICK_FLOOR, _STICK_CEIL, out=v[:-1])
        state.sticks = StickState.from_sticks(v)

    def update_atoms(self, state: ModelState, rng: np.random.Generator) -> None:
        """Conjugate normal regression update per cluster.

        Occupied clusters pool their units' log times; sufficient statistics
        are accumulated per (cluster, distinct design) pair so the per-unit
        work is a couple of scatter-adds.  Unoccupied clusters are refreshed
        from the base measure.
        """
        prior = self.prior
        level = prior.truncation_level
        d = prior.coefficient_dim
        base_chol = _chol(state.base_cov, "base covariance")
        base_prec = cho_solve((base_chol, True), np.eye(d))
        h0 = base_prec @ state.base_mean
        atoms = np.empty((level, d))
        occupied = np.zeros(level, dtype=bool)
        if self.n_units:
            kernel_chol = _chol(state.kernel_cov, "kernel covariance")
            n_groups = self.unique_design.shape[0]
            sigma_inv_x = np.stack(
                [cho_solve((kernel_chol, True), xg) for xg in self.unique_design]
            )  # (G, 2n, d)
            xt_prec_x = np.einsum("gka,gkb->gab", self.unique_design, sigma_inv_x)
            counts_lg = np.zeros((level, n_groups))
            np.add.at(counts_lg, (state.allocations, self.design_group), 1.0)
            zsum = np.zeros((level, n_groups, 2 * prior.n_items))
            np.add.at(zsum, (state.allocations, self.design_group), state.log_times)
            occ = np.nonzero(counts_lg.sum(axis=1) > 0)[0]
            occupied[occ] = True
            if occ.size:
                prec = base_prec[None] + np.einsum(
                    "lg,gab->lab", counts_lg[occ], xt_prec_x
                )
                rhs = h0[None] + np.einsum("gak,lgk->la", sigma_inv_x.transpose(0, 2, 1), zsum[occ])
                post_mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
                chol_prec = np.linalg.cholesky(prec)
                eps = rng.standard_normal((occ.size, d))
                noise = np.linalg.solve(np.transpose(chol_prec, (0, 2, 1)), eps[..., None])[..., 0]
                atoms[occ] = post_mean + noise
        fresh = np.nonzero(~occupied)[0]
        if fresh.size:
            eps = rng.standard_normal((fresh.size, d))
            atoms[fresh] = state.base_mean + eps @ base_chol.T
        state.atoms = atoms

    def update_kernel_covariance(self, state: ModelState, rng: np.random.Generator) -> None:
        """Inverse Wishart update from the pooled within-cluster residuals."""
        prior = self.prior
        if self.n_units:
            means = np.einsum("ikd,id->ik", self.design, state.atoms[state.allocations])
            resid = state.log_times - means
            scatter = resid.T @ resid
        else:
            scatter = np.zeros_like(prior.kernel_cov_scale)
        state.kernel_cov = _sample_inv_wishart(
            prior.kernel_cov_df + self.n_units, prior.kernel_cov_scale + scatter, rng
        )

    def update_base_measure(self, state: ModelState, rng: np.random.Generator) -> None:
        """Conjugate update of the base measure from all truncation atoms."""
        prior = self.prior
        level = prior.truncation_level
        d = prior.coefficient_dim
        base_chol = _chol(state.base_cov, "base covariance")
        base_prec = cho_solve((base_chol, True), np.eye(d))
        prec = self._base_mean_prec + level * base_prec
        rhs = self._base_mean_prec_loc + base_prec @ state.atoms.sum(axis=0)
        chol_prec = _chol(prec, "base mean precision")
        post_mean = cho_solve((chol_prec, True), rhs)
        eps = rng.standard_normal(d)
        state.base_mean = post_mean + solve_triangular(chol_prec.T, eps, lower=False)
        dev = state.atoms - state.base_mean
        state.base_cov = _sample_inv_wishart(
            prior.base_cov_df + level, prior.base_cov_scale + dev.T @ dev, rng
        )

    # -- stick-breaking parameter block ---------------------------------

    def _stick_loglik(self, log_v, log_1mv, discount, strength):
        """Log density of the nontrivial sticks under (discount, strength)."""
        j = np.arange(1, log_v.size + 1)
        shape2 = strength + j * discount
        if np.any(shape2 <= 0.0) or not 0.0 <= discount < 1.0:
            return -math.inf
        terms = (
            -discount * log_v
            + (shape2 - 1.0) * log_1mv
            - betaln(1.0 - discount, shape2)
        )
        return float(np.sum(terms))

    def _log_prior_strength(self, strength, discount):
        return log_truncated_normal_pdf(
            strength, self.prior.strength_loc, self.prior.strength_scale, -discount
        )

    def update_pd_params(self, state: ModelState, rng: np.random.Generator) -> dict:
        """Metropolis-within-Gibbs on (discount, strength) given the sticks.

        Move 1 proposes a jump between the spike (discount zero) and a fresh
        slab draw, with the slab density cancelling against the proposal.
        Move 2 is a logit-scale random walk on the discount, applied only in
        the slab.  Move 3 is a log-scale random walk on strength + discount,
        whose Jacobian keeps the strength support ``(-discount, inf)`` intact.
        Returns attempt/accept counts per move.
        """
        prior = self.prior
        v = state.sticks.sticks[:-1]
        log_v = np.log(v)
        log_1mv = np.log1p(-v)
        a = state.pd_params.discount
        b = state.pd_params.strength
        info = {name: {"attempts": 0, "accepts": 0} for name in _MOVE_NAMES}

        def slab_logpdf(x):
            return float(
                (prior.slab_shape1 - 1.0) * math.log(x)
                + (prior.slab_shape2 - 1.0) * math.log1p(-x)
                - betaln(prior.slab_shape1, prior.slab_shape2)
            )

        # move 1: spike <-> slab
        info["swap"]["attempts"] = 1
        if a == 0.0:
            a_new = float(rng.beta(prior.slab_shape1, prior.slab_shape2))
            if 0.0 < a_new < 1.0 and b > -a_new:
                log_ratio = (
                    self._stick_loglik(log_v, log_1mv, a_new, b)
                    - self._stick_loglik(log_v, log_1mv, a, b)
                    + self._log_slab
                    - self._log_spike
                    + self._log_prior_strength(b, a_new)
                    - self._log_prior_strength(b, a)
                )
                if _metropolis_accept(rng, log_ratio):
                    a = a_new
                    info["swap"]["accepts"] = 1
        else:
            if b > 0.0:
                log_ratio = (
                    self._stick_loglik(log_v, log_1mv, 0.0, b)
                    - self._stick_loglik(log_v, log_1mv, a, b)
                    + self._log_spike
                    - self._log_slab
                    + self._log_prior_strength(b, 0.0)
                    - self._log_prior_strength(b, a)
                )
                if _metropolis_accept(rng, log_ratio):
                    a = 0.0
                    info["swap"]["accepts"] = 1

        # move 2: random walk on logit(discount), slab only
        if a > 0.0:
            info["discount_walk"]["attempts"] = 1
            step = _WALK_STEP * rng.standard_normal()
            a_new = float(expit(math.log(a) - math.log1p(-a) + step))
            if 0.0 < a_new < 1.0 and b > -a_new:
                log_ratio = (
                    self._stick_loglik(log_v, log_1mv, a_new, b)
                    - self._stick_loglik(log_v, log_1mv, a, b)
                    + slab_logpdf(a_new)
                    - slab_logpdf(a)
                    + self._log_prior_strength(b, a_new)
                    - self._log_prior_strength(b, a)
                    + math.log(a_new * (1.0 - a_new))
                    - math.log(a * (1.0 - a))
                )
                if _metropolis_accept(rng, log_ratio):
                    a = a_new
                    info["discount_walk"]["accepts"] = 1

        # move 3: random walk on log(strength + discount)
        info["strength_walk"]["attempts"] = 1
        s_cur = math.log(b + a)
        s_new = s_cur + _WALK_STEP * rng.standard_normal()
        b_new = math.exp(s_new) - a
        dz_new = (b_new - self.prior.strength_loc) / self.prior.strength_scale
        dz_cur = (b - self.prior.strength_loc) / self.prior.strength_scale
        log_ratio = (
            self._stick_loglik(log_v, log_1mv, a, b_new)
            - self._stick_loglik(log_v, log_1mv, a, b)
            - 0.5 * (dz_new * dz_new - dz_cur * dz_cur)
            + (s_new - s_cur)
        )
        if _metropolis_accept(rng, log_ratio):
            b = b_new
            info["strength_walk"]["accepts"] = 1

        state.pd_params = PDParams(discount=a, strength=b)
        return info

    # ------------------------------------------------------------------
    # sweeps and chains
    # ------------------------------------------------------------------

    def sweep(self, state: ModelState, rng: np.random.Generator) -> dict:
        """One full scan over all blocks; returns the Metropolis counters."""
        self.update_latent_times(state, rng)
        self.update_allocations(state, rng)
        self.update_sticks(state, rng)
        self.update_atoms(state, rng)
        self.update_kernel_covariance(state, rng)
        self.update_base_measure(state, rng)
        return self.update_pd_params(state, rng)

    def _complete_data_loglik(self, state: ModelState) -> float:
        if self.n_units == 0:
            return 0.0
        kernel_chol = _chol(state.kernel_cov, "kernel covariance")
        means = np.einsum("ikd,id->ik", self.design, state.atoms[state.allocations])
        dev = state.log_times - means
        sol = solve_triangular(kernel_chol, dev.T, lower=True)
        two_n = dev.shape[1]
        logdet = 2.0 * np.sum(np.log(np.diag(kernel_chol)))
        return float(
            -0.5 * (self.n_units * (two_n * _LOG_2PI + logdet) + np.sum(sol * sol))
        )

    def run(
        self,
        n_sweeps: int,
        rng: np.random.Generator,
        state: ModelState | None = None,
        burn_in: int = 0,
        thin: int = 1,
        sweep_offset: int = 0,
        chain_id: int = 0,
        validate_every_sweep: bool = False,
    ) -> tuple[PosteriorDraws, ModelState]:
        """Advance one chain ``n_sweeps`` sweeps and collect retained draws.

        ``sweep_offset`` supports resumption: retention is decided on the
        absolute sweep index ``sweep_offset + local_sweep`` so a split run
        keeps exactly the sweeps an unbroken run would have kept.
        """
        prior = self.prior
        if state is None:
            state = self.initial_state(rng)
        level = prior.truncation_level
        d = prior.coefficient_dim
        two_n = 2 * prior.n_items
        kept_abs = [
            s
            for s in range(sweep_offset + 1, sweep_offset + n_sweeps + 1)
            if s > burn_in and (s - burn_in) % thin == 0
        ]
        n_keep = len(kept_abs)
        out = {
            "sticks": np.empty((n_keep, level)),
            "weights": np.empty((n_keep, level)),
            "atoms": np.empty((n_keep, level, d)),
            "kernel_cov": np.empty((n_keep, two_n, two_n)),
            "discount": np.empty(n_keep),
            "strength": np.empty(n_keep),
            "base_mean": np.empty((n_keep, d)),
            "base_cov": np.empty((n_keep, d, d)),
            "kept_sweeps": np.asarray(kept_abs, dtype=np.int64),
            "chain_ids": np.full(n_keep, chain_id, dtype=np.int64),
        }
        loglik = np.empty(n_sweeps)
        occupied = np.empty(n_sweeps, dtype=np.int64)
        counters = {name: {"attempts": 0, "accepts": 0} for name in _MOVE_NAMES}
        pos = 0
        for local in range(1, n_sweeps + 1):
            try:
                info = self.sweep(state, rng)
            except Exception as exc:
                raise RuntimeError(
                    f"chain {chain_id}, sweep {sweep_offset + local}: {exc}"
                ) from exc
            for name in _MOVE_NAMES:
                counters[name]["attempts"] += info[name]["attempts"]
                counters[name]["accepts"] += info[name]["accepts"]
            loglik[local - 1] = self._complete_data_loglik(state)
            occupied[local - 1] = np.unique(state.allocations).size if self.n_units else 0
            if validate_every_sweep:
                state.validate(self.dataset)
            absolute = sweep_offset + local
            if absolute > burn_in and (absolute - burn_in) % thin == 0:
                out["sticks"][pos] = state.sticks.sticks
                out["weights"][pos] = state.sticks.weights
                out["atoms"][pos] = state.atoms
                out["kernel_cov"][pos] = state.kernel_cov
                out["discount"][pos] = state.pd_params.discount
                out["strength"][pos] = state.pd_params.strength
                out["base_mean"][pos] = state.base_mean
                out["base_cov"][pos] = state.base_cov
                pos += 1
        draws = PosteriorDraws(
            log_likelihood=loglik[None, :],
            occupied_clusters=occupied[None, :],
            acceptance=counters,
            meta={
                "n_items": prior.n_items,
                "n_onset_covariates": prior.n_onset_covariates,
                "n_event_covariates": prior.n_event_covariates,
                "truncation_level": level,
                "spike_weight": prior.spike_weight,
                "n_units": self.n_units,
                "n_chains": 1,
            },
            **out,
        )
        return draws, state


def run_chain(
    dataset: Dataset | None,
    prior: PriorSpec,
    config: ChainConfig,
    collect_final: bool = False,
):
    """Run ``config.n_chains`` independent chains and merge their draws.

    Each chain draws from its own stream spawned from the master seed, so the
    result does not depend on scheduling and is reproducible bit for bit.
    With ``collect_final=True`` also returns one (state, generator) pair per
    chain, which is what checkpointing persists.
    """
    sampler = BlockedGibbsSampler(dataset, prior)
    seed_seq = np.random.SeedSequence(config.seed)
    children = seed_seq.spawn(config.n_chains)
    parts = []
    finals = []
    for c in range(config.n_chains):
        rng = np.random.Generator(np.random.PCG64(children[c]))
        draws, state = sampler.run(
            config.iterations,
            rng,
            burn_in=config.burn_in,
            thin=config.thin,
            chain_id=c,
            validate_every_sweep=config.validate_every_sweep,
        )
        parts.append(draws)
        finals.append((state, rng))
    merged = PosteriorDraws.merge(parts)
    merged.meta.update(
        {
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "seed": config.seed,
            "n_chains": config.n_chains,
        }
    )
    if collect_final:
        return merged, finals
    return merged


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path, chain_states, sweeps_done: int) -> None:
    """Persist final chain states and generator states for exact resumption.

    ``chain_states`` is a list of (ModelState, Generator) pairs as returned by
    :func:`run_chain` with ``collect_final=True``.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    summary = {"sweeps_done": int(sweeps_done), "n_chains": len(chain_states)}
    with open(root / "checkpoint.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c, (state, rng) in enumerate(chain_states):
        sub = root / f"chain{c:02d}"
        sub.mkdir(exist_ok=True)
        np.save(sub / "log_times.npy", state.log_times)
        np.save(sub / "allocations.npy", state.allocations)
        np.save(sub / "sticks.npy", state.sticks.sticks)
        np.save(sub / "atoms.npy", state.atoms)
        np.save(sub / "kernel_cov.npy", state.kernel_cov)
        np.save(sub / "base_mean.npy", state.base_mean)
        np.save(sub / "base_cov.npy", state.base_cov)
        scalars = {
            "discount": state.pd_params.discount,
            "strength": state.pd_params.strength,
            "rng_state": rng.bit_generator.state,
        }
        with open(sub / "scalars.json", "w") as fh:
            json.dump(scalars, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (chain_states, sweeps_done)."""
    root = Path(path)
    with open(root / "checkpoint.json") as fh:
        summary = json.load(fh)
    chain_states = []
    for c in range(summary["n_chains"]):
        sub = root / f"chain{c:02d}"
        with open(sub / "scalars.json") as fh:
            scalars = json.load(fh)
        state = ModelState(
            log_times=np.load(sub / "log_times.npy"),
            allocations=np.load(sub / "allocations.npy"),
            sticks=StickState.from_sticks(np.load(sub / "sticks.npy")),
            atoms=np.load(sub / "atoms.npy"),
            kernel_cov=np.load(sub / "kernel_cov.npy"),
            pd_params=PDParams(scalars["discount"], scalars["strength"]),
            base_mean=np.load(sub / "base_mean.npy"),
            base_cov=np.load(sub / "base_cov.npy"),
        )
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = scalars["rng_state"]
        chain_states.append((state, rng))
    return chain_states, summary["sweeps_done"]


def resume_chain(
    dataset: Dataset | None,
    prior: PriorSpec,
    config: ChainConfig,
    checkpoint_path,
    collect_final: bool = False,
):
    """Continue checkpointed chains up to ``config.iterations`` total sweeps.

    Produces exactly the draws the unbroken run would have produced from the
    checkpointed sweep onwards.
    """
    chain_states, done = load_checkpoint(checkpoint_path)
    if done >= config.iterations:
        raise ValueError(
            f"checkpoint already covers {done} sweeps, nothing left below "
            f"iterations={config.iterations}"
        )
    if len(chain_states) != config.n_chains:
        raise ValueError("checkpoint chain count does not match the configuration")
    sampler = BlockedGibbsSampler(dataset, prior)
    parts = []
    finals = []
    for c, (state, rng) in enumerate(chain_states):
        draws, state = sampler.run(
            config.iterations - done,
            rng,
            state=state,
            burn_in=config.burn_in,
            thin=config.thin,
            sweep_offset=done,
            chain_id=c,
            validate_every_sweep=config.validate_every_sweep,
        )
        parts.append(draws)
        finals.append((state, rng))
    merged = PosteriorDraws.merge(parts)
    merged.meta.update(
        {
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "seed": config.seed,
            "n_chains": config.n_chains,
            "resumed_from": done,
        }
    )
    if collect_final:
        return merged, finals
    return merged
