"""Convergence diagnostics for scalar MCMC traces."""

from __future__ import annotations

import numpy as np
from scipy.fft import next_fast_len
from scipy.stats import kendalltau

__all__ = [
    "effective_sample_size",
    "potential_scale_reduction",
    "mann_kendall_pvalue",
]


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Sample autocorrelation at all lags via FFT, biased normalisation."""
    n = x.size
    nfft = next_fast_len(2 * n)
    f = np.fft.rfft(x - x.mean(), nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """Effective sample size by the initial monotone sequence estimator.

    Sums autocorrelations in adjacent-lag pairs, truncates at the first
    nonpositive pair and enforces that the pair sums decrease, which gives a
    consistent overestimate of the integrated autocorrelation time for
    reversible chains.  The result is clamped to [1, n].
    """
    x = np.asarray(trace, dtype=float).ravel()
    n = x.size
    if n < 4:
        return float(n)
    if np.ptp(x) == 0.0:
        return float(n)
    rho = _autocorrelation(x)
    n_pairs = n // 2
    pair_sums = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    positive = np.nonzero(pair_sums <= 0.0)[0]
    cut = positive[0] if positive.size else n_pairs
    if cut == 0:
        return 1.0
    kept = np.minimum.accumulate(pair_sums[:cut])
    tau = 2.0 * float(np.sum(kept)) - 1.0
    ess = n / max(tau, 1e-12)
    return float(min(max(ess, 1.0), n))


def potential_scale_reduction(chains, split: bool = True) -> float:
    """Between/within variance ratio for parallel chains (floored at 1.0).

    ``chains`` is a chains-by-draws array.  With ``split=True`` each chain is
    halved first, which also detects trends inside a single chain.  Raises if
    fewer than two (split) chains of length two remain.
    """
    arr = np.atleast_2d(np.asarray(chains, dtype=float))
    if split:
        half = arr.shape[1] // 2
        if half < 2:
            raise ValueError("chains too short to split")
        arr = np.vstack([arr[:, :half], arr[:, half : 2 * half]])
    n_chains, n_draws = arr.shape
    if n_chains < 2:
        raise ValueError("need at least two chains (or one chain with split=True)")
    if n_draws < 2:
        raise ValueError("need at least two draws per chain")
    within = float(np.mean(np.var(arr, axis=1, ddof=1)))
    between_over_n = float(np.var(np.mean(arr, axis=1), ddof=1))
    if within == 0.0:
        return 1.0
    var_plus = (n_draws - 1) / n_draws * within + between_over_n
    return float(max(1.0, np.sqrt(var_plus / within)))


def mann_kendall_pvalue(trace) -> float:
    """Two-sided p-value of the Mann-Kendall trend test.

    Equivalent to Kendall's tau between the trace and its time index, which
    is how it is computed here (ties handled by the tau-b variance).
    Constant traces return 1.0.
    """
    x = np.asarray(trace, dtype=float).ravel()
    if x.size < 3:
        raise ValueError("need at least three points for a trend test")
    if np.ptp(x) == 0.0:
        return 1.0
    result = kendalltau(np.arange(x.size), x)
    p = float(result.pvalue)
    return 1.0 if np.isnan(p) else p
