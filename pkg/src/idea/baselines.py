"""Classical intrinsic-dimension estimators used to cross-check the model.

Four standbys, each with a long history:

* `twonn` — two-nearest-neighbour estimator (Facco et al. 2017,
  doi.org/10.1038/s41598-017-11873-y): the ratio mu = r2/r1 is Pareto
  with shape d; fits the empirical CDF through the origin.
* `mle_levina_bickel` — k-NN maximum-likelihood estimator (Levina &
  Bickel 2004), with the MacKay & Ghahramani inverse averaging as
  default.
* `correlation_dimension` — Grassberger & Procaccia log-log slope of
  the pair-count integral.
* `lpca` — PCA with the Fukunaga-Olsen eigenvalue-ratio cutoff, either
  global (default) or averaged over k-NN neighbourhoods.

Neighbour queries go brute force below 5001 points (exact, cheap at
that size) and through a k-d tree above.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from idea.engine import ContractError


class EstimatorError(ValueError):
    """An estimator's preconditions failed on the given data."""


def _check_matrix(x, min_rows):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"estimator input must be 2-d, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise EstimatorError(f"need at least {min_rows} rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise EstimatorError("estimator input contains non-finite values")
    return x


BRUTE_FORCE_MAX = 5000


@dataclass
class NeighborTable:
    """Sorted distances (ascending) and indices of each row's k neighbours."""

    distances: np.ndarray
    indices: np.ndarray


def neighbor_table(x, k) -> NeighborTable:
    """Exact k nearest neighbours of every row, self excluded."""
    x = _check_matrix(x, 2)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise EstimatorError(f"k must lie in [1, {n - 1}], got {k}")
    if n <= BRUTE_FORCE_MAX:
        sq = np.maximum(
            (x * x).sum(1)[:, None] + (x * x).sum(1)[None, :] - 2.0 * (x @ x.T), 0.0)
        np.fill_diagonal(sq, np.inf)
        idx = np.argpartition(sq, k - 1, axis=1)[:, :k]
        part = np.take_along_axis(sq, idx, axis=1)
        order = np.argsort(part, axis=1, kind="stable")
        return NeighborTable(distances=np.sqrt(np.take_along_axis(part, order, 1)),
                             indices=np.take_along_axis(idx, order, 1))
    dist, idx = cKDTree(x).query(x, k=k + 1, workers=1)
    return NeighborTable(distances=dist[:, 1:], indices=idx[:, 1:])


# ------------------------------------------------------------------ twonn

def twonn(x, discard_fraction=0.1, method="cdf"):
    """Two-nearest-neighbour dimension estimate.

    Parameters
    ----------
    x : (n, p) data matrix.
    discard_fraction : fraction of the largest ratios mu = r2/r1 to
        drop before fitting (they are the noisiest).
    method : "cdf" fits -log(1 - F(mu)) against log mu through the
        origin over the kept points; "ml" is the trimmed
        maximum-likelihood mean of log mu (biased low by the trim,
        kept for comparison).

    Duplicate rows give r1 = 0 and are dropped with a warning.
    """
    x = _check_matrix(x, 4)
    if not 0.0 <= discard_fraction < 1.0:
        raise EstimatorError(f"discard_fraction must lie in [0, 1), got {discard_fraction}")
    if method not in ("cdf", "ml"):
        raise EstimatorError(f"unknown twonn method {method!r}")

    table = neighbor_table(x, 2)
    r1, r2 = table.distances[:, 0], table.distances[:, 1]
    good = r1 > 0.0
    if not np.all(good):
        warnings.warn(f"twonn: dropping {int((~good).sum())} duplicate points "
                      "with zero first-neighbour distance", stacklevel=2)
    mu = np.sort(r2[good] / r1[good])
    n = mu.size
    if n < 4:
        raise EstimatorError(f"too few distinct points for twonn: {n}")
    keep = n - int(np.floor(discard_fraction * n))
    kept = mu[:keep]
    log_mu = np.log(kept)
    if not np.any(log_mu > 0.0):
        raise EstimatorError("twonn: neighbour ratios are degenerate (all mu ~ 1)")

    if method == "ml":
        return float(keep / log_mu.sum())
    f = np.arange(1, keep + 1) / n
    y = -np.log(1.0 - f)
    slope, *_ = np.linalg.lstsq(log_mu[:, None], y, rcond=None)
    return float(slope[0])


# -------------------------------------------------------------------- mle

def mle_levina_bickel(x, k=20, average="inverse"):
    """Levina-Bickel k-NN maximum-likelihood estimate.

    Per point i with sorted neighbour distances T_1 <= ... <= T_k the
    local estimate is (k-1) / sum_j log(T_k / T_j). With
    average="inverse" (MacKay & Ghahramani) the reciprocals are averaged
    and inverted, which removes most of the small-k bias;
    average="mean" is the original plain mean of local estimates.
    """
    x = _check_matrix(x, 3)
    if k < 2:
        raise EstimatorError(f"k must be >= 2, got {k}")
    if average not in ("inverse", "mean"):
        raise EstimatorError(f"unknown averaging {average!r}")
    table = neighbor_table(x, k)
    dist = table.distances
    if np.any(dist[:, 0] == 0.0):
        bad = int((dist[:, 0] == 0.0).sum())
        warnings.warn(f"mle: dropping {bad} duplicate points", stacklevel=2)
        dist = dist[dist[:, 0] > 0.0]
        if dist.shape[0] < 3:
            raise EstimatorError("too few distinct points for mle")
    logsum = np.log(dist[:, -1][:, None] / dist[:, :-1]).sum(axis=1)
    if np.any(logsum == 0.0):
        raise EstimatorError("mle: repeated neighbour distances make the estimate diverge")
    if average == "inverse":
        return float((k - 1) / logsum.mean())
    return float(((k - 1) / logsum).mean())


# ------------------------------------------------------- correlation dim

def correlation_dimension(x, r_grid=None, c_window=(1e-3, 0.5)):
    """Grassberger-Procaccia correlation dimension.

    Fits the slope of log C(r) against log r over the radii whose pair
    fraction C(r) falls inside `c_window`. The default grid is 32
    log-spaced radii spanning the 0.1th to 100th percentile of a
    sampled pairwise-distance distribution.
    """
    x = _check_matrix(x, 10)
    n = x.shape[0]

    if r_grid is None:
        probe = x if n <= 2000 else x[np.random.default_rng(0).choice(n, 2000, replace=False)]
        diffs = probe[:, None, :] - probe[None, :, :]
        sample = np.sqrt((diffs * diffs).sum(-1))[np.triu_indices(probe.shape[0], 1)]
        lo = np.percentile(sample[sample > 0], 0.1)
        hi = sample.max()
        r_grid = np.logspace(np.log10(lo), np.log10(hi), 32)
    r_grid = np.asarray(r_grid, dtype=np.float64)
    if r_grid.ndim != 1 or r_grid.size < 2 or np.any(r_grid <= 0):
        raise EstimatorError("r_grid must be 1-d with at least 2 positive radii")
    r_grid = np.sort(r_grid)

    # cumulative histogram of all pairwise distances, chunked; the i == j
    # zeros land below r_grid[0] and are removed by subtracting the chunk size
    counts = np.zeros(r_grid.size)
    edges = np.concatenate([[-1.0], r_grid])
    chunk = max(1, int(4e6 // n))
    sq_norms = (x * x).sum(1)
    for lo_row in range(0, n, chunk):
        block = slice(lo_row, min(lo_row + chunk, n))
        d2 = np.maximum(sq_norms[block, None] + sq_norms[None, :]
                        - 2.0 * (x[block] @ x.T), 0.0)
        hist, _ = np.histogram(np.sqrt(d2), bins=edges)
        counts += np.cumsum(hist)
        counts -= d2.shape[0]
    c = counts / (n * (n - 1))

    mask = (c >= c_window[0]) & (c <= c_window[1])
    if mask.sum() < 2:
        table = "\n".join(f"  r={r:.6g}  C={ci:.6g}" for r, ci in zip(r_grid, c))
        raise EstimatorError(
            f"correlation_dimension: fewer than 2 radii with C in {c_window}; "
            f"supply a denser r_grid. Computed table:\n{table}")
    lr = np.log(r_grid[mask])
    lc = np.log(c[mask])
    design = np.stack([lr, np.ones_like(lr)], axis=1)
    coef, *_ = np.linalg.lstsq(design, lc, rcond=None)
    return float(coef[0])


# ------------------------------------------------------------------- lpca

def lpca(x, k=None, ratio_threshold=0.05):
    """PCA dimension with the Fukunaga-Olsen eigenvalue-ratio cutoff.

    Counts eigenvalues of the covariance whose ratio to the largest
    exceeds `ratio_threshold`. With k=None (default) a single global
    PCA is used and an int returned; with k given, the count is
    averaged over each point's k-neighbourhood and the mean returned.
    """
    x = _check_matrix(x, 2)
    if not 0.0 < ratio_threshold < 1.0:
        raise EstimatorError(f"ratio_threshold must lie in (0, 1), got {ratio_threshold}")

    def count(block):
        centered = block - block.mean(axis=0)
        eig = np.linalg.svd(centered, compute_uv=False) ** 2
        if eig.size == 0 or eig[0] <= 0.0:
            return 0
        return int((eig / eig[0] > ratio_threshold).sum())

    if k is None:
        return count(x)
    if k < 2:
        raise EstimatorError(f"k must be >= 2, got {k}")
    table = neighbor_table(x, k)
    return float(np.mean([count(x[idx]) for idx in table.indices]))


# ------------------------------------------------------------ comparison

ESTIMATORS = {
    "twonn": twonn,
    "mle": mle_levina_bickel,
    "cd": correlation_dimension,
    "lpca": lpca,
}


def compare_estimators(x, estimators=("twonn", "mle", "lpca"), true_d=None) -> dict:
    """Run the named estimators; returns {name: estimate} (+ 'true_d' if given).

    Unknown names raise; an empty selection is an error.
    """
    if not estimators:
        raise EstimatorError("no estimators selected")
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        raise EstimatorError(f"unknown estimators {unknown}; known: {sorted(ESTIMATORS)}")
    out = {name: ESTIMATORS[name](x) for name in estimators}
    if true_d is not None:
        out["true_d"] = true_d
    return out
