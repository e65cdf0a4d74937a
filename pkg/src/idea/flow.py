"""Analysis of vertically resolved shallow-flow solutions.

A flow dataset is a matrix with one row per (x, t) sample: the first
column is the water height h, the remaining n_zeta columns are the
velocity profile on the uniform zeta grid over [0,1]. The tools here

* project profiles onto the shifted Legendre basis ("moments"),
* measure how well a K-truncated moment expansion reconstructs the
  profiles (relative Frobenius truncation loss),
* correlate trained latent coordinates against h and the moments to
  interpret what the autoencoder discovered.

Moment projection uses trapezoidal quadrature on the grid,
alpha_i ~ (2i+1) * integral(profile * P_i), composed with the inverse
of the discrete Gram matrix under the same rule. The correction keeps
the operation an exact projection at finite grid resolution: in-span
profiles round-trip to machine precision and projecting twice is
idempotent, which bare quadrature coefficients would miss by ~1e-3 at
n_zeta = 100.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from idea.datasets import (LegendreSpec, gen_legendre_profiles, legendre_table,
                           read_matrix_csv, write_matrix_csv, zeta_grid)
from idea.engine import ContractError
from idea.rng import stream

PEARSON_EPS = 1e-12


@dataclass
class FlowDataset:
    """h column plus velocity profiles, with optional grid metadata."""

    h: np.ndarray
    profiles: np.ndarray
    n_zeta: int
    n_x: int | None = None
    n_t: int | None = None
    t0: float | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        self.profiles = np.asarray(self.profiles, dtype=np.float64)
        if self.profiles.ndim != 2 or self.profiles.shape[1] != self.n_zeta:
            raise ContractError(
                f"profiles must be (n, {self.n_zeta}), got {self.profiles.shape}")
        if self.h.shape[0] != self.profiles.shape[0]:
            raise ContractError(
                f"h has {self.h.shape[0]} rows, profiles {self.profiles.shape[0]}")
        if self.n_x is not None and self.n_t is not None \
                and self.n_x * self.n_t != self.h.shape[0]:
            raise ContractError(
                f"n_x*n_t = {self.n_x * self.n_t} does not match {self.h.shape[0]} rows")

    @property
    def matrix(self) -> np.ndarray:
        """Training layout: h in column 0, profile columns after."""
        return np.concatenate([self.h[:, None], self.profiles], axis=1)

    @property
    def n_samples(self) -> int:
        return self.h.shape[0]


def load_flow_matrix(path, n_zeta, n_x=None, n_t=None, t0=None) -> FlowDataset:
    """Read a flow CSV (n_zeta+1 columns, h first) and validate it."""
    raw = read_matrix_csv(path)
    if raw.shape[1] != n_zeta + 1:
        raise ContractError(
            f"{path}: expected {n_zeta + 1} columns (h + {n_zeta} grid points), "
            f"got {raw.shape[1]}")
    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        r, c = bad[0]
        raise ContractError(
            f"{path}: non-finite value at row {int(r)}, column {int(c)} "
            f"({bad.shape[0]} total)")
    return FlowDataset(h=raw[:, 0], profiles=raw[:, 1:], n_zeta=n_zeta,
                       n_x=n_x, n_t=n_t, t0=t0)


def save_flow_matrix(path, dataset: FlowDataset):
    write_matrix_csv(path, dataset.matrix)


def gen_surrogate_flow(S, n, n_zeta=100, seed=0) -> FlowDataset:
    """Synthetic stand-in for a flow solution: Legendre profiles plus an
    independent h ~ U(0.5, 1.5) column. Its intrinsic dimension is
    |S| + 1 (the coefficients plus h)."""
    profiles, _ = gen_legendre_profiles(LegendreSpec(S=S, n=n, n_zeta=n_zeta, seed=seed))
    h = stream(seed, "surrogate_h").uniform(0.5, 1.5, n)
    return FlowDataset(h=h, profiles=profiles, n_zeta=n_zeta)


# ----------------------------------------------------------------- moments

@dataclass
class MomentTable:
    """Per-sample coefficients alpha_0..alpha_K of the Legendre expansion."""

    coefficients: np.ndarray
    n_zeta: int

    @property
    def k_max(self) -> int:
        return self.coefficients.shape[1] - 1


def _trapezoid_weights(n_zeta):
    w = np.full(n_zeta, 1.0 / (n_zeta - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def project_moments(profiles, K) -> MomentTable:
    """Legendre moments of each profile row, degrees 0..K.

    Exact on profiles inside span{P_0..P_K} and idempotent: projecting a
    reconstruction returns identical moments.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    if profiles.ndim != 2 or profiles.shape[1] < 2:
        raise ContractError(f"profiles must be (n, n_zeta >= 2), got {profiles.shape}")
    if K < 0:
        raise ContractError(f"K must be >= 0, got {K}")
    n_zeta = profiles.shape[1]
    table = legendre_table(K, zeta_grid(n_zeta))
    w = _trapezoid_weights(n_zeta)
    gram = (table * w) @ table.T
    quad = (profiles * w) @ table.T
    coeffs = np.linalg.solve(gram, quad.T).T
    return MomentTable(coefficients=coeffs, n_zeta=n_zeta)


def reconstruct_profiles(moments: MomentTable) -> np.ndarray:
    table = legendre_table(moments.k_max, zeta_grid(moments.n_zeta))
    return moments.coefficients @ table


def truncation_loss(profiles, K) -> float:
    """Relative Frobenius error of the degree-K moment reconstruction.

    Non-increasing in K (up to quadrature rounding at the floor).
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    norm = np.linalg.norm(profiles)
    if norm == 0.0:
        raise ContractError("truncation_loss is undefined for an all-zero matrix")
    recon = reconstruct_profiles(project_moments(profiles, K))
    return float(np.linalg.norm(profiles - recon) / norm)


# ------------------------------------------------------------ correlations

def pearson_matrix(a, b, return_flags=False):
    """Entrywise Pearson correlation between columns of `a` and `b`.

    Constant columns (zero variance) yield 0 in their entries and are
    reported via a warning (or returned as boolean flag vectors with
    `return_flags`).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractError(f"pearson_matrix needs 2-d inputs, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[0] < 2:
        raise ContractError(
            f"pearson_matrix needs matching n >= 2 rows, got {a.shape} and {b.shape}")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt((ac * ac).mean(axis=0))
    sb = np.sqrt((bc * bc).mean(axis=0))
    flat_a = sa <= PEARSON_EPS
    flat_b = sb <= PEARSON_EPS
    if (flat_a.any() or flat_b.any()) and not return_flags:
        warnings.warn("pearson_matrix: constant columns reported as correlation 0",
                      stacklevel=2)
    cov = ac.T @ bc / a.shape[0]
    denom = np.outer(np.where(flat_a, 1.0, sa), np.where(flat_b, 1.0, sb))
    m = np.clip(cov / denom, -1.0, 1.0)
    m[flat_a, :] = 0.0
    m[:, flat_b] = 0.0
    if return_flags:
        return m, flat_a, flat_b
    return m


def latent_moment_report(model, flow: FlowDataset, K):
    """Square Pearson matrix over [L_0..L_{d~-1}, h, alpha_0..alpha_K].

    The latent block holds the model's active gated coordinates on the
    full flow matrix (h column included, matching how flow models are
    trained). Returns (labels, matrix).
    """
    state = model.gate_state()
    if state.count < 1:
        raise ContractError("latent_moment_report requires at least one active coordinate")
    gated = model.gate(model.encode(flow.matrix))
    latent = gated[:, state.active]
    moments = project_moments(flow.profiles, K).coefficients
    blocks = np.concatenate([latent, flow.h[:, None], moments], axis=1)
    labels = ([f"L{i}" for i in range(state.count)] + ["h"]
              + [f"a{i}" for i in range(K + 1)])
    return labels, pearson_matrix(blocks, blocks)


def write_correlation_csv(path, labels, matrix):
    """Labeled square correlation matrix as CSV (header row and column)."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(labels), len(labels)):
        raise ContractError(
            f"matrix shape {matrix.shape} does not match {len(labels)} labels")
    lines = ["," + ",".join(labels)]
    for name, row in zip(labels, matrix):
        lines.append(name + "," + ",".join(format(v, ".17g") for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")


def read_correlation_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\r\n").split(",") for line in fh if line.strip()]
    labels = rows[0][1:]
    matrix = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return labels, matrix
