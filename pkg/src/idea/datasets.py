"""Seeded synthetic datasets: Legendre velocity profiles and benchmark manifolds.

Two families:

* `gen_legendre_profiles` builds rows f(zeta) = P1(zeta) + sum_{k in S}
  alpha_k P_k(zeta) on a uniform grid over [0,1], alpha_k ~ U(0,1).
  The intrinsic dimension of such a family is |S|.
* `gen_manifold` draws from a fixed collection of manifolds of known
  intrinsic dimension d embedded in dimension p, used to benchmark
  estimators. M3/M4/M6 are trigonometric embeddings in the style of
  Hein & Audibert (dx.doi.org/10.1145/1102351.1102388); MP3/MP6 are
  paraboloids over multivariate Burr samples and Mbeta a Beta(0.5,10)
  product lifted by a fixed smooth map, after the benchmark collection
  of Campadelli et al. (doi.org/10.1155/2015/759567).

Everything is deterministic in (spec.name, spec.n, spec.seed). Matrices
go to disk as RFC-4180 CSV (no header, 17 significant digits, which
round-trips float64 exactly).
"""

import json
from dataclasses import dataclass

import numpy as np

from idea.engine import ContractError
from idea.rng import stream

# --------------------------------------------------------------- legendre

def scaled_legendre(k: int, zeta):
    """Shifted Legendre polynomial P_k(2*zeta - 1).

    Orthogonal on [0,1] with integral of P_j*P_k equal to
    delta_jk / (2k+1); P_k(1) = 1 for every k.
    """
    if k < 0:
        raise ContractError(f"polynomial degree must be >= 0, got {k}")
    zeta = np.asarray(zeta, dtype=np.float64)
    x = 2.0 * zeta - 1.0
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev
    p_cur = x.copy()
    for m in range(2, k + 1):
        p_prev, p_cur = p_cur, ((2 * m - 1) * x * p_cur - (m - 1) * p_prev) / m
    return p_cur


def legendre_table(k_max: int, zeta) -> np.ndarray:
    """Rows 0..k_max of the shifted Legendre basis evaluated on `zeta`."""
    zeta = np.asarray(zeta, dtype=np.float64)
    x = 2.0 * zeta - 1.0
    table = np.empty((k_max + 1, zeta.size))
    table[0] = 1.0
    if k_max >= 1:
        table[1] = x
    for m in range(2, k_max + 1):
        table[m] = ((2 * m - 1) * x * table[m - 1] - (m - 1) * table[m - 2]) / m
    return table


def zeta_grid(n_zeta: int) -> np.ndarray:
    """Uniform grid on [0,1] including both endpoints."""
    if n_zeta < 2:
        raise ContractError(f"n_zeta must be >= 2, got {n_zeta}")
    return np.linspace(0.0, 1.0, n_zeta)


@dataclass
class LegendreSpec:
    S: tuple
    n: int
    n_zeta: int = 100
    seed: int = 0

    def __post_init__(self):
        degrees = tuple(sorted(int(k) for k in self.S))
        if len(degrees) == 0:
            raise ContractError("S must be a nonempty set of degrees")
        if len(set(degrees)) != len(degrees):
            raise ContractError(f"S contains duplicate degrees: {self.S}")
        if degrees[0] < 0:
            raise ContractError(f"degrees must be >= 0, got {degrees}")
        if self.n < 1:
            raise ContractError(f"n must be >= 1, got {self.n}")
        if self.n_zeta < 2:
            raise ContractError(f"n_zeta must be >= 2, got {self.n_zeta}")
        self.S = degrees


def gen_legendre_profiles(spec: LegendreSpec):
    """Sample profile rows; returns (matrix n x n_zeta, coefficients n x |S|).

    Column j of the coefficient matrix holds alpha for the j-th degree
    of sorted(S); it is returned so downstream correlation analysis can
    compare latent coordinates against the generating coefficients.
    """
    grid = zeta_grid(spec.n_zeta)
    table = legendre_table(max(spec.S + (1,)), grid)
    coeffs = stream(spec.seed, "legendre").uniform(0.0, 1.0, (spec.n, len(spec.S)))
    profiles = np.tile(table[1], (spec.n, 1))
    for j, k in enumerate(spec.S):
        profiles += np.outer(coeffs[:, j], table[k])
    return profiles, coeffs


# --------------------------------------------------------------- manifolds

def _gen_m1_sphere(n, rng):
    g = rng.normal(size=(n, 11))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _gen_m2_affine(n, rng):
    # orthonormal columns keep the map full-rank and distance-preserving
    basis, _ = np.linalg.qr(rng.normal(size=(5, 3)))
    offset = rng.uniform(0.0, 1.0, 5)
    u = rng.uniform(0.0, 1.0, (n, 3))
    return u @ basis.T + offset


def _gen_m3_nonlinear(n, rng):
    u = rng.uniform(0.0, 1.0, (n, 4))
    cols = []
    for i in range(3):
        angle = 2.0 * np.pi * u[:, i]
        cols += [u[:, i + 1] * np.cos(angle), u[:, i + 1] * np.sin(angle)]
    return np.stack(cols, axis=1)


def _gen_m4_nonlinear(n, rng):
    u = rng.uniform(0.0, 1.0, (n, 4))
    cols = []
    for i in range(4):
        angle = 2.0 * np.pi * u[:, i]
        amp = u[:, (i + 1) % 4]
        cols += [amp * np.cos(angle), amp * np.sin(angle)]
    return np.stack(cols, axis=1)


def _gen_m5a_helix1d(n, rng):
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([(2.0 + np.cos(8.0 * t)) * np.cos(t),
                     (2.0 + np.cos(8.0 * t)) * np.sin(t),
                     np.sin(8.0 * t)], axis=1)


def _gen_m5b_helix2d(n, rng):
    # one-turn helicoid written as a graph (x, y, h(x, y)); the annulus
    # keeps the slope of h bounded
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r = rng.uniform(0.3, 1.0, n)
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    return np.stack([x, y, np.arctan2(y, x) / np.pi], axis=1)


def _gen_m6_nonlinear(n, rng):
    u = rng.uniform(0.0, 1.0, (n, 6))
    cols = []
    for i in range(6):
        amp = u[:, (i + 1) % 6]
        for harmonic in (1, 2, 3):
            angle = 2.0 * np.pi * harmonic * u[:, i]
            cols += [amp * np.cos(angle), amp * np.sin(angle)]
    return np.stack(cols, axis=1)


def _gen_m7_swissroll(n, rng):
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n)
    y = rng.uniform(0.0, 21.0, n)
    return np.stack([t * np.cos(t), y, t * np.sin(t)], axis=1)


def _gen_mbeta(n, rng):
    b = rng.beta(0.5, 10.0, (n, 10))
    return np.concatenate([b, b * b, np.sin(2.0 * np.pi * b),
                           np.cos(2.0 * np.pi * b)], axis=1)


def _gen_paraboloid(n, rng, d):
    # multivariate Burr XII (alpha=1, c=2) via a shared Gamma frailty
    gamma = rng.gamma(1.0, 1.0, n)
    expo = rng.exponential(1.0, (n, d))
    z = np.sqrt(expo / gamma[:, None])
    v = np.concatenate([z, (z * z).sum(axis=1, keepdims=True)], axis=1)
    return np.concatenate([v, np.sin(v), np.tanh(v)], axis=1)


def _gen_mp3(n, rng):
    return _gen_paraboloid(n, rng, 3)


def _gen_mp6(n, rng):
    return _gen_paraboloid(n, rng, 6)


# name -> (intrinsic dimension d, ambient dimension p, generator)
MANIFOLDS = {
    "M1_sphere": (10, 11, _gen_m1_sphere),
    "M2_affine": (3, 5, _gen_m2_affine),
    "M3_nonlinear_4to6": (4, 6, _gen_m3_nonlinear),
    "M4_nonlinear": (4, 8, _gen_m4_nonlinear),
    "M5a_helix1d": (1, 3, _gen_m5a_helix1d),
    "M5b_helix2d": (2, 3, _gen_m5b_helix2d),
    "M6_nonlinear": (6, 36, _gen_m6_nonlinear),
    "M7_swissroll": (2, 3, _gen_m7_swissroll),
    "Mbeta": (10, 40, _gen_mbeta),
    "MP3_paraboloid": (3, 12, _gen_mp3),
    "MP6_paraboloid": (6, 21, _gen_mp6),
}


@dataclass
class ManifoldSpec:
    name: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.name not in MANIFOLDS:
            known = ", ".join(sorted(MANIFOLDS))
            raise ContractError(f"unknown manifold {self.name!r}; known: {known}")
        if self.n < 1:
            raise ContractError(f"n must be >= 1, got {self.n}")

    @property
    def true_d(self) -> int:
        return MANIFOLDS[self.name][0]

    @property
    def p(self) -> int:
        return MANIFOLDS[self.name][1]


def gen_manifold(spec: ManifoldSpec) -> np.ndarray:
    """Draw spec.n points; deterministic in (name, n, seed)."""
    rng = stream(spec.seed, f"manifold:{spec.name}")
    data = MANIFOLDS[spec.name][2](spec.n, rng)
    assert data.shape == (spec.n, spec.p)
    return data


def standardize(x: np.ndarray) -> np.ndarray:
    """Optional z-score per column (no generator applies this by default)."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(sd > 0.0, sd, 1.0)


def rescale_unit(x: np.ndarray) -> np.ndarray:
    """Per-column min-max rescale to [0, 1]; constant columns map to 0.

    Gate elimination balances a fixed L1 pull against reconstruction
    gradients that scale with the data, so wide-amplitude manifolds train
    far better on the unit interval than raw or z-scored.
    """
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    return (x - lo) / np.where(span > 0.0, span, 1.0)


# --------------------------------------------------------------------- io

def write_matrix_csv(path, matrix):
    """RFC-4180 CSV, no header, 17 significant digits (exact round-trip)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ContractError(f"need a 2-d matrix, got shape {matrix.shape}")
    np.savetxt(path, matrix, fmt="%.17g", delimiter=",", newline="\r\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)


def write_sidecar(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
