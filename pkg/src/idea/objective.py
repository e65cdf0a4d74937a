"""Training objective for the gated autoencoder.

The total loss combines four terms (plus an optional supervised term
for velocity-profile data):

* reconstruction error of the main forward pass,
* reconstruction error of a projected pass in which the weakest active
  gate weight is treated as zero (both passes share one encoder pass),
* an L1 pull |w_last + alpha| on that weakest gate weight, which is
  what eliminates coordinates one at a time,
* the squared Frobenius distance between the correlation matrix of the
  active gated coordinates and the identity, which decorrelates the
  surviving coordinates,
* optionally, mean squared error between the first gated coordinate
  and a supplied column h (profile-mean matching for flow data).

`total_loss` builds the whole thing as one engine graph so that
`backward_grad` yields gradients for every parameter; the plain-numpy
evaluation helpers at the bottom are independent implementations used
for held-out evaluation and for cross-checking the graph.
"""

from dataclasses import dataclass

import numpy as np

from idea import engine as E
from idea.engine import ContractError, ShapeError


@dataclass
class LossBreakdown:
    """Scalar value of each loss term before weighting, plus the total."""

    reconstruction: float
    projected: float
    regularization: float
    orthogonality: float
    h_term: float | None
    total: float

    def to_dict(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "projected": self.projected,
            "regularization": self.regularization,
            "orthogonality": self.orthogonality,
            "h_term": self.h_term,
            "total": self.total,
        }


def _graph_stack(h, params, prefix):
    for i in range(5):
        h = E.affine(h, params[f"{prefix}{i}_w"], params[f"{prefix}{i}_b"])
        if i < 4:
            h = E.layernorm(h, params[f"{prefix}{i}_ln_g"], params[f"{prefix}{i}_ln_b"])
            h = E.silu(h)
    return h


def _graph_mse(a, b):
    return E.mean_all(E.square(E.sub(a, b)))


def total_loss(model, x, config, h=None):
    """Build the full loss graph for one batch.

    Returns (LossBreakdown, root). The graph's parameter leaves share
    memory with `model.params`, so optimizer updates take effect on the
    next build and `grad_check` perturbations hit the live model. Use
    `param_leaves(root)` to recover the leaves by name.

    Requires at least one active gate weight; `h`, when given, must
    have one value per row of `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.p:
        raise ShapeError(f"total_loss expects x of shape (n, {model.p}), got {x.shape}")
    state = model.gate_state()
    if state.last_index is None:
        raise ContractError("total_loss requires at least one active gate weight")

    params = {name: E.param(arr, name) for name, arr in model.params.items()}
    xs = E.const(x, "x")

    latent = _graph_stack(xs, params, "enc")
    co2 = E.relu(params["w_co2"])
    gated = E.ewmul(E.ewmul(latent, E.relu(params["w_co1"])), co2)

    mask = np.ones(model.l)
    mask[state.last_index] = 0.0
    gate_proj = E.relu(E.ewmul(params["w_co1"], E.const(mask, "zero_last_mask")))
    gated_proj = E.ewmul(E.ewmul(latent, gate_proj), co2)

    xhat = _graph_stack(gated, params, "dec")
    xhat_adj = _graph_stack(gated_proj, params, "dec")

    rec = _graph_mse(xhat, xs)
    proj = _graph_mse(xhat_adj, xs)

    onehot = np.zeros(model.l)
    onehot[state.last_index] = 1.0
    w_last = E.sum_all(E.ewmul(params["w_co1"], E.const(onehot, "last_selector")))
    reg = E.abs_val(E.sub(w_last, E.const(np.asarray(-config.alpha))))

    selector = np.zeros((model.l, state.count))
    selector[state.active, np.arange(state.count)] = 1.0
    active_cols = E.matmul(gated, E.const(selector, "active_selector"))
    corr = E.corrmat(active_cols)
    orth = E.frob2(E.sub(corr, E.const(np.eye(state.count))))

    root = E.add(E.add(E.add(rec, E.scale(proj, config.lambda_rec)),
                       E.scale(reg, config.lambda_reg)),
                 E.scale(orth, config.lambda_orth))

    h_val = None
    if h is not None:
        h = np.asarray(h, dtype=np.float64).reshape(-1, 1)
        if h.shape[0] != x.shape[0]:
            raise ShapeError(f"h has {h.shape[0]} rows but x has {x.shape[0]}")
        first = np.zeros((model.l, 1))
        first[0, 0] = 1.0
        l0 = E.matmul(gated, E.const(first, "first_coordinate"))
        h_node = _graph_mse(l0, E.const(h, "h"))
        root = E.add(root, h_node)
        h_val = float(h_node.value)

    breakdown = LossBreakdown(
        reconstruction=float(rec.value),
        projected=float(proj.value),
        regularization=float(reg.value),
        orthogonality=float(orth.value),
        h_term=h_val,
        total=float(root.value),
    )
    return breakdown, root


def swe_total_loss(model, x, h, config):
    """Flow-mode loss: standard objective plus the profile-mean term."""
    if h is None:
        raise ContractError("swe_total_loss requires an h column")
    return total_loss(model, x, config, h=h)


def param_leaves(root) -> dict:
    """Name -> leaf Node map for every parameter in the graph."""
    return {n.name: n for n in E.topo_order(root)
            if n.op == "input" and n.requires_grad}


# -------------------------------------------------- numpy-side evaluation

def reconstruction_loss(xhat, x) -> float:
    """Mean squared entrywise difference (over all n*p entries)."""
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ShapeError(f"reconstruction_loss shapes differ: {xhat.shape} vs {x.shape}")
    return float(np.mean((xhat - x) ** 2))


def regularization_loss(w_last: float, alpha: float) -> float:
    return float(abs(w_last + alpha))


def orthogonality_loss(latent: np.ndarray) -> float:
    """||corr(latent) - I||_F^2 over the given columns."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[0] < 2:
        raise ShapeError(f"orthogonality_loss expects (n>=2, k), got {latent.shape}")
    xc = latent - latent.mean(axis=0)
    a = xc.T @ xc / latent.shape[0]
    u = np.sqrt(np.diag(a)) + E.CORRELATION_EPS
    c = a / np.outer(u, u)
    return float(((c - np.eye(latent.shape[1])) ** 2).sum())


def test_loss(model, x) -> float:
    """Held-out metric: plain reconstruction error of the main pass."""
    x = np.asarray(x, dtype=np.float64)
    xhat = model.decode(model.gate(model.encode(x)))
    return reconstruction_loss(xhat, x)


def projected_test_loss(model, x) -> float:
    """Held-out reconstruction error with the weakest gate coordinate zeroed."""
    x = np.asarray(x, dtype=np.float64)
    xhat_adj = model.decode(model.gate(model.encode(x), zero_last=True))
    return reconstruction_loss(xhat_adj, x)
