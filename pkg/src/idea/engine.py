"""Reverse-mode automatic differentiation over float64 numpy arrays.

The engine supports exactly the operations the autoencoder objective
needs: affine maps, SiLU/ReLU, layer normalization, elementwise and
matrix products, reductions, and a Pearson correlation matrix. Graphs
are built eagerly (each constructor computes its value), can be
re-evaluated in place after perturbing leaf values (`forward_eval`),
and are differentiated with `backward_grad`. `grad_check` compares
analytic gradients against central finite differences.

Scalars are represented as 0-d arrays. All values are float64.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LAYERNORM_EPS = 1e-5
CORRELATION_EPS = 1e-8


class ShapeError(ValueError):
    """Operand shapes are structurally incompatible."""


class ContractError(ValueError):
    """A graph-level precondition was violated (e.g. non-scalar root)."""


class Node:
    """One value in the computation graph.

    `cache` holds forward intermediates (sigmoids, normalization stats)
    so the backward pass does not recompute them; `forward_eval`
    refreshes it alongside `value`.
    """

    __slots__ = ("op", "parents", "value", "adjoint", "requires_grad", "name", "cache")

    def __init__(self, op, parents, requires_grad, name=None):
        self.op = op
        self.parents = parents
        self.value = None
        self.adjoint = None
        self.requires_grad = requires_grad
        self.name = name
        self.cache = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Node {self.op}{tag} shape={self.value.shape}>"


def leaf(value, requires_grad=False, name=None):
    """Wrap an array as a graph input."""
    node = Node("input", (), requires_grad, name)
    node.value = np.asarray(value, dtype=np.float64)
    return node


def const(value, name=None):
    return leaf(value, requires_grad=False, name=name)


def param(value, name=None):
    return leaf(value, requires_grad=True, name=name)


def _require(cond, exc, msg):
    if not cond:
        raise exc(msg)


def _make(op, parents):
    node = Node(op, parents, any(p.requires_grad for p in parents))
    node.value = _FORWARD[op](node)
    return node


# ---------------------------------------------------------------- forward

def _fw_affine(node):
    x, w, b = (p.value for p in node.parents)
    return x @ w + b


def _fw_silu(node):
    x = node.parents[0].value
    s = expit(x)
    node.cache = s
    return x * s


def _fw_relu(node):
    return np.maximum(node.parents[0].value, 0.0)


def _fw_layernorm(node):
    x, gain, bias = (p.value for p in node.parents)
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    sig = np.sqrt(var + LAYERNORM_EPS)
    xhat = xc / sig
    node.cache = (sig, xhat)
    return xhat * gain + bias


def _fw_ewmul(node):
    a, b = node.parents
    return a.value * b.value


def _fw_matmul(node):
    a, b = node.parents
    return a.value @ b.value


def _fw_mean(node):
    return np.asarray(node.parents[0].value.mean())


def _fw_sum(node):
    return np.asarray(node.parents[0].value.sum())


def _fw_abs(node):
    return np.abs(node.parents[0].value)


def _fw_square(node):
    x = node.parents[0].value
    return x * x


def _fw_subtract(node):
    a, b = node.parents
    return a.value - b.value


def _fw_frob2(node):
    x = node.parents[0].value
    return np.asarray((x * x).sum())


def _fw_corr(node):
    x = node.parents[0].value
    n = x.shape[0]
    mu = x.mean(axis=0)
    xc = x - mu
    a = xc.T @ xc / n
    s = np.sqrt(np.diag(a))
    u = s + CORRELATION_EPS
    c = a / np.outer(u, u)
    node.cache = (xc, s, u, c)
    return c


_FORWARD = {
    "affine": _fw_affine,
    "silu": _fw_silu,
    "relu": _fw_relu,
    "layernorm": _fw_layernorm,
    "elementwise-product": _fw_ewmul,
    "matrix-product": _fw_matmul,
    "mean": _fw_mean,
    "sum": _fw_sum,
    "abs": _fw_abs,
    "square": _fw_square,
    "subtract": _fw_subtract,
    "frobenius-squared": _fw_frob2,
    "correlation-matrix": _fw_corr,
}


# ------------------------------------------------------------ constructors

def affine(x, w, b):
    """x @ w + b with x (n,k), w (k,m), b (m,)."""
    _require(x.value.ndim == 2, ShapeError, f"affine input must be 2-d, got {x.shape}")
    _require(w.value.ndim == 2, ShapeError, f"affine weight must be 2-d, got {w.shape}")
    _require(b.value.ndim == 1, ShapeError, f"affine bias must be 1-d, got {b.shape}")
    _require(x.shape[1] == w.shape[0], ShapeError,
             f"affine inner dims differ: input {x.shape} vs weight {w.shape}")
    _require(w.shape[1] == b.shape[0], ShapeError,
             f"affine bias width differs: weight {w.shape} vs bias {b.shape}")
    return _make("affine", (x, w, b))


def silu(x):
    return _make("silu", (x,))


def relu(x):
    return _make("relu", (x,))


def layernorm(x, gain, bias):
    """Row-wise layer normalization with learnable gain and bias."""
    _require(x.value.ndim == 2, ShapeError, f"layernorm input must be 2-d, got {x.shape}")
    _require(gain.shape == (x.shape[1],) and bias.shape == (x.shape[1],), ShapeError,
             f"layernorm gain/bias {gain.shape}/{bias.shape} do not match input {x.shape}")
    return _make("layernorm", (x, gain, bias))


def ewmul(a, b):
    """Elementwise product; also broadcasts a (n,k) matrix with a (k,) vector."""
    if a.shape == b.shape:
        pass
    elif a.value.ndim == 2 and b.value.ndim == 1 and a.shape[1] == b.shape[0]:
        pass
    else:
        raise ShapeError(f"elementwise-product shapes incompatible: {a.shape} vs {b.shape}")
    return _make("elementwise-product", (a, b))


def matmul(a, b):
    _require(a.value.ndim == 2 and b.value.ndim == 2, ShapeError,
             f"matrix-product operands must be 2-d: {a.shape} vs {b.shape}")
    _require(a.shape[1] == b.shape[0], ShapeError,
             f"matrix-product inner dims differ: {a.shape} vs {b.shape}")
    return _make("matrix-product", (a, b))


def mean_all(x):
    """Mean over every entry, scalar result."""
    return _make("mean", (x,))


def sum_all(x):
    return _make("sum", (x,))


def abs_val(x):
    return _make("abs", (x,))


def square(x):
    return _make("square", (x,))


def sub(a, b):
    _require(a.shape == b.shape, ShapeError,
             f"subtract shapes differ: {a.shape} vs {b.shape}")
    return _make("subtract", (a, b))


def frob2(x):
    """Squared Frobenius norm, scalar result."""
    return _make("frobenius-squared", (x,))


def corrmat(x):
    """Pearson correlation matrix of the columns of x (n,k), n >= 2."""
    _require(x.value.ndim == 2, ShapeError,
             f"correlation-matrix input must be 2-d, got {x.shape}")
    _require(x.shape[0] >= 2, ContractError,
             f"correlation-matrix needs at least 2 rows, got {x.shape[0]}")
    return _make("correlation-matrix", (x,))


def add(a, b):
    """a + b via subtract(a, -b); keeps the op set minimal."""
    neg = ewmul(b, const(np.full(b.shape, -1.0)))
    return sub(a, neg)


def scale(x, c):
    """Multiply by a python float constant."""
    return ewmul(x, const(np.full(x.shape, float(c))))


# -------------------------------------------------------------- backward

def _bw_affine(node, g):
    x, w, _ = (p.value for p in node.parents)
    return (g @ w.T, x.T @ g, g.sum(axis=0))


def _bw_silu(node, g):
    x = node.parents[0].value
    s = node.cache if node.cache is not None else expit(x)
    return (g * s * (1.0 + x * (1.0 - s)),)


def _bw_relu(node, g):
    x = node.parents[0].value
    return (g * (x > 0.0),)


def _bw_layernorm(node, g):
    gain = node.parents[1].value
    if node.cache is not None:
        sig, xhat = node.cache
    else:
        x = node.parents[0].value
        mu = x.mean(axis=1, keepdims=True)
        xc = x - mu
        sig = np.sqrt((xc * xc).mean(axis=1, keepdims=True) + LAYERNORM_EPS)
        xhat = xc / sig
    gxh = g * gain
    dx = (gxh - gxh.mean(axis=1, keepdims=True)
          - xhat * (gxh * xhat).mean(axis=1, keepdims=True)) / sig
    return (dx, (g * xhat).sum(axis=0), g.sum(axis=0))


def _bw_ewmul(node, g):
    a, b = (p.value for p in node.parents)
    if a.shape == b.shape:
        return (g * b, g * a)
    # matrix (n,k) times vector (k,): vector grad sums over rows
    return (g * b, (g * a).sum(axis=0))


def _bw_matmul(node, g):
    a, b = (p.value for p in node.parents)
    return (g @ b.T, a.T @ g)


def _bw_mean(node, g):
    x = node.parents[0].value
    return (np.full(x.shape, float(g) / x.size),)


def _bw_sum(node, g):
    x = node.parents[0].value
    return (np.full(x.shape, float(g)),)


def _bw_abs(node, g):
    x = node.parents[0].value
    return (g * np.sign(x),)


def _bw_square(node, g):
    x = node.parents[0].value
    return (2.0 * g * x,)


def _bw_subtract(node, g):
    return (g, -g)


def _bw_frob2(node, g):
    x = node.parents[0].value
    return (2.0 * float(g) * x,)


def _bw_corr(node, g):
    # C = A / (u u^T) with A = Xc^T Xc / n, u = sqrt(diag A) + eps.
    x = node.parents[0].value
    n = x.shape[0]
    if node.cache is not None:
        xc, s, u, c = node.cache
    else:
        mu = x.mean(axis=0)
        xc = x - mu
        a = xc.T @ xc / n
        s = np.sqrt(np.diag(a))
        u = s + CORRELATION_EPS
        c = a / np.outer(u, u)

    da = g / np.outer(u, u)
    gc = g * c
    du = -(gc.sum(axis=1) + gc.sum(axis=0)) / u
    # u depends on A only through its diagonal; guard s == 0 (constant column)
    safe = np.where(s > 0.0, s, 1.0)
    da[np.diag_indices_from(da)] += np.where(s > 0.0, du * 0.5 / safe, 0.0)

    dxc = xc @ (da + da.T) / n
    return (dxc - dxc.mean(axis=0),)


_BACKWARD = {
    "affine": _bw_affine,
    "silu": _bw_silu,
    "relu": _bw_relu,
    "layernorm": _bw_layernorm,
    "elementwise-product": _bw_ewmul,
    "matrix-product": _bw_matmul,
    "mean": _bw_mean,
    "sum": _bw_sum,
    "abs": _bw_abs,
    "square": _bw_square,
    "subtract": _bw_subtract,
    "frobenius-squared": _bw_frob2,
    "correlation-matrix": _bw_corr,
}


# ------------------------------------------------------------- traversal

def topo_order(root):
    """Parents-before-children ordering of the graph under `root`."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def forward_eval(root):
    """Recompute every node under `root` from current leaf values."""
    for node in topo_order(root):
        if node.op != "input":
            node.value = _FORWARD[node.op](node)
    return root


def backward_grad(root):
    """Populate `adjoint` on every grad-requiring node reachable from `root`.

    `root` must be scalar. Adjoints of nodes outside the differentiable
    subgraph are left as None. Accumulation never mutates an array it
    does not own, so returned adjoints may alias graph internals; treat
    them as read-only.
    """
    if root.value.shape != ():
        raise ContractError(f"backward root must be scalar, got shape {root.value.shape}")
    order = topo_order(root)
    for node in order:
        node.adjoint = None
    root.adjoint = np.ones(())
    for node in reversed(order):
        if node.op == "input" or not node.requires_grad or node.adjoint is None:
            continue
        grads = _BACKWARD[node.op](node, node.adjoint)
        for parent, grad in zip(node.parents, grads):
            if not parent.requires_grad:
                continue
            if parent.adjoint is None:
                parent.adjoint = grad
            else:
                parent.adjoint = parent.adjoint + grad
    return root


# ------------------------------------------------------------ grad check

@dataclass
class GradCheckReport:
    """Result of comparing analytic and finite-difference gradients."""

    step: float
    tol: float
    max_rel_err: float
    passed: bool
    per_param: dict = field(default_factory=dict)
    entries_checked: int = 0

    def __str__(self):
        lines = [f"grad_check step={self.step:g} tol={self.tol:g} "
                 f"max_rel_err={self.max_rel_err:.3e} passed={self.passed}"]
        for name, err in sorted(self.per_param.items()):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def grad_check(root, step=1e-6, tol=1e-4, entries_per_param=None, seed=0):
    """Check analytic gradients of `root` against central finite differences.

    Perturbs leaf values in place and re-runs `forward_eval`, so the graph
    must be replayable. When `entries_per_param` is given, only a random
    subset of entries is checked per parameter tensor (deterministic in
    `seed`); otherwise every entry is checked.

    The relative error uses denominator max(1, |analytic|, |numeric|) so
    that near-zero gradients are compared absolutely.
    """
    if root.value.shape != ():
        raise ContractError(f"grad_check root must be scalar, got shape {root.value.shape}")
    params = [n for n in topo_order(root) if n.op == "input" and n.requires_grad]
    if not params:
        raise ContractError("grad_check found no parameters requiring gradients")

    backward_grad(root)
    analytic = {id(p): (np.zeros_like(p.value) if p.adjoint is None
                        else np.array(p.adjoint, dtype=np.float64))
                for p in params}
    rng = np.random.default_rng(seed)

    per_param = {}
    max_err = 0.0
    total = 0
    for idx, p in enumerate(params):
        name = p.name or f"param{idx}"
        flat = p.value.reshape(-1)
        size = flat.size
        if entries_per_param is not None and entries_per_param < size:
            sel = rng.choice(size, size=entries_per_param, replace=False)
        else:
            sel = np.arange(size)
        worst = 0.0
        for j in sel:
            orig = flat[j]
            flat[j] = orig + step
            plus = float(forward_eval(root).value)
            flat[j] = orig - step
            minus = float(forward_eval(root).value)
            flat[j] = orig
            numeric = (plus - minus) / (2.0 * step)
            a = float(analytic[id(p)].reshape(-1)[j])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
            total += 1
        per_param[name] = worst
        max_err = max(max_err, worst)
    forward_eval(root)

    return GradCheckReport(step=step, tol=tol, max_rel_err=max_err,
                           passed=max_err < tol, per_param=per_param,
                           entries_checked=total)
