"""Engine tests: every op against an independent finite-difference oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea import engine as E


def fd_gradient(build, arrays, step=1e-6):
    """Central finite differences of scalar build(leaves) w.r.t. each array.

    `build` receives a list of leaf nodes (one per array, in order) and
    returns the scalar root. Written independently of engine.grad_check:
    rebuilds the graph from scratch at every perturbed point instead of
    replaying one graph.
    """
    def evaluate(arrs):
        return float(build([E.param(a, f"p{i}") for i, a in enumerate(arrs)]).value)

    grads = []
    for target in range(len(arrays)):
        g = np.zeros_like(arrays[target])
        flat = g.reshape(-1)
        for j in range(flat.size):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[target].reshape(-1)[j] += step
            minus[target].reshape(-1)[j] -= step
            flat[j] = (evaluate(plus) - evaluate(minus)) / (2 * step)
        grads.append(g)
    return grads


def check_against_fd(build, arrays, tol=5e-7):
    leaves = [E.param(a.copy(), f"p{i}") for i, a in enumerate(arrays)]
    E.backward_grad(build(leaves))
    numeric = fd_gradient(build, arrays)
    for leaf, num in zip(leaves, numeric):
        got = (np.zeros_like(leaf.value) if leaf.adjoint is None
               else np.asarray(leaf.adjoint, dtype=np.float64))
        err = np.abs(got - num) / np.maximum(1.0, np.maximum(np.abs(got), np.abs(num)))
        assert err.max() < tol, f"{leaf.name}: max rel err {err.max():.2e}"


RNG = np.random.default_rng(20240811)


# ------------------------------------------------------------- op oracles

def test_affine_forward_matches_numpy():
    x, w, b = RNG.normal(size=(6, 4)), RNG.normal(size=(4, 3)), RNG.normal(size=3)
    node = E.affine(E.const(x), E.const(w), E.const(b))
    np.testing.assert_allclose(node.value, x @ w + b, rtol=0, atol=0)


def test_affine_gradients():
    arrays = [RNG.normal(size=(5, 4)), RNG.normal(size=(4, 3)), RNG.normal(size=3)]

    def build(leaves):
        return E.mean_all(E.square(E.affine(*leaves)))
    check_against_fd(build, arrays)


def test_silu_matches_closed_form_and_gradient():
    x = np.linspace(-6, 6, 41)
    node = E.silu(E.const(x.reshape(1, -1)))
    want = x / (1.0 + np.exp(-x))
    np.testing.assert_allclose(node.value.ravel(), want, rtol=1e-15, atol=1e-300)

    arrays = [RNG.normal(size=(3, 7))]
    check_against_fd(lambda leaves: E.sum_all(E.silu(leaves[0])), arrays)


def test_silu_is_stable_for_large_inputs():
    x = np.array([[-800.0, -50.0, 0.0, 50.0, 800.0]])
    node = E.silu(E.const(x))
    assert np.all(np.isfinite(node.value))
    np.testing.assert_allclose(node.value[0, -2:], [50.0, 800.0], rtol=1e-12)
    np.testing.assert_allclose(node.value[0, :2], [0.0, 0.0], atol=1e-12)


def test_relu_gradient_zero_at_origin():
    # subgradient convention: exactly 0 at x == 0
    x = np.array([-1.0, 0.0, 2.0])
    root = E.sum_all(E.relu(E.param(x, "x")))
    E.backward_grad(root)
    leaf = [n for n in E.topo_order(root) if n.op == "input"][0]
    np.testing.assert_array_equal(leaf.adjoint, [0.0, 0.0, 1.0])


def test_abs_gradient_zero_at_origin():
    x = np.array([-2.0, 0.0, 3.0])
    root = E.sum_all(E.abs_val(E.param(x, "x")))
    E.backward_grad(root)
    leaf = [n for n in E.topo_order(root) if n.op == "input"][0]
    np.testing.assert_array_equal(leaf.adjoint, [-1.0, 0.0, 1.0])


def test_layernorm_rows_are_standardized():
    x = RNG.normal(size=(9, 12)) * 3 + 1
    node = E.layernorm(E.const(x), E.const(np.ones(12)), E.const(np.zeros(12)))
    np.testing.assert_allclose(node.value.mean(axis=1), 0.0, atol=1e-12)
    # variance slightly below 1 because of the epsilon inside the sqrt
    np.testing.assert_allclose((node.value ** 2).mean(axis=1), 1.0, atol=1e-4)


def test_layernorm_gradients():
    arrays = [RNG.normal(size=(4, 6)), RNG.normal(size=6) * 0.5 + 1.0,
              RNG.normal(size=6) * 0.2]

    def build(leaves):
        return E.mean_all(E.square(E.layernorm(*leaves)))
    check_against_fd(build, arrays)


def test_ewmul_broadcast_gradients():
    arrays = [RNG.normal(size=(5, 3)), RNG.normal(size=3)]

    def build(leaves):
        return E.sum_all(E.ewmul(leaves[0], leaves[1]))
    check_against_fd(build, arrays)


def test_matmul_gradients():
    arrays = [RNG.normal(size=(4, 3)), RNG.normal(size=(3, 5))]

    def build(leaves):
        return E.frob2(E.matmul(leaves[0], leaves[1]))
    check_against_fd(build, arrays)


def test_mean_sum_square_subtract_chain():
    arrays = [RNG.normal(size=(6, 2)), RNG.normal(size=(6, 2))]

    def build(leaves):
        return E.mean_all(E.square(E.sub(leaves[0], leaves[1])))
    check_against_fd(build, arrays)
    # value oracle
    a, b = arrays
    root = build([E.const(a), E.const(b)])
    assert float(root.value) == pytest.approx(((a - b) ** 2).mean(), rel=1e-15)


def test_correlation_matrix_forward_oracle():
    x = RNG.normal(size=(200, 4)) @ RNG.normal(size=(4, 4))
    node = E.corrmat(E.const(x))
    want = np.corrcoef(x, rowvar=False)
    np.testing.assert_allclose(node.value, want, atol=1e-6)
    np.testing.assert_allclose(np.diag(node.value), 1.0, atol=1e-6)


def test_correlation_matrix_gradients():
    arrays = [RNG.normal(size=(12, 3))]

    def build(leaves):
        return E.frob2(E.sub(E.corrmat(leaves[0]), E.const(np.eye(3))))
    check_against_fd(build, arrays)


def test_correlation_matrix_gradient_with_asymmetric_weighting():
    # a non-symmetric downstream function exercises the dC split fully
    arrays = [RNG.normal(size=(10, 3))]
    coeff = RNG.normal(size=(3, 3))

    def build(leaves):
        return E.sum_all(E.ewmul(E.corrmat(leaves[0]), E.const(coeff)))
    check_against_fd(build, arrays)


def test_frobenius_squared_oracle():
    x = RNG.normal(size=(3, 4))
    assert float(E.frob2(E.const(x)).value) == pytest.approx((x ** 2).sum(), rel=1e-15)


# ----------------------------------------------------- structural checks

def test_shape_errors_name_both_shapes():
    a = E.const(np.zeros((3, 4)))
    b = E.const(np.zeros((5, 4)))
    with pytest.raises(E.ShapeError, match=r"\(3, 4\).*\(5, 4\)"):
        E.sub(a, b)
    with pytest.raises(E.ShapeError, match=r"\(3, 4\).*\(5, 4\)"):
        E.matmul(a, b)
    with pytest.raises(E.ShapeError, match=r"\(3, 4\).*\(5, 4\)"):
        E.ewmul(a, b)


def test_affine_shape_errors():
    x = E.const(np.zeros((2, 3)))
    w = E.const(np.zeros((4, 5)))
    b = E.const(np.zeros(5))
    with pytest.raises(E.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        E.affine(x, w, b)


def test_backward_requires_scalar_root():
    with pytest.raises(E.ContractError, match="scalar"):
        E.backward_grad(E.relu(E.param(np.zeros(3))))


def test_corrmat_requires_two_rows():
    with pytest.raises(E.ContractError, match="2 rows"):
        E.corrmat(E.const(np.zeros((1, 3))))


def test_forward_eval_replays_after_leaf_change():
    x = E.param(np.array([1.0, 2.0]), "x")
    root = E.sum_all(E.square(x))
    assert float(root.value) == 5.0
    x.value[0] = 3.0
    E.forward_eval(root)
    assert float(root.value) == 13.0


def test_values_are_float64():
    node = E.leaf(np.array([1, 2, 3], dtype=np.int32))
    assert node.value.dtype == np.float64
    out = E.silu(E.const(np.float32([[1, 2]])))
    assert out.value.dtype == np.float64


def test_diamond_graph_accumulates_both_paths():
    # y = sum(x*x) + sum(x) uses x twice; adjoint must be 2x + 1
    x = E.param(np.array([1.0, -2.0, 0.5]), "x")
    root = E.add(E.sum_all(E.square(x)), E.sum_all(x))
    E.backward_grad(root)
    np.testing.assert_allclose(x.adjoint, 2 * x.value + 1, rtol=1e-15)


# ------------------------------------------------------------ grad_check

def test_grad_check_passes_on_correct_graph():
    x = E.param(RNG.normal(size=(4, 3)), "x")
    w = E.param(RNG.normal(size=(3, 2)), "w")
    b = E.param(RNG.normal(size=2), "b")
    root = E.mean_all(E.square(E.silu(E.affine(x, w, b))))
    report = E.grad_check(root, step=1e-6, tol=1e-4)
    assert report.passed
    assert report.max_rel_err < 1e-6
    assert set(report.per_param) == {"x", "w", "b"}
    assert report.entries_checked == 12 + 6 + 2


def test_grad_check_chain_affine_layernorm_silu():
    # frozen expectation: the standard encoder building block checks
    # out below the 1e-4 relative tolerance
    rng = np.random.default_rng(7)
    x = E.const(rng.normal(size=(16, 10)), "x")
    w = E.param(rng.normal(size=(10, 8)) * 0.3, "w")
    b = E.param(rng.normal(size=8) * 0.1, "b")
    g = E.param(np.ones(8), "g")
    be = E.param(np.zeros(8), "be")
    root = E.mean_all(E.square(E.silu(E.layernorm(E.affine(x, w, b), g, be))))
    report = E.grad_check(root, step=1e-6, tol=1e-4)
    assert report.passed


def test_grad_check_detects_wrong_gradient(monkeypatch):
    # sabotage one backward rule; the check must fail
    import idea.engine as eng
    broken = dict(eng._BACKWARD)
    broken["square"] = lambda node, g: (3.0 * g * node.parents[0].value,)
    monkeypatch.setitem(eng._BACKWARD, "square", broken["square"])
    x = E.param(np.array([1.0, 2.0]), "x")
    root = E.sum_all(E.square(x))
    report = E.grad_check(root, step=1e-6, tol=1e-4)
    assert not report.passed


def test_grad_check_entry_sampling_is_deterministic():
    x = E.param(RNG.normal(size=(10, 10)), "x")
    root = E.mean_all(E.square(x))
    r1 = E.grad_check(root, entries_per_param=5, seed=3)
    r2 = E.grad_check(root, entries_per_param=5, seed=3)
    assert r1.entries_checked == r2.entries_checked == 5
    assert r1.max_rel_err == r2.max_rel_err


def test_grad_check_restores_leaf_values():
    vals = RNG.normal(size=(3, 3))
    x = E.param(vals.copy(), "x")
    root = E.frob2(x)
    E.grad_check(root)
    np.testing.assert_array_equal(x.value, vals)


# ------------------------------------------------------------ properties

@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_property_sub_of_self_is_zero_and_gradients_cancel(n, k, seed):
    rng = np.random.default_rng(seed)
    x = E.param(rng.normal(size=(n, k)), "x")
    root = E.sum_all(E.square(E.sub(x, x)))
    assert float(root.value) == 0.0
    E.backward_grad(root)
    np.testing.assert_array_equal(x.adjoint, np.zeros((n, k)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2 ** 31 - 1))
def test_property_mean_equals_sum_over_size(n, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, k))
    m = float(E.mean_all(E.const(x)).value)
    s = float(E.sum_all(E.const(x)).value)
    assert m == pytest.approx(s / (n * k), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 30), st.integers(2, 4), st.integers(0, 2 ** 31 - 1))
def test_property_corrmat_is_scale_and_shift_invariant(n, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, k))
    scales = rng.uniform(0.5, 3.0, k)
    shifts = rng.normal(size=k)
    c1 = E.corrmat(E.const(x)).value
    c2 = E.corrmat(E.const(x * scales + shifts)).value
    np.testing.assert_allclose(c1, c2, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_property_random_small_graphs_pass_grad_check(seed):
    rng = np.random.default_rng(seed)
    x = E.param(rng.normal(size=(5, 4)), "x")
    w = E.param(rng.normal(size=(4, 4)) * 0.5, "w")
    b = E.param(rng.normal(size=4) * 0.1, "b")
    h = E.silu(E.affine(x, w, b))
    root = E.add(E.mean_all(E.square(h)), E.frob2(E.sub(E.corrmat(h), E.const(np.eye(4)))))
    assert E.grad_check(root, step=1e-6, tol=1e-4).passed
