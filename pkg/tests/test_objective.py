"""Objective tests: term composition, dual-route agreement, gradient flow."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idea import engine as E
from idea.engine import ContractError, ShapeError
from idea.model import IdeaModel
from idea.objective import (
    orthogonality_loss,
    param_leaves,
    projected_test_loss,
    reconstruction_loss,
    regularization_loss,
    swe_total_loss,
    total_loss,
)
from idea.objective import test_loss as held_out_loss
from idea.trainer import TrainConfig


def make_setup(p=6, l=4, n=16, seed=0, gates=None):
    rng = np.random.default_rng(seed)
    model = IdeaModel.initialize(p, l, rng)
    if gates is not None:
        model.params["w_co1"][:] = gates
    x = rng.normal(size=(n, p))
    return model, x


CFG = TrainConfig(l_init=4)


def test_breakdown_recomposes_to_total():
    model, x = make_setup(gates=[1.0, 0.4, 0.9, -0.01])
    bd, _ = total_loss(model, x, CFG)
    recomposed = (bd.reconstruction + CFG.lambda_rec * bd.projected
                  + CFG.lambda_reg * bd.regularization
                  + CFG.lambda_orth * bd.orthogonality)
    assert abs(recomposed - bd.total) < 1e-12
    assert bd.h_term is None


def test_breakdown_recomposes_with_h_term():
    model, x = make_setup()
    h = np.random.default_rng(1).uniform(0.5, 1.5, x.shape[0])
    bd, _ = swe_total_loss(model, x, h, CFG)
    recomposed = (bd.reconstruction + CFG.lambda_rec * bd.projected
                  + CFG.lambda_reg * bd.regularization
                  + CFG.lambda_orth * bd.orthogonality + bd.h_term)
    assert abs(recomposed - bd.total) < 1e-12


def test_graph_terms_match_numpy_fast_path_exactly():
    # dual route: the engine graph and the plain-numpy forward must agree
    # to the bit, not just approximately
    model, x = make_setup(p=8, l=5, n=32, seed=7, gates=[1.0, 0.2, 0.7, 1.3, 0.05])
    bd, _ = total_loss(model, x, CFG)
    xhat, xhat_adj, gated = model.forward_full(x)
    assert bd.reconstruction == reconstruction_loss(xhat, x)
    assert bd.projected == reconstruction_loss(xhat_adj, x)
    state = model.gate_state()
    w_last = model.params["w_co1"][state.last_index]
    assert bd.regularization == regularization_loss(w_last, CFG.alpha)
    # column selection via 0/1 matmul can reorder BLAS accumulation, so
    # the orthogonality route agrees to addition order, not to the bit
    np.testing.assert_allclose(
        bd.orthogonality, orthogonality_loss(gated[:, state.active]),
        rtol=1e-12, atol=0)


def test_regularization_targets_smallest_positive_weight():
    model, x = make_setup(gates=[1.0, 0.03, 0.9, -0.2])
    bd, _ = total_loss(model, x, CFG)
    assert bd.regularization == pytest.approx(abs(0.03 + CFG.alpha))


def test_regularization_gradient_hits_only_last_active_weight():
    model, x = make_setup(gates=[2.0, 3.0, 2.5, 0.4])
    # make the reconstruction portion indifferent to w_co1 by zeroing the
    # decoder input weights, and drop the orthogonality term (its epsilon
    # guard breaks exact scale invariance); only reg then produces gradient
    model.params["dec0_w"][:] = 0.0
    cfg = TrainConfig(l_init=4, lambda_orth=0.0)
    _, root = total_loss(model, x, cfg)
    E.backward_grad(root)
    g = param_leaves(root)["w_co1"].adjoint
    assert g is not None
    assert g[3] == pytest.approx(cfg.lambda_reg, rel=1e-12)  # d|w+a|/dw = 1
    np.testing.assert_array_equal(g[:3], 0.0)


def test_projected_branch_matches_zero_last_forward():
    model, x = make_setup(p=5, l=4, seed=3, gates=[0.8, 0.1, 1.2, 0.5])
    bd, _ = total_loss(model, x, CFG)
    assert bd.projected == reconstruction_loss(
        model.decode(model.gate(model.encode(x), zero_last=True)), x)


def test_total_loss_gradient_passes_finite_differences():
    model, x = make_setup(p=6, l=4, n=12, seed=5, gates=[1.0, 0.3, 0.8, 0.6])
    _, root = total_loss(model, x, CFG)
    report = E.grad_check(root, entries_per_param=3, seed=0)
    assert report.passed, f"max rel err {report.max_rel_err}"


def test_swe_gradient_passes_finite_differences():
    model, x = make_setup(p=6, l=4, n=12, seed=8)
    h = np.random.default_rng(2).uniform(0.5, 1.5, x.shape[0])
    _, root = swe_total_loss(model, x, h, CFG)
    report = E.grad_check(root, entries_per_param=3, seed=1)
    assert report.passed, f"max rel err {report.max_rel_err}"


def test_h_term_is_mse_of_first_gated_coordinate():
    model, x = make_setup(seed=4)
    h = np.random.default_rng(3).uniform(0.5, 1.5, x.shape[0])
    bd, _ = swe_total_loss(model, x, h, CFG)
    gated = model.gate(model.encode(x))
    assert bd.h_term == pytest.approx(np.mean((gated[:, 0] - h) ** 2), rel=1e-15)


def test_h_term_uses_literal_coordinate_zero_even_when_inactive():
    model, x = make_setup(gates=[-0.01, 1.0, 1.0, 1.0])
    h = np.ones(x.shape[0])
    bd, _ = swe_total_loss(model, x, h, CFG)
    # gated column 0 is exactly zero, so the term is mean(h^2)
    assert bd.h_term == pytest.approx(1.0)


def test_param_leaves_share_memory_with_model():
    model, x = make_setup()
    _, root = total_loss(model, x, CFG)
    leaves = param_leaves(root)
    assert set(leaves) == set(model.params)
    for name, leaf in leaves.items():
        assert leaf.value is model.params[name]


def test_errors():
    model, x = make_setup()
    with pytest.raises(ShapeError, match="shape"):
        total_loss(model, x[:, :3], CFG)
    with pytest.raises(ShapeError, match="rows"):
        total_loss(model, x, CFG, h=np.ones(3))
    with pytest.raises(ContractError, match="h column"):
        swe_total_loss(model, x, None, CFG)
    model.params["w_co1"][:] = -0.01
    with pytest.raises(ContractError, match="active"):
        total_loss(model, x, CFG)
    with pytest.raises(ShapeError):
        reconstruction_loss(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        orthogonality_loss(np.zeros((1, 4)))


def test_eval_helpers_match_breakdown_on_training_batch():
    model, x = make_setup(seed=11, gates=[1.0, 0.5, 0.25, 0.125])
    bd, _ = total_loss(model, x, CFG)
    assert held_out_loss(model, x) == bd.reconstruction
    assert projected_test_loss(model, x) == bd.projected


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_property_orthogonality_zero_iff_decorrelated(seed):
    rng = np.random.default_rng(seed)
    n = 64
    a = rng.normal(size=(n, 3))
    loss = orthogonality_loss(a)
    assert loss >= 0
    # perfectly correlated columns push the loss toward the off-diagonal mass
    b = np.column_stack([a[:, 0], a[:, 0] * 2.0 + 1.0])
    assert orthogonality_loss(b) == pytest.approx(2.0, abs=1e-6)


def test_lambda_weights_scale_terms():
    model, x = make_setup(gates=[1.0, 0.4, 0.9, 0.7])
    cfg = TrainConfig(l_init=4, lambda_rec=0.0, lambda_reg=0.0, lambda_orth=0.0)
    bd, _ = total_loss(model, x, cfg)
    assert bd.total == pytest.approx(bd.reconstruction, rel=1e-15)
