"""Objective components: hinge examples, breakdown identity, subgradients."""

import numpy as np
import pytest

from fkmad import tensor as T
from fkmad.gradcheck import fd_gradient, max_param_relative_error
from fkmad.losses import (LossBreakdown, LossConfig, batch_losses, gate_reg,
                          margin_loss, pass_loss, recon_loss, step_reg,
                          total_loss, window_log_energy)
from fkmad.model import ModelConfig, init_model
from fkmad.tensor import Tensor


def _scalar(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


# --- recon_loss


def test_recon_equal_is_zero():
    y = Tensor(np.arange(6.0).reshape(2, 3))
    assert recon_loss(y, np.arange(6.0).reshape(2, 3)).item() == 0.0


def test_recon_unit_offset_is_one():
    y = Tensor(np.zeros((2, 3)))
    assert recon_loss(y, -np.ones((2, 3))).item() == pytest.approx(1.0, abs=1e-15)


def test_recon_matches_direct_mean_of_squares():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((4, 5))
    expect = ((a - b) ** 2).mean()
    assert recon_loss(Tensor(a), b).item() == pytest.approx(expect, rel=1e-14)


def test_recon_l1_variant():
    a = np.array([[1.0, -2.0]])
    b = np.array([[0.0, 1.0]])
    assert recon_loss(Tensor(a), b, l1=True).item() == pytest.approx(2.0)


# --- pass_loss (log-domain gain-bound hinge)


def test_pass_hinge_boundary_is_zero():
    # E_y == gamma^2 E_u exactly: e = log(1+E) on both sides of the hinge
    gamma, e_u_raw = 2.0, 1.5
    e_y = _scalar([np.log1p(gamma * gamma * e_u_raw)])
    e_u = _scalar([np.log1p(e_u_raw)])
    assert pass_loss(e_y, e_u, gamma).item() == 0.0


def test_pass_inactive_below_bound():
    e_y = _scalar([0.1])
    e_u = _scalar([2.0])
    assert pass_loss(e_y, e_u, 1.0).item() == 0.0


def test_pass_direct_substitution():
    # gamma=1, E_u=1, E_y=3 -> [log 4 - log 2]^2 = (ln 2)^2
    e_y = _scalar([np.log(4.0)])
    e_u = _scalar([np.log(2.0)])
    got = pass_loss(e_y, e_u, 1.0).item()
    assert got == pytest.approx(np.log(2.0) ** 2, rel=1e-12)
    assert got == pytest.approx(0.480453, abs=1e-6)


def test_pass_nonnegative_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        e_y = Tensor(rng.uniform(0, 3, 4))
        e_u = Tensor(rng.uniform(0, 3, 4))
        assert pass_loss(e_y, e_u, rng.uniform(0.5, 2.0)).item() >= 0.0


def test_pass_kink_subgradient_is_zero():
    # at the hinge boundary the one-sided derivative choice is 0
    gamma = 1.0
    e_u = _scalar([np.log(2.0)])
    e_y = _scalar([np.log(2.0)])  # bound == e_y
    grads = pass_loss(e_y, e_u, gamma).backward()
    np.testing.assert_array_equal(grads[e_y], 0.0)
    np.testing.assert_array_equal(grads[e_u], 0.0)


def test_pass_gradient_matches_fd_away_from_kink():
    rng = np.random.default_rng(2)
    params = {"e_y": rng.uniform(2.0, 3.0, 6),   # well above the bound
              "e_u": rng.uniform(0.0, 0.5, 6)}

    t_y = Tensor(params["e_y"], requires_grad=True)
    t_u = Tensor(params["e_u"], requires_grad=True)
    grads = pass_loss(t_y, t_u, 1.5).backward()
    analytic = {"e_y": grads[t_y], "e_u": grads[t_u]}

    def value():
        return pass_loss(Tensor(params["e_y"]), Tensor(params["e_u"]),
                         1.5).item()

    numeric = fd_gradient(value, params)
    assert max_param_relative_error(analytic, numeric) <= 1e-6


# --- margin_loss


def test_margin_all_equal_gives_margin():
    e_y = Tensor(np.full(8, 1.3))
    assert margin_loss(e_y, 0.7, 25.0, 25.0).item() == pytest.approx(0.7)


def test_margin_wide_gap_inactive():
    e_y = Tensor(np.array([0.0, 0.0, 5.0, 5.0]))
    assert margin_loss(e_y, 2.0, 25.0, 25.0).item() == 0.0


def test_margin_direct_evaluation():
    # (0, 0, 1, 1), p=q=25, m=2 -> [2 - (1 - 0)]_+ = 1
    e_y = Tensor(np.array([0.0, 0.0, 1.0, 1.0]))
    assert margin_loss(e_y, 2.0, 25.0, 25.0).item() == pytest.approx(1.0)


def test_margin_small_batch_contract_error():
    with pytest.raises(ValueError, match="too small"):
        margin_loss(Tensor(np.ones(3)), 0.5, 10.0, 10.0)


def test_margin_stable_ties_and_gradient():
    # all-equal entries: stable sort puts index 0 in the bottom group and
    # index 3 in the top group; hinge active, d loss/d top = -1/n_top
    e_y = Tensor(np.zeros(4), requires_grad=True)
    grads = margin_loss(e_y, 1.0, 25.0, 25.0).backward()
    np.testing.assert_allclose(grads[e_y], [1.0, 0.0, 0.0, -1.0])


def test_margin_kink_subgradient_is_zero():
    e_y = Tensor(np.array([0.0, 0.0, 1.0, 1.0]), requires_grad=True)
    grads = margin_loss(e_y, 1.0, 25.0, 25.0).backward()  # gap == m exactly
    np.testing.assert_array_equal(grads[e_y], 0.0)


def test_margin_gradient_matches_fd_away_from_kink():
    rng = np.random.default_rng(3)
    params = {"e_y": rng.uniform(0, 1, 12)}

    leaf = Tensor(params["e_y"], requires_grad=True)
    grads = margin_loss(leaf, 5.0, 25.0, 25.0).backward()
    analytic = {"e_y": grads[leaf]}
    numeric = fd_gradient(
        lambda: margin_loss(Tensor(params["e_y"]), 5.0, 25.0, 25.0).item(),
        params)
    assert max_param_relative_error(analytic, numeric) <= 1e-6


# --- step_reg


def test_step_on_target_is_zero():
    delta = Tensor(np.full((2, 6, 3), 0.9))
    small, smooth = step_reg(delta, 0.9)
    assert small.item() == 0.0 and smooth.item() == 0.0


def test_step_ramp_smoothness_closed_form():
    # linear ramp slope c over L steps -> smooth = (L-1) c^2
    length, c = 9, 0.25
    ramp = Tensor(0.3 + c * np.arange(length, dtype=np.float64))
    _, smooth = step_reg(ramp, 0.3)
    assert smooth.item() == pytest.approx((length - 1) * c * c, rel=1e-12)


def test_step_matches_direct_summation():
    rng = np.random.default_rng(4)
    d = rng.uniform(0.1, 1.5, (3, 7, 2))
    target = 0.5
    small, smooth = step_reg(Tensor(d), target)
    want_small = ((d - target) ** 2).sum(axis=1).mean()
    want_smooth = ((d[:, 1:] - d[:, :-1]) ** 2).sum(axis=1).mean()
    assert small.item() == pytest.approx(want_small, rel=1e-12)
    assert smooth.item() == pytest.approx(want_smooth, rel=1e-12)


def test_step_needs_two_timesteps():
    with pytest.raises(ValueError, match="two timesteps"):
        step_reg(Tensor(np.ones((1, 1, 2))), 0.5)


# --- gate_reg


def test_gate_closed_limit_is_zero():
    z = Tensor(np.full((2, 4, 3), -60.0))
    assert gate_reg(z).item() == pytest.approx(0.0, abs=1e-15)


def test_gate_at_zero_is_half():
    z = Tensor(np.zeros((1, 5, 2)))
    assert gate_reg(z).item() == pytest.approx(0.5)


def test_gate_mixed_matches_direct_mean():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((2, 6, 3))
    want = (1.0 / (1.0 + np.exp(-z))).mean()
    assert gate_reg(Tensor(z)).item() == pytest.approx(want, rel=1e-12)


def test_gate_entropy_variant():
    # binary entropy of sigma(0) = 0.5 is ln 2; closed gates -> 0
    z = Tensor(np.zeros((1, 3, 1)))
    assert gate_reg(z, entropy=True).item() == pytest.approx(np.log(2.0), rel=1e-12)
    z = Tensor(np.full((1, 3, 1), -60.0))
    assert gate_reg(z, entropy=True).item() == pytest.approx(0.0, abs=1e-12)


# --- total_loss and the breakdown identity


def _unit_components():
    names = ("recon", "passivity", "margin", "step_small", "step_smooth",
             "gate_reg")
    return {n: Tensor(np.asarray(1.0)) for n in names}


def test_total_all_weights_zero_is_recon():
    cfg = LossConfig(w_pass=0.0, w_margin=0.0, w_step=0.0, w_gate=0.0)
    comps = _unit_components()
    comps["recon"] = Tensor(np.asarray(0.37))
    total, breakdown = total_loss(comps, cfg)
    assert total.item() == pytest.approx(0.37)
    assert breakdown.total == pytest.approx(0.37)


def test_total_unit_components_unit_weights():
    cfg = LossConfig(w_pass=1.0, w_margin=1.0, w_step=1.0, w_gate=1.0)
    total, breakdown = total_loss(_unit_components(), cfg)
    # recon + pass + margin + (small + smooth) + gate = 6
    assert total.item() == pytest.approx(6.0)
    assert breakdown.weighted_total(cfg) == pytest.approx(6.0)


def test_breakdown_identity_random_batch():
    rng = np.random.default_rng(6)
    cfg = LossConfig(top_pct=50.0, bottom_pct=50.0)
    model = init_model(ModelConfig(d_in=2, d_inner=4, d_state=3, n_freqs=2,
                                   f_max=2.0, k_main=3, k_gate=3), seed=6)
    x = rng.uniform(-1, 1, (4, 8, 2))
    total, breakdown = batch_losses(model.forward(x), x, cfg, step=11)
    assert breakdown.step == 11
    assert abs(total.item() - breakdown.total) <= 1e-12
    assert abs(breakdown.weighted_total(cfg) - breakdown.total) <= 1e-12


def test_window_log_energy_examples():
    assert window_log_energy(Tensor(np.zeros((1, 4, 2)))).item() == 0.0
    got = window_log_energy(Tensor(np.ones((1, 4, 2)))).item()
    assert got == pytest.approx(np.log(2.0), rel=1e-12)
    # (B,) shape out
    assert window_log_energy(Tensor(np.ones((3, 4, 2)))).shape == (3,)
