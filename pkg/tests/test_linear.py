from __future__ import annotations

import numpy as np
import pytest

from jointdesign import gen, linear
from jointdesign.model import (
    Instance,
    Mechanism,
    check_ic,
    explicit_payments,
    principal_utility,
)

import reference as ref

# value of the direct scheme for alpha = 0.5 on gen_random(3, 3, 2, seed=7),
# computed by the loop-based reference LP in tests/reference.py
FIXED_LINEAR_SEED7 = 0.16161153622187038


def test_grid_points():
    np.testing.assert_allclose(linear.Grid(0.25).points, [0, 0.25, 0.5, 0.75, 1])
    pts = linear.Grid(0.3).points
    np.testing.assert_allclose(pts, [0, 0.3, 0.6, 0.9, 1.0])
    assert linear.Grid(1.0).points.tolist() == [0.0, 1.0]
    assert linear.Grid(2.0).points.tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        linear.Grid(0.0)


def test_grid_nesting_exact_membership():
    coarse = set(linear.Grid(0.1).points.tolist())
    fine = set(linear.Grid(0.01).points.tolist())
    assert coarse <= fine


def test_fixed_alpha_one_is_zero():
    inst = gen.gen_random(3, 3, 2, seed=1)
    _, v = linear.solve_signaling_for_fixed_linear(inst, 1.0)
    assert v == pytest.approx(0.0, abs=1e-12)


def test_fixed_alpha_zero_optout_best():
    mats = np.array([[[0.0, 1.0], [0.5, 0.5]], [[0.2, 0.8], [1.0, 0.0]]])
    inst = Instance([0.4, 0.6], [0.0, 0.3], [0.0, 1.0], mats)
    _, v = linear.solve_signaling_for_fixed_linear(inst, 0.0)
    assert v == pytest.approx(0.4 * 1.0 + 0.6 * 0.8, abs=1e-12)


def test_fixed_alpha_matches_reference():
    inst = gen.gen_random(3, 3, 2, seed=7)
    _, v = linear.solve_signaling_for_fixed_linear(inst, 0.5)
    assert v == pytest.approx(FIXED_LINEAR_SEED7, abs=1e-9)
    assert ref.direct_single_value(inst, 0.5 * inst.rewards) == pytest.approx(FIXED_LINEAR_SEED7, abs=1e-9)


def test_fixed_alpha_label_permutation_invariant():
    inst = gen.gen_random(4, 3, 3, seed=13)
    _, v = linear.solve_signaling_for_fixed_linear(inst, 0.5)
    perm = [0, 3, 1, 2]  # keep the opt-out first
    permuted = Instance(inst.prior, inst.costs[perm], inst.rewards, inst.matrices[:, perm])
    _, w = linear.solve_signaling_for_fixed_linear(permuted, 0.5)
    assert v == pytest.approx(w, abs=1e-9)


def test_fixed_alpha_range():
    with pytest.raises(ValueError):
        linear.solve_signaling_for_fixed_linear(gen.gen_prop4(0.1), 1.5)


def test_direct_batch_matches_reference():
    inst = gen.gen_random(3, 2, 3, seed=2)
    contracts = np.array([[0.0, 0.0], [0.1, 0.3], [0.5, 0.2]])
    vals, pis = linear.direct_lp_batch(inst, contracts)
    for p, v in zip(contracts, vals):
        assert v == pytest.approx(ref.direct_single_value(inst, p), abs=1e-9)
    np.testing.assert_allclose(pis.sum(axis=2), 1.0, atol=1e-9)


def test_single_linear_zero_rewards():
    inst = gen.gen_random(3, 3, 2, seed=1, reward_bound=1.0)
    zero = Instance(inst.prior, inst.costs, np.zeros(3), inst.matrices)
    rep = linear.solve_single_linear(zero, 0.1)
    assert rep.utility == pytest.approx(0.0, abs=1e-12)
    assert rep.diagnostics["alpha"] == 0.0


def test_single_linear_refinement():
    inst = gen.gen_random(3, 3, 2, seed=3)
    coarse = linear.solve_single_linear(inst, 0.1).utility
    fine = linear.solve_single_linear(inst, 0.01).utility
    assert fine >= coarse - 1e-9


def test_single_linear_guarantee_two_state():
    inst = gen.gen_random(3, 3, 2, seed=11)
    rough = linear.solve_single_linear(inst, 0.05).utility
    proxy = linear.solve_single_linear(inst, 0.001).utility
    assert rough >= proxy - 0.05 * inst.scale


def test_single_linear_epsilon_one():
    inst = gen.gen_prop4(0.1)
    rep = linear.solve_single_linear(inst, 1.0)
    assert set(rep.diagnostics["grid_values"]) == {0.0, 1.0}
    assert rep.diagnostics["grid_values"][1.0] == pytest.approx(0.0, abs=1e-12)
    assert rep.diagnostics.get("scaled_bound") is True


def test_menu_at_least_single():
    for seed in range(5):
        inst = gen.gen_random(3, 3, 3, seed=seed)
        single = linear.solve_single_linear(inst, 0.1).utility
        menu = linear.solve_menu_linear(inst, 0.1).utility
        assert menu >= single - 1e-9


def test_menu_signal_count_and_ic():
    inst = gen.gen_random(3, 2, 2, seed=4)
    rep = linear.solve_menu_linear(inst, 0.25)
    assert rep.mechanism.scheme.num_signals <= 3 * (4 + 1)
    expl = Mechanism(rep.mechanism.scheme, explicit_payments(inst, rep.mechanism.payments),
                     rep.mechanism.recommendations)
    assert check_ic(inst, expl, 1e-7).ic
    assert check_ic(inst, rep.mechanism, 1e-7).ic


def test_menu_zero_costs_equals_zero_pay_welfare():
    inst = gen.gen_random(3, 3, 2, seed=8)
    free = Instance(inst.prior, np.zeros(3), inst.rewards, inst.matrices)
    rep = linear.solve_menu_linear(free, 0.1)
    best = sum(free.prior[t] * max(free.matrices[t] @ free.rewards) for t in range(2))
    assert rep.utility == pytest.approx(best, abs=1e-9)


def test_menu_guarantee_nested():
    inst = gen.gen_random(3, 3, 2, seed=6)
    rough = linear.solve_menu_linear(inst, 0.05).utility
    proxy = linear.solve_menu_linear(inst, 0.005).utility
    assert rough >= proxy - 0.05 * inst.scale


def test_menu_pruning_unused_signals():
    inst = gen.gen_random(3, 3, 2, seed=9)
    rep = linear.solve_menu_linear(inst, 0.2)
    mech = rep.mechanism
    used = [j for j in range(mech.scheme.num_signals) if mech.scheme.pi[:, j].max() > 0]
    from jointdesign.model import LinearMenu, SignalingScheme

    pruned = Mechanism(
        SignalingScheme(tuple(mech.scheme.signals[j] for j in used), mech.scheme.pi[:, used]),
        LinearMenu(mech.payments.alpha[used]),
        tuple(mech.recommendations[j] for j in used),
    )
    assert principal_utility(inst, pruned) == pytest.approx(principal_utility(inst, mech), abs=1e-12)


def test_single_linear_ic():
    inst = gen.gen_random(4, 3, 3, seed=2)
    rep = linear.solve_single_linear(inst, 0.05)
    assert check_ic(inst, rep.mechanism, 1e-7).ic
