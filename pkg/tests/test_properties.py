"""Randomized invariants checked with hypothesis."""

from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from jointdesign import amb, cli, gen, linear, oracle
from jointdesign.io import dump_instance, dump_mechanism, load_instance, load_mechanism
from jointdesign.lp import LpProblem, solve_lp
from jointdesign.model import (
    Ambiguous,
    LinearMenu,
    LinearSingle,
    Mechanism,
    Menu,
    SignalingScheme,
    Single,
    best_response,
    check_ic,
    make_direct,
    posterior,
    principal_utility,
    with_best_responses,
)

import reference as ref

FAST = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

sizes = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
seeds = st.integers(0, 2**31 - 1)


def random_instance(size, seed):
    n, m, k = size
    return gen.gen_random(n, m, k, seed=seed)


def random_scheme(rng, k, num_signals, sparsity=0.3):
    pi = rng.dirichlet(np.ones(num_signals), size=k)
    pi[rng.random(pi.shape) < sparsity] = 0.0
    for t in range(k):
        if pi[t].sum() == 0:
            pi[t, rng.integers(num_signals)] = 1.0
    pi /= pi.sum(axis=1, keepdims=True)
    return SignalingScheme(tuple(f"s{j}" for j in range(num_signals)), pi)


def random_payments(rng, kind, inst, num_signals):
    k, m = inst.num_states, inst.num_outcomes
    if kind == "ambiguous":
        return Ambiguous(rng.uniform(0, 1, (num_signals, k, m)))
    if kind == "menu":
        return Menu(rng.uniform(0, 1, (num_signals, m)))
    if kind == "single":
        return Single(rng.uniform(0, 1, m))
    if kind == "linear-single":
        return LinearSingle(float(rng.uniform()))
    return LinearMenu(rng.uniform(0, 1, num_signals))


kinds = st.sampled_from(["ambiguous", "menu", "single", "linear-single", "linear-menu"])


@FAST
@given(size=sizes, seed=seeds, num_signals=st.integers(1, 6))
def test_bayes_plausibility(size, seed, num_signals):
    inst = random_instance(size, seed)
    scheme = random_scheme(np.random.default_rng(seed), inst.num_states, num_signals)
    acc = np.zeros(inst.num_states)
    for s in scheme.signals:
        post = posterior(inst, scheme, s)
        if post.defined:
            acc += post.total * post.belief
            assert post.belief.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(post.mass >= 0)
    np.testing.assert_allclose(acc, inst.prior, atol=1e-9)


@FAST
@given(size=sizes, seed=seeds)
def test_best_response_optimal_and_deterministic(size, seed):
    inst = random_instance(size, seed)
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(np.ones(inst.num_states)) * rng.uniform(0.1, 1)
    pay = rng.uniform(0, 1, (inst.num_states, inst.num_outcomes))
    if rng.random() < 0.3:
        pay[:] = 0.0  # ties are common at zero pay
    post = posterior(inst, SignalingScheme(("s",), np.ones((inst.num_states, 1))), "s")
    post = type(post)("s", x, x.sum(), x / x.sum())
    a = best_response(inst, post, pay)
    assert a == best_response(inst, post, pay)
    u, _ = inst.action_values(x, pay)
    assert np.all(u <= u[a] + 1e-9)
    assert a == ref.brute_best_response(inst, x, pay)


@FAST
@given(size=sizes, seed=seeds, num_signals=st.integers(1, 8), kind=st.sampled_from(["ambiguous", "single"]))
def test_make_direct_preserves_utility(size, seed, num_signals, kind):
    inst = random_instance(size, seed)
    rng = np.random.default_rng(seed)
    scheme = random_scheme(rng, inst.num_states, num_signals)
    mech = with_best_responses(inst, Mechanism(scheme, random_payments(rng, kind, inst, num_signals)))
    out = make_direct(inst, mech)
    assert out.scheme.num_signals <= inst.num_actions
    assert principal_utility(inst, out) == pytest.approx(principal_utility(inst, mech), abs=1e-9)
    assert check_ic(inst, out, 1e-9).ic


@FAST
@given(size=sizes, seed=seeds, alpha=st.floats(0, 1))
def test_linear_single_equals_explicit(size, seed, alpha):
    inst = random_instance(size, seed)
    scheme = random_scheme(np.random.default_rng(seed), inst.num_states, 3)
    lin = with_best_responses(inst, Mechanism(scheme, LinearSingle(alpha)))
    expl = with_best_responses(inst, Mechanism(scheme, Single(alpha * inst.rewards)))
    assert lin.recommendations == expl.recommendations
    assert principal_utility(inst, lin) == pytest.approx(principal_utility(inst, expl), abs=1e-12)
    a, b = check_ic(inst, lin), check_ic(inst, expl)
    assert abs(a.max_violation - b.max_violation) <= 1e-12 and a.ir_ok == b.ir_ok


@FAST
@given(eps=st.sampled_from([0.5, 0.25, 0.2, 0.1, 0.05, 0.02, 0.01]))
def test_grid_nesting(eps):
    coarse = set(linear.Grid(eps).points.tolist())
    fine = set(linear.Grid(eps / 2).points.tolist())
    assert coarse <= fine
    assert 0.0 in coarse and 1.0 in coarse


@SLOW
@given(size=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)), seed=seeds,
       eps=st.sampled_from([0.5, 0.2, 0.1]))
def test_linear_values_monotone_under_refinement(size, seed, eps):
    inst = random_instance(size, seed)
    assert linear.solve_single_linear(inst, eps / 2).utility >= linear.solve_single_linear(inst, eps).utility - 1e-9
    assert linear.solve_menu_linear(inst, eps / 2).utility >= linear.solve_menu_linear(inst, eps).utility - 1e-9


@FAST
@given(size=sizes, seed=seeds, exact=st.booleans())
def test_instance_serialization_round_trip(size, seed, exact):
    inst = random_instance(size, seed)
    if exact:
        from jointdesign.model import Instance, to_fraction_array

        f = to_fraction_array
        mats = f(np.round(inst.matrices, 3))
        mats[..., -1] = 1 - mats[..., :-1].sum(axis=-1)
        prior = f(np.round(inst.prior, 3))
        prior[-1] = 1 - prior[:-1].sum()
        inst = Instance(prior, f(np.round(inst.costs, 3)), f(np.round(inst.rewards, 3)), mats)
    text = dump_instance(inst)
    back = load_instance(text)
    assert back == inst
    assert dump_instance(back) == text


@FAST
@given(size=sizes, seed=seeds, kind=kinds, num_signals=st.integers(1, 5), recs=st.booleans())
def test_mechanism_serialization_round_trip(size, seed, kind, num_signals, recs):
    inst = random_instance(size, seed)
    rng = np.random.default_rng(seed)
    mech = Mechanism(random_scheme(rng, inst.num_states, num_signals),
                     random_payments(rng, kind, inst, num_signals))
    if recs:
        mech = with_best_responses(inst, mech)
    text = dump_mechanism(inst, mech)
    back = load_mechanism(inst, text)
    assert back == mech
    assert dump_mechanism(inst, back) == text


@pytest.fixture(scope="module")
def verify_instance(tmp_path_factory):
    inst = gen.gen_random(3, 3, 2, seed=99)
    path = tmp_path_factory.mktemp("verify") / "inst.json"
    path.write_text(dump_instance(inst))
    return inst, str(path)


@FAST
@given(seed=seeds, num_signals=st.integers(1, 4), kind=kinds)
def test_verify_exit_code_agrees_with_check_ic(verify_instance, seed, num_signals, kind):
    inst, path = verify_instance
    rng = np.random.default_rng(seed)
    mech = Mechanism(random_scheme(rng, inst.num_states, num_signals), random_payments(rng, kind, inst, num_signals),
                     tuple(int(a) for a in rng.integers(0, inst.num_actions, num_signals)))
    if rng.random() < 0.5:
        mech = with_best_responses(inst, mech)
    out = io.StringIO()
    code = cli.run(["verify", "--instance", path, "--mechanism", "-", "--tol", "1e-9"],
                   stdin=io.StringIO(dump_mechanism(inst, mech)), stdout=out, stderr=io.StringIO())
    assert code in (0, 1)
    assert (code == 0) == check_ic(inst, mech, 1e-9).ic


@FAST
@given(seed=seeds, n=st.integers(1, 30), rows=st.integers(1, 20))
def test_lp_feasible_and_deterministic(seed, n, rows):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (rows, n))
    prob = LpProblem(rng.uniform(-1, 1, n), upper=np.ones(n))
    prob.add_rows(a, "<=", rng.uniform(0, 1, rows))  # x = 0 is feasible
    sol = solve_lp(prob)
    assert sol.status == "optimal"
    assert sol.residual <= 1e-7
    assert solve_lp(prob).value == pytest.approx(sol.value, abs=1e-9)


@SLOW
@given(size=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)), seed=seeds,
       num_signals=st.integers(1, 5))
def test_relaxation_upper_bounds_ic_mechanisms(size, seed, num_signals):
    inst = random_instance(size, seed)
    rel = amb.solve_amb_relaxation(inst)
    rng = np.random.default_rng(seed)
    for kind in ("ambiguous", "menu", "single"):
        mech = with_best_responses(inst, Mechanism(random_scheme(rng, inst.num_states, num_signals),
                                                   random_payments(rng, kind, inst, num_signals)))
        assert principal_utility(inst, mech) <= rel.value + 1e-7


@SLOW
@given(size=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)), seed=seeds)
def test_solve_amb_is_ic_and_ir(size, seed):
    inst = random_instance(size, seed)
    rep = amb.solve_amb(inst, 0.05)
    ic = check_ic(inst, rep.mechanism, 1e-9)
    assert ic.ic and ic.ir_ok
    assert rep.utility >= rep.lp_value - 0.05 * inst.scale - 1e-9


@SLOW
@given(size=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)), seed=seeds,
       K=st.integers(1, 3))
def test_kuniform_output_ic(size, seed, K):
    inst = random_instance(size, seed)
    rep = oracle.solve_kuniform(inst, oracle.KUniformParams(K, 2.0))
    assert check_ic(inst, rep.mechanism, 1e-7).ic
    assert rep.utility <= amb.solve_amb_relaxation(inst).value + 1e-6


def test_simulate_unbiased_over_seeds():
    inst = gen.gen_random(3, 3, 3, seed=17)
    rep = linear.solve_single_linear(inst, 0.1)
    target = rep.utility
    hits = 0
    for seed in range(30):
        mean, se = oracle.simulate(inst, rep.mechanism, 20_000, seed=seed)
        hits += abs(mean - target) <= 2.576 * se
    assert hits >= 27
