from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from jointdesign import gen
from jointdesign.model import validate_instance


def test_graph_normalizes_and_validates():
    g = gen.Graph(3, ((1, 0), (2, 1)))
    assert g.edges == ((0, 1), (1, 2))
    assert g.neighbors() == [[1], [0, 2], [1]]
    for edges in (((0, 3),), ((1, 1),), ((0, 1), (1, 0))):
        with pytest.raises(ValueError):
            gen.Graph(3, edges)


def test_graph_text_round_trip():
    g = gen.Graph(4, ((0, 1), (0, 2), (2, 3)))
    assert gen.parse_graph(gen.format_graph(g)) == g
    with pytest.raises(ValueError):
        gen.parse_graph("3 2\n0 1\n")
    with pytest.raises(ValueError):
        gen.parse_graph("3\n")


def test_independent_and_dominating():
    g = gen.Graph.complete(3)
    assert g.is_dominating([0]) and not g.is_independent([0, 1])
    star = gen.Graph(4, ((0, 1), (0, 2), (0, 3)))
    assert star.is_dominating([0]) and not star.is_dominating([1])
    assert star.is_independent([1, 2, 3])


def test_prop2_instance():
    inst = gen.gen_prop2()
    assert validate_instance(inst) == []
    np.testing.assert_array_equal(inst.matrices[0, 0], [0, 0.5, 0.5, 0])
    np.testing.assert_array_equal(inst.costs, [0, 0, 0.125])
    np.testing.assert_array_equal(inst.rewards, [1, 0.5, 0, 0])


def test_prop4_instance():
    inst = gen.gen_prop4(0.1)
    assert validate_instance(inst) == []
    np.testing.assert_allclose(inst.matrices[1], [[0.1, 0.9], [0.8, 0.2]])
    np.testing.assert_allclose(inst.prior, [0.8, 0.1, 0.1])
    for bad in (0.0, 0.5, -1.0):
        with pytest.raises(ValueError):
            gen.gen_prop4(bad)


def test_prop4_exact_from_string():
    inst = gen.gen_prop4("1/10", exact=True)
    assert inst.prior[1] == Fraction(1, 10)


def test_prop2_mechanism_exact_value():
    from jointdesign.model import check_ic, principal_utility

    inst = gen.gen_prop2(exact=True)
    e = Fraction(1, 100)
    mech = gen.prop2_mechanism(e, exact=True)
    assert principal_utility(inst, mech) == Fraction(9, 12) - 9 * e / 8
    assert check_ic(inst, mech, 1e-9).ic


def test_menu_params_divisibility():
    prm = gen.MenuHardnessParams.for_vertices(900)
    assert (prm.kbar, prm.khat, prm.delta) == (297, 100, Fraction(1, 900 * 10**5))
    with pytest.raises(ValueError):
        gen.MenuHardnessParams.for_vertices(300)


def test_menu_hardness_rows_exact():
    prm = gen.MenuHardnessParams.for_vertices(900)
    d = prm.delta
    assert Fraction(1, 2) + d + (Fraction(1, 2) - d) == 1
    assert Fraction(1, 4) + prm.khat * d + (Fraction(3, 4) - prm.khat * d) == 1


def test_menu_hardness_empty_900():
    g = gen.Graph.empty(900)
    inst = gen.gen_menu_hardness(g)
    assert (inst.num_states, inst.num_actions, inst.num_outcomes) == (900, 2701, 902)
    assert validate_instance(inst) == []
    lay = gen.menu_hardness_layout(900)
    f = inst.state_matrix(7)
    d = 1 / (900 * 10**5)
    star = f[lay["star"]]
    assert star[lay["w_star"]] == 0.5 and star[7] == pytest.approx(d) and star[lay["w_empty"]] == pytest.approx(0.5 - d)
    assert inst.costs[0] == 0 and inst.costs[lay["star"]] == 0.25 and inst.costs[lay["hat"][3]] == 1 / 16


def test_menu_hardness_fig2_example():
    # vertices A=0, B=1, C=2; edges A-B and A-C
    g = gen.Graph(3, ((0, 1), (0, 2)))
    inst = gen.gen_menu_hardness(g, require_integral=False)
    lay = gen.menu_hardness_layout(3)
    f = inst.state_matrix(0)
    assert f[lay["tilde"][1], lay["w"][1]] == 1.0
    assert f[lay["tilde"][2], lay["w"][2]] == 1.0
    assert inst.state_matrix(1)[lay["tilde"][2], lay["w_empty"]] == 1.0
    assert validate_instance(inst) == []
    with pytest.raises(ValueError):
        gen.gen_menu_hardness(g)


def test_menu_hardness_eval_rejects_bad_parts():
    g = gen.Graph(900, ((0, 1),))
    inst = gen.gen_menu_hardness(g)
    blocks = [list(range(297 * j, 297 * (j + 1))) for j in range(3)]
    with pytest.raises(ValueError):
        gen.eval_menu_hardness_mechanism(inst, g, blocks)  # 0-1 edge inside a part
    with pytest.raises(ValueError):
        gen.eval_menu_hardness_mechanism(inst, g, [blocks[0], blocks[0], blocks[2]])
    with pytest.raises(ValueError):
        gen.eval_menu_hardness_mechanism(inst, g, [blocks[1][:-1], blocks[1], blocks[2]])


def test_single_hardness_k3_shape():
    inst = gen.gen_single_hardness(gen.Graph.complete(3))
    assert (inst.num_states, inst.num_actions, inst.num_outcomes) == (6, 30, 4)
    assert validate_instance(inst) == []
    assert inst.costs[0] == 0
    np.testing.assert_array_equal(inst.costs[:5], [0, 0.5, 0.5, 0.5, 0.5])


def test_single_hardness_off_block_rows_hit_dummy():
    inst = gen.gen_single_hardness(gen.Graph.complete(3))
    f = inst.matrices
    for i in range(6):
        for b in range(6):
            if b == i:
                continue
            for t in range(1, 6):
                if i >= 3 and b == i:
                    continue
                assert f[i, gen.single_hardness_action(b, t), 3] == 1.0


def test_single_hardness_own_block():
    g = gen.Graph(3, ((0, 1),))
    inst = gen.gen_single_hardness(g)
    f = inst.matrices
    # a4 of block i under theta_i lands on w_i
    for i in range(3):
        assert f[i, gen.single_hardness_action(i, 4), i] == 1.0
    # vertex 0 has one neighbour; missing slots point back to itself
    assert f[0, gen.single_hardness_action(0, 1), 1] == 1.0
    assert f[0, gen.single_hardness_action(0, 2), 0] == 1.0
    # second half: the free action reaches the matching vertex outcome
    assert f[4, gen.single_hardness_action(4, 5), 1] == 1.0


def test_single_hardness_degree_limit():
    with pytest.raises(ValueError):
        gen.gen_single_hardness(gen.Graph.complete(5))


def test_single_hardness_closed_forms():
    k3 = gen.gen_single_hardness(gen.Graph.complete(3), exact=True)
    rep = gen.eval_single_hardness_mechanism(k3, gen.Graph.complete(3), [0])
    assert rep.utility == Fraction(2, 3) == rep.closed_form
    star_g = gen.Graph(4, ((0, 1), (0, 2), (0, 3)))
    star = gen.gen_single_hardness(star_g, exact=True)
    assert gen.eval_single_hardness_mechanism(star, star_g, [0]).utility == Fraction(11, 16)
    full = gen.eval_single_hardness_mechanism(star, star_g, range(4))
    assert full.utility == Fraction(1, 2)
    with pytest.raises(ValueError):
        gen.eval_single_hardness_mechanism(star, star_g, [1])


def test_single_hardness_sparse_matches_dense():
    g = gen.Graph(70, tuple((i, i + 1) for i in range(69)))
    sparse = gen.gen_single_hardness(g)
    assert sparse.is_sparse
    dense = gen.gen_single_hardness(gen.Graph(3, ((0, 1), (1, 2))))
    assert not dense.is_sparse
    assert validate_instance(sparse) == []
    rep = gen.eval_single_hardness_mechanism(sparse, g, [v for v in range(70) if v % 3 == 1] + [69])
    assert rep.utility == pytest.approx(rep.closed_form, abs=1e-12)


def test_random_deterministic_and_valid():
    a = gen.gen_random(3, 4, 2, seed=9)
    b = gen.gen_random(3, 4, 2, seed=9)
    assert a == b
    assert not a == gen.gen_random(3, 4, 2, seed=10)
    for seed in range(100):
        inst = gen.gen_random(1 + seed % 4, 1 + seed % 3, 1 + seed % 5, seed=seed)
        assert validate_instance(inst) == []
        assert np.all(np.diff(inst.costs) >= 0)


def test_random_rejects_empty():
    with pytest.raises(ValueError):
        gen.gen_random(0, 2, 2, seed=0)
