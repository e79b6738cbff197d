"""Elementary differentials, jet derivations, characters."""

from fractions import Fraction

import pytest

from flowtrees.operators import graft_gray, node_increment, pi_root_poly, coproduct_r
from flowtrees.rules import sample_trees
from flowtrees.trees import TreeVec, parse_tree, xi
from flowtrees.upsilon import (
    Character,
    DiffExpr,
    DiffFactor,
    d_a,
    ell_upsilon_tilde,
    factor_is_zero,
    partial_k,
    trivial_character,
    upsilon,
    upsilon_hat,
    upsilon_tilde,
)


def _bare(l, tilde=False, k=(0, 0), D=()):
    return DiffFactor(tilde, l, k, tuple(sorted(D)))


def test_upsilon_tilde_base_clauses(gkpz):
    assert upsilon_tilde(parse_tree("Xi", gkpz)) == DiffExpr.lift((_bare(1),))
    assert upsilon_tilde(parse_tree("Xi*Y^0", gkpz)) == DiffExpr.lift((_bare(1, tilde=True),))
    assert upsilon_tilde(parse_tree("1", gkpz)) == DiffExpr.lift((_bare(0),))


def test_upsilon_tilde_cherry(gkpz):
    cherry = parse_tree("I[(0,0)](Xi*Y^0)*I[(0,0)](Xi*Y^0)", gkpz)
    expected = DiffExpr.lift(
        (
            _bare(0, D=((0, 0), (0, 0))),
            _bare(1, tilde=True),
            _bare(1, tilde=True),
        )
    )
    assert upsilon_tilde(cherry, gkpz) == expected


def test_upsilon_tilde_gray_override(gkpz):
    t = parse_tree("gXi*Y^0", gkpz)
    assert upsilon_tilde(t) == DiffExpr.lift((_bare(1, tilde=True),))


def test_upsilon_tilde_gray_contributes_index(gkpz):
    t = parse_tree("Xi*gI[(0,1)](X^(0,0))", gkpz)
    assert upsilon_tilde(t, gkpz) == DiffExpr.lift((_bare(1, D=((0, 1),)),)).scale(0 if gkpz.p < 1 else 1)
    # with the gkpz jet orders the noise coefficient has no gradient slot
    assert upsilon_tilde(t, gkpz).is_zero()
    assert not upsilon_tilde(t, None).is_zero()


def test_upsilon_rejects_red_edges(gkpz):
    with pytest.raises(ValueError):
        upsilon_tilde(parse_tree("Y^0*I'[(0,0)](Xi)", gkpz))


def test_upsilon_diag_and_gray_vanishing(gkpz):
    t = parse_tree("I[(0,0)](Xi*Y^0)", gkpz)
    diag = upsilon(t, gkpz)
    assert all(not f.tilde for (fs, _s) in diag.terms for f in fs)
    assert upsilon(parse_tree("Xi*gI[(0,0)](X^(0,0))", gkpz), gkpz).is_zero()


def test_upsilon_hat_clauses(gkpz):
    assert upsilon_hat(parse_tree("X^(0,2)*Xi", gkpz)) == DiffExpr.one()
    assert upsilon_hat(parse_tree("1", gkpz)) == DiffExpr.one()
    t = parse_tree("Xi*I[(0,0)](Xi)", gkpz)
    assert upsilon_hat(t, gkpz) == upsilon(parse_tree("Xi", gkpz), gkpz)


def test_upsilon_marker_independent_after_diag(gkpz):
    for t in sample_trees(gkpz, 3, 15, seed=12, markers="all"):
        from flowtrees.trees import erase_markers

        assert upsilon(t, gkpz) == upsilon(erase_markers(t), gkpz)


# -- jet derivations ----------------------------------------------------------


def test_d_a_base(gkpz):
    e = DiffExpr.lift((_bare(0),))
    out = d_a(e, (0, 0), tilde=False)
    assert out == DiffExpr.lift((_bare(0, D=((0, 0),)),))


def test_d_a_tilde_separation(gkpz):
    e = DiffExpr.lift((_bare(0, tilde=True),))
    assert d_a(e, (0, 0), tilde=False).is_zero()
    assert not d_a(e, (0, 0), tilde=True).is_zero()


def test_d_a_binomial_exchange(gkpz):
    # D_a d^k = sum_j binom(k,j) d^(k-j) D_(a-j)
    e = DiffExpr.lift((_bare(0, k=(0, 2)),))
    out = d_a(e, (0, 1), tilde=False)
    expected = DiffExpr.lift((_bare(0, k=(0, 2), D=((0, 1),)),)) + DiffExpr.lift(
        (_bare(0, k=(0, 1), D=((0, 0),)),), 2
    )
    assert out == expected


def test_partial_commutes(gkpz):
    e = DiffExpr.lift((_bare(0, D=((0, 1),)), _bare(1, tilde=True)))
    a = partial_k(partial_k(e, (1, 0)), (0, 1))
    b = partial_k(partial_k(e, (0, 1)), (1, 0))
    assert a == b
    assert partial_k(e, (0, 0)) == e


def test_partial_matches_node_increment(gkpz):
    for t in sample_trees(gkpz, 3, 12, seed=13):
        for eps in [(0, 1), (1, 0)]:
            lhs = partial_k(upsilon(t, gkpz), eps, r=gkpz)
            rhs = DiffExpr.zero()
            for u, c in node_increment(t, eps).terms.items():
                rhs = rhs + upsilon(u, gkpz).scale(c)
            assert lhs == rhs


# -- rule-driven vanishing -----------------------------------------------------


def test_factor_vanishing_rules(gkpz, cubic1d):
    assert factor_is_zero(_bare(0, D=((1, 0),)), gkpz)  # time derivative
    assert factor_is_zero(_bare(0, D=((0, 2),)), gkpz)  # beyond jet order q=1
    assert factor_is_zero(_bare(1, D=((0, 1),)), gkpz)  # beyond p=0
    assert not factor_is_zero(_bare(0, D=((0, 1), (0, 1))), gkpz)  # two gradient slots
    assert factor_is_zero(_bare(0, D=((0, 1), (0, 1), (0, 1))), gkpz)  # cap 2
    # cubic drift saturates at three value slots; then outer derivatives die
    four = ((0, 0),) * 4
    assert factor_is_zero(_bare(0, D=four), cubic1d)
    assert factor_is_zero(_bare(0, k=(0, 1), D=((0, 0),) * 3), cubic1d)
    assert not factor_is_zero(_bare(0, k=(0, 1), D=((0, 0),) * 2), cubic1d)
    # constant noise coefficient: any derivative of it dies
    assert factor_is_zero(_bare(1, k=(0, 1)), cubic1d)
    assert factor_is_zero(_bare(1, D=((0, 0),)), cubic1d)


# -- characters ----------------------------------------------------------------


def test_character_unital_and_vanishing(gkpz):
    c = Character(gkpz)
    assert c.value(parse_tree("1", gkpz)) == 1
    assert c.value(parse_tree("I[(0,0)](Xi)", gkpz)) is None  # positive degree
    assert c.value(parse_tree("X^(0,1)", gkpz)) is None
    v = c.value(xi(2))
    assert v == "ell(Xi)"


def test_character_marker_and_gray_blind(gkpz):
    c = Character(gkpz)
    assert c.value(parse_tree("Xi*Y^0", gkpz)) == c.value(parse_tree("Xi", gkpz))
    assert c.value(parse_tree("X^(0,1)*Xi", gkpz)) == c.value(parse_tree("Xi*gI[(0,0)](X^(0,1))", gkpz))


def test_character_binding_round_trip(gkpz):
    c = Character(gkpz, {"ell(Xi)": Fraction(3, 4)})
    assert c.value(xi(2)) == Fraction(3, 4)
    c2 = Character.from_json(gkpz, c.to_json())
    assert c2.value(xi(2)) == Fraction(3, 4)


def test_trivial_character(gkpz):
    c = trivial_character(gkpz)
    assert c.value(parse_tree("1", gkpz)) == 1
    assert c.value(xi(2)) is None


def test_ell_upsilon_tilde_unitality_and_vanishing(gkpz):
    c = Character(gkpz)
    out = ell_upsilon_tilde(c, TreeVec.lift(parse_tree("1", gkpz)), gkpz)
    assert out == DiffExpr.lift((_bare(0),))
    # nonnegative folded degree vanishes
    out2 = ell_upsilon_tilde(c, TreeVec.lift(parse_tree("I[(0,0)](Xi)", gkpz)), gkpz)
    assert out2.is_zero()
    # negative trees keep an opaque symbol
    out3 = ell_upsilon_tilde(c, TreeVec.lift(xi(2)), gkpz)
    ((fs, syms), coeff), = out3.terms.items()
    assert syms == ("ell(Xi)",) and coeff == 1


def test_jet_derivative_is_gray_graft(gkpz):
    c = Character(gkpz)
    for t in sample_trees(gkpz, 3, 20, seed=14) + [parse_tree("X^(0,1)*Xi", gkpz)]:
        for a in [(0, 0), (0, 1)]:
            lhs = d_a(ell_upsilon_tilde(c, TreeVec.lift(t), gkpz), a, tilde=False, r=gkpz)
            rhs = ell_upsilon_tilde(c, graft_gray(a, TreeVec.lift(t)), gkpz)
            assert lhs == rhs


def test_differentials_recombine_over_extraction(gkpz):
    for t in sample_trees(gkpz, 4, 25, seed=15, max_space_k=1):
        total = DiffExpr.zero()
        for (l, rr), c in coproduct_r(TreeVec.lift(t), gkpz).terms.items():
            left = upsilon(l, gkpz)
            if left.is_zero():
                continue
            for rt, rc in pi_root_poly(TreeVec.lift(rr)).terms.items():
                total = total + left.times(upsilon_hat(rt, gkpz)).scale(c * rc)
        assert total == upsilon(t, gkpz)
