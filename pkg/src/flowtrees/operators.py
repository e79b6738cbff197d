"""Linear and bilinear operators on decorated trees.

All maps are pure functions from TreeVec/TensorVec to TreeVec/TensorVec.
Infinite Taylor sums (the localisation map and the root-extraction coproduct)
are truncated at the rule's ``k_cap`` with an explicit truncation report.

Marker conventions, fixed here once and used consistently by every operator:

* the red graft attaches an ``I'`` edge at a v=1 node and flips that node's
  marker to 0 in the output;
* the gray grafts attach at v=1 nodes without flipping;
* ``coproduct_a`` / ``coproduct_1`` mark the severed node by multiplying a
  v=1 factor into the right leg (marker overflow annihilates the term);
* ``coproduct_r`` keeps the root marker on the left leg.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .trees import (
    KIND_GRAY,
    KIND_I,
    KIND_IDOT,
    NOISE_GRAY_XI,
    NOISE_NONE,
    NOISE_XI,
    Edge,
    MultiIndex,
    Rule,
    TensorVec,
    Tree,
    TreeVec,
    edge,
    erase_markers,
    mi_add,
    mi_binom,
    mi_factorial,
    mi_iter_weighted,
    mi_leq,
    mi_sub,
    mi_weight,
    mi_zero,
    node,
    degree,
    tree_product,
)


@dataclass
class OperatorReport:
    """Term counts plus whether any capped sum was actually clipped."""

    input_terms: int = 0
    output_terms: int = 0
    k_cap_hit: bool = False
    a_cap_hit: bool = False


def _residue(t: Tree) -> Tree:
    return Tree(t.noise, t.k, t.v, ())


def _marker(dim: int, v: int) -> Tree:
    return Tree(NOISE_NONE, mi_zero(dim), v, ())


def _with_children(t: Tree, children) -> Tree:
    return node(t.noise, t.k, t.v, children)


def _replace_child(t: Tree, i: int, sub: TreeVec) -> TreeVec:
    """Linear substitution of child i of t by each term of ``sub``."""
    out = TreeVec()
    e = t.children[i]
    rest = t.children[:i] + t.children[i + 1 :]
    for u, c in sub.terms.items():
        ne = edge(e.kind, e.a, u)
        if ne is not None:
            out.add_term(_with_children(t, rest + (ne,)), c)
    return out


# ---------------------------------------------------------------------------
# red graft and friends


def _graft_red_tree(s: Tree, a: MultiIndex, t: Tree, root_only: bool, skip_root: bool) -> TreeVec:
    out = TreeVec()
    if t.v == 1 and not skip_root:
        e = edge(KIND_IDOT, a, s)
        if e is not None:
            out.add_term(node(t.noise, t.k, 0, t.children + (e,)), 1)
    if not root_only:
        for i, e in enumerate(t.children):
            if e.kind == KIND_GRAY:
                continue
            out = out + _replace_child(t, i, _graft_red_tree(s, a, e.child, False, False))
    return out


def graft_red(s: TreeVec, a: MultiIndex, t: TreeVec) -> TreeVec:
    """Attach I'_a(s) at every v=1 node of t, flipping the node's marker."""
    out = TreeVec()
    for st, cs in s.terms.items():
        for tt, ct in t.terms.items():
            for u, c in _graft_red_tree(st, a, tt, False, False).terms.items():
                out.add_term(u, c * cs * ct)
    return out


def graft_red_root(s: TreeVec, a: MultiIndex, t: TreeVec) -> TreeVec:
    """Root clause of the red graft alone."""
    out = TreeVec()
    for st, cs in s.terms.items():
        for tt, ct in t.terms.items():
            for u, c in _graft_red_tree(st, a, tt, True, False).terms.items():
                out.add_term(u, c * cs * ct)
    return out


def graft_red_nonroot(s: TreeVec, a: MultiIndex, t: TreeVec) -> TreeVec:
    out = TreeVec()
    for st, cs in s.terms.items():
        for tt, ct in t.terms.items():
            for u, c in _graft_red_tree(st, a, tt, False, True).terms.items():
                out.add_term(u, c * cs * ct)
    return out


def attach_red_at_root(s: TreeVec, a: MultiIndex, t: TreeVec) -> TreeVec:
    """Unconditionally hang I'_a(s) off the root of t (no marker gate, no flip)."""
    out = TreeVec()
    for st, cs in s.terms.items():
        for tt, ct in t.terms.items():
            e = edge(KIND_IDOT, a, st)
            if e is not None:
                out.add_term(_with_children(tt, tt.children + (e,)), cs * ct)
    return out


def insertion(planted: TreeVec, t: TreeVec) -> TreeVec:
    """I'_a(s) |-> s red-grafted with decoration a; zero on other shapes."""
    out = TreeVec()
    for pt, c in planted.terms.items():
        if (
            pt.noise == NOISE_NONE
            and not any(pt.k)
            and len(pt.children) == 1
            and pt.children[0].kind == KIND_IDOT
        ):
            e = pt.children[0]
            sub = graft_red(TreeVec.lift(e.child), e.a, t).scale(c)
            out = out + sub
    return out


# ---------------------------------------------------------------------------
# gray grafts


def _graft_gray_k_tree(a: MultiIndex, k: MultiIndex, t: Tree) -> TreeVec:
    out = TreeVec()
    if t.v == 1:
        leaf = Tree(NOISE_NONE, tuple(k), 0, ())
        e = edge(KIND_GRAY, a, leaf)
        out.add_term(_with_children(t, t.children + (e,)), 1)
    for i, e in enumerate(t.children):
        if e.kind == KIND_GRAY:
            continue
        out = out + _replace_child(t, i, _graft_gray_k_tree(a, k, e.child))
    return out


def graft_gray_k(a: MultiIndex, k: MultiIndex, t: TreeVec) -> TreeVec:
    """Attach the gray leaf gI_a(X^k) at every v=1 node (no marker flip)."""
    return t.map_trees(lambda u: _graft_gray_k_tree(a, k, u))


def _graft_gray_tree(a: MultiIndex, t: Tree) -> TreeVec:
    out = TreeVec()
    if t.v == 1:
        for j in mi_iter_weighted(len(a), Fraction(1), sum(t.k)):
            if not mi_leq(j, t.k):
                continue
            aj = mi_sub(a, j)
            if aj is None:
                continue
            leaf = Tree(NOISE_NONE, tuple(j), 0, ())
            e = edge(KIND_GRAY, aj, leaf)
            stripped = node(t.noise, mi_sub(t.k, j), t.v, t.children + (e,))
            out.add_term(stripped, mi_binom(t.k, j))
    for i, e in enumerate(t.children):
        if e.kind == KIND_GRAY:
            continue
        out = out + _replace_child(t, i, _graft_gray_tree(a, e.child))
    return out


def graft_gray(a: MultiIndex, t: TreeVec) -> TreeVec:
    """Binomial gray graft: splits the node polynomial into the gray payload."""
    return t.map_trees(lambda u: _graft_gray_tree(a, u))


# ---------------------------------------------------------------------------
# localisation map


def _m_loc_tree(t: Tree, r: Rule, report: OperatorReport) -> TreeVec:
    report.k_cap_hit = True  # the node sums are genuinely infinite
    children_vec = TreeVec.lift(_residue(t))
    for e in t.children:
        if e.kind == KIND_GRAY:
            children_vec = children_vec.map_trees(
                lambda u, e=e: TreeVec.lift(_with_children(u, u.children + (e,)))
            )
        else:
            sub = _m_loc_tree(e.child, r, report)
            children_vec = children_vec.map_trees(
                lambda u, e=e, sub=sub: _attach_all(u, e, sub)
            )
    out = TreeVec()
    for u, c in children_vec.terms.items():
        for k in mi_iter_weighted(t.dim, r.lam, r.k_cap):
            out.add_term(
                node(u.noise, mi_add(u.k, k), u.v, u.children),
                Fraction(c, mi_factorial(k)),
            )
    return out


def _attach_all(u: Tree, e: Edge, sub: TreeVec) -> TreeVec:
    out = TreeVec()
    for w, c in sub.terms.items():
        ne = edge(e.kind, e.a, w)
        if ne is not None:
            out.add_term(_with_children(u, u.children + (ne,)), c)
    return out


def m_loc(t: TreeVec, r: Rule, report: OperatorReport | None = None) -> TreeVec:
    """Insert X^k/k! at every node, truncated to |k|_s <= k_cap per node."""
    rep = report if report is not None else OperatorReport()
    rep.input_terms = len(t)
    out = t.map_trees(lambda u: _m_loc_tree(u, r, rep))
    rep.output_terms = len(out)
    return out


# ---------------------------------------------------------------------------
# cutting coproducts


def _delta_a_tree(a: MultiIndex, t: Tree, top: bool = False) -> TensorVec:
    dim = t.dim
    res = _residue(t)
    if t.is_single_node():
        if not top:
            return TensorVec.zero()  # only edges are cut below the root call
        # base clauses: bare nodes copy, a noise node marks the right leg
        if res.noise == NOISE_XI:
            return TensorVec.lift(res, _marker(dim, res.v + 1) if res.v + 1 <= 1 else None)
        return TensorVec.lift(res, res)
    out = TensorVec()
    passives: list[Tree] = []
    plant_cuts: list[TensorVec] = []
    for e in t.children:
        plant = node(NOISE_NONE, mi_zero(dim), 0, (e,))
        passives.append(plant)
        if e.kind == KIND_GRAY:
            plant_cuts.append(TensorVec.zero())
            continue
        # an uncut edge turns plain in the right leg (I' loses its prime)
        cut = _delta_a_tree(a, e.child, top=False).map_legs(
            right_fn=lambda rr, e=e: TreeVec.lift(_plant(KIND_I, e.a, rr, dim))
        )
        if e.kind == KIND_IDOT and e.a == tuple(a):
            cut = cut + TensorVec.lift(e.child, _marker(dim, 1))
        plant_cuts.append(cut)
    # Leibniz: exactly one edge factor is cut, the rest rides along right.
    all_factors = [res] + passives
    cuts = [TensorVec.zero()] + plant_cuts
    for i, cut in enumerate(cuts):
        if cut.is_zero():
            continue
        rest: Tree | None = None
        ok = True
        for j, f in enumerate(all_factors):
            if j == i:
                continue
            rest = f if rest is None else tree_product(rest, f)
            if rest is None:
                ok = False
                break
        if not ok:
            continue
        if rest is None:
            out = out + cut
        else:
            out = out + cut.map_legs(right_fn=lambda rr, rest=rest: TreeVec.lift(tree_product(rr, rest)))
    return out


def _plant(kind: str, a: MultiIndex, child: Tree, dim: int) -> Tree | None:
    e = edge(kind, a, child)
    if e is None:
        return None
    return node(NOISE_NONE, mi_zero(dim), 0, (e,))


def coproduct_a(a: MultiIndex, t: TreeVec) -> TensorVec:
    """Cut the single red edge carrying decoration a (dual to the red graft)."""
    out = TensorVec()
    for tt, c in t.terms.items():
        out = out + _delta_a_tree(a, tt, top=True).scale(c)
    return out


def _delta_1_tree(t: Tree, top: bool = False) -> TensorVec:
    dim = t.dim
    res = _residue(t)
    if t.is_single_node():
        if not top:
            return TensorVec.zero()
        if res.noise == NOISE_XI:
            return TensorVec.lift(res, _marker(dim, res.v + 1) if res.v + 1 <= 1 else None)
        return TensorVec.lift(res, res)
    passives: list[Tree] = []
    cuts: list[TensorVec] = [TensorVec.zero()]
    for e in t.children:
        plant = node(NOISE_NONE, mi_zero(dim), 0, (e,))
        passives.append(plant)
        if e.kind != KIND_I:
            cuts.append(TensorVec.zero())
            continue
        inner = _delta_1_tree(e.child, top=False).map_legs(
            right_fn=lambda rr, e=e: TreeVec.lift(_plant(e.kind, e.a, rr, dim))
        )
        red = _plant(KIND_IDOT, e.a, e.child, dim)
        if red is not None:
            inner = inner + TensorVec.lift(red, _marker(dim, 1))
        cuts.append(inner)
    out = TensorVec()
    all_factors = [res] + passives
    for i, cut in enumerate(cuts):
        if cut.is_zero():
            continue
        rest: Tree | None = None
        ok = True
        for j, f in enumerate(all_factors):
            if j == i:
                continue
            rest = f if rest is None else tree_product(rest, f)
            if rest is None:
                ok = False
                break
        if not ok:
            continue
        if rest is None:
            out = out + cut
        else:
            out = out + cut.map_legs(right_fn=lambda rr, rest=rest: TreeVec.lift(tree_product(rr, rest)))
    return out


def coproduct_1(t: TreeVec) -> TensorVec:
    """Elementary cuts: each edge in turn goes red into the left leg, the
    severed node goes blue in the right leg.

    In this node-flag representation only integration edges are cut; the
    single-node base clauses fire for single-node input trees only."""
    out = TensorVec()
    for tt, c in t.terms.items():
        out = out + _delta_1_tree(tt, top=True).scale(c)
    return out


# ---------------------------------------------------------------------------
# root extraction coproduct


def _delta_r_tree(t: Tree, r: Rule, report: OperatorReport) -> TensorVec:
    dim = t.dim
    one = _marker(dim, 0)
    # residue: noise splits, polynomial splits binomially, marker stays left
    res = TensorVec.lift(_marker(dim, t.v), one)
    if t.noise == NOISE_XI:
        xi_left = Tree(NOISE_XI, mi_zero(dim), 0, ())
        gray_left = Tree(NOISE_GRAY_XI, mi_zero(dim), 0, ())
        res = res.product(
            TensorVec.lift(gray_left, xi_left) + TensorVec.lift(xi_left, one)
        )
    elif t.noise != NOISE_NONE:
        res = res.product(TensorVec.lift(Tree(t.noise, mi_zero(dim), 0, ()), one))
    if any(t.k):
        poly = TensorVec()
        for j in mi_iter_weighted(dim, Fraction(1), sum(t.k)):
            if not mi_leq(j, t.k):
                continue
            poly.add_term(
                Tree(NOISE_NONE, j, 0, ()),
                Tree(NOISE_NONE, mi_sub(t.k, j), 0, ()),
                mi_binom(t.k, j),
            )
        res = res.product(poly)
    out = res
    for e in t.children:
        if e.kind == KIND_GRAY:
            plant = node(NOISE_NONE, mi_zero(dim), 0, (e,))
            out = out.product(TensorVec.lift(plant, one))
            continue
        plant_cop = TensorVec()
        if e.kind == KIND_I:
            inner = _delta_r_tree(e.child, r, report)
            plant_cop = plant_cop + inner.map_legs(
                left_fn=lambda l, e=e: TreeVec.lift(_plant(e.kind, e.a, l, dim))
            )
        report.k_cap_hit = True
        for j in mi_iter_weighted(dim, r.lam, r.k_cap):
            gray_leaf = Tree(NOISE_NONE, j, 0, ())
            gp = _plant(KIND_GRAY, e.a, gray_leaf, dim)
            rp = _plant(e.kind, mi_add(e.a, j), e.child, dim)
            plant_cop.add_term(gp, rp, Fraction(1, mi_factorial(j)))
        out = out.product(plant_cop)
    return out


def coproduct_r(t: TreeVec, r: Rule, report: OperatorReport | None = None) -> TensorVec:
    """Extract root subtrees to the left leg, leaving Taylor-shifted remainders.

    Red edges are never traversed into the left leg; their child always stays
    in the right leg behind a gray marker.  Node polynomials split binomially.
    """
    rep = report if report is not None else OperatorReport()
    rep.input_terms = len(t)
    out = TensorVec()
    for tt, c in t.terms.items():
        out = out + _delta_r_tree(tt, r, rep).scale(c)
    rep.output_terms = len(out)
    return out


# ---------------------------------------------------------------------------
# scale derivative


def _up_mu_tree(t: Tree) -> TreeVec:
    out = TreeVec()
    for i, e in enumerate(t.children):
        if e.kind == KIND_I:
            ne = edge(KIND_IDOT, e.a, e.child)
            if ne is not None:
                out.add_term(
                    _with_children(t, t.children[:i] + t.children[i + 1 :] + (ne,)), 1
                )
        if e.kind != KIND_GRAY:
            out = out + _replace_child(t, i, _up_mu_tree(e.child))
    return out


def scale_derivative(t: TreeVec) -> TreeVec:
    """Sum over edges of switching one I edge to I'."""
    return t.map_trees(_up_mu_tree)


def scale_derivative_edge(t: Tree, path: tuple[int, ...]) -> Tree:
    """Switch the single I edge addressed by a canonical child-index path."""
    if not path:
        raise ValueError("empty edge path")
    i = path[0]
    if i >= len(t.children):
        raise ValueError(f"no child {i} at this node")
    e = t.children[i]
    if len(path) == 1:
        if e.kind != KIND_I:
            raise ValueError("path does not address an I edge")
        ne = edge(KIND_IDOT, e.a, e.child)
        assert ne is not None
    else:
        ne = edge(e.kind, e.a, scale_derivative_edge(e.child, path[1:]))
        if ne is None:
            raise ValueError("edge switch produced a structural zero")
    return _with_children(t, t.children[:i] + t.children[i + 1 :] + (ne,))


def iter_edge_paths(t: Tree, prefix: tuple[int, ...] = ()):
    """All canonical paths addressing I edges of t."""
    for i, e in enumerate(t.children):
        if e.kind == KIND_I:
            yield prefix + (i,)
        if e.kind != KIND_GRAY:
            yield from iter_edge_paths(e.child, prefix + (i,))


# ---------------------------------------------------------------------------
# decoration sum and node increments


def _uparrow_all_tree(t: Tree, r: Rule) -> TreeVec:
    out = TreeVec.lift(_residue(t))
    for e in t.children:
        if e.kind == KIND_GRAY:
            out = out.map_trees(lambda u, e=e: TreeVec.lift(_with_children(u, u.children + (e,))))
            continue
        if any(e.a):
            raise ValueError("decoration sum requires all edge decorations zero")
        sub = _uparrow_all_tree(e.child, r)
        summed = TreeVec()
        for a in mi_iter_weighted(t.dim, r.lam, r.a_cap):
            for w, c in sub.terms.items():
                ne = edge(e.kind, a, w)
                if ne is not None:
                    summed.add_term(_plant_like(ne, t.dim), c)
        if summed.is_zero():
            return TreeVec()
        out = _merge_plants(out, summed)
    return out


def _plant_like(e: Edge, dim: int) -> Tree:
    return node(NOISE_NONE, mi_zero(dim), 0, (e,))


def _merge_plants(base: TreeVec, plants: TreeVec) -> TreeVec:
    out = TreeVec()
    for u, cu in base.terms.items():
        for w, cw in plants.terms.items():
            out.add_term(tree_product(u, w), cu * cw)
    return out


def uparrow_all(t: TreeVec, r: Rule) -> TreeVec:
    """Replace every 0-decorated edge by the sum over decorations |a|_s <= a_cap."""
    return t.map_trees(lambda u: _uparrow_all_tree(u, r))


def node_increment_single(t: Tree, path: tuple[int, ...], k: MultiIndex) -> Tree:
    """Raise the polynomial decoration at one node addressed by a path."""
    if not path:
        return node(t.noise, mi_add(t.k, k), t.v, t.children)
    i = path[0]
    e = t.children[i]
    ne = edge(e.kind, e.a, node_increment_single(e.child, path[1:], k))
    assert ne is not None
    return _with_children(t, t.children[:i] + t.children[i + 1 :] + (ne,))


def _increment_all(t: Tree, assignment: dict[tuple[int, ...], MultiIndex], prefix: tuple[int, ...]) -> Tree:
    children = []
    for i, e in enumerate(t.children):
        if e.kind == KIND_GRAY:
            children.append(e)
        else:
            ne = edge(e.kind, e.a, _increment_all(e.child, assignment, prefix + (i,)))
            assert ne is not None
            children.append(ne)
    extra = assignment.get(prefix)
    k = mi_add(t.k, extra) if extra else t.k
    return node(t.noise, k, t.v, children)


def node_increment(t: Tree, k: MultiIndex) -> TreeVec:
    """Sum over assignments of k across the (non-gray) nodes of t, with the
    multinomial weight k!/prod(k_v!): the iterated single-step derivation.

    Paths are resolved against the input tree in a single rebuild, so the
    canonical re-sorting triggered by new decorations cannot skew addressing.
    """
    from .trees import iter_nodes

    paths = [p for p, _ in iter_nodes(t)]
    out = TreeVec()
    k_fact = mi_factorial(k)

    def rec(i: int, remaining: MultiIndex, assignment: dict, denom: int):
        if i == len(paths) - 1:
            assignment[paths[i]] = remaining
            out.add_term(
                _increment_all(t, assignment, ()),
                Fraction(k_fact, denom * mi_factorial(remaining)),
            )
            del assignment[paths[i]]
            return
        for part in mi_iter_weighted(len(k), Fraction(1), sum(remaining)):
            if not mi_leq(part, remaining):
                continue
            assignment[paths[i]] = part
            rec(i + 1, mi_sub(remaining, part), assignment, denom * mi_factorial(part))
            del assignment[paths[i]]

    rec(0, tuple(k), {}, 1)
    return out


# ---------------------------------------------------------------------------
# projections


def pi_root_poly(t: TreeVec) -> TreeVec:
    """Kill terms whose root carries a nonzero polynomial decoration."""
    return TreeVec({u: c for u, c in t.terms.items() if not any(u.k)})


def pi_negative(t: TreeVec, r: Rule) -> TreeVec:
    return TreeVec({u: c for u, c in t.terms.items() if degree(u, r) < 0})


def q_gamma(t: TreeVec, r: Rule, gamma: Fraction) -> TreeVec:
    return TreeVec({u: c for u, c in t.terms.items() if degree(u, r) <= gamma})


def gray_down_tree(t: Tree) -> Tree:
    """Fold gray decorations into root polynomials and erase markers.

    Rebuilds edges structurally: the input was already a valid tree, and the
    folded image may legitimately contain erased graft slots.
    """
    k = t.k
    edges = []
    for e in t.children:
        if e.kind == KIND_GRAY:
            k = mi_add(k, e.child.k)
        else:
            edges.append(Edge(e.kind, e.a, gray_down_tree(e.child)))
    noise = NOISE_NONE if t.noise == NOISE_GRAY_XI else t.noise
    return node(noise, k, 0, edges)


def gray_down(t: TreeVec) -> TreeVec:
    return t.map_trees(lambda u: TreeVec.lift(gray_down_tree(u)))


def m_loc_budgeted(t: Tree, r: Rule, budget: Fraction) -> list[tuple[Tree, Fraction]]:
    """Per-node polynomial insertions X^k/k! with total weight <= budget."""
    out: list[tuple[Tree, Fraction]] = []

    def per_node(t: Tree, budget: Fraction) -> list[tuple[Tree, Fraction, Fraction]]:
        subs: list[tuple[tuple[Edge, ...], Fraction, Fraction]] = [((), Fraction(1), Fraction(0))]
        for e in t.children:
            if e.kind == KIND_GRAY:
                subs = [(ch + (e,), c, w) for ch, c, w in subs]
                continue
            opts = []
            for u, c2, w2 in per_node(e.child, budget):
                ne = edge(e.kind, e.a, u)
                if ne is not None:
                    opts.append((ne, c2, w2))
            subs = [
                (ch + (ne,), c * c2, w + w2)
                for ch, c, w in subs
                for ne, c2, w2 in opts
                if w + w2 <= budget
            ]
        result = []
        for ch, c, w in subs:
            for k in mi_iter_weighted(t.dim, r.lam, budget - w):
                kw = mi_weight(k, r.lam)
                result.append(
                    (
                        node(t.noise, mi_add(t.k, k), t.v, ch),
                        c / mi_factorial(k),
                        w + kw,
                    )
                )
        return result

    for u, c, _w in per_node(t, budget):
        out.append((u, c))
    return out


def tree_poly_mass(t: Tree, r: Rule) -> Fraction:
    """Total |k|_s over node polynomials and gray payloads of the whole tree."""
    mass = mi_weight(t.k, r.lam)
    for e in t.children:
        if e.kind == KIND_GRAY:
            mass += mi_weight(e.child.k, r.lam)
        else:
            mass += tree_poly_mass(e.child, r)
    return mass


def poly_mass_within(t: Tree, r: Rule, cap: Fraction | int | None = None) -> bool:
    """Per-node bound on |k|_s plus the gray payloads' |j|_s (cap-matching aid).

    The localisation map caps node polynomials before a gray graft splits them
    into payloads, so identities mixing the two clip identically exactly when
    both sides are filtered by this joint mass.
    """
    c = r.k_cap if cap is None else cap
    mass = mi_weight(t.k, r.lam)
    for e in t.children:
        if e.kind == KIND_GRAY:
            mass += mi_weight(e.child.k, r.lam)
    if mass > c:
        return False
    return all(
        e.kind == KIND_GRAY or poly_mass_within(e.child, r, c) for e in t.children
    )


def filter_poly_mass(t: TreeVec, r: Rule, cap: Fraction | int | None = None) -> TreeVec:
    return TreeVec({u: c for u, c in t.terms.items() if poly_mass_within(u, r, cap)})


def erase_markers_vec(t: TreeVec) -> TreeVec:
    return t.map_trees(lambda u: TreeVec.lift(erase_markers(u)))


def erase_markers_tensor(t: TensorVec) -> TensorVec:
    out = TensorVec()
    for (l, rr), c in t.terms.items():
        out.add_term(erase_markers(l), erase_markers(rr), c)
    return out
