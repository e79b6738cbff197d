"""Symbolic renormalised evaluation maps over formal kernels and noise.

Expressions are canonical nested tuples.  An expression is a sorted tuple of
terms ``(atoms, syms, coeff)``; ``syms`` is a sorted multiset of opaque
character symbols; atoms live at the evaluation point of their enclosing
scope:

* ``("xi",)``                        mollified noise at the scope point
* ``("mono", k)``                    (scope point - basepoint)^k
* ``("fn", tilde, l, k, D)``         functional factor (a jet-derivative
                                     monomial of the drift / noise coefficient)
* ``("conv", kernel, a, inner)``     (d^a kernel * inner)(scope point); the
                                     inner expression's scope is the fresh
                                     integration point

Kernels: ``"Kbar"`` is the difference kernel (full minus cut), ``"Kdot"`` its
scale derivative, ``"G"`` the full kernel (the mu=1 specialization of Kbar)
and ``"Kdotdot"`` the opaque second scale derivative, never produced by the
verified identities.  Binding scopes are structural, so canonical equality of
the tuples is alpha-equivalence of the integration variables.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable

from .operators import gray_down_tree
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
    Tree,
    degree,
    edge,
    mi_add,
    mi_binom,
    mi_factorial,
    mi_iter_weighted,
    mi_sub,
    mi_weight,
    mi_zero,
    node,
    print_tree,
    symmetry_factor,
)
from .upsilon import Character, DiffExpr, DiffFactor, d_a_factor, upsilon_tilde

Atom = tuple
Term = tuple  # (atoms, syms)
Expr = tuple  # sorted tuple of (atoms, syms, coeff)

XI: Atom = ("xi",)

KERNEL_BAR = "Kbar"
KERNEL_DOT = "Kdot"
KERNEL_FULL = "G"
KERNEL_DOTDOT = "Kdotdot"


def _norm(acc: dict[tuple, Fraction]) -> Expr:
    return tuple(
        (atoms, syms, c) for (atoms, syms), c in sorted(acc.items()) if c
    )


def _acc_add(acc: dict, atoms: tuple, syms: tuple, c: Fraction) -> None:
    key = (tuple(sorted(atoms)), tuple(sorted(syms)))
    acc[key] = acc.get(key, Fraction(0)) + c


E_ZERO: Expr = ()
E_ONE: Expr = (((), (), Fraction(1)),)


def e_term(atoms: Iterable[Atom], c: Fraction | int = 1, syms: Iterable[str] = ()) -> Expr:
    acc: dict = {}
    _acc_add(acc, tuple(atoms), tuple(syms), Fraction(c))
    return _norm(acc)


def e_add(*exprs: Expr) -> Expr:
    acc: dict = {}
    for e in exprs:
        for atoms, syms, c in e:
            _acc_add(acc, atoms, syms, c)
    return _norm(acc)


def e_scale(e: Expr, c: Fraction | int) -> Expr:
    if not c:
        return E_ZERO
    return tuple((a, s, x * c) for a, s, x in e)


def e_mul(a: Expr, b: Expr) -> Expr:
    acc: dict = {}
    for atoms1, syms1, c1 in a:
        for atoms2, syms2, c2 in b:
            _acc_add(acc, atoms1 + atoms2, syms1 + syms2, c1 * c2)
    return _norm(acc)


def fn_atom(f: DiffFactor) -> Atom:
    return ("fn", f.tilde, f.l, f.k, f.D)


def atom_to_factor(atom: Atom) -> DiffFactor:
    return DiffFactor(atom[1], atom[2], atom[3], atom[4])


def conv_wrap(kernel: str, a: MultiIndex, inner: Expr, sign: int = 1) -> Expr:
    """Convolution of a whole expression: distributes linearly, pulling
    coefficients and character symbols out of the binding scope."""
    acc: dict = {}
    for atoms, syms, c in inner:
        _acc_add(acc, (("conv", kernel, tuple(a), atoms),), syms, c * sign)
    return _norm(acc)


def map_terms(e: Expr, fn: Callable[[tuple, tuple, Fraction], Expr]) -> Expr:
    acc: dict = {}
    for atoms, syms, c in e:
        for a2, s2, c2 in fn(atoms, syms, c):
            _acc_add(acc, a2, s2, c2)
    return _norm(acc)


def _map_atoms(atoms: tuple, fn: "Callable[[Atom], Atom]") -> tuple:
    return tuple(sorted(fn(a) for a in atoms))


def diagonal(e: Expr) -> Expr:
    """Identify the dummy argument with the live one (clear tilde flags)."""

    def clear(a: Atom) -> Atom:
        if a[0] == "fn":
            return ("fn", False, a[2], a[3], a[4])
        if a[0] == "conv":
            return ("conv", a[1], a[2], _map_atoms(a[3], clear))
        return a

    acc: dict = {}
    for atoms, syms, c in e:
        _acc_add(acc, _map_atoms(atoms, clear), syms, c)
    return _norm(acc)


class _Dead(Exception):
    pass


def specialize_mu(e: Expr, mu: str) -> Expr:
    """mu in {"zero","one"}: kill / rewrite the scale-dependent kernels."""

    def spec(a: Atom) -> Atom:
        if a[0] != "conv":
            return a
        kern = a[1]
        if kern in (KERNEL_DOT, KERNEL_DOTDOT) or (kern == KERNEL_BAR and mu == "zero"):
            raise _Dead
        if kern == KERNEL_BAR:
            kern = KERNEL_FULL
        return ("conv", kern, a[2], _map_atoms(a[3], spec))

    acc: dict = {}
    for atoms, syms, c in e:
        try:
            _acc_add(acc, _map_atoms(atoms, spec), syms, c)
        except _Dead:
            continue
    return _norm(acc)


def mu_derivative(e: Expr) -> Expr:
    """Scale derivative: Leibniz over atoms; only kernels depend on the scale."""
    acc: dict = {}
    for atoms, syms, c in e:
        for i, a in enumerate(atoms):
            if a[0] != "conv":
                continue
            rest = atoms[:i] + atoms[i + 1 :]
            kern, idx, inner = a[1], a[2], a[3]
            if kern == KERNEL_BAR:
                _acc_add(acc, rest + (("conv", KERNEL_DOT, idx, inner),), syms, -c)
            elif kern == KERNEL_DOT:
                _acc_add(acc, rest + (("conv", KERNEL_DOTDOT, idx, inner),), syms, c)
            for datoms, dsyms, dc in mu_derivative(e_term(inner)):
                _acc_add(acc, rest + (("conv", kern, idx, datoms),), syms + dsyms, c * dc)
    return _norm(acc)


def bind_symbols(e: Expr, values: dict[str, Fraction]) -> Expr:
    """Substitute rational values for character symbols (missing keys stay).

    Symbols live only at the term level (convolution scopes carry none), so
    binding never needs to recurse.
    """
    acc: dict = {}
    for atoms, syms, c in e:
        left = []
        for s in syms:
            if s in values:
                c *= values[s]
            else:
                left.append(s)
        if c:
            _acc_add(acc, atoms, tuple(left), c)
    return _norm(acc)


def collect_symbols(e: Expr) -> set[str]:
    out: set[str] = set()
    for atoms, syms, _c in e:
        out.update(syms)
    return out


# ---------------------------------------------------------------------------
# Frechet operator


def frechet_b(a: MultiIndex, x: Expr, y: Expr, r: Rule | None = None) -> Expr:
    """Structural Frechet derivative of y in the live argument.

    Each non-tilde functional factor is jet-differentiated (with the binomial
    exchange against its outer derivative) and the probe ``-d^a Kdot * x`` is
    inserted at that factor's point; the derivative commutes through
    convolutions.
    """
    acc: dict = {}
    probe = conv_wrap(KERNEL_DOT, a, x, -1)
    for atoms, syms, c in y:
        for i, at in enumerate(atoms):
            rest = atoms[:i] + atoms[i + 1 :]
            if at[0] == "fn" and not at[1]:
                diff = d_a_factor(atom_to_factor(at), a, tilde=False, r=r)
                for (factors, fsyms), fc in diff.terms.items():
                    for patoms, psyms, pc in probe:
                        new = rest + tuple(fn_atom(f) for f in factors) + patoms
                        _acc_add(acc, new, syms + fsyms + psyms, c * fc * pc)
            elif at[0] == "conv":
                for datoms, dsyms, dc in frechet_b(a, x, e_term(at[3]), r):
                    _acc_add(acc, rest + (("conv", at[1], at[2], datoms),), syms + dsyms, c * dc)
    return _norm(acc)


def b_total(x: Expr, y: Expr, r: Rule, index_set: Iterable[MultiIndex] | None = None) -> Expr:
    """Sum of the Frechet pieces over an index set (defaults to a saturating
    range: the jet orders plus the character's degree margin)."""
    if index_set is None:
        index_set = b_saturation_set(r)
    return e_add(*(frechet_b(a, x, y, r) for a in index_set))


def b_saturation_set(r: Rule) -> list[MultiIndex]:
    margin = _ceil(-r.alpha) + 1
    cap = max(r.q, r.p) + margin
    return list(mi_iter_weighted(r.dim, r.lam, cap))


def _ceil(x: Fraction) -> int:
    return -int((-x) // 1)


# ---------------------------------------------------------------------------
# evaluation maps


class EvalContext:
    """Caches the mutually recursive evaluation maps for one rule/character."""

    def __init__(self, rule: Rule, char: Character):
        self.rule = rule
        self.char = char
        self._tilde: dict[Tree, Expr] = {}
        self._hat: dict[tuple, Expr] = {}

    # -- budget: maximal extra decoration weight the character can survive

    def _skeleton_min(self, t: Tree) -> Fraction:
        """Lower bound on the degree of any gray-folded extracted part of t."""
        total = Fraction(0)
        if t.noise == NOISE_XI:
            total += min(Fraction(0), self.rule.alpha)
        for e in t.children:
            if e.kind != KIND_I:
                continue  # red and gray edges never enter the extracted part
            slack = self.rule.lam - mi_weight(e.a, self.rule.lam)
            total += min(Fraction(0), slack + self._skeleton_min(e.child))
        return total

    def budget(self, t: Tree) -> Fraction:
        return max(Fraction(0), -self._skeleton_min(t))

    # -- root extraction legs with a shared Taylor budget

    def delta_r_legs(self, t: Tree, budget: Fraction) -> list[tuple[Tree, Tree, Fraction, Fraction]]:
        """(left, right, coeff, extra-weight) legs with per-leg extra <= budget.

        The Taylor sums over gray payloads are complete for every term the
        character can keep alive: extras beyond the budget force the folded
        left leg to nonnegative degree.  Node polynomials split binomially.
        """
        dim = t.dim
        res_opts: list[tuple[Tree, Tree, Fraction, Fraction]] = []
        one = Tree(NOISE_NONE, mi_zero(dim), 0, ())
        if t.noise == NOISE_XI:
            res_opts.append((Tree(NOISE_GRAY_XI, mi_zero(dim), t.v, ()), Tree(NOISE_XI, mi_zero(dim), 0, ()), Fraction(1), Fraction(0)))
            res_opts.append((Tree(NOISE_XI, mi_zero(dim), t.v, ()), one, Fraction(1), Fraction(0)))
        else:
            res_opts.append((Tree(t.noise, mi_zero(dim), t.v, ()), one, Fraction(1), Fraction(0)))
        if any(t.k):
            split: list[tuple[Tree, Tree, Fraction, Fraction]] = []
            for l, rr, c, w in res_opts:
                for j in mi_iter_weighted(dim, Fraction(1), sum(t.k)):
                    if not all(x <= y for x, y in zip(j, t.k)):
                        continue
                    rest = mi_sub(t.k, j)
                    split.append(
                        (
                            node(l.noise, mi_add(l.k, j), l.v, l.children),
                            node(rr.noise, mi_add(rr.k, rest), rr.v, rr.children),
                            c * mi_binom(t.k, j),
                            w,
                        )
                    )
            res_opts = split
        legs = res_opts
        for e in t.children:
            if e.kind == KIND_GRAY:
                legs = [
                    (node(l.noise, l.k, l.v, l.children + (e,)), rr, c, w)
                    for l, rr, c, w in legs
                ]
                continue
            child_opts: list[tuple[Edge, Tree, Fraction, Fraction]] = []
            if e.kind == KIND_I:
                for cl, cr, cc, cw in self.delta_r_legs(e.child, budget):
                    ne = edge(KIND_I, e.a, cl)
                    if ne is not None:
                        child_opts.append((ne, cr, cc, cw))
            for j in mi_iter_weighted(dim, self.rule.lam, budget):
                w = mi_weight(j, self.rule.lam)
                leaf = Tree(NOISE_NONE, j, 0, ())
                ge = edge(KIND_GRAY, e.a, leaf)
                assert ge is not None
                rplant = _plant(e.kind, mi_add(e.a, j), e.child, dim)
                if rplant is None:
                    continue
                child_opts.append((ge, rplant, Fraction(1, mi_factorial(j)), w))
            new_legs = []
            for l, rr, c, w in legs:
                for ce, cr, cc, cw in child_opts:
                    if w + cw > budget:
                        continue
                    nl = node(l.noise, l.k, l.v, l.children + (ce,))
                    nr = _merge(rr, cr)
                    if nr is None:
                        continue
                    new_legs.append((nl, nr, c * cc, w + cw))
            legs = new_legs
        return legs

    # -- the localized-coefficients half: character times differential

    def char_terms(self, left: Tree, budget: Fraction) -> list[tuple[Fraction | str, DiffExpr, Fraction]]:
        """(character value, differential, coefficient) over node insertions."""
        out: list[tuple[Fraction | str, DiffExpr, Fraction]] = []
        for dec, coeff in _mloc_variants(left, self.rule, budget):
            val = self.char.value(dec)
            if val is None:
                continue
            diff = upsilon_tilde(dec, self.rule)
            if diff.is_zero():
                continue
            out.append((val, diff, coeff))
        return out

    # -- the nonlocalized maps

    def pi_times(self, t: Tree) -> Expr:
        """Multiplicative map: noise to the noise atom, edges to convolutions."""
        out = E_ONE
        if t.noise == NOISE_XI:
            out = e_mul(out, e_term((XI,)))
        elif t.noise != NOISE_NONE:
            raise ValueError("gray noise has no nonlocalized evaluation")
        if any(t.k):
            raise ValueError("polynomials have no nonlocalized evaluation")
        for e in t.children:
            if e.kind == KIND_GRAY:
                raise ValueError("gray edges have no nonlocalized evaluation")
            inner = self.pi_tilde_r(e.child)
            kern = KERNEL_BAR if e.kind == KIND_I else KERNEL_DOT
            sign = 1 if e.kind == KIND_I else -1
            out = e_mul(out, conv_wrap(kern, e.a, inner, sign))
        return out

    def pi_tilde_r(self, t: Tree) -> Expr:
        cached = self._tilde.get(t)
        if cached is not None:
            return cached
        budget = self.budget(t)
        acc: dict = {}
        for left, right, coeff, used in self.delta_r_legs(t, budget):
            right_expr = self.pi_times(right)
            if not right_expr:
                continue
            for val, diff, c2 in self.char_terms(left, budget - used):
                for (factors, fsyms), fc in diff.terms.items():
                    atoms = tuple(fn_atom(f) for f in factors)
                    weight = coeff * c2 * fc
                    if isinstance(val, str):
                        syms = fsyms + (val,)
                    else:
                        weight *= val
                        syms = fsyms
                    if not weight:
                        continue
                    for ratoms, rsyms, rc in right_expr:
                        _acc_add(acc, atoms + ratoms, syms + rsyms, weight * rc)
        result = _norm(acc)
        self._tilde[t] = result
        return result

    def pi_r(self, t: Tree) -> Expr:
        """Diagonal evaluation (dummy argument identified with the live one)."""
        return diagonal(self.pi_tilde_r(t))

    # -- the localized pre-model

    def pi_hat_times(self, t: Tree, mu: str, depth: int, diag: bool) -> Expr:
        out = E_ONE
        if t.noise == NOISE_XI:
            out = e_mul(out, e_term((XI,)))
        elif t.noise != NOISE_NONE:
            raise ValueError("gray noise has no localized evaluation")
        if any(t.k):
            if diag and depth == 0:
                return E_ZERO
            out = e_mul(out, e_term((("mono", t.k),)))
        kern = KERNEL_FULL if mu == "one" else KERNEL_BAR
        for e in t.children:
            if e.kind == KIND_GRAY:
                raise ValueError("gray edges have no localized evaluation")
            if e.kind == KIND_IDOT:
                if mu == "one":
                    return E_ZERO
                inner = self.pi_hat_r(e.child, mu, depth + 1, diag)
                out = e_mul(out, conv_wrap(KERNEL_DOT, e.a, inner, -1))
                continue
            inner = self.pi_hat_r(e.child, mu, depth + 1, diag)
            out = e_mul(out, conv_wrap(kern, e.a, inner))
        return out

    def pi_hat_r(self, t: Tree, mu: str = "mu", depth: int = 0, diag: bool = False) -> Expr:
        key = (t, mu, depth == 0, diag)
        cached = self._hat.get(key)
        if cached is not None:
            return cached
        acc: dict = {}
        budget = self.budget(t)
        for left, right, coeff, _used in self.delta_r_legs(t, budget):
            val = self.char.value(left)
            if val is None:
                continue
            right_expr = self.pi_hat_times(right, mu, depth, diag)
            if not right_expr:
                continue
            syms: tuple = ()
            weight = coeff
            if isinstance(val, str):
                syms = (val,)
            else:
                weight *= val
            for ratoms, rsyms, rc in right_expr:
                _acc_add(acc, ratoms, syms + rsyms, weight * rc)
        result = _norm(acc)
        self._hat[key] = result
        return result

    def pi_hat_diag(self, t: Tree, mu: str = "mu") -> Expr:
        """Basepoint-at-evaluation-point form: root monomials vanish."""
        return self.pi_hat_r(t, mu, depth=0, diag=True)


def _plant(kind: str, a: MultiIndex, child: Tree, dim: int) -> Tree | None:
    e = edge(kind, a, child)
    if e is None:
        return None
    return node(NOISE_NONE, mi_zero(dim), 0, (e,))


def _merge(a: Tree, b: Tree) -> Tree | None:
    from .trees import tree_product

    return tree_product(a, b)


from .operators import m_loc_budgeted as _mloc_variants_impl


def _mloc_variants(t: Tree, r: Rule, budget: Fraction) -> list[tuple[Tree, Fraction]]:
    return _mloc_variants_impl(t, r, budget)


# ---------------------------------------------------------------------------
# counterterms and the renormalisation constraint system


def mu_zero_collapse(ctx: EvalContext, window: list[Tree]) -> Expr:
    """The scale-zero specialization of the symmetry-weighted window sum."""
    return e_add(
        *(
            e_scale(specialize_mu(ctx.pi_r(t), "zero"), Fraction(1, symmetry_factor(t)))
            for t in window
        )
    )


def counterterm_expr(r: Rule, char: Character, negatives: list[Tree]) -> Expr:
    """Noise term plus the character-weighted elementary differentials."""
    from .upsilon import upsilon

    dim = r.dim
    g0 = DiffFactor(False, 0, mi_zero(dim), ())
    f1 = DiffFactor(False, 1, mi_zero(dim), ())
    out = e_add(e_term((fn_atom(g0),)), e_term((fn_atom(f1), XI)))
    for s in negatives:
        val = char.value(s)
        if val is None:
            continue
        ups = upsilon(s, r)
        for (factors, fsyms), fc in ups.terms.items():
            atoms = tuple(fn_atom(f) for f in factors)
            c = Fraction(fc, symmetry_factor(s))
            if isinstance(val, str):
                out = e_add(out, e_term(atoms, c, fsyms + (val,)))
            else:
                out = e_add(out, e_term(atoms, c * val, fsyms))
    return out


def counterterms(r: Rule, char: Character) -> list[dict]:
    """Negative-degree counterterm list, verified against the scale-zero
    collapse of the window sum."""
    from .rules import enumerate_trees
    from .upsilon import upsilon

    window = enumerate_trees(r, "t0star")
    negatives = enumerate_trees(r, "t0neg")
    collapse = mu_zero_collapse(EvalContext(r, char), window)
    expected = counterterm_expr(r, char, negatives)
    if collapse != expected:
        raise AssertionError("scale-zero collapse disagrees with the counterterm list")
    out = []
    for s in negatives:
        val = char.value(s)
        out.append(
            {
                "tree": print_tree(s),
                "weight": str(Fraction(1, symmetry_factor(s))),
                "ell": val if isinstance(val, str) or val is None else str(val),
                "upsilon": repr(upsilon(s, r)),
            }
        )
    return out


def bphz_constraints(r: Rule) -> list[dict]:
    """One centering constraint per negative-degree tree at full scale.

    Each constraint is ell(tree) plus strictly-smaller-tree terms, each an
    ell-symbol (or unit) times the expectation of a localized expression.
    """
    from .rules import enumerate_trees

    char = Character(r)
    ctx = EvalContext(r, char)
    negatives = enumerate_trees(r, "t0neg")
    out = []
    for t in negatives:
        own = Character.symbol_name(t)
        terms = []
        budget = ctx.budget(t)
        for left, right, coeff, _w in ctx.delta_r_legs(t, budget):
            val = char.value(left)
            if val is None:
                continue
            expect = ctx.pi_hat_times(right, "one", 0, False)
            if not expect:
                continue
            for atoms, syms, c in expect:
                ells = list(syms)
                weight = coeff * c
                if isinstance(val, str):
                    ells.append(val)
                else:
                    weight *= val
                terms.append(
                    {
                        "ells": sorted(ells),
                        "coeff": str(weight),
                        "expectation": expr_to_json(((atoms, (), Fraction(1)),)),
                    }
                )
        out.append({"tree": print_tree(t), "ell": own, "terms": terms})
    return out


# ---------------------------------------------------------------------------
# serialization


def expr_to_json(e: Expr) -> list:
    def atom_json(a: Atom):
        if a[0] == "xi":
            return {"op": "xi"}
        if a[0] == "mono":
            return {"op": "mono", "k": list(a[1])}
        if a[0] == "fn":
            return {
                "op": "fn",
                "tilde": a[1],
                "l": a[2],
                "k": list(a[3]),
                "D": [list(x) for x in a[4]],
            }
        if a[0] == "conv":
            return {"op": "conv", "kernel": a[1], "a": list(a[2]), "inner": expr_to_json(e_term(a[3]))}
        raise ValueError(a)

    return [
        {"coeff": str(c), "syms": list(s), "atoms": [atom_json(a) for a in atoms]}
        for atoms, s, c in e
    ]


def expr_to_text(e: Expr) -> str:
    if not e:
        return "0"

    def atom_text(a: Atom) -> str:
        if a[0] == "xi":
            return "xi"
        if a[0] == "mono":
            return f"mono{list(a[1])}"
        if a[0] == "fn":
            f = DiffFactor(a[1], a[2], a[3], a[4])
            return repr(f)
        if a[0] == "conv":
            return f"conv[{a[1]},{list(a[2])}]({expr_to_text(e_term(a[3]))})"
        raise ValueError(a)

    bits = []
    for atoms, syms, c in e:
        factors = [str(c)] + [f"{s}" for s in syms] + [atom_text(a) for a in atoms]
        bits.append("*".join(factors))
    return " + ".join(bits)
