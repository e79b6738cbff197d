"""Free differential algebra of elementary differentials.

A ``DiffFactor`` is a normal-form monomial ``d^k D_{a_1}...D_{a_n} U^l``: an
outer derivative multi-index ``k``, a sorted multiset of jet derivatives
``D_a``, the nonlinearity selector ``l`` (0 for the drift, 1 for the noise
coefficient) and a tilde bit separating the live variables from the dummy
copy.  A ``DiffExpr`` is a rational linear combination of factor multisets,
optionally weighted by opaque character symbols.

Jet-order vanishing is rule-driven: a factor dies when a ``D_a`` has a time
component or exceeds the nonlinearity's jet order or arity caps, and an outer
derivative dies on a factor whose derivative multiset already saturates a
finite total arity (the composed function is constant).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

from .operators import gray_down_tree
from .trees import (
    KIND_GRAY,
    KIND_IDOT,
    NOISE_GRAY_XI,
    NOISE_XI,
    MultiIndex,
    Rule,
    Tree,
    TreeVec,
    degree,
    mi_add,
    mi_binom,
    mi_space_order,
    mi_sub,
    print_tree,
)


@dataclass(frozen=True)
class DiffFactor:
    tilde: bool
    l: int
    k: MultiIndex
    D: tuple[MultiIndex, ...]  # sorted

    def detilde(self) -> "DiffFactor":
        return DiffFactor(False, self.l, self.k, self.D)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        name = ("U~" if self.tilde else "U") + str(self.l)
        ds = "".join(f"D{list(a)}" for a in self.D)
        dk = f"d^{list(self.k)}" if any(self.k) else ""
        return f"{dk}{ds}{name}"


Factors = tuple[DiffFactor, ...]
Syms = tuple[str, ...]
Term = tuple[Factors, Syms]


def factor_is_zero(f: DiffFactor, r: Rule | None) -> bool:
    """Rule-driven vanishing of a jet-derivative monomial."""
    if r is None:
        return False
    order = r.jet_order(f.l == 1)
    arity = r.arity(f.l == 1)
    counts: dict[int, int] = {}
    for a in f.D:
        if a[0] != 0:
            return True
        o = mi_space_order(a)
        if o > order:
            return True
        counts[o] = counts.get(o, 0) + 1
    if arity.total is not None:
        if len(f.D) > arity.total:
            return True
        # saturated polynomial nonlinearity: the composition is constant
        if len(f.D) == arity.total and any(f.k):
            return True
    for o, n in counts.items():
        cap = arity.order_cap(o)
        if cap is not None and n > cap:
            return True
    return False


class DiffExpr:
    """Linear combination of commutative factor multisets with symbol weights."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[Term, Fraction] | None = None):
        self.terms: dict[Term, Fraction] = {}
        if terms:
            for t, c in terms.items():
                if c:
                    self.terms[t] = Fraction(c)

    @staticmethod
    def zero() -> "DiffExpr":
        return DiffExpr()

    @staticmethod
    def one() -> "DiffExpr":
        return DiffExpr({((), ()): Fraction(1)})

    @staticmethod
    def lift(factors: Iterator[DiffFactor] | tuple, c: Fraction | int = 1, syms: Syms = ()) -> "DiffExpr":
        key = (tuple(sorted(factors, key=_factor_key)), tuple(sorted(syms)))
        return DiffExpr({key: Fraction(c)})

    def add_term(self, factors: Factors, syms: Syms, c: Fraction) -> None:
        if not c:
            return
        key = (tuple(sorted(factors, key=_factor_key)), tuple(sorted(syms)))
        cur = self.terms.get(key, Fraction(0)) + c
        if cur:
            self.terms[key] = cur
        else:
            self.terms.pop(key, None)

    def __add__(self, other: "DiffExpr") -> "DiffExpr":
        out = DiffExpr(dict(self.terms))
        for (f, s), c in other.terms.items():
            out.add_term(f, s, c)
        return out

    def __sub__(self, other: "DiffExpr") -> "DiffExpr":
        return self + other.scale(-1)

    def scale(self, c: Fraction | int) -> "DiffExpr":
        if not c:
            return DiffExpr()
        return DiffExpr({t: x * c for t, x in self.terms.items()})

    def times(self, other: "DiffExpr") -> "DiffExpr":
        out = DiffExpr()
        for (f1, s1), c1 in self.terms.items():
            for (f2, s2), c2 in other.terms.items():
                out.add_term(f1 + f2, s1 + s2, c1 * c2)
        return out

    def with_sym(self, sym: str) -> "DiffExpr":
        out = DiffExpr()
        for (f, s), c in self.terms.items():
            out.add_term(f, s + (sym,), c)
        return out

    def detilde(self) -> "DiffExpr":
        out = DiffExpr()
        for (f, s), c in self.terms.items():
            out.add_term(tuple(x.detilde() for x in f), s, c)
        return out

    def prune(self, r: Rule | None) -> "DiffExpr":
        if r is None:
            return self
        out = DiffExpr()
        for (f, s), c in self.terms.items():
            if not any(factor_is_zero(x, r) for x in f):
                out.add_term(f, s, c)
        return out

    def map_factors(self, fn: Callable[[DiffFactor], "DiffExpr"], which: Callable[[DiffFactor], bool]) -> "DiffExpr":
        """Leibniz: apply fn to each selected factor occurrence in turn."""
        out = DiffExpr()
        for (f, s), c in self.terms.items():
            for i, x in enumerate(f):
                if not which(x):
                    continue
                rest = f[:i] + f[i + 1 :]
                for (nf, ns), nc in fn(x).terms.items():
                    out.add_term(rest + nf, s + ns, c * nc)
        return out

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DiffExpr) and self.terms == other.terms

    def __hash__(self):
        raise TypeError("DiffExpr is not hashable")

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        if not self.terms:
            return "0"
        bits = []
        for (f, s), c in sorted(self.terms.items(), key=lambda kv: repr(kv[0])):
            sym = "".join(f"[{x}]" for x in s)
            bits.append(f"{c}{sym}" + "*".join(repr(x) for x in f))
        return " + ".join(bits)


def _factor_key(f: DiffFactor):
    return (f.tilde, f.l, f.k, f.D)


# ---------------------------------------------------------------------------
# elementary differentials


def upsilon_tilde(t: Tree, r: Rule | None = None) -> DiffExpr:
    """Product over nodes of jet-derivative factors, tilde flag per marker.

    The gray noise overrides the node's selector to the noise coefficient;
    gray integration leaves contribute plain derivative indices.
    """
    if t.noise == NOISE_GRAY_XI:
        l = 1
    elif t.noise == NOISE_XI:
        l = 1
    else:
        l = 0
    ds: list[MultiIndex] = []
    out = DiffExpr.one()
    for e in t.children:
        if e.kind == KIND_IDOT:
            raise ValueError("elementary differentials are not defined on red edges")
        ds.append(e.a)
        if e.kind != KIND_GRAY:
            out = out.times(upsilon_tilde(e.child, r))
    factor = DiffFactor(t.v == 0, l, t.k, tuple(sorted(ds)))
    out = out.times(DiffExpr.lift((factor,)))
    return out.prune(r)


def upsilon(t: Tree, r: Rule | None = None) -> DiffExpr:
    """Diagonal elementary differential; zero on gray-bearing trees."""
    if _has_gray(t):
        return DiffExpr.zero()
    return upsilon_tilde(t, r).detilde()


def _has_gray(t: Tree) -> bool:
    return t.noise == NOISE_GRAY_XI or any(
        e.kind == KIND_GRAY or _has_gray(e.child) for e in t.children
    )


def upsilon_hat(t: Tree, r: Rule | None = None) -> DiffExpr:
    """Product of the children's differentials, ignoring the root node."""
    out = DiffExpr.one()
    for e in t.children:
        if e.kind == KIND_GRAY:
            continue
        if e.kind == KIND_IDOT:
            raise ValueError("elementary differentials are not defined on red edges")
        out = out.times(upsilon(e.child, r))
    return out


# ---------------------------------------------------------------------------
# derivations


def d_a_factor(f: DiffFactor, a: MultiIndex, tilde: bool, r: Rule | None = None) -> DiffExpr:
    """Jet derivative of one factor: D_a d^k = sum_j binom(k,j) d^{k-j} D_{a-j}."""
    if f.tilde != tilde:
        return DiffExpr.zero()
    out = DiffExpr()
    for j in _iter_leq(f.k):
        aj = mi_sub(a, j)
        if aj is None:
            continue
        nf = DiffFactor(f.tilde, f.l, mi_sub(f.k, j), tuple(sorted(f.D + (aj,))))
        if r is not None and factor_is_zero(nf, r):
            continue
        out.add_term((nf,), (), Fraction(mi_binom(f.k, j)))
    return out


def _iter_leq(k: MultiIndex) -> Iterator[MultiIndex]:
    def rec(prefix: tuple[int, ...]):
        i = len(prefix)
        if i == len(k):
            yield prefix
            return
        for n in range(k[i] + 1):
            yield from rec(prefix + (n,))

    yield from rec(())


def d_a(e: DiffExpr, a: MultiIndex, tilde: bool = False, r: Rule | None = None) -> DiffExpr:
    """Leibniz extension of the per-factor jet derivative."""
    return e.map_factors(lambda f: d_a_factor(f, a, tilde, r), lambda f: f.tilde == tilde)


def partial_k(e: DiffExpr, k: MultiIndex, tilde: bool = False, r: Rule | None = None) -> DiffExpr:
    """Outer derivative: per-factor increment of the normal-form exponent."""
    out = e
    for i, n in enumerate(k):
        for _ in range(n):
            eps = tuple(1 if j == i else 0 for j in range(len(k)))
            out = out.map_factors(
                lambda f: _bump(f, eps, r), lambda f, tilde=tilde: f.tilde == tilde
            )
    return out


def _bump(f: DiffFactor, eps: MultiIndex, r: Rule | None) -> DiffExpr:
    nf = DiffFactor(f.tilde, f.l, mi_add(f.k, eps), f.D)
    if r is not None and factor_is_zero(nf, r):
        return DiffExpr.zero()
    return DiffExpr.lift((nf,))


# ---------------------------------------------------------------------------
# characters


def _markers_one(t: Tree) -> Tree:
    from .trees import Edge as _E, node as _node

    return _node(
        t.noise,
        t.k,
        1,
        (_E(e.kind, e.a, _markers_one(e.child)) if e.kind != KIND_GRAY else e for e in t.children),
    )


class Character:
    """Unital functional vanishing on nonnegative degree, marker-blind.

    Unassigned negative-degree trees evaluate to opaque symbols
    ``ell(<canonical text>)``; assignments may bind exact rationals.  The
    lookup key is the gray-folded canonical form (markers suppressed in the
    printed name, so character files use plain tree strings).
    """

    def __init__(self, rule: Rule, assignment: dict[str, Fraction] | None = None):
        self.rule = rule
        self.assignment = dict(assignment or {})

    def value(self, t: Tree) -> Fraction | str | None:
        """Rational value, a symbol name, or None when the character vanishes."""
        key = gray_down_tree(t)
        if key.is_bare():
            return Fraction(1)
        if degree(key, self.rule) >= 0:
            return None
        name = f"ell({print_tree(_markers_one(key))})"
        if name in self.assignment:
            return self.assignment[name]
        return name

    def bind(self, name: str, value: Fraction) -> None:
        self.assignment[name] = value

    @staticmethod
    def symbol_name(t: Tree) -> str:
        return f"ell({print_tree(_markers_one(gray_down_tree(t)))})"

    def to_json(self) -> dict[str, str]:
        return {k: str(v) for k, v in sorted(self.assignment.items())}

    @staticmethod
    def from_json(rule: Rule, obj: dict[str, str]) -> "Character":
        return Character(rule, {k: Fraction(v) for k, v in obj.items()})


def trivial_character(rule: Rule) -> Character:
    """The counit: 1 on the empty tree, 0 elsewhere (bind-all-to-zero view)."""
    c = Character(rule)
    c.value = lambda t: (Fraction(1) if gray_down_tree(t).is_bare() else None)  # type: ignore[method-assign]
    return c


def ell_upsilon_tilde(c: Character, t: TreeVec, r: Rule | None = None) -> DiffExpr:
    """Scale each differential by the character of the gray-folded tree."""
    out = DiffExpr.zero()
    for u, coeff in t.terms.items():
        val = c.value(u)
        if val is None:
            continue
        expr = upsilon_tilde(u, r).scale(coeff)
        if isinstance(val, str):
            out = out + expr.with_sym(val)
        else:
            out = out + expr.scale(val)
    return out
