"""Decorated rooted trees over exact rational coefficients.

A tree node carries a noise flag (none / noise / gray noise), a polynomial
multi-index ``k`` and a marker bit ``v``; an edge carries an integration kind
(``I``, ``I'`` or gray ``gI``) and a multi-index ``a``.  Trees are non-planar:
children are stored sorted by a deterministic total order, so structural
equality of two ``Tree`` objects is equality of canonical forms.

Structurally forbidden configurations (an integration edge over a bare marker
node, over an all-gray tree, or over anything containing a gray noise) are the
zero element: the edge constructor returns ``None`` and vector-level helpers
drop the term.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator

NOISE_NONE = 0
NOISE_XI = 1
NOISE_GRAY_XI = 2

KIND_I = "I"
KIND_IDOT = "Idot"
KIND_GRAY = "gI"

_KIND_RANK = {KIND_I: 0, KIND_IDOT: 1, KIND_GRAY: 2}

MultiIndex = tuple[int, ...]

Scalar = Fraction


# ---------------------------------------------------------------------------
# multi-index helpers


def mi_zero(dim: int) -> MultiIndex:
    return (0,) * dim


def mi_unit(dim: int, i: int) -> MultiIndex:
    return tuple(1 if j == i else 0 for j in range(dim))


def mi_add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


def mi_sub(a: MultiIndex, b: MultiIndex) -> MultiIndex | None:
    """Componentwise difference, or None when any component would go negative."""
    out = tuple(x - y for x, y in zip(a, b))
    return None if any(x < 0 for x in out) else out


def mi_leq(a: MultiIndex, b: MultiIndex) -> bool:
    return all(x <= y for x, y in zip(a, b))


def mi_factorial(a: MultiIndex) -> int:
    out = 1
    for x in a:
        out *= math.factorial(x)
    return out


def mi_binom(a: MultiIndex, b: MultiIndex) -> int:
    out = 1
    for x, y in zip(a, b):
        out *= math.comb(x, y)
    return out


def mi_weight(a: MultiIndex, lam: Fraction) -> Fraction:
    """Parabolic size |a|_s with scaling (lam, 1, ..., 1), time component first."""
    return lam * a[0] + sum(a[1:])


def mi_space_order(a: MultiIndex) -> int:
    return sum(a[1:])


def mi_iter_weighted(dim: int, lam: Fraction, cap: Fraction | int) -> Iterator[MultiIndex]:
    """All multi-indices with |a|_s <= cap, in lexicographic order."""

    def rec(prefix: tuple[int, ...], budget: Fraction) -> Iterator[MultiIndex]:
        i = len(prefix)
        if i == dim:
            yield prefix
            return
        step = lam if i == 0 else Fraction(1)
        n = 0
        while n * step <= budget:
            yield from rec(prefix + (n,), budget - n * step)
            n += 1

    if cap < 0:
        return
    yield from rec((), Fraction(cap))


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Edge:
    kind: str
    a: MultiIndex
    child: "Tree"


@dataclass(frozen=True)
class Tree:
    noise: int
    k: MultiIndex
    v: int
    children: tuple[Edge, ...]

    @property
    def dim(self) -> int:
        return len(self.k)

    def is_single_node(self) -> bool:
        return not self.children

    def is_bare(self) -> bool:
        """Node with no noise, no polynomial and no children (any marker)."""
        return self.noise == NOISE_NONE and not self.children and not any(self.k)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tree({print_tree(self)})"


@lru_cache(maxsize=None)
def canonical_key(t: Tree):
    return (
        t.noise,
        t.k,
        t.v,
        tuple((_KIND_RANK[e.kind], e.a, canonical_key(e.child)) for e in t.children),
    )


def node(noise: int, k: MultiIndex, v: int, edges: Iterable[Edge]) -> Tree:
    """Assemble a node, sorting children into canonical order."""
    es = tuple(sorted(edges, key=lambda e: (_KIND_RANK[e.kind], e.a, canonical_key(e.child))))
    return Tree(noise, tuple(k), v, es)


def contains_gray_xi(t: Tree) -> bool:
    return t.noise == NOISE_GRAY_XI or any(contains_gray_xi(e.child) for e in t.children)


def _has_gray_edge(t: Tree) -> bool:
    return any(e.kind == KIND_GRAY or _has_gray_edge(e.child) for e in t.children)


def _has_hard_content(t: Tree) -> bool:
    """Noise or a polynomial somewhere (markers not counted)."""
    if t.noise == NOISE_XI or any(t.k):
        return True
    return any(e.kind != KIND_GRAY and _has_hard_content(e.child) for e in t.children)


def _has_marker(t: Tree) -> bool:
    return t.v == 1 or any(e.kind != KIND_GRAY and _has_marker(e.child) for e in t.children)


def edge(kind: str, a: MultiIndex, child: Tree) -> Edge | None:
    """Build an edge; returns None (the zero element) for killed configurations.

    Integration over a gray-noise-bearing tree, over a tree made of gray
    symbols only, or over a markerless bare tree is zero.  A marked bare node
    is a graft slot (severed-edge remainders) and stays alive, which the flow
    identity on chain-shaped trees requires.
    """
    if kind == KIND_GRAY:
        if not is_poly_leaf(child):
            raise ValueError("gray integration edges only take bare polynomial leaves")
        return Edge(kind, tuple(a), child)
    if contains_gray_xi(child):
        return None
    if _has_gray_edge(child):
        if not _has_hard_content(child):
            return None  # composed only of gray symbols
    elif not _has_hard_content(child) and not _has_marker(child):
        return None  # bare, markerless
    return Edge(kind, tuple(a), child)


def is_poly_leaf(t: Tree) -> bool:
    return t.noise == NOISE_NONE and t.v == 0 and not t.children


def empty_tree(dim: int, v: int = 1) -> Tree:
    return Tree(NOISE_NONE, mi_zero(dim), v, ())


def xi(dim: int, v: int = 1) -> Tree:
    return Tree(NOISE_XI, mi_zero(dim), v, ())


def with_marker(t: Tree, v: int) -> Tree:
    return Tree(t.noise, t.k, v, t.children)


def with_poly(t: Tree, k: MultiIndex) -> Tree:
    return Tree(t.noise, tuple(k), t.v, t.children)


def erase_markers(t: Tree) -> Tree:
    """Set every marker bit to zero."""
    return node(
        t.noise,
        t.k,
        0,
        (Edge(e.kind, e.a, erase_markers(e.child)) for e in t.children),
    )


def tree_product(s: Tree, t: Tree) -> Tree | None:
    """Merge at the roots; None when two noises or two markers collide."""
    if s.noise != NOISE_NONE and t.noise != NOISE_NONE:
        return None
    v = s.v + t.v
    if v > 1:
        return None
    return node(s.noise or t.noise, mi_add(s.k, t.k), v, s.children + t.children)


def count_edges(t: Tree) -> int:
    return len(t.children) + sum(count_edges(e.child) for e in t.children)


def count_nodes(t: Tree) -> int:
    """Nodes of the non-gray skeleton (gray leaves are bookkeeping, not nodes)."""
    return 1 + sum(count_nodes(e.child) for e in t.children if e.kind != KIND_GRAY)


def iter_nodes(t: Tree, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], Tree]]:
    """Depth-first (path, subtree) pairs; paths are canonical child indices."""
    yield path, t
    for i, e in enumerate(t.children):
        if e.kind != KIND_GRAY:
            yield from iter_nodes(e.child, path + (i,))


# ---------------------------------------------------------------------------
# degree and symmetry factor


@dataclass(frozen=True)
class Arity:
    """Bounds on the integration children a node may carry.

    ``total`` caps the number of I/I' children (None = smooth nonlinearity,
    unbounded); ``per_order`` caps the count per spatial derivative order.
    """

    total: int | None = None
    per_order: tuple[tuple[int, int], ...] = ()

    def order_cap(self, order: int) -> int | None:
        for o, c in self.per_order:
            if o == order:
                return c
        return None

    def to_json(self) -> dict:
        return {"total": self.total, "per_order": {str(o): c for o, c in self.per_order}}

    @staticmethod
    def from_json(obj: dict | None) -> "Arity":
        if obj is None:
            return Arity()
        per = tuple(sorted((int(o), int(c)) for o, c in obj.get("per_order", {}).items()))
        return Arity(obj.get("total"), per)


@dataclass(frozen=True)
class Rule:
    """Equation class: scaling, noise regularity and nonlinearity shape."""

    lam: Fraction
    alpha: Fraction
    d: int
    q: int
    p: int
    gamma: Fraction
    a_cap: int
    k_cap: int
    arity_g: Arity = Arity()
    arity_f: Arity = Arity()

    @property
    def dim(self) -> int:
        return self.d + 1

    def weight(self, a: MultiIndex) -> Fraction:
        return mi_weight(a, self.lam)

    def jet_order(self, noise: bool) -> int:
        return self.p if noise else self.q

    def arity(self, noise: bool) -> Arity:
        return self.arity_f if noise else self.arity_g

    def to_json(self) -> dict:
        return {
            "lambda": str(self.lam),
            "alpha": str(self.alpha),
            "d": self.d,
            "q": self.q,
            "p": self.p,
            "gamma": str(self.gamma),
            "a_cap": self.a_cap,
            "k_cap": self.k_cap,
            "arity_g": self.arity_g.to_json(),
            "arity_f": self.arity_f.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "Rule":
        return Rule(
            lam=Fraction(obj["lambda"]),
            alpha=Fraction(obj["alpha"]),
            d=int(obj["d"]),
            q=int(obj["q"]),
            p=int(obj["p"]),
            gamma=Fraction(obj["gamma"]),
            a_cap=int(obj["a_cap"]),
            k_cap=int(obj["k_cap"]),
            arity_g=Arity.from_json(obj.get("arity_g")),
            arity_f=Arity.from_json(obj.get("arity_f")),
        )


def degree(t: Tree, r: Rule) -> Fraction:
    """Recursive homogeneity; gray symbols contribute nothing."""
    if t.dim != r.dim:
        raise ValueError(f"tree dimension {t.dim} does not match rule dimension {r.dim}")
    deg = mi_weight(t.k, r.lam)
    if t.noise == NOISE_XI:
        deg += r.alpha
    for e in t.children:
        if e.kind == KIND_I:
            deg += degree(e.child, r) + r.lam - r.weight(e.a)
        elif e.kind == KIND_IDOT:
            deg += degree(e.child, r) - r.weight(e.a)
    return deg


@lru_cache(maxsize=None)
def _symmetry_factor_canonical(t: Tree) -> int:
    out = mi_factorial(t.k)
    groups: dict[tuple, int] = {}
    rep: dict[tuple, Tree] = {}
    for e in t.children:
        key = (e.kind, e.a, canonical_key(e.child))
        groups[key] = groups.get(key, 0) + 1
        rep.setdefault(key, e.child)
    for key, mult in groups.items():
        out *= _symmetry_factor_canonical(rep[key]) ** mult * math.factorial(mult)
    return out


def symmetry_factor(t: Tree) -> int:
    """k!-weighted count of decoration-preserving symmetries; marker-blind."""
    return _symmetry_factor_canonical(erase_markers(t))


# ---------------------------------------------------------------------------
# linear combinations


class TreeVec:
    """Formal rational linear combination of trees (zero coefficients dropped)."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[Tree, Fraction] | None = None):
        self.terms: dict[Tree, Fraction] = {}
        if terms:
            for t, c in terms.items():
                if c:
                    self.terms[t] = Fraction(c)

    @staticmethod
    def zero() -> "TreeVec":
        return TreeVec()

    @staticmethod
    def lift(t: Tree | None, c: Fraction | int = 1) -> "TreeVec":
        if t is None or not c:
            return TreeVec()
        return TreeVec({t: Fraction(c)})

    def add_term(self, t: Tree | None, c: Fraction | int) -> None:
        if t is None or not c:
            return
        cur = self.terms.get(t, Fraction(0)) + c
        if cur:
            self.terms[t] = cur
        else:
            self.terms.pop(t, None)

    def __add__(self, other: "TreeVec") -> "TreeVec":
        out = TreeVec(dict(self.terms))
        for t, c in other.terms.items():
            out.add_term(t, c)
        return out

    def __sub__(self, other: "TreeVec") -> "TreeVec":
        return self + other.scale(-1)

    def scale(self, c: Fraction | int) -> "TreeVec":
        if not c:
            return TreeVec()
        return TreeVec({t: x * c for t, x in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TreeVec) and self.terms == other.terms

    def __hash__(self):
        raise TypeError("TreeVec is not hashable")

    def __iter__(self) -> Iterator[tuple[Tree, Fraction]]:
        return iter(sorted(self.terms.items(), key=lambda tc: canonical_key(tc[0])))

    def __len__(self) -> int:
        return len(self.terms)

    def map_trees(self, fn: Callable[[Tree], "TreeVec"]) -> "TreeVec":
        """Linear extension of a tree-level map."""
        out = TreeVec()
        for t, c in self.terms.items():
            for u, x in fn(t).terms.items():
                out.add_term(u, x * c)
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        if not self.terms:
            return "0"
        return " + ".join(f"{c}*{print_tree(t)}" for t, c in self)


class TensorVec:
    """Rational linear combination of tree pairs (coproduct output type)."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[tuple[Tree, Tree], Fraction] | None = None):
        self.terms: dict[tuple[Tree, Tree], Fraction] = {}
        if terms:
            for p, c in terms.items():
                if c:
                    self.terms[p] = Fraction(c)

    @staticmethod
    def zero() -> "TensorVec":
        return TensorVec()

    @staticmethod
    def lift(left: Tree | None, right: Tree | None, c: Fraction | int = 1) -> "TensorVec":
        if left is None or right is None or not c:
            return TensorVec()
        return TensorVec({(left, right): Fraction(c)})

    def add_term(self, left: Tree | None, right: Tree | None, c: Fraction | int) -> None:
        if left is None or right is None or not c:
            return
        key = (left, right)
        cur = self.terms.get(key, Fraction(0)) + c
        if cur:
            self.terms[key] = cur
        else:
            self.terms.pop(key, None)

    def __add__(self, other: "TensorVec") -> "TensorVec":
        out = TensorVec(dict(self.terms))
        for (l, rr), c in other.terms.items():
            out.add_term(l, rr, c)
        return out

    def __sub__(self, other: "TensorVec") -> "TensorVec":
        return self + other.scale(-1)

    def scale(self, c: Fraction | int) -> "TensorVec":
        if not c:
            return TensorVec()
        return TensorVec({p: x * c for p, x in self.terms.items()})

    def product(self, other: "TensorVec") -> "TensorVec":
        """Componentwise tree product of two tensors."""
        out = TensorVec()
        for (l1, r1), c1 in self.terms.items():
            for (l2, r2), c2 in other.terms.items():
                out.add_term(tree_product(l1, l2), tree_product(r1, r2), c1 * c2)
        return out

    def map_legs(
        self,
        left_fn: Callable[[Tree], TreeVec] | None = None,
        right_fn: Callable[[Tree], TreeVec] | None = None,
    ) -> "TensorVec":
        out = TensorVec()
        for (l, rr), c in self.terms.items():
            lvec = left_fn(l) if left_fn else TreeVec.lift(l)
            rvec = right_fn(rr) if right_fn else TreeVec.lift(rr)
            for lt, lc in lvec.terms.items():
                for rt, rc in rvec.terms.items():
                    out.add_term(lt, rt, c * lc * rc)
        return out

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TensorVec) and self.terms == other.terms

    def __hash__(self):
        raise TypeError("TensorVec is not hashable")

    def __iter__(self) -> Iterator[tuple[tuple[Tree, Tree], Fraction]]:
        return iter(
            sorted(
                self.terms.items(),
                key=lambda pc: (canonical_key(pc[0][0]), canonical_key(pc[0][1])),
            )
        )

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        if not self.terms:
            return "0"
        return " + ".join(f"{c}*{print_tree(l)} (x) {print_tree(r)}" for (l, r), c in self)


def vec_product(u: TreeVec, v: TreeVec) -> TreeVec:
    out = TreeVec()
    for s, cs in u.terms.items():
        for t, ct in v.terms.items():
            out.add_term(tree_product(s, t), cs * ct)
    return out


def inner_product(u: TreeVec, v: TreeVec) -> Fraction:
    """<s,t> = S(t) for equal canonical trees, 0 otherwise, extended bilinearly."""
    out = Fraction(0)
    small, big = (u, v) if len(u.terms) <= len(v.terms) else (v, u)
    for t, c in small.terms.items():
        other = big.terms.get(t)
        if other:
            out += c * other * symmetry_factor(t)
    return out


def inner_product_tensor(u: TensorVec, v: TensorVec) -> Fraction:
    out = Fraction(0)
    small, big = (u, v) if len(u.terms) <= len(v.terms) else (v, u)
    for (l, rr), c in small.terms.items():
        other = big.terms.get((l, rr))
        if other:
            out += c * other * symmetry_factor(l) * symmetry_factor(rr)
    return out


# ---------------------------------------------------------------------------
# text grammar

_NOISE_NAME = {NOISE_NONE: "none", NOISE_XI: "xi", NOISE_GRAY_XI: "gxi"}
_NOISE_FROM_NAME = {v: k for k, v in _NOISE_NAME.items()}
_KIND_TEXT = {KIND_I: "I", KIND_IDOT: "I'", KIND_GRAY: "gI"}


def _fmt_mi(a: MultiIndex) -> str:
    return "(" + ",".join(str(x) for x in a) + ")"


def print_tree(t: Tree) -> str:
    """Canonical text form; the v=1 marker is the default and is omitted."""
    parts: list[str] = []
    if t.noise == NOISE_XI:
        parts.append("Xi")
    elif t.noise == NOISE_GRAY_XI:
        parts.append("gXi")
    if any(t.k):
        parts.append("X^" + _fmt_mi(t.k))
    if t.v == 0:
        parts.append("Y^0")
    for e in t.children:
        if e.kind == KIND_GRAY:
            parts.append(f"gI[{_fmt_mi(e.a)}](X^{_fmt_mi(e.child.k)})")
        else:
            parts.append(f"{_KIND_TEXT[e.kind]}[{_fmt_mi(e.a)}]({print_tree(e.child)})")
    if not parts:
        return "1"
    return "*".join(parts)


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class _Parser:
    _MI = re.compile(r"\(\s*(-?\d+)\s*(?:,\s*(-?\d+)\s*)*\)")

    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0

    def error(self, msg: str):
        raise ParseError(msg, self.pos)

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return "" if self.eof() else self.text[self.pos]

    def expect(self, s: str) -> None:
        if not self.text.startswith(s, self.pos):
            self.error(f"expected {s!r}")
        self.pos += len(s)

    def multi_index(self) -> MultiIndex:
        if self.peek() != "(":
            self.error("expected '('")
        end = self.text.find(")", self.pos)
        if end < 0:
            self.error("unterminated multi-index")
        body = self.text[self.pos + 1 : end]
        try:
            values = tuple(int(x.strip()) for x in body.split(","))
        except ValueError:
            self.error("bad multi-index entry")
        if len(values) != self.dim:
            self.error(f"multi-index has {len(values)} entries, expected {self.dim}")
        if any(x < 0 for x in values):
            self.error("negative multi-index entry")
        self.pos = end + 1
        return values

    def tree(self) -> Tree:
        noise = NOISE_NONE
        k = mi_zero(self.dim)
        v: int | None = None
        edges: list[Edge] = []
        saw_one = False
        while True:
            if self.text.startswith("Xi", self.pos):
                if noise != NOISE_NONE:
                    self.error("two noises at one node")
                noise = NOISE_XI
                self.pos += 2
            elif self.text.startswith("gXi", self.pos):
                if noise != NOISE_NONE:
                    self.error("two noises at one node")
                noise = NOISE_GRAY_XI
                self.pos += 3
            elif self.text.startswith("X^", self.pos):
                self.pos += 2
                k = mi_add(k, self.multi_index())
            elif self.text.startswith("Y^", self.pos):
                self.pos += 2
                if self.peek() not in "01":
                    self.error("marker must be Y^0 or Y^1")
                v = int(self.peek())
                self.pos += 1
            elif self.text.startswith("gI[", self.pos):
                self.pos += 3
                a = self.multi_index()
                self.expect("](")
                child = self.tree()
                self.expect(")")
                # the payload is a bare polynomial leaf; its marker is fixed to 0
                child = Tree(child.noise, child.k, 0, child.children)
                if not is_poly_leaf(child):
                    self.error("gray edge payload must be a bare polynomial leaf")
                e = edge(KIND_GRAY, a, child)
                assert e is not None
                edges.append(e)
            elif self.text.startswith("I'[", self.pos) or self.text.startswith("I[", self.pos):
                kind = KIND_IDOT if self.text[self.pos + 1] == "'" else KIND_I
                self.pos += 3 if kind == KIND_IDOT else 2
                a = self.multi_index()
                self.expect("](")
                child = self.tree()
                self.expect(")")
                e = edge(kind, a, child)
                if e is None:
                    self.error("integration edge over a structurally-zero subtree")
                edges.append(e)
            elif self.peek() == "1":
                saw_one = True
                self.pos += 1
            else:
                self.error("expected a tree factor")
            if self.peek() == "*":
                self.pos += 1
                continue
            break
        del saw_one
        return node(noise, k, 1 if v is None else v, edges)


def parse_tree(text: str, r: Rule | int) -> Tree:
    """Parse the text grammar; ``r`` may be a Rule or a bare dimension d+1."""
    dim = r if isinstance(r, int) else r.dim
    p = _Parser(text.strip().replace(" ", ""), dim)
    t = p.tree()
    if not p.eof():
        p.error("trailing input")
    if isinstance(r, Rule):
        _validate_caps(t, r)
    return t


def _validate_caps(t: Tree, r: Rule) -> None:
    for e in t.children:
        if mi_weight(e.a, r.lam) > r.a_cap:
            raise ParseError(f"edge decoration {e.a} exceeds |a|_s cap {r.a_cap}", 0)
        if e.kind != KIND_GRAY:
            _validate_caps(e.child, r)


# ---------------------------------------------------------------------------
# JSON forms


def tree_to_json(t: Tree) -> dict:
    return {
        "noise": _NOISE_NAME[t.noise],
        "k": list(t.k),
        "v": t.v,
        "children": [
            {"kind": "Idot" if e.kind == KIND_IDOT else e.kind, "a": list(e.a), "child": tree_to_json(e.child)}
            for e in t.children
        ],
    }


def tree_from_json(obj: dict) -> Tree:
    edges = []
    for c in obj.get("children", []):
        e = edge(c["kind"], tuple(c["a"]), tree_from_json(c["child"]))
        if e is None:
            raise ValueError("JSON tree contains a structurally-zero integration edge")
        edges.append(e)
    return node(_NOISE_FROM_NAME[obj["noise"]], tuple(obj["k"]), int(obj.get("v", 1)), edges)


def vec_to_json(v: TreeVec) -> list[dict]:
    return [{"tree": print_tree(t), "coeff": str(c)} for t, c in v]


def tensor_to_json(v: TensorVec) -> list[dict]:
    return [
        {"left": print_tree(l), "right": print_tree(rr), "coeff": str(c)} for (l, rr), c in v
    ]


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
