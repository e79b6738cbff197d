"""Rule handling: subcriticality analysis and conforming-tree enumeration.

A tree conforms to a rule when every leaf carries content (noise or a
polynomial), every edge decoration satisfies |a|_s <= a_cap with no time
component beyond the cap, and each node's integration children respect the
jet order (q without noise, p with noise) and the arity caps.

Enumeration is complete within a degree window: an exact min-degree-per-edge
dynamic program bounds the edge counts (the naive ceil((gamma-alpha)/delta)
bound undercounts when arity-capped attachments lower the degree), and the
generator is cross-checked against an unpruned brute-force search in tests.
"""

from __future__ import annotations

import itertools
import json
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from .trees import (
    KIND_I,
    NOISE_NONE,
    NOISE_XI,
    Arity,
    MultiIndex,
    Rule,
    Tree,
    canonical_key,
    degree,
    edge,
    mi_iter_weighted,
    mi_space_order,
    mi_weight,
    mi_zero,
    node,
)

_DP_HORIZON = 64


def preset(name: str) -> Rule:
    """Built-in equation presets."""
    if name == "gkpz":
        return Rule(
            lam=Fraction(2),
            alpha=Fraction(-3, 2) - Fraction(1, 100),
            d=1,
            q=1,
            p=0,
            gamma=Fraction(0),
            a_cap=1,
            k_cap=2,
            arity_g=Arity(total=None, per_order=((1, 2),)),
            arity_f=Arity(total=None, per_order=()),
        )
    if name == "phi4":
        return Rule(
            lam=Fraction(2),
            alpha=Fraction(-5, 2) - Fraction(1, 100),
            d=3,
            q=0,
            p=0,
            gamma=Fraction(0),
            a_cap=0,
            k_cap=2,
            arity_g=Arity(total=3, per_order=()),
            arity_f=Arity(total=0, per_order=()),
        )
    raise KeyError(f"unknown rule preset {name!r}")


def load_rule(spec: str) -> Rule:
    """A preset name, a rule JSON file, or a file in $FLOWTREES_RULE_DIR."""
    import os

    try:
        return preset(spec)
    except KeyError:
        pass
    path = Path(spec)
    if not path.exists():
        env = os.environ.get("FLOWTREES_RULE_DIR")
        if env:
            candidate = Path(env) / f"{spec}.json"
            if candidate.exists():
                path = candidate
    if not path.exists():
        raise KeyError(f"{spec!r} is neither a preset nor a rule file")
    return Rule.from_json(json.loads(path.read_text()))


def allowed_edge_decorations(r: Rule, noise_parent: bool) -> list[MultiIndex]:
    """Edge decorations a node of the given kind may put on its children."""
    order = r.jet_order(noise_parent)
    return [
        a
        for a in mi_iter_weighted(r.dim, r.lam, r.a_cap)
        if mi_space_order(a) <= order
    ]


def _node_child_ok(r: Rule, noise_parent: bool, decorations: list[MultiIndex]) -> bool:
    arity = r.arity(noise_parent)
    order = r.jet_order(noise_parent)
    if arity.total is not None and len(decorations) > arity.total:
        return False
    counts: dict[int, int] = {}
    for a in decorations:
        o = mi_space_order(a)
        if o > order:
            return False
        counts[o] = counts.get(o, 0) + 1
    for o, n in counts.items():
        cap = arity.order_cap(o)
        if cap is not None and n > cap:
            return False
    return True


def conforms(t: Tree, r: Rule) -> bool:
    """Rule conformance of a (gray-free) tree; markers are ignored."""
    if t.noise == NOISE_NONE and not t.children and not any(t.k):
        # the bare node is fine as a whole tree but checked at the parent below
        pass
    noise = t.noise == NOISE_XI
    decos = []
    for e in t.children:
        if e.kind == KIND_I or e.kind == "Idot":
            if mi_weight(e.a, r.lam) > r.a_cap:
                return False
            decos.append(e.a)
            child = e.child
            if child.noise == NOISE_NONE and not child.children and not any(child.k):
                return False
            if not conforms(child, r):
                return False
    return _node_child_ok(r, noise, decos)


# ---------------------------------------------------------------------------
# subcriticality


def check_subcritical(r: Rule) -> tuple[bool, Fraction, int]:
    """(flag, delta_min, E_max) for the rule's degree window.

    delta_min is the cheapest attachment the rule allows to repeat without
    bound: uncapped child slots must each raise the degree, and arity-capped
    slots are amortized into the cost of the host node.  E_max is taken from
    an exact min-degree-per-edge-count DP (see _min_degree_profile); the
    closed-form ceil((gamma-alpha)/delta_min) is not sound for rules whose
    capped attachments lower the degree.
    """
    units: list[Fraction] = []
    divergent = False
    for noise_parent in (False, True):
        arity = r.arity(noise_parent)
        if arity.total == 0:
            continue
        # per-slot increments at this node type: edge + optional noise child
        for a in allowed_edge_decorations(r, noise_parent):
            base = r.lam - mi_weight(a, r.lam)
            o = mi_space_order(a)
            capped = arity.total is not None or arity.order_cap(o) is not None
            for child_noise in (True, False):
                inc = base + (r.alpha if child_noise else Fraction(0))
                if capped:
                    continue
                if inc <= 0:
                    divergent = True
                units.append(inc)
        # amortized node units: cheapest incoming edge plus capped-slot losses
        loss = Fraction(0)
        for a in allowed_edge_decorations(r, noise_parent):
            o = mi_space_order(a)
            cap = arity.order_cap(o)
            if arity.total is not None:
                cap = arity.total if cap is None else min(cap, arity.total)
            if cap is None:
                continue
            slot = r.lam - mi_weight(a, r.lam) + min(r.alpha, Fraction(0))
            loss += cap * min(slot, Fraction(0))
        incoming = r.lam - min(
            (mi_weight(a, r.lam) for a in allowed_edge_decorations(r, False)),
            default=Fraction(0),
        )
        units.append(incoming + (r.alpha if noise_parent else Fraction(0)) + loss)
    if not units:
        return False, Fraction(0), 0
    delta = min(units)
    if divergent or delta <= 0:
        return False, min(units + [Fraction(0)]), 0
    profile = _min_degree_profile(r)
    emax = 0
    for e, dmin in enumerate(profile):
        if dmin <= r.gamma:
            emax = e
    if profile and min(profile[max(emax + 1, 1) :], default=r.gamma + 1) <= r.gamma:
        raise RuntimeError("degree profile dips back below gamma beyond E_max")
    return True, delta, emax


_INF = Fraction(10**9)


def _minplus(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    n = len(a)
    out = [_INF] * n
    for i, x in enumerate(a):
        if x >= _INF:
            continue
        for j in range(n - i):
            y = b[j]
            if y < _INF and x + y < out[i + j]:
                out[i + j] = x + y
    return out


def _min_degree_profile(r: Rule) -> list[Fraction]:
    """best[e] = exact min degree over conforming subtrees with e edges.

    Fixed-point iteration: node values are assembled from child options via
    min-plus convolutions, with arity-capped slot classes convolved a bounded
    number of times and uncapped classes closed under repetition.
    """
    n = _DP_HORIZON + 1
    best = [_INF] * n

    def child_options(noise_parent: bool) -> tuple[dict[int, Fraction], list[tuple[int, Fraction]]]:
        """cheapest slot cost per spatial order, split capped/uncapped."""
        arity = r.arity(noise_parent)
        per_order: dict[int, Fraction] = {}
        for a in allowed_edge_decorations(r, noise_parent):
            o = mi_space_order(a)
            c = r.lam - mi_weight(a, r.lam)
            if o not in per_order or c < per_order[o]:
                per_order[o] = c
        capped = []
        uncapped: dict[int, Fraction] = {}
        for o, c in per_order.items():
            cap = arity.order_cap(o)
            if arity.total is not None:
                cap = arity.total if cap is None else min(cap, arity.total)
            if cap is None:
                uncapped[o] = c
            else:
                capped.append((o, cap, c))
        return uncapped, [(cap, c) for _o, cap, c in capped]

    for _ in range(n):
        changed = False
        for noise in (True, False):
            arity = r.arity(noise)
            base = r.alpha if noise else Fraction(0)
            if arity.total == 0 and not noise:
                continue  # childless no-noise nodes are not subtrees
            uncapped, capped = child_options(noise)
            # one child = incoming edge + any subtree
            def child_array(cost: Fraction) -> list[Fraction]:
                arr = [_INF] * n
                for e in range(1, n):
                    if best[e - 1] < _INF:
                        arr[e] = cost + best[e - 1]
                return arr

            acc = [_INF] * n
            acc[0] = base
            total_budget = arity.total if arity.total is not None else None
            used_children = 0
            for cap, cost in capped:
                ca = child_array(cost)
                for _i in range(cap):
                    with_child = _minplus(acc, ca)
                    acc = [min(x, y) for x, y in zip(acc, with_child)]
                used_children += cap
            if uncapped and (total_budget is None or used_children < total_budget):
                ua = [_INF] * n
                for e in range(1, n):
                    c = min((child_array(cost)[e] for cost in uncapped.values()), default=_INF)
                    ua[e] = c
                # closure: any number of uncapped children
                reps = n if total_budget is None else max(0, total_budget - used_children)
                for _i in range(min(reps, n)):
                    with_child = _minplus(acc, ua)
                    merged = [min(x, y) for x, y in zip(acc, with_child)]
                    if merged == acc:
                        break
                    acc = merged
            for e in range(n):
                if not noise and e == 0:
                    continue  # no-noise nodes need at least one child
                if acc[e] < best[e]:
                    best[e] = acc[e]
                    changed = True
        if not changed:
            break
    return best


# ---------------------------------------------------------------------------
# enumeration


def enumerate_by_edges(
    r: Rule,
    max_edges: int,
    markers: str = "one",
    max_space_k: int = 0,
    slots: bool = False,
) -> list[Tree]:
    """All rule-conforming trees with at most max_edges edges.

    markers: "one" (all v=1), "zero" (all v=0), or "all" (every pattern).
    max_space_k adds polynomial decorations with |k|_s up to the bound.
    slots additionally allows bare marked leaves (severed-edge remainders).
    """
    base = _enumerate_shapes(r, max_edges, slots)
    out: list[Tree] = []
    for t in base:
        for u in _with_polys(t, r, max_space_k):
            out.extend(_marker_patterns(u, markers))
    seen = set()
    uniq = []
    for t in out:
        key = canonical_key(t)
        if key not in seen:
            seen.add(key)
            uniq.append(t)
    uniq.sort(key=canonical_key)
    return uniq


def _enumerate_shapes(r: Rule, max_edges: int, slots: bool = False) -> list[Tree]:
    @lru_cache(maxsize=None)
    def subtrees(edges: int) -> tuple[Tree, ...]:
        """Conforming subtrees with exactly `edges` edges, markers all 1."""
        out: list[Tree] = []
        for noise in (NOISE_XI, NOISE_NONE):
            if noise == NOISE_NONE and edges == 0 and not slots:
                continue  # bare leaves cannot hang under an edge
            for t in _assemble(noise, edges):
                out.append(t)
        return tuple(out)

    def _assemble(noise: int, edges: int) -> list[Tree]:
        decos = allowed_edge_decorations(r, noise == NOISE_XI)
        results: list[Tree] = []
        seen: set = set()

        def rec(remaining: int, counts: dict[int, int], total: int, children: tuple, floor_key):
            if remaining == 0:
                if not _node_child_ok(r, noise == NOISE_XI, [e.a for e in children]):
                    return
                t = node(noise, mi_zero(r.dim), 1, children)
                key = canonical_key(t)
                if key not in seen:
                    seen.add(key)
                    results.append(t)
                return
            arity = r.arity(noise == NOISE_XI)
            if arity.total is not None and total >= arity.total:
                return
            for a in decos:
                o = mi_space_order(a)
                cap = arity.order_cap(o)
                if cap is not None and counts.get(o, 0) >= cap:
                    continue
                for ce in range(remaining):
                    for child in subtrees(ce):
                        e = edge(KIND_I, a, child)
                        if e is None:
                            continue
                        ekey = (a, canonical_key(child))
                        if floor_key is not None and ekey < floor_key:
                            continue  # children built in sorted order: no dups
                        counts[o] = counts.get(o, 0) + 1
                        rec(remaining - ce - 1, counts, total + 1, children + (e,), ekey)
                        counts[o] -= 1

        rec(edges, {}, 0, (), None)
        return results

    out: list[Tree] = []
    for e in range(max_edges + 1):
        for noise in (NOISE_XI, NOISE_NONE):
            out.extend(_assemble(noise, e))
    return out


def _with_polys(t: Tree, r: Rule, max_space_k: int) -> list[Tree]:
    if max_space_k <= 0:
        return [t]
    from .operators import node_increment

    out = [t]
    for w in range(1, max_space_k + 1):
        for k in mi_iter_weighted(r.dim, r.lam, w):
            if mi_weight(k, r.lam) != w:
                continue
            for u in node_increment(t, k).terms:
                out.append(u)
    return out


def _marker_patterns(t: Tree, markers: str) -> list[Tree]:
    from .trees import erase_markers

    if markers == "one":
        return [_set_markers(t, 1)]
    if markers == "zero":
        return [erase_markers(t)]
    if markers == "all":
        paths = _node_paths(t)
        out = []
        for bits in itertools.product((0, 1), repeat=len(paths)):
            out.append(_apply_markers(t, dict(zip(paths, bits))))
        return out
    raise ValueError(f"unknown marker mode {markers!r}")


def _set_markers(t: Tree, v: int) -> Tree:
    from .trees import Edge as _E

    return node(
        t.noise,
        t.k,
        v,
        (_E(e.kind, e.a, _set_markers(e.child, v)) if e.kind != "gI" else e for e in t.children),
    )


def _node_paths(t: Tree, prefix: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    out = [prefix]
    for i, e in enumerate(t.children):
        if e.kind != "gI":
            out.extend(_node_paths(e.child, prefix + (i,)))
    return out


def _apply_markers(t: Tree, assign: dict[tuple[int, ...], int], prefix: tuple[int, ...] = ()) -> Tree:
    from .trees import Edge as _E

    children = []
    for i, e in enumerate(t.children):
        if e.kind == "gI":
            children.append(e)
        else:
            children.append(_E(e.kind, e.a, _apply_markers(e.child, assign, prefix + (i,))))
    return node(t.noise, t.k, assign.get(prefix, t.v), children)


def sample_trees(
    r: Rule,
    edges: int,
    n: int,
    seed: int,
    markers: str = "one",
    slots: bool = False,
    max_space_k: int = 0,
) -> list[Tree]:
    """n random rule-conforming trees with exactly `edges` edges (seeded)."""
    import random as _random

    from .operators import node_increment
    from .trees import erase_markers

    rng = _random.Random(seed)

    def build(edges: int, can_be_bare: bool) -> Tree | None:
        noise = rng.random() < 0.5
        if edges == 0 and not noise:
            if not (slots and can_be_bare):
                noise = True
        arity = r.arity(noise)
        decos = allowed_edge_decorations(r, noise)
        if edges > 0 and not decos:
            return None
        counts: dict[int, int] = {}
        children = []
        remaining = edges
        while remaining > 0:
            if arity.total is not None and len(children) >= arity.total:
                return None
            opts = [a for a in decos if _cap_ok(arity, counts, a)]
            if not opts:
                return None
            a = rng.choice(opts)
            ce = rng.randint(1, remaining)
            child = build(ce - 1, False)
            if child is None:
                return None
            e = edge(KIND_I, a, child)
            if e is None:
                return None
            counts[mi_space_order(a)] = counts.get(mi_space_order(a), 0) + 1
            children.append(e)
            remaining -= ce
        return node(NOISE_XI if noise else NOISE_NONE, mi_zero(r.dim), 1, children)

    out: list[Tree] = []
    attempts = 0
    while len(out) < n and attempts < 50 * n + 100:
        attempts += 1
        t = build(edges, True)
        if t is None:
            continue
        if max_space_k and rng.random() < 0.5:
            ks = [
                k
                for w in range(1, max_space_k + 1)
                for k in mi_iter_weighted(r.dim, r.lam, w)
                if mi_weight(k, r.lam) == w
            ]
            if ks:
                variants = list(node_increment(t, rng.choice(ks)).terms)
                t = rng.choice(variants)
        if markers == "zero":
            t = erase_markers(t)
        elif markers == "all":
            t = _apply_markers(t, {p: rng.randint(0, 1) for p in _node_paths(t)})
        out.append(t)
    return out


def _cap_ok(arity: Arity, counts: dict[int, int], a: MultiIndex) -> bool:
    cap = arity.order_cap(mi_space_order(a))
    return cap is None or counts.get(mi_space_order(a), 0) < cap


TREE_SETS = ("t0", "t0star", "t0x", "t0neg")


def enumerate_trees(r: Rule, which: str = "t0star") -> list[Tree]:
    """Complete window enumeration: conforming trees with degree <= gamma
    (strictly < 0 for t0neg), deduplicated by canonical form."""
    ok, _delta, emax = check_subcritical(r)
    if not ok:
        raise ValueError("rule is not subcritical; the degree window is infinite")
    markers = "zero" if which == "t0" else "one"
    window = r.gamma if which != "t0neg" else Fraction(0)
    bases = [t for t in enumerate_by_edges(r, emax, markers=markers) if degree(t, r) <= window]
    out = []
    for base in bases:
        cands = [base]
        if which in ("t0x", "t0neg"):
            # polynomials only raise the degree: bound them by the base slack
            slack = window - degree(base, r)
            cands = _with_polys(base, r, max(0, _ceil(slack) - (1 if which == "t0neg" else 0)))
        for t in cands:
            dg = degree(t, r)
            if (dg < 0) if which == "t0neg" else (dg <= r.gamma):
                out.append(t)
    seen = set()
    uniq = []
    for t in out:
        key = canonical_key(t)
        if key not in seen:
            seen.add(key)
            uniq.append(t)
    uniq.sort(key=canonical_key)
    return uniq


def _ceil(x: Fraction) -> int:
    return -int((-x) // 1)


def brute_force_trees(r: Rule, max_edges: int) -> list[Tree]:
    """Unpruned oracle: generate every decorated shape, then filter."""
    alphabet = list(mi_iter_weighted(r.dim, r.lam, r.a_cap))

    def gen(edges: int) -> list[Tree]:
        out = []
        for noise in (NOISE_XI, NOISE_NONE):
            if edges == 0:
                out.append(node(noise, mi_zero(r.dim), 1, ()))
                continue
            for parts in _compositions(edges):
                kids_options = []
                for ce in parts:
                    opts = []
                    for child in gen(ce - 1):
                        for a in alphabet:
                            e = edge(KIND_I, a, child)
                            if e is not None:
                                opts.append(e)
                    kids_options.append(opts)
                for combo in itertools.product(*kids_options):
                    out.append(node(noise, mi_zero(r.dim), 1, combo))
        return out

    seen = set()
    uniq = []
    for e in range(max_edges + 1):
        for t in gen(e):
            if not conforms(t, r):
                continue
            key = canonical_key(t)
            if key not in seen:
                seen.add(key)
                uniq.append(t)
    uniq.sort(key=canonical_key)
    return uniq


def _compositions(n: int) -> list[tuple[int, ...]]:
    """Ordered ways to split n into positive parts (duplicates collapse later)."""
    if n == 0:
        return [()]
    out = []
    for first in range(1, n + 1):
        for rest in _compositions(n - first):
            out.append((first,) + rest)
    return out
