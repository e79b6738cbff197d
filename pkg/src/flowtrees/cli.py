"""Command-line front end.

Exit codes: 0 on success/PASS, 1 on any check failure, 2 on usage errors.
All output is deterministic for a fixed argv and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import verify as verify_mod
from .eval import EvalContext, bphz_constraints, counterterms
from .operators import (
    coproduct_1,
    coproduct_a,
    coproduct_r,
    graft_red,
    m_loc,
    scale_derivative,
    uparrow_all,
)
from .rules import TREE_SETS, enumerate_trees, load_rule
from .trees import (
    Rule,
    TreeVec,
    degree,
    dumps,
    parse_tree,
    print_tree,
    symmetry_factor,
    tensor_to_json,
    vec_to_json,
)
from .upsilon import Character


def _parse_mi(text: str, dim: int) -> tuple[int, ...]:
    parts = [p.strip() for p in text.strip("() ").split(",")]
    values = tuple(int(p) for p in parts)
    if len(values) != dim:
        raise ValueError(f"multi-index needs {dim} entries")
    return values


def _load_character(rule: Rule, path: str | None) -> Character:
    if path is None:
        return Character(rule)
    with open(path) as fh:
        return Character.from_json(rule, json.load(fh))


def cmd_enumerate(args) -> int:
    rule = load_rule(args.rule)
    trees = enumerate_trees(rule, args.set)
    if args.format == "json":
        print(dumps([{"tree": print_tree(t), "degree": str(degree(t, rule)), "symmetry": symmetry_factor(t)} for t in trees]))
    else:
        for t in trees:
            print(f"{print_tree(t)}\tdeg={degree(t, rule)}\tS={symmetry_factor(t)}")
    return 0


def cmd_apply(args) -> int:
    rule = load_rule(args.rule)
    t = TreeVec.lift(parse_tree(args.tree, rule))
    op = args.op
    if op in ("graft", "deltaa") and args.a is None:
        raise SystemExit2("--a is required for this operator")
    if op == "graft":
        if args.sigma is None:
            raise SystemExit2("--sigma is required for graft")
        sigma = TreeVec.lift(parse_tree(args.sigma, rule))
        out = graft_red(sigma, _parse_mi(args.a, rule.dim), t)
        print(dumps(vec_to_json(out)))
    elif op == "deltaa":
        print(dumps(tensor_to_json(coproduct_a(_parse_mi(args.a, rule.dim), t))))
    elif op == "delta1":
        print(dumps(tensor_to_json(coproduct_1(t))))
    elif op == "deltar":
        print(dumps(tensor_to_json(coproduct_r(t, rule))))
    elif op == "dmu":
        print(dumps(vec_to_json(scale_derivative(t))))
    elif op == "mloc":
        print(dumps(vec_to_json(m_loc(t, rule))))
    elif op == "uparrowall":
        print(dumps(vec_to_json(uparrow_all(t, rule))))
    else:
        raise SystemExit2(f"unknown operator {op!r}")
    return 0


def cmd_verify(args) -> int:
    rule = load_rule(args.rule)
    if args.k_cap is not None:
        from dataclasses import replace

        rule = replace(rule, k_cap=args.k_cap)
    ids = args.identity
    reports = []
    for name in ids:
        rep = verify_mod.run_identity(
            name, rule, max_edges=args.max_edges, samples=args.samples, seed=args.seed
        )
        reports.append(rep)
        print(f"{rep.identity}: {rep.status} ({rep.checked} checked)")
        for f in rep.failures[:5]:
            print(f"  counterexample {f['inputs']}: {f['lhs']} != {f['rhs']}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump([r.to_json() for r in reports], fh, indent=2)
    return 0 if all(r.status == "PASS" for r in reports) else 1


def cmd_counterterms(args) -> int:
    rule = load_rule(args.rule)
    char = _load_character(rule, args.character)
    out = counterterms(rule, char)
    print(dumps(out))
    return 0


def cmd_bphz(args) -> int:
    rule = load_rule(args.rule)
    print(dumps(bphz_constraints(rule)))
    return 0


def cmd_numeric(args) -> int:
    import numpy as np

    from .eval import collect_symbols
    from .numeric import (
        PolyNonlinearity,
        TorusGrid,
        check_kernel_contract,
        check_localization,
        interpret,
        build_kernels,
        InterpretEnv,
        sample_noise,
        band_limited_profile,
        richardson_commutation,
    )

    rule = load_rule(args.rule)
    nt, nx = (int(x) for x in args.grid.lower().split("x"))
    grid = TorusGrid(d=1, nt=nt, nx=nx)
    mu = float(Fraction(args.mu))
    eps = float(Fraction(args.eps))
    report: dict = {"identity": args.identity, "grid": args.grid, "mu": args.mu, "eps": args.eps, "seed": args.seed}
    g = PolyNonlinearity((0.0, 0.0, 0.0, -1.0))
    f = PolyNonlinearity((1.0,))
    ctx = EvalContext(rule, Character(rule))
    if args.identity == "kernels":
        rep = check_kernel_contract(grid, rule, mu)
        report.update(rep)
        passed = max(rep["zero_scale_difference"], rep["full_scale_difference"], rep["dot_support_violation"]) < 1e-12
    elif args.identity == "commutation":
        tree = parse_tree(args.tree or "I[(0,0)](Xi)", rule)
        values = _bound_values(ctx, rule, tree, args.seed)
        rep = richardson_commutation(ctx, tree, grid, mu, 1.0 / 64, eps, args.seed, values, g, f)
        report.update(rep)
        passed = rep["ratio"] >= 3.5 and rep["errors"][0] < 1e-4
    elif args.identity == "localization":
        tree = parse_tree(args.tree or "I[(0,0)](Xi*Y^0)*I[(0,0)](Xi*Y^0)", rule)
        values = _bound_values(ctx, rule, tree, args.seed, localized=True)
        err = check_localization(ctx, tree, grid, mu, eps, args.seed, values, g, f)
        report["max_abs_error"] = err
        passed = err < 1e-10
    elif args.identity == "renorm-eq":
        err = _renorm_numeric(ctx, rule, grid, eps, args.seed, g, f)
        report["max_abs_error"] = err
        passed = err < 1e-10
    else:
        raise SystemExit2(f"unknown numeric identity {args.identity!r}")
    report["pass"] = bool(passed)
    print(dumps(report))
    return 0 if passed else 1


def _bound_values(ctx: EvalContext, rule: Rule, tree, seed: int, localized: bool = False):
    from .eval import collect_symbols, e_add, e_scale
    from .verify import _parse_sym, random_character

    syms = set(collect_symbols(ctx.pi_r(tree)))
    if localized:
        syms |= collect_symbols(ctx.pi_hat_diag(tree, "mu"))
    else:
        for u, _c in scale_derivative(TreeVec.lift(tree)).terms.items():
            syms |= collect_symbols(ctx.pi_r(u))
    ch = random_character(rule, seed + 17)
    return {s: ch.value(_parse_sym(s, rule)) for s in syms}


def _renorm_numeric(ctx, rule, grid, eps, seed, g, f) -> float:
    import numpy as np

    from .eval import collect_symbols, counterterm_expr, e_scale, specialize_mu
    from .numeric import InterpretEnv, band_limited_profile, build_kernels, interpret, sample_noise
    from .rules import enumerate_trees
    from .verify import _parse_sym, random_character

    window = enumerate_trees(rule, "t0star")
    negatives = enumerate_trees(rule, "t0neg")
    rhs_expr = counterterm_expr(rule, ctx.char, negatives)
    syms = set(collect_symbols(rhs_expr))
    exprs = []
    for t in window:
        e = specialize_mu(ctx.pi_r(t), "zero")
        syms |= collect_symbols(e)
        exprs.append((t, e))
    ch = random_character(rule, seed + 23)
    values = {s: ch.value(_parse_sym(s, rule)) for s in syms}
    xi = sample_noise(grid, eps, seed)
    xi = xi / float(np.max(np.abs(xi)))
    phi = band_limited_profile(grid, seed + 1)
    phi = 0.5 * phi / float(np.max(np.abs(phi)))
    env = InterpretEnv(grid, build_kernels(grid, rule, 0.0), xi, phi, g, f, values)
    lhs = grid.zeros()
    for t, e in exprs:
        lhs = lhs + interpret(e, env) / symmetry_factor(t)
    rhs = interpret(rhs_expr, env)
    return float(np.max(np.abs(lhs - rhs)))


class SystemExit2(SystemExit):
    def __init__(self, msg: str):
        print(f"error: {msg}", file=sys.stderr)
        super().__init__(2)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowtrees", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("enumerate", help="list rule-conforming trees in the degree window")
    pe.add_argument("--rule", default="gkpz", help="preset name or rule JSON file")
    pe.add_argument("--set", default="t0star", choices=TREE_SETS)
    pe.add_argument("--format", default="text", choices=("json", "text"))
    pe.set_defaults(fn=cmd_enumerate)

    pa = sub.add_parser("apply", help="apply a single operator to a tree")
    pa.add_argument("--rule", default="gkpz")
    pa.add_argument("--op", required=True,
                    choices=("graft", "deltar", "delta1", "deltaa", "dmu", "mloc", "uparrowall"))
    pa.add_argument("--tree", required=True)
    pa.add_argument("--a", default=None, help="edge decoration, e.g. (0,1)")
    pa.add_argument("--sigma", default=None, help="tree to graft")
    pa.set_defaults(fn=cmd_apply)

    pv = sub.add_parser("verify", help="run identity checks")
    pv.add_argument("--rule", default="gkpz")
    pv.add_argument("--identity", action="append", required=True, choices=verify_mod.IDENTITIES)
    pv.add_argument("--max-edges", type=int, default=None)
    pv.add_argument("--k-cap", type=int, default=None)
    pv.add_argument("--samples", type=int, default=None)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--report", default=None, help="write a JSON report here")
    pv.add_argument("--jobs", type=int, default=1, help="parallel identity jobs")
    pv.set_defaults(fn=cmd_verify)

    pc = sub.add_parser("counterterms", help="emit the negative-degree counterterm list")
    pc.add_argument("--rule", default="gkpz")
    pc.add_argument("--character", default=None, help="JSON character file")
    pc.set_defaults(fn=cmd_counterterms)

    pb = sub.add_parser("bphz", help="emit the centering constraint system")
    pb.add_argument("--rule", default="gkpz")
    pb.set_defaults(fn=cmd_bphz)

    pn = sub.add_parser("numeric-check", help="run a discrete-torus check")
    pn.add_argument("--rule", default="gkpz")
    pn.add_argument("--identity", required=True,
                    choices=("kernels", "commutation", "localization", "renorm-eq"))
    pn.add_argument("--grid", default="32x16")
    pn.add_argument("--mu", default="3/4")
    pn.add_argument("--eps", default="3/20")
    pn.add_argument("--seed", type=int, default=0)
    pn.add_argument("--tree", default=None)
    pn.set_defaults(fn=cmd_numeric)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if getattr(args, "command", None) == "verify" and getattr(args, "jobs", 1) > 1:
            return _verify_parallel(args)
        return args.fn(args)
    except SystemExit2 as exc:
        return int(exc.code)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _verify_parallel(args) -> int:
    from concurrent.futures import ProcessPoolExecutor

    rule_spec = args.rule
    jobs = [(rule_spec, name, args.max_edges, args.samples, args.seed) for name in args.identity]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_run_one, jobs))
    reports = []
    for payload in sorted(results, key=lambda r: args.identity.index(r["identity"])):
        reports.append(payload)
        print(f"{payload['identity']}: {payload['status']} ({payload['checked']} checked)")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(reports, fh, indent=2)
    return 0 if all(r["status"] == "PASS" for r in reports) else 1


def _run_one(job) -> dict:
    rule_spec, name, max_edges, samples, seed = job
    rule = load_rule(rule_spec)
    rep = verify_mod.run_identity(name, rule, max_edges=max_edges, samples=samples, seed=seed)
    return rep.to_json()


if __name__ == "__main__":
    sys.exit(main())
