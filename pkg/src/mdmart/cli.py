"""Command-line front end.

Commands mirror the experiment families: verify (closed-form inequality
suites), certify (moment-condition certificates), tail (tail-ratio report),
mdp (moderate-deviation scan), couple (quantile coupling report) and mixing
(block-sum ratio experiment).  Exit codes: 0 ok, 1 assertion failure,
2 usage error.  Output is deterministic for a fixed config; the worker flag
exists for symmetry with other runners and never changes results."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import verify as verify_suites
from .bounds import BoundParams
from .coupling import coupling_tail_report, write_coupling_csv
from .mixing import mixing_tail_experiment, two_state_chain
from .models import (CertificationError, ModelError, certify, make_heavy_left,
                     make_rademacher, make_regime_switch)
from .montecarlo import mdp_scan, ratio_report

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2


def _build_model(args):
    name = args.model
    if name == "rademacher":
        return make_rademacher(args.n, rho=args.rho)
    if name == "heavy_left":
        return make_heavy_left(args.n, args.rho, args.tail_atoms)
    if name == "regime_switch":
        return make_regime_switch(args.n, args.gamma, rho=args.rho)
    raise ModelError(f"unknown model {name!r}")


def _parse_grid(spec: str):
    """'a:b:step' inclusive grid, or a comma list."""
    if ":" in spec:
        a, b, step = (float(v) for v in spec.split(":"))
        return list(np.arange(a, b + step / 2.0, step))
    return [float(v) for v in spec.split(",")]


def _out_path(args, filename):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, filename)


def _echo_config(args) -> str:
    skip = {"func", "config"}
    items = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return json.dumps(items)


def cmd_verify(args):
    results = verify_suites.run_all(samples=args.budget, seed=args.seed)
    ok = True
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_ASSERTION


def cmd_certify(args):
    model = _build_model(args)
    try:
        cert = certify(model)
    except CertificationError as e:
        print(f"FAIL certification: {e}", file=sys.stderr)
        return EXIT_ASSERTION
    doc = cert.to_json()
    print(doc)
    path = _out_path(args, f"certificate_{model.name}_n{model.n}.json")
    with open(path, "w") as fh:
        fh.write(doc + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tail(args):
    model = _build_model(args)
    cert = certify(model)
    params = BoundParams(rho=cert.rho, eps_n=cert.eps_n, delta_n=cert.delta_n,
                         c=args.c)
    grid = _parse_grid(args.x)
    report = ratio_report(model, grid, args.budget, args.seed, params)
    path = _out_path(args, f"tail_{model.name}_n{model.n}_seed{args.seed}.csv")
    report.write_csv(path, header_comment=_echo_config(args))
    warned = False
    print(f"{'x':>6} {'p_hat':>12} {'ratio':>8} {'ess':>10}")
    for r in report.rows:
        print(f"{r.x:6.2f} {r.p_hat:12.6g} {r.ratio:8.4f} {r.ess:10.1f}"
              + (f"  [{' '.join(r.flags)}]" if r.flags else ""))
        warned = warned or bool(r.flags)
    print(f"wrote {path}")
    if warned:
        print("warning: some rows flagged (low ESS or tilt fallback)",
              file=sys.stderr)
    return EXIT_OK


def cmd_mdp(args):
    ns = [int(v) for v in args.n_list.split(",")]
    try:
        table = mdp_scan(lambda n: make_rademacher(n), ns, args.rule, args.b,
                         args.budget, args.seed)
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    path = _out_path(args, f"mdp_seed{args.seed}.csv")
    with open(path, "w") as fh:
        fh.write(f"# {_echo_config(args)}\n")
        fh.write("n,a_n,x,p_hat,se,rate,ess\n")
        for row in table:
            fh.write(",".join(repr(row[c]) for c in
                              ("n", "a_n", "x", "p_hat", "se", "rate", "ess")) + "\n")
    target = -args.b ** 2 / 2.0
    for row in table:
        print(f"n={row['n']:>8}  rate={row['rate']:.4f}  (target {target:.4f})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_couple(args):
    ns = [int(v) for v in args.n_list.split(",")]
    reports = [coupling_tail_report(n, args.budget, args.seed, alpha=args.alpha)
               for n in ns]
    path = _out_path(args, f"couple_seed{args.seed}.csv")
    write_coupling_csv(path, reports, header_comment=_echo_config(args))
    for r in reports:
        print(f"n={r.n:>6}  D_hat={r.D_hat:.4f}  tail_slope={r.tail_slope:.2f}"
              f"  frac_event={r.frac_event:.3f}")
    print(f"wrote {path}")
    slopes_ok = all(r.tail_slope < 0.0 for r in reports)
    return EXIT_OK if slopes_ok else EXIT_ASSERTION


def cmd_mixing(args):
    chain = two_state_chain(args.a, args.b_prob)
    grid = _parse_grid(args.x)
    report, info = mixing_tail_experiment(chain, args.n, args.alpha, grid,
                                          args.budget, args.seed)
    path = _out_path(args, f"mixing_n{args.n}_seed{args.seed}.csv")
    report.write_csv(path, header_comment=_echo_config(args))
    info_path = _out_path(args, f"mixing_n{args.n}_seed{args.seed}_info.json")
    with open(info_path, "w") as fh:
        json.dump({k: v for k, v in info.items()}, fh, default=float)
    print(f"m={info['m']} k={info['k']} tau_n={info['tau_n']:.4f} "
          f"ES2={info['es2']:.4f}")
    if not info["envelope_defined"]:
        print("warning: tau_n >= 1, envelope undefined", file=sys.stderr)
    for r in report.rows:
        print(f"x={r.x:.2f}  ratio={r.ratio:.4f}  "
              f"envelope=[{r.bound_lo:.4f}, {r.bound_hi:.4f}]")
    print(f"wrote {path} and {info_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdmart",
        description="Tail-ratio, coupling and mixing experiments for "
                    "martingale moderate deviations")
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1,
                        help="accepted for symmetry; results never depend on it")
    parser.add_argument("--out", default=".", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--model", default="rademacher",
                       choices=["rademacher", "heavy_left", "regime_switch"])
        p.add_argument("--n", type=int, default=400)
        p.add_argument("--rho", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=0.3)
        p.add_argument("--tail-atoms", type=int, default=8)

    p = sub.add_parser("verify", help="run all closed-form inequality suites")
    p.add_argument("--budget", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("certify", help="compute a moment-condition certificate")
    add_model_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("tail", help="tilted tail estimates vs the normal tail")
    add_model_flags(p)
    p.add_argument("--x", default="0:4:0.5", help="grid a:b:step or comma list")
    p.add_argument("--budget", type=int, default=10 ** 5)
    p.add_argument("--c", type=float, default=1.0,
                   help="stand-in for the anonymous theorem constant")
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("mdp", help="moderate-deviation rate scan")
    p.add_argument("--n-list", default="100,1000,10000")
    p.add_argument("--rule", default="n^0.25")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=10 ** 5)
    p.set_defaults(func=cmd_mdp)

    p = sub.add_parser("couple", help="quantile-coupling deviation report")
    p.add_argument("--n-list", default="100,400,1600")
    p.add_argument("--budget", type=int, default=2 * 10 ** 5)
    p.add_argument("--alpha", type=float, default=0.125)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("mixing", help="block-sum tail ratios for a two-state chain")
    p.add_argument("--a", type=float, default=0.3)
    p.add_argument("--b-prob", type=float, default=0.3)
    p.add_argument("--n", type=int, default=10 ** 4)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--x", default="0.5,1.0,1.5")
    p.add_argument("--budget", type=int, default=5 * 10 ** 4)
    p.set_defaults(func=cmd_mixing)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    if args.config:
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            print(f"config error in {args.config}: {e}", file=sys.stderr)
            return EXIT_USAGE
        # config supplies defaults; flags given on the command line still win
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                print(f"config error: unknown field {key!r}", file=sys.stderr)
                return EXIT_USAGE
            if f"--{key}" not in argv:
                setattr(args, attr, value)
    try:
        return args.func(args)
    except (ModelError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
