"""Command-line entry point: ``spikyball <subcommand> [options]``.

Every subcommand writes one JSON document (floats hex-encoded, ``schema``
field set) to --out or stdout. Campaign subcommands exit with status 1 when
a bound comparison fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import _io
from .body import SpikyBody, certify, construct
from .bounds import feasibility_scan, greedy_cap_cover, illumination_upper_bound, plan_parameters
from .caps import DomainError, PreconditionError, cap_measure
from .harness import ConfigError, ExperimentConfig, emit_report, load_report, omega_curve, run_campaign
from .oracle import gauge, illuminates, membership_margin
from .sphere import DeltaNet, SeedSpec, build_delta_net, verify_net_coverage


def _emit(doc, args):
    text = _io.dumps(doc)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _vector(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def _delta(args, d):
    return args.delta if args.delta is not None else math.asin(1.0 / args.bigD) / (d - 1)


def cmd_omega(args):
    angles = np.linspace(0.0, math.pi, args.points + 2)[1:-1]
    rows = omega_curve(args.dim, angles)
    if args.format == "csv":
        lines = ["d,phi,omega"] + [f"{r['d']},{r['phi']!r},{r['omega']!r}" for r in rows]
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    _emit({"schema": _io.schema_tag("omega"), "rows": rows}, args)
    return 0


def cmd_plan(args):
    _emit(plan_parameters(args.bigD, args.dim, relaxed=args.relaxed).to_json(), args)
    return 0


def cmd_scan(args):
    scan = feasibility_scan(args.bigD, range(args.n_min, args.n_max + 1), relaxed=args.relaxed)
    if args.format == "csv" and args.out:
        scan.write_csv(args.out)
        return 0
    _emit({"schema": _io.schema_tag("scan"), "D": scan.D, "onset": scan.onset,
           "first_feasible": scan.first_feasible, "rows": scan.rows}, args)
    return 0


def cmd_build(args):
    body = construct(args.dim, args.spikes, args.bigD, SeedSpec(args.seed))
    _emit(body.to_json(), args)
    return 0


def _load_body(args):
    if args.body:
        return SpikyBody.from_json(_io.read_json(args.body))
    return construct(args.dim, args.spikes, args.bigD, SeedSpec(args.seed))


def cmd_certify(args):
    body = _load_body(args)
    if args.net:
        net = DeltaNet.from_json(_io.read_json(args.net))
    else:
        net = build_delta_net(body.dimension, _delta(args, body.dimension), SeedSpec(args.seed, 0, ("net",)))
        if args.probes:
            verify_net_coverage(net, args.probes, SeedSpec(args.seed, 0, ("net-verify",)))
    cert = certify(body, net, args.theta)
    _emit(cert.to_json(include_body=False), args)
    return 0


def cmd_probe(args):
    body = _load_body(args)
    doc = {"schema": _io.schema_tag("probe")}
    if args.point:
        p = _vector(args.point)
        doc["margin"] = asdict(membership_margin(body, p))
        doc["gauge"] = gauge(body, p)
    if args.direction:
        target = args.spike if args.spike is not None else 0
        res = illuminates(body, target, _vector(args.direction), sign=args.sign)
        doc["illuminates"] = {k: v for k, v in asdict(res).items() if k != "trace"}
    _emit(doc, args)
    return 0


def cmd_cover(args):
    radius = args.radius if args.radius is not None else math.asin(1.0 / args.bigD)
    cover = greedy_cap_cover(args.dim, radius, seed=SeedSpec(args.seed), probes=args.probes)
    _emit(cover.to_json(), args)
    return 0 if cover.verified.passed else 1


def cmd_upper(args):
    value = illumination_upper_bound(args.bigD, args.dim, seed=SeedSpec(args.seed))
    _emit({"schema": _io.schema_tag("upper"), "D": args.bigD, "n": args.dim, "upper_bound": value,
           "omega": cap_measure(args.dim, math.asin(1.0 / args.bigD))}, args)
    return 0


def _campaign(args, kind):
    cfg = ExperimentConfig(kind=kind, dim=args.dim, N=args.spikes, D=args.bigD, theta=args.theta,
                           delta_policy="explicit" if args.delta is not None else "alpha/n", delta=args.delta,
                           trials=args.trials, master_seed=args.seed, workers=args.workers,
                           block_size=args.block_size, probes=args.probes, success_prob=args.success_prob,
                           out=args.out)
    return _finish(run_campaign(cfg), args)


def _finish(result, args):
    if args.out and (args.format == "csv" or Path(args.out).suffix == ""):
        emit_report(result, args.out, args.format)
    else:
        _emit(result.report(), args)
    return result.exit_code


def cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is None and cfg.out:
        args.out = cfg.out
    return _finish(run_campaign(cfg), args)


def cmd_report(args):
    doc = load_report(args.path)
    lines = [f"{doc['kind']}  config {doc['config_hash'][:12]}  seed {doc['master_seed']}"]
    for row in doc["rows"]:
        status = "PASS" if row["pass"] else "FAIL"
        lines.append(f"  {status}  {row['claim']}  empirical={row['empirical']}  bound={row['bound']}")
    print("\n".join(lines))
    return 0 if doc["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikyball", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dim=3):
        p.add_argument("--dim", type=int, default=dim)
        p.add_argument("--spikes", type=int, default=10)
        p.add_argument("--bigD", type=float, default=1.1)
        p.add_argument("--theta", type=float, default=6.0)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--trials", type=int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--probes", type=int, default=100_000)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        return p

    p = common(sub.add_parser("omega", help="cap measure table"))
    p.add_argument("--points", type=int, default=181)
    p.set_defaults(func=cmd_omega)

    for name, func in (("plan", cmd_plan), ("scan", cmd_scan)):
        p = common(sub.add_parser(name, help=f"{name} construction parameters (--dim is n)"), dim=100)
        p.add_argument("--relaxed", action="store_true")
        p.add_argument("--n-min", type=int, default=2)
        p.add_argument("--n-max", type=int, default=2000)
        p.set_defaults(func=func)

    common(sub.add_parser("build", help="draw a spiky body")).set_defaults(func=cmd_build)

    for name, func in (("certify", cmd_certify), ("probe", cmd_probe)):
        p = common(sub.add_parser(name))
        p.add_argument("--body", default=None, help="body JSON from `build`")
        p.add_argument("--net", default=None)
        p.add_argument("--point", default=None, help="comma-separated coordinates")
        p.add_argument("--direction", default=None)
        p.add_argument("--spike", type=int, default=None)
        p.add_argument("--sign", type=int, choices=(1, -1), default=1)
        p.set_defaults(func=func)

    p = common(sub.add_parser("cover", help="greedy cap cover"))
    p.add_argument("--radius", type=float, default=None)
    p.set_defaults(func=cmd_cover)
    common(sub.add_parser("upper", help="covering upper bound on i(K)")).set_defaults(func=cmd_upper)

    for kind in ("mc-e1", "mc-e2", "mc-chernoff", "factcap"):
        p = common(sub.add_parser(kind))
        p.add_argument("--block-size", type=int, default=1000)
        p.add_argument("--success-prob", type=float, default=None)
        p.set_defaults(func=lambda a, k=kind: _campaign(a, k))

    p = sub.add_parser("run", help="campaign from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize a report.json")
    p.add_argument("path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, PreconditionError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
