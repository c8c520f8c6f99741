"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 budget exceeded,
4 stage failure.  All output is machine-readable JSON (or CSV for run
--format csv); reports go to --out or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import corrector, bidecoder, geometry, harness, ldt
from .algebra import enumerate_support
from .harness import ConfigError


def _write(payload: bytes, out: str | None) -> None:
    if out is None:
        sys.stdout.buffer.write(payload)
    else:
        Path(out).write_bytes(payload)


def _rat_arg(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from exc


def _classify(messages: list[str]) -> int:
    if not messages:
        return 0
    if any("budget" in msg.lower() for msg in messages):
        return 3
    return 4


def _emit_simple(params: dict, stages: list[dict], results: list[dict], out: str | None) -> None:
    doc = {"params": params, "stages": stages, "results": results}
    _write((json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("ascii"), out)


def _poly_results(pairs) -> list[dict]:
    return [harness._result_entry(p, a) for p, a in pairs]


def _params_echo(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, Fraction):
            out[k] = {"num": v.numerator, "den": v.denominator}
        elif isinstance(v, tuple):
            out[k] = list(v)
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args: argparse.Namespace) -> int:
    if args.config is None and args.preset is None:
        raise ConfigError("run needs --config or --preset")
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text(encoding="ascii"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        configs = [harness.ExperimentConfig.from_dict(data)]
    else:
        configs = harness.preset(args.preset)
    if args.seed:
        configs = [
            harness.ExperimentConfig.from_dict(
                {**c.to_dict(), "seeds": list(args.seed)}
            )
            for c in configs
        ]
    threads = args.threads if args.threads is not None else None
    reports = []
    for cfg in configs:
        reports.extend(harness.run_many(cfg, threads))
    if args.format == "json":
        payload = b"".join(
            harness.emit_report(r, "json", include_timings=args.timings) for r in reports
        )
    else:
        chunks = []
        for i, r in enumerate(reports):
            block = harness.emit_report(r, "csv").decode("ascii").splitlines()
            chunks.extend(block if i == 0 else block[1:])
        payload = ("\n".join(chunks) + "\n").encode("ascii")
    _write(payload, args.out)
    return _classify([e["message"] for r in reports for e in r.errors])


def _cmd_decode2(args: argparse.Namespace) -> int:
    table = ldt.load_table(args.table)
    params = {"seed": args.seed}
    if args.agreement_floor is not None:
        params["agreement_floor"] = args.agreement_floor
    if args.max_centers is not None:
        params["max_centers"] = args.max_centers
    if args.grid_tries is not None:
        params["grid_tries"] = args.grid_tries
    trace: list[dict] = []
    out = bidecoder.decode_bivariate(table, args.eps, params, trace)
    _emit_simple(
        {"eps": {"num": args.eps.numerator, "den": args.eps.denominator}, **_params_echo(params)},
        trace,
        _poly_results(out),
        args.out,
    )
    return 0


def _cmd_decodem(args: argparse.Namespace) -> int:
    table = ldt.load_table(args.table)
    params = {}
    for key in ("delta_list", "profile_threshold", "mu", "gamma", "delta0"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    for key in ("max_advice", "max_iters"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    if args.best_effort:
        params["best_effort"] = True
    trace: list[dict] = []
    out = corrector.decode_multivariate(table, args.eps, params, trace)
    _emit_simple(
        {"eps": {"num": args.eps.numerator, "den": args.eps.denominator}, **_params_echo(params)},
        trace,
        _poly_results(out),
        args.out,
    )
    return 0


def _cmd_correct(args: argparse.Namespace) -> int:
    table = ldt.load_table(args.table)
    res = corrector.iterate_correct(table, args.max_iters, args.delta0)
    stages = []
    results = []
    if res is None:
        stages.append({"name": "correct", "status": "no-convergence", "metrics": {}})
    else:
        poly, iters = res
        evals = ldt.PointsTable.from_polynomial(table.q, table.m, table.d, poly).values
        agree = Fraction(int(np.sum(evals == table.values)), table.n_points)
        stages.append(
            {"name": "correct", "status": "ok", "metrics": {"iterations": iters}}
        )
        results = _poly_results([(poly, agree)])
    _emit_simple(
        {
            "max_iters": args.max_iters,
            "delta0": {"num": args.delta0.numerator, "den": args.delta0.denominator},
        },
        stages,
        results,
        args.out,
    )
    return 0


def _cmd_spectra(args: argparse.Namespace) -> int:
    kinds = args.graph
    if not kinds:
        kinds = ["points-lines"]
        if args.m >= 3:
            kinds += ["points-planes", "lines-planes", "lines-planes-through-x"]
    stages = []
    for kind in kinds:
        g = geometry.incidence_graph(args.q, args.m, kind)
        lam = geometry.second_eigenvalue(g)
        stages.append(
            {
                "name": f"spectra:{kind}",
                "status": "ok",
                "metrics": {
                    "lambda": lam,
                    "left_degree": g.left_degree,
                    "right_degree": g.right_degree,
                },
            }
        )
    _emit_simple({"q": args.q, "m": args.m}, stages, [], args.out)
    return 0


def _cmd_count(args: argparse.Namespace) -> int:
    sup = enumerate_support(args.d, args.D, args.p, restricted=not args.unrestricted)
    stages = [
        {
            "name": "count",
            "status": "ok",
            "metrics": {
                "d": args.d,
                "D": args.D,
                "p": args.p,
                "restricted": not args.unrestricted,
                "size": len(sup.members),
            },
        }
    ]
    _emit_simple(
        {"d": args.d, "D": args.D, "p": args.p, "restricted": not args.unrestricted},
        stages,
        [],
        args.out,
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ldtlab",
        description="Line-point low-degree testing laboratory over prime fields.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a config or preset over its seeds")
    run.add_argument("-c", "--config", help="JSON config file")
    run.add_argument("--preset", choices=harness.PRESET_NAMES)
    run.add_argument("--seed", type=int, action="append", help="override config seeds")
    run.add_argument("--out", help="output path (default stdout)")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--timings", action="store_true", help="include wall clocks")
    run.add_argument("--threads", type=int, help="override LDTLAB_THREADS")
    run.set_defaults(fn=_cmd_run)

    d2 = sub.add_parser("decode2", help="bivariate high-error decoding of a table file")
    d2.add_argument("table")
    d2.add_argument("--eps", type=_rat_arg, required=True)
    d2.add_argument("--seed", type=int, default=0)
    d2.add_argument("--agreement-floor", type=_rat_arg, dest="agreement_floor")
    d2.add_argument("--max-centers", type=int, dest="max_centers")
    d2.add_argument("--grid-tries", type=int, dest="grid_tries")
    d2.add_argument("--out")
    d2.set_defaults(fn=_cmd_decode2)

    dm = sub.add_parser("decodem", help="m-variate high-error decoding of a table file")
    dm.add_argument("table")
    dm.add_argument("--eps", type=_rat_arg, required=True)
    dm.add_argument("--delta-list", type=_rat_arg, dest="delta_list")
    dm.add_argument("--profile-threshold", type=_rat_arg, dest="profile_threshold")
    dm.add_argument("--mu", type=_rat_arg)
    dm.add_argument("--gamma", type=_rat_arg)
    dm.add_argument("--delta0", type=_rat_arg)
    dm.add_argument("--max-advice", type=int, dest="max_advice")
    dm.add_argument("--max-iters", type=int, dest="max_iters")
    dm.add_argument("--best-effort", action="store_true", dest="best_effort")
    dm.add_argument("--out")
    dm.set_defaults(fn=_cmd_decodem)

    co = sub.add_parser("correct", help="iterated plurality correction of a table file")
    co.add_argument("table")
    co.add_argument("--max-iters", type=int, default=16, dest="max_iters")
    co.add_argument("--delta0", type=_rat_arg, default=Fraction(1, 4))
    co.add_argument("--out")
    co.set_defaults(fn=_cmd_correct)

    sp = sub.add_parser("spectra", help="second singular values of incidence graphs")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument(
        "--graph", action="append", choices=geometry.GRAPH_KINDS, help="repeatable"
    )
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_spectra)

    ct = sub.add_parser("count", help="size of a weighted-degree monomial support")
    ct.add_argument("--d", type=int, required=True)
    ct.add_argument("--D", type=int, required=True)
    ct.add_argument("--p", type=int, required=True)
    ct.add_argument("--unrestricted", action="store_true")
    ct.add_argument("--out")
    ct.set_defaults(fn=_cmd_count)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 3 if "budget" in str(exc).lower() else 4


if __name__ == "__main__":
    sys.exit(main())
