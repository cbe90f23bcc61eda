"""Command line runner: ``frontlab <subcommand> --config spec.json --out DIR``.

Exit codes: 0 when every enabled assertion passes, 1 on an assertion failure,
2 on a configuration error and 3 when the numerics fail (solver, chart, fits).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from . import experiments as ex
from .chart import write_chart_csv
from .config import KINDS, load_spec
from .diagnostics import BumpWindow
from .errors import ConfigError, FrontlabError
from .io import write_csv, write_json
from .nonlinearity import write_profile_csv
from .wave import run

EXIT_PASS, EXIT_ASSERT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _map(fn, items, jobs):
    """``fn`` over ``items`` in order, on a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _report(spec, results, checks, **extra):
    return {"version": __version__, "config": spec.to_dict(), "results": results,
            "checks": checks, "passed": ex.all_passed(checks), **extra}


def _finish(spec, report):
    write_json(report, spec.output_dir / "report.json")
    for c in report["checks"]:
        if not c["passed"]:
            print(f"FAIL {c['name']}: {c['value']:.6g} (bound {c['relation']} {c['bound']})",
                  file=sys.stderr)
    if report["passed"] or not spec.assertions:
        return EXIT_PASS
    return EXIT_ASSERT


def _write_run_tables(result, out):
    ts = result["timeseries"]
    cols = ["t", "interface", "reference", "interface_error", "energy", "exterior_energy"]
    write_csv(out / "timeseries.csv", cols, zip(*(ts[c] for c in cols)))
    z = result["zeta"]
    if z is not None:
        cols = ["times", "zeta1", "zeta2", "zeta3", "deficiency"]
        write_csv(out / "zeta.csv", [z["coordinate"]] + cols[1:], zip(*(z[c] for c in cols)))


def cmd_run(spec, jobs=1):
    result = ex.measure_run(spec.base, spec.diagnostics)
    _write_run_tables(result, spec.output_dir)
    return _finish(spec, _report(spec, result["scalars"], result["checks"]))


def cmd_sweep(spec, jobs=1):
    cfgs = spec.runs()
    results = _map(ex.run_worker, [(c, spec.diagnostics) for c in cfgs], jobs)
    checks, per_run = [], {}
    for cfg, res in zip(cfgs, results):
        tag = f"eps_{cfg.eps:.6g}"
        _write_run_tables(res, spec.output_dir / tag)
        per_run[tag] = res["scalars"]
        checks.extend(dict(c, name=f"{tag}: {c['name']}") for c in res["checks"])
    rows, ratio_checks = ex.scaling_table(spec.sweep_eps, results, spec.diagnostics.ratio_window)
    write_csv(spec.output_dir / "scaling.csv", ["quantity", "eps", "value", "ratio"], rows)
    table = [{"quantity": q, "eps": e, "value": v, "ratio": r} for q, e, v, r in rows]
    return _finish(spec, _report(spec, per_run, checks + ratio_checks, scaling=table))


def cmd_chart_test(spec, jobs=1):
    result = ex.measure_chart(spec.chart)
    write_chart_csv(result["chart"], spec.output_dir / "chart.csv")
    write_csv(spec.output_dir / "chart_test.csv", ["check", "value", "passed"],
              [(c["name"], c["value"], c["passed"]) for c in result["checks"]])
    return _finish(spec, _report(spec, result["scalars"], result["checks"],
                                 block_orders=result["orders"]))


def cmd_profile(spec, jobs=1):
    result = ex.measure_profile(spec.profile)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    write_profile_csv(result["profile"], spec.output_dir / "profile.csv")
    return _finish(spec, _report(spec, result["scalars"], result["checks"]))


def cmd_decompose(spec, jobs=1):
    result = ex.measure_decomposition(spec.decompose)
    write_csv(spec.output_dir / "potential.csv", ["u", "F", "f0", "f1"], result["table"])
    return _finish(spec, _report(spec, result["scalars"], result["checks"]))


def cmd_convergence(spec, jobs=1):
    opts = spec.convergence
    if opts.window is None:
        window = ex.default_window(spec.base)
    else:
        keys = {"tc", "xc", "half_t", "half_x"}
        if not isinstance(opts.window, dict) or set(opts.window) != keys:
            raise ConfigError(f"convergence.window needs exactly the keys {sorted(keys)}")
        window = BumpWindow(**{k: float(v) for k, v in opts.window.items()})
    trajs = _map(run, ex.convergence_configs(spec.base, opts.levels), jobs)
    result = ex.measure_convergence(trajs, window, opts)
    rows = [(lv["dx"], lv["lhs"], lv["rhs"], lv["residual"], o)
            for lv, o in zip(result["levels"], [np.nan] + result["orders"])]
    write_csv(spec.output_dir / "convergence.csv", ["dx", "lhs", "rhs", "residual", "order"], rows)
    win = {"tc": window.tc, "xc": window.xc, "half_t": window.half_t, "half_x": window.half_x}
    return _finish(spec, _report(spec, result["scalars"], result["checks"],
                                 levels=result["levels"], orders=result["orders"], window=win))


HELP = {"run": "one evolution with every configured diagnostic",
        "sweep": "runs over a decreasing list of eps with a scaling table",
        "chart-test": "normal-chart invariants around a constant-curvature curve",
        "profile": "optimal profile of a double well",
        "decompose": "split a polynomial nonlinearity into F' + eps kappa f1",
        "convergence": "observed order of the tested energy identity"}

COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "chart-test": cmd_chart_test,
            "profile": cmd_profile, "decompose": cmd_decompose, "convergence": cmd_convergence}


def build_parser():
    parser = argparse.ArgumentParser(prog="frontlab",
                                     description="Accelerating-front experiments for eps Box u + f0/eps + kappa f1 = 0.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in KINDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="JSON experiment specification")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
        p.add_argument("--assert", dest="assertions", action=argparse.BooleanOptionalAction,
                       default=True, help="exit 1 when a check fails (default on)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
        spec = replace(load_spec(args.config, args.command, args.out), assertions=args.assertions)
        spec.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](spec, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FrontlabError, ArithmeticError) as exc:
        detail = f" (y^n = {exc.yn:.6g})" if getattr(exc, "yn", None) is not None else ""
        print(f"runtime failure: {type(exc).__name__}: {exc}{detail}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
