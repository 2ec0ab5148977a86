"""Command-line front end: ``mdev <subcommand> ...``.

Exit codes: 0 success, 1 domain or input error, 2 usage error. With
``--out-dir`` every output is written atomically next to a
``manifest.json``; without it the primary output goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .confidence import METHODS as CI_METHODS
from .confidence import coverage_sim, half_width, quantile_table
from .errors import MdevError
from .gaussian_exit import METHODS as EXIT_METHODS
from .gaussian_exit import exit_probability
from .geometry import body_from_spec, validate_b_assumptions
from .models import GaussianLocation, check_a2, family_from_spec
from .numerics import RngStream, resolve_threads
from .reporting import RunManifest, atomic_write_bytes, csv_text, dumps_json, load_json_arg
from .tilting import distribution_from_spec, sample_tilted, solve_tilt


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _common(p: argparse.ArgumentParser, *, seeded: bool) -> None:
    p.add_argument("--out-dir", type=Path, help="write outputs and a manifest here instead of stdout")
    if seeded:
        p.add_argument("--seed", type=int, help="master seed (generated and printed when omitted)")
        p.add_argument("--threads", type=int, help="worker cap; results do not depend on it (env MDEV_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdev", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mdev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exit-prob", help="P(zeta not in t * body) for a standard Gaussian zeta")
    p.add_argument("--body", required=True, help="body JSON (inline or file)")
    p.add_argument("--t", type=float, required=True, help="scale factor t > 0")
    p.add_argument("--method", choices=EXIT_METHODS, default="exact")
    p.add_argument("--samples", type=int, default=1_000_000)
    _common(p, seeded=True)

    p = sub.add_parser("ci", help="moderate-deviation vs normal confidence intervals, with coverage")
    p.add_argument("--alpha", type=_floats, default=[0.05], help="one or more levels, comma-separated")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0, help="sd of the default gaussian_location family")
    p.add_argument("--method", choices=(*CI_METHODS, "both"), default="both")
    p.add_argument("--family", help="family JSON (default gaussian_location with variance sigma^2)")
    p.add_argument("--theta", type=float, default=None, help="true parameter (default 0, or 0.5 for bernoulli)")
    p.add_argument("--trials", type=int, default=0, help="coverage simulation trials (0 = widths only)")
    p.add_argument("--no-figures", action="store_true")
    _common(p, seeded=True)

    p = sub.add_parser("tilt", help="solve m(h) = v for an exponentially tilted law")
    p.add_argument("--dist", required=True, help="distribution JSON (inline or file)")
    p.add_argument("--v", type=_floats, required=True, help="target mean of X - E[X], comma-separated")
    p.add_argument("--samples", type=int, default=0, help="also draw this many tilted samples")
    _common(p, seeded=True)

    p = sub.add_parser("simulate", help="run an efficiency sweep from a config file")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--no-figures", action="store_true")
    _common(p, seeded=True)

    p = sub.add_parser("check-assumptions", help="numeric checks of the smoothness and body assumptions")
    p.add_argument("--family", required=True, help="family JSON (inline or file)")
    p.add_argument("--theta0", type=_floats, required=True)
    p.add_argument("--u-grid", type=_floats, default=None, help="|u| values (default 12 log-spaced in [1e-3, 0.3])")
    p.add_argument("--body", help="optional body JSON to validate as well")
    _common(p, seeded=False)

    p = sub.add_parser("quantile-table", help="moderate-deviation and normal interval multipliers")
    p.add_argument("--alphas", type=_floats, default=[0.1, 0.05, 0.01])
    p.add_argument("--digits", type=int, default=4)
    _common(p, seeded=False)
    return parser


# --- subcommands: each returns (files, stdout_text, seed) ----------------------------------


def _cmd_exit_prob(args):
    body = body_from_spec(load_json_arg(args.body))
    stream = None
    if args.method in ("mc", "is"):
        stream = RngStream(_seed(args))
    est = exit_probability(body, args.t, args.method, n_samples=args.samples, stream=stream, threads=args.threads)
    text = dumps_json(est.to_dict())
    return {"exit_prob.json": text}, text, args.seed if stream else None


def _ci_family(args):
    if args.family:
        fam = family_from_spec(load_json_arg(args.family))
    else:
        fam = GaussianLocation(args.sigma**2)
    theta = args.theta
    if theta is None:
        theta = 0.5 if fam.name == "bernoulli" else (1.0 if fam.name == "exponential_rate" else 0.0)
    return fam, theta


def _cmd_ci(args):
    fam, theta = _ci_family(args)
    sigma = float(np.sqrt(fam.variance(theta)))
    methods = CI_METHODS if args.method == "both" else (args.method,)
    seed = _seed(args) if args.trials > 0 else None
    rows = []
    for i, alpha in enumerate(args.alpha):
        for method in methods:
            row = {"alpha": alpha, "method": method, "half_width": half_width(method, sigma, args.n, alpha),
                   "coverage": None, "std_error": None}
            if args.trials > 0:
                # same stream for both methods: intervals are nested on identical draws
                res = coverage_sim(fam, theta, args.n, alpha, method, args.trials, RngStream(seed, i), threads=args.threads)
                row.update(coverage=res.coverage, std_error=res.std_error)
            rows.append(row)
    header = ["alpha", "method", "half_width", "coverage", "std_error"]
    text = csv_text(header, [["" if r[h] is None else r[h] for h in header] for r in rows])
    files = {"ci.csv": text}
    if args.trials > 0 and args.out_dir and not args.no_figures:
        from .plotting import coverage_figure

        files["ci.png"] = coverage_figure(rows)
    return files, text, seed


def _cmd_tilt(args):
    dist = distribution_from_spec(load_json_arg(args.dist))
    sol = solve_tilt(dist, args.v)
    out = sol.to_dict()
    out["offset"] = dist.offset.tolist()
    seed = None
    if args.samples > 0:
        seed = _seed(args)
        ws = sample_tilted(dist, sol.h, args.samples, RngStream(seed))
        out["sample"] = {
            "n": args.samples,
            "mean": ws.points.mean(axis=0).tolist(),
            "mean_std_error": (ws.points.std(axis=0, ddof=1) / np.sqrt(args.samples)).tolist(),
            "weight_check": ws.estimate(lambda x: np.ones(len(x)))[0],
        }
    text = dumps_json(out)
    return {"tilt.json": text}, text, seed


def _load_experiment(path: str) -> dict:
    import jsonschema

    cfg = load_json_arg(path)
    schema = json.loads(resources.files("mdev").joinpath("schemas/experiment.schema.json").read_text())
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise MdevError(f"invalid experiment config: {exc.message}") from None
    return cfg


def _cmd_simulate(args):
    from .efficiency import ExperimentConfig, ExperimentReport, efficiency_sweep

    cfg = _load_experiment(args.config)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    elif "master_seed" not in cfg:
        cfg["master_seed"] = _seed(args)
    args.seed = cfg["master_seed"]
    args._config = cfg
    report = efficiency_sweep(ExperimentConfig.from_dict(cfg), threads=args.threads)
    data = report.to_dict()
    text = dumps_json(data)
    summary_cols = ["n", "b_n", "c_n", "grid_size", "sup_ratio", "sup_ratio_std_error", "ratio_at_theta0",
                    "ratio_at_theta0_std_error", "sup_consistent_with_bound", "failed_cells"]
    files = {
        "report.json": text,
        "rows.csv": csv_text(ExperimentReport.CSV_COLUMNS, report.csv_rows()),
        "summary.csv": csv_text(summary_cols, [["" if s.get(c) is None else s.get(c) for c in summary_cols] for s in data["summary"]]),
    }
    if args.out_dir and not args.no_figures:
        from .plotting import sweep_figure

        files["ratio.png"] = sweep_figure(data)
    return files, text, args.seed


def _cmd_check_assumptions(args):
    fam = family_from_spec(load_json_arg(args.family))
    theta0 = args.theta0[0] if len(args.theta0) == 1 else args.theta0
    grid = args.u_grid
    if grid is None:
        mags = np.geomspace(1e-3, 0.3, 12)
        grid = np.concatenate([-mags[::-1], mags]) if fam.param_dim == 1 else mags
    grid = [u for u in np.asarray(grid, dtype=float) if fam.in_domain(np.atleast_1d(theta0) + u)]
    out = {"family": load_json_arg(args.family), "a2": check_a2(fam, theta0, grid).to_dict()}
    if args.body:
        out["body"] = validate_b_assumptions(body_from_spec(load_json_arg(args.body))).to_dict()
    out["all_pass"] = bool(out["a2"]["all_pass"] and (
        "body" not in out or all(out["body"][k] == "pass" for k in ("b1", "b2", "b3"))))
    text = dumps_json(out)
    return {"assumptions.json": text}, text, None


def _cmd_quantile_table(args):
    fmt = f"{{:.{args.digits}f}}"
    rows = [[fmt.format(r["alpha"]).rstrip("0").rstrip("."), fmt.format(r["md_quantile"]), fmt.format(r["normal_quantile"])]
            for r in quantile_table(args.alphas)]
    text = csv_text(["alpha", "md_quantile", "normal_quantile"], rows)
    return {"quantile_table.csv": text}, text, None


COMMANDS = {
    "exit-prob": _cmd_exit_prob,
    "ci": _cmd_ci,
    "tilt": _cmd_tilt,
    "simulate": _cmd_simulate,
    "check-assumptions": _cmd_check_assumptions,
    "quantile-table": _cmd_quantile_table,
}

_NOT_ECHOED = {"out_dir", "threads", "command", "seed"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if hasattr(args, "threads"):
        args.threads = resolve_threads(args.threads)
    started = time.perf_counter()
    manifest = RunManifest(args.command, {})
    try:
        files, text, seed = COMMANDS[args.command](args)
    except (MdevError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out_dir is None:
        sys.stdout.write(text)
        return 0
    manifest.arguments = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED and not k.startswith("_")}
    manifest.master_seed = seed
    manifest.config = getattr(args, "_config", None)
    for name, payload in files.items():
        data = payload if isinstance(payload, bytes) else payload.encode("utf-8")
        atomic_write_bytes(args.out_dir / name, data)
        manifest.outputs.append(name)
    manifest.finished = datetime.now(timezone.utc).isoformat()
    manifest.runtime_seconds = round(time.perf_counter() - started, 6)
    atomic_write_bytes(args.out_dir / "manifest.json", dumps_json(manifest.to_dict()).encode("utf-8"))
    print(f"wrote {', '.join(files)} to {args.out_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
