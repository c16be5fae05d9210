"""Command-line front end.

``poissonity test``      run one test on a data file
``poissonity simulate``  run a simulation config and write CSV
``poissonity bounds``    evaluate the pgf L1 sandwich for distribution specs

Exit codes: 0 success, 1 internal failure (or a violated sandwich for
``bounds``), 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from collections import Counter
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import Block, ConfigError, RunConfig, load_config
from .dist import CountSample, DistSpec, SpecParseError, parse_spec
from .gof import fisher_id, parse_method, w_stat, z_stat
from .mc import (
    MixtureSpec,
    PowerRow,
    ScenarioConfig,
    default_threads,
    lambda_grid,
    mu_grid,
    r_hat,
    run_scenario,
)
from .oracle import check_bounds, membership_check

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

SIM_COLUMNS = [
    "scenario_id",
    "family",
    "params",
    "n",
    "reps",
    "test",
    "k_used_mode",
    "rejection_rate",
    "mc_stderr",
    "seed",
]
CURVE_COLUMNS = ["scenario_id", "family", "params", "base_mu", "n", "reps", "test", "lambda", "rejection_rate", "mc_stderr", "seed"]
BOUNDS_COLUMNS = ["family", "params", "label", "k", "mu", "t_abs_k", "l1", "lower", "upper", "holds", "sign"]


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def fmt_rate(x: float) -> str:
    return f"{x:.4f}"


def fmt_stat(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# test
# ---------------------------------------------------------------------------


def read_counts(text: str) -> CountSample:
    """Whitespace-separated nonnegative integers; ``#`` starts a comment."""
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        for match in re.finditer(r"\S+", body):
            tok = match.group()
            if not (tok.isascii() and tok.isdigit()):
                raise InputError(
                    f"line {lineno}, column {match.start() + 1}: expected a nonnegative integer, got {tok!r}"
                )
            values.append(int(tok))
    if not values:
        raise InputError("no observations in input")
    return CountSample(np.array(values, dtype=np.int64))


def cmd_test(args: argparse.Namespace) -> int:
    if args.data == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(args.data).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {args.data}: {exc.strerror}") from None
    sample = read_counts(text)
    method = parse_method(args.method if args.method.upper() != "Z" else f"Z{args.k}")
    if method == "W":
        res = w_stat(sample, args.alpha)
    elif method == "ID":
        res = fisher_id(sample, args.alpha)
    else:
        res = z_stat(sample, int(method[1:]), args.alpha)
    lines = [
        f"method: {res.method}",
        f"n: {sample.n}",
        f"mean: {fmt_stat(sample.mean)}",
        f"statistic: {fmt_stat(res.statistic)}",
        f"k_used: {res.k_used}",
        f"p_value: {fmt_stat(res.p_value)}",
        f"alpha: {res.alpha:g}",
        f"degenerate: {'yes' if res.degenerate else 'no'}",
        f"decision: {'reject H0 (not Poisson)' if res.reject else 'do not reject H0'}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _mode(values: Sequence[int]) -> int:
    counts = Counter(values)
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _sim_row(cfg: ScenarioConfig, spec: DistSpec, row: PowerRow) -> list[str]:
    return [
        row.scenario_id,
        spec.family_name,
        spec.params_str,
        str(cfg.n),
        str(row.reps),
        row.test,
        str(row.k_used_mode),
        fmt_rate(row.rejection_rate),
        fmt_stat(row.mc_stderr),
        str(cfg.master_seed),
    ]


def _scenario_rows(block: Block, threads: int) -> list[list[str]]:
    out = []
    for n in block.ns:
        sid = f"{block.scenario_id}/n={n}" if block.scenario_id else ""
        cfg = ScenarioConfig(block.dist, n, block.reps, block.tests, block.alpha, block.seed, sid)
        out.extend(_sim_row(cfg, block.dist, row) for row in run_scenario(cfg, threads))
    return out


def _sweep_rows(block: Block, threads: int) -> list[list[str]]:
    out = []
    for n in block.ns:
        for mu in mu_grid(block.mu_from, block.mu_to, block.mu_step):
            spec = DistSpec.poisson(mu)
            cfg = ScenarioConfig(spec, n, block.reps, block.tests, block.alpha, block.seed, f"level/{spec}/n={n}")
            out.extend(_sim_row(cfg, spec, row) for row in run_scenario(cfg, threads))
    return out


def _contiguous_rows(block: Block, threads: int) -> tuple[list[list[str]], list[list[str]]]:
    summary, curve = [], []
    spec = block.dist
    try:
        MixtureSpec(block.base_mu, spec, 1e-12)
    except ValueError as exc:
        raise ConfigError(f"line {block.line}: {exc}") from None
    for n in block.ns:
        base_id = f"contiguous/{block.base_mu!r}/{spec}/n={n}"
        per_test: dict[str, list[PowerRow]] = {t: [] for t in block.tests}
        for lam in lambda_grid(n, block.eps):
            mix = MixtureSpec(block.base_mu, spec, float(lam))
            sid = f"{base_id}/lambda={float(lam)!r}"
            cfg = ScenarioConfig(mix, n, block.reps, block.tests, block.alpha, block.seed, sid)
            for row in run_scenario(cfg, threads):
                per_test[row.test].append(row)
                curve.append(
                    [sid, spec.family_name, spec.params_str, fmt_stat(block.base_mu), str(n), str(row.reps),
                     row.test, fmt_stat(float(lam)), fmt_rate(row.rejection_rate), fmt_stat(row.mc_stderr),
                     str(block.seed)]
                )
        for test, rows in per_test.items():
            rates = [r.rejection_rate for r in rows]
            stderr = math.sqrt(sum(r * (1 - r) for r in rates) / block.reps) / len(rates)
            summary.append(
                [f"{base_id}/rhat", spec.family_name, spec.params_str, str(n), str(block.reps), test,
                 str(_mode([r.k_used_mode for r in rows])), fmt_rate(r_hat(rates)), fmt_stat(stderr),
                 str(block.seed)]
            )
    return summary, curve


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def resolve_config_path(name: str) -> Path:
    """A filesystem path, or the name of a shipped config (``table1``)."""
    path = Path(name)
    if path.exists():
        return path
    stem = name if name.endswith(".cfg") else f"{name}.cfg"
    shipped = resources.files("poissonity") / "configs" / stem
    if shipped.is_file():
        return Path(str(shipped))
    raise InputError(f"config {name!r} not found (shipped configs: {', '.join(shipped_configs())})")


def shipped_configs() -> list[str]:
    folder = resources.files("poissonity") / "configs"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def simulate_csv(cfg: RunConfig, threads: int) -> tuple[str, str]:
    """Run every block; returns ``(main_csv, curve_csv)``."""
    rows, curve = [], []
    for block in cfg.blocks:
        if block.kind == "scenario":
            rows.extend(_scenario_rows(block, threads))
        elif block.kind == "sweep":
            rows.extend(_sweep_rows(block, threads))
        else:
            summary, points = _contiguous_rows(block, threads)
            rows.extend(summary)
            curve.extend(points)
    return _csv_text(SIM_COLUMNS, rows), _csv_text(CURVE_COLUMNS, curve)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for block in cfg.blocks:
        if args.seed is not None:
            block.seed = args.seed
        if args.reps is not None:
            if args.reps < 1:
                raise InputError(f"--reps must be >= 1, got {args.reps}")
            block.reps = args.reps
        if args.alpha is not None:
            block.alpha = args.alpha
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(resolve_config_path(args.config)), args)
    main_csv, curve_csv = simulate_csv(cfg, args.threads)
    _emit(main_csv, args.out)
    if args.curve_out:
        _emit(curve_csv, args.curve_out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def parse_k_range(text: str) -> list[int]:
    """``"3"``, ``"0-3"`` or ``"0,2,5"``."""
    ks: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "-" in part:
                lo, hi = (int(p) for p in part.split("-", 1))
                ks.extend(range(lo, hi + 1))
            else:
                ks.append(int(part))
        except ValueError:
            raise InputError(f"bad k range {text!r}") from None
    if not ks or min(ks) < 0:
        raise InputError(f"bad k range {text!r}")
    return ks


def bounds_rows(specs: Sequence[DistSpec], ks: Sequence[int], grid: int) -> tuple[list[list[str]], bool]:
    rows, violated = [], False
    for spec in specs:
        member = membership_check(spec, grid)
        for k in ks:
            rep = check_bounds(spec, k)
            if member.sign_constant and not rep.holds:
                violated = True
            rows.append(
                [spec.family_name, spec.params_str, spec.label, str(k), fmt_stat(rep.mu), fmt_stat(rep.t_abs_k),
                 fmt_stat(rep.l1), fmt_stat(rep.lower), fmt_stat(rep.upper), str(rep.holds).lower(),
                 member.sign.value]
            )
    return rows, violated


def cmd_bounds(args: argparse.Namespace) -> int:
    specs = [parse_spec(s) for s in args.spec]
    rows, violated = bounds_rows(specs, parse_k_range(args.k), args.grid)
    _emit(_csv_text(BOUNDS_COLUMNS, rows), args.out)
    return EXIT_FAIL if violated else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _emit(text: str, out: str | None) -> None:
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poissonity", description="pgf-based goodness-of-fit tests for the Poisson law")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test a data file for Poissonity")
    p.add_argument("data", help="file of whitespace-separated counts, or - for stdin")
    p.add_argument("--method", default="W", help="W, ID, Z (with --k) or Z<k> (default: W)")
    p.add_argument("--k", type=int, default=0, help="k for --method Z (default: 0)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="write report here instead of stdout")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a simulation config, write CSV")
    p.add_argument("config", help=f"config path or shipped name ({', '.join(shipped_configs())})")
    p.add_argument("--seed", type=int, help="override every block's master seed")
    p.add_argument("--reps", type=int, help="override every block's replication count")
    p.add_argument("--alpha", type=float, help="override every block's alpha")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $POISSONITY_THREADS or 1)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--curve-out", help="CSV of per-lambda powers for [contiguous] blocks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="check the pgf L1 sandwich for distribution specs")
    p.add_argument("spec", nargs="+", help="distribution spec, e.g. binomial:1,0.5")
    p.add_argument("--k", default="0-3", help="k values: 2, 0-3 or 0,1,5 (default: 0-3)")
    p.add_argument("--grid", type=int, default=201, help="grid points for the sign check")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 0) is None:
        args.threads = default_threads()
    if getattr(args, "alpha", None) is not None and not 0 < args.alpha < 1:
        print(f"poissonity: error: alpha must lie in (0,1), got {args.alpha}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ConfigError, SpecParseError) as exc:
        print(f"poissonity: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"poissonity: internal error: {exc!r}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
