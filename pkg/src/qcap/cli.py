"""Command-line front end.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 I/O error.
The default tolerance is 1e-7 unless ``QCAP_ATOL`` is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from .experiments import (
    EnvParams,
    PrivateParams,
    bell_report,
    env_experiment,
    functional_experiment,
    private_experiment,
    region_scan,
)
from .qmat import ATOL

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULT_FORMATS = {
    "verify-private": "json",
    "verify-env": "json",
    "scan-region": "csv",
    "bell-gram": "json",
    "functional": "json",
}
ALLOWED_FORMATS = {
    "verify-private": {"json"},
    "verify-env": {"json"},
    "scan-region": {"json", "csv", "svg"},
    "bell-gram": {"json"},
    "functional": {"json"},
}


class UsageError(Exception):
    pass


def _default_atol() -> float:
    raw = os.environ.get("QCAP_ATOL")
    if raw is None:
        return ATOL
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"QCAP_ATOL={raw!r} is not a number")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcap", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--atol", type=float, default=None, help="absolute tolerance (default: $QCAP_ATOL or 1e-7)")
    common.add_argument("--format", choices=["json", "csv", "svg"], default=None)
    common.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-private", parents=[common], help="private-capacity construction")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=4)

    p = sub.add_parser("verify-env", parents=[common], help="environment-assisted construction")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--p", type=float, default=0.5)

    p = sub.add_parser("scan-region", parents=[common], help="achievable minus converse over (q, p)")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--mode", choices=["asymptotic", "finite"], default="asymptotic")
    p.add_argument("--d", type=int, default=None, help="dimension for --mode finite")

    p = sub.add_parser("bell-gram", parents=[common], help="overlaps of the dephased Bell family")
    p.add_argument("--d", type=int, default=3)

    p = sub.add_parser("functional", parents=[common], help="non-convexity functional")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--q", type=float, default=0.8)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=4)
    return parser


def _json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _csv_text(rows) -> str:
    lines = ["q,p,delta"]
    # + 0.0 folds -0.0 into 0.0
    lines += [f"{q + 0.0:.12g},{p + 0.0:.12g},{delta + 0.0:.12g}" for q, p, delta in rows]
    return "\n".join(lines) + "\n"


def _color(t: float) -> str:
    """Blue (-1) through white (0) to red (+1)."""
    t = max(-1.0, min(1.0, t))
    if t < 0:
        r = g = round(255 * (1 + t))
        b = 255
    else:
        r = 255
        g = b = round(255 * (1 - t))
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_heatmap(rows, grid_n: int, size: int = 512) -> str:
    """Heatmap of ``delta`` with ``q`` on the horizontal axis and ``p`` upward.

    Grid lines where ``delta`` changes sign trace the zero contour.
    """
    vmax = max(abs(r[2]) for r in rows) or 1.0
    cell = size / grid_n
    delta = [[rows[i * grid_n + j][2] for j in range(grid_n)] for i in range(grid_n)]

    def xy(i, j):
        return i * cell, size - (j + 1) * cell

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>delta over (q, p), range [-{vmax:.6g}, {vmax:.6g}]</title>",
    ]
    for i in range(grid_n):
        for j in range(grid_n):
            x, y = xy(i, j)
            parts.append(
                f'<rect x="{x:.3f}" y="{y:.3f}" width="{cell:.3f}" height="{cell:.3f}" '
                f'fill="{_color(delta[i][j] / vmax)}"/>'
            )
    segs = []
    for i in range(grid_n):
        for j in range(grid_n):
            x, y = xy(i, j)
            if i + 1 < grid_n and (delta[i][j] > 0) != (delta[i + 1][j] > 0):
                segs.append(f"M{x + cell:.3f} {y:.3f}V{y + cell:.3f}")
            if j + 1 < grid_n and (delta[i][j] > 0) != (delta[i][j + 1] > 0):
                segs.append(f"M{x:.3f} {y:.3f}H{x + cell:.3f}")
    if segs:
        parts.append(f'<path d="{"".join(segs)}" stroke="black" stroke-width="1.5" fill="none"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_output(text: str, out: Optional[Path]) -> None:
    """Write to stdout, or atomically to ``out`` via a temp file and rename."""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    out = Path(out)
    fd, tmp = tempfile.mkstemp(dir=out.parent if str(out.parent) else ".", prefix=f".{out.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def execute(args: argparse.Namespace) -> tuple[str, bool]:
    """Run the selected command; returns the rendered artifact and pass flag."""
    fmt = args.format or DEFAULT_FORMATS[args.command]
    if fmt not in ALLOWED_FORMATS[args.command]:
        raise UsageError(f"--format {fmt} is not available for {args.command}")
    atol = args.atol if args.atol is not None else _default_atol()
    if not (atol > 0 and math.isfinite(atol)):
        raise UsageError("atol must be a positive number")

    try:
        if args.command == "verify-private":
            rep = private_experiment(PrivateParams(args.d, args.q, args.p, args.samples, args.seed), atol=atol)
        elif args.command == "verify-env":
            rep = env_experiment(EnvParams(args.d, args.p), atol=atol)
        elif args.command == "bell-gram":
            rep = bell_report(args.d, atol=atol)
        elif args.command == "functional":
            rep = functional_experiment(PrivateParams(args.d, args.q, args.p, args.samples, args.seed), atol=atol)
        else:
            return _scan(args, fmt)
    except ValueError as exc:
        raise UsageError(str(exc))
    return _json_text(rep.to_dict()), rep.passed


def _scan(args, fmt: str) -> tuple[str, bool]:
    if args.grid < 2:
        raise ValueError("--grid must be at least 2")
    if args.mode == "finite":
        if args.d is None or args.d < 2:
            raise ValueError("--mode finite needs --d >= 2")
        dim = args.d
    else:
        if args.d is not None:
            raise ValueError("--d only applies to --mode finite")
        dim = "asymptotic"
    rows = region_scan(args.grid, dim)
    if fmt == "csv":
        return _csv_text(rows), True
    if fmt == "svg":
        return svg_heatmap(rows, args.grid), True
    payload = {
        "experiment": "scan-region",
        "params": {"grid": args.grid, "mode": args.mode, "d": args.d},
        "rows": [list(r) for r in rows],
    }
    return _json_text(payload), True


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        text, passed = execute(args)
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qcap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        write_output(text, args.out)
    except OSError as exc:
        print(f"qcap: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
