"""Command-line driver: convergence studies, table/plot artifacts, self-tests.

Examples
--------
Reproduce the smooth-problem convergence table::

    wgelast run --example 1 --degree 1 --levels 2..7 --lambda 1

Sweep the grad-div coefficient with both scheme variants::

    wgelast run --example 3 --degree 2 --levels 2..6 \
        --lambda 1,1e2,1e4,1e6 --variant robust,standard

Run the built-in verification suite::

    wgelast run --selftest

The ``WGELAST_THREADS`` environment variable sets how many (lambda, variant)
studies run concurrently (default 1); outputs are written serially either
way, so artifacts are byte-identical across thread counts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .polyspace import MAX_DEGREE
from .study import ConvergenceTable, convergence_study

_CSV_HEADER = "example,degree,variant,lambda,level,h,ndof,energy_err,energy_order,l2_err,l2_order"
_FORMATS = ("csv", "md", "svg")


def _fmt_err(v: float) -> str:
    return f"{v:.4e}"


def _fmt_order(v) -> str:
    return "" if v is None else f"{v:.4f}"


def _fmt_lambda(v: float) -> str:
    return f"{v:g}"


def emit_table(table: ConvergenceTable, fmt: str) -> str:
    """Render one study table as csv, md, or svg text."""
    if fmt == "csv":
        lines = [_CSV_HEADER]
        for r in table.rows:
            lines.append(",".join([
                str(table.example), str(table.degree), table.variant,
                _fmt_lambda(table.lam), str(r.level), f"{r.h:.6e}", str(r.ndof),
                _fmt_err(r.energy_err), _fmt_order(r.energy_order),
                _fmt_err(r.l2_err), _fmt_order(r.l2_order),
            ]))
        return "\n".join(lines) + "\n"
    if fmt == "md":
        head = (f"Example {table.example} ({table.label}), degree {table.degree}, "
                f"{table.variant} scheme, mu={table.mu:g}, lambda={_fmt_lambda(table.lam)}")
        lines = [head, "",
                 "| Level | |||Q_h u - u_h||| | order | ||Q_0 u - u_0|| | order |",
                 "|---|---|---|---|---|"]
        for r in table.rows:
            lines.append(f"| {r.level} | {_fmt_err(r.energy_err)} | {_fmt_order(r.energy_order) or '--'} "
                         f"| {_fmt_err(r.l2_err)} | {_fmt_order(r.l2_order) or '--'} |")
        return "\n".join(lines) + "\n"
    if fmt == "svg":
        return _svg_plot(table)
    raise ValueError(f"unknown format {fmt!r}")


def _svg_plot(table: ConvergenceTable, width=480, height=360) -> str:
    """Log-log convergence plot with slope guide lines k and k+1."""
    import math

    pts = [(math.log2(1.0 / r.h), r.energy_err, r.l2_err) for r in table.rows
           if r.energy_err > 0 and r.l2_err > 0]
    ml, mr, mt, mb = 54, 16, 22, 40
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']
    if pts:
        xs = [p[0] for p in pts]
        ys = [math.log10(v) for p in pts for v in p[1:]]
        x0, x1 = min(xs) - 0.3, max(xs) + 0.3
        y0, y1 = min(ys) - 0.4, max(ys) + 0.4

        def sx(x):
            return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

        def sy(y):
            return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

        body.append(f'<line x1="{ml}" y1="{height-mb}" x2="{width-mr}" y2="{height-mb}" stroke="black"/>')
        body.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height-mb}" stroke="black"/>')
        for x in range(int(math.ceil(x0)), int(math.floor(x1)) + 1):
            body.append(f'<line x1="{sx(x):.1f}" y1="{height-mb}" x2="{sx(x):.1f}" y2="{height-mb+4}" stroke="black"/>'
                        f'<text x="{sx(x):.1f}" y="{height-mb+16}" font-size="10" text-anchor="middle">{x}</text>')
        for y in range(int(math.ceil(y0)), int(math.floor(y1)) + 1):
            body.append(f'<line x1="{ml-4}" y1="{sy(y):.1f}" x2="{ml}" y2="{sy(y):.1f}" stroke="black"/>'
                        f'<text x="{ml-7}" y="{sy(y)+3:.1f}" font-size="10" text-anchor="end">1e{y}</text>')
        body.append(f'<text x="{(ml+width-mr)/2:.0f}" y="{height-8}" font-size="11" '
                    f'text-anchor="middle">log2(1/h)</text>')
        for vals, color, label in [([p[1] for p in pts], "#c02020", "energy"),
                                   ([p[2] for p in pts], "#2040c0", "L2")]:
            path = " ".join(f"{sx(x):.1f},{sy(math.log10(v)):.1f}" for x, v in zip(xs, vals))
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for x, v in zip(xs, vals):
                body.append(f'<circle cx="{sx(x):.1f}" cy="{sy(math.log10(v)):.1f}" r="2.5" fill="{color}"/>')
        # slope guides: order k against the energy curve, k+1 against L2
        guides = [(table.degree, [p[1] for p in pts], "#c02020"),
                  (table.degree + 1, [p[2] for p in pts], "#2040c0")]
        span = xs[-1] - xs[0] if len(xs) > 1 else 1.0
        for slope, vals, color in guides:
            ya = math.log10(vals[-1]) - 0.25
            xa = xs[-1]
            xb = xa - min(1.0, span)
            yb = ya + slope * (xa - xb) * math.log10(2)
            body.append(f'<line x1="{sx(xb):.1f}" y1="{sy(yb):.1f}" x2="{sx(xa):.1f}" y2="{sy(ya):.1f}" '
                        f'stroke="{color}" stroke-dasharray="4,3" stroke-width="1"/>')
            body.append(f'<text x="{sx(xa)+3:.1f}" y="{sy(ya)+3:.1f}" font-size="10" '
                        f'fill="{color}">slope {slope}</text>')
        body.append(f'<text x="{(ml+width-mr)/2:.0f}" y="14" font-size="11" text-anchor="middle">'
                    f'example {table.example}, k={table.degree}, {table.variant}, '
                    f'lambda={_fmt_lambda(table.lam)}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def _parse_levels(text: str):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def _parse_list(text: str):
    return [t.strip() for t in text.split(",") if t.strip()]


def _read_config(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {raw!r} is not key=value")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgelast",
                                description="Locking-free weak Galerkin elasticity studies")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run convergence studies or the self-test suite")
    run.add_argument("--selftest", action="store_true",
                     help="run operator oracles, patch tests, and audits instead of a study")
    run.add_argument("--example", type=int, choices=(1, 2, 3), default=1)
    run.add_argument("--degree", type=int, default=1)
    run.add_argument("--levels", default="2..5", help="range like 2..6 or list 2,3,4")
    run.add_argument("--lambda", dest="lam", default="1", help="comma list of grad-div coefficients")
    run.add_argument("--mu", type=float, default=1.0)
    run.add_argument("--variant", default="robust", help="comma list from {robust, standard}")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--formats", default="csv,md,svg")
    run.add_argument("--condense", action="store_true",
                     help="eliminate interior dofs element-wise before the global solve")
    run.add_argument("--residual-tol", type=float, default=1e-11)
    run.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")
    run.add_argument("--config", help="optional key=value file; flags override it")
    return p


def _fail(message: str, **extra) -> int:
    print(json.dumps({"error": message, **extra}), file=sys.stderr)
    return 1


def run(args) -> int:
    if args.selftest:
        from .selftest import run_selftest
        results = run_selftest()
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        bad = [name for name, ok, _ in results if not ok]
        if bad:
            return _fail("selftest failures", checks=bad)
        print(f"selftest: {len(results)} checks passed")
        return 0

    try:
        levels = _parse_levels(args.levels)
        lambdas = [(tok, float(tok)) for tok in _parse_list(args.lam)]
        variants = _parse_list(args.variant)
        formats = _parse_list(args.formats)
        if not 1 <= args.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}")
        if not levels or not all(1 <= l <= 8 for l in levels):
            raise ValueError("levels must lie in 1..8")
        if any(lv <= 0 for _, lv in lambdas):
            raise ValueError("lambda values must be positive")
        for v in variants:
            if v not in ("robust", "standard"):
                raise ValueError(f"unknown variant {v!r}")
        for f in formats:
            if f not in _FORMATS:
                raise ValueError(f"unknown format {f!r}")
    except ValueError as exc:
        return _fail(f"invalid config: {exc}")

    backend = None if args.backend == "auto" else args.backend
    jobs = [(tok, lv, var) for tok, lv in lambdas for var in variants]

    def study(job):
        tok, lv, var = job
        return convergence_study(args.example, args.degree, levels, args.mu, lv,
                                 var, condense=args.condense, backend=backend,
                                 residual_tol=args.residual_tol)

    threads = int(os.environ.get("WGELAST_THREADS", "1") or 1)
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                tables = list(pool.map(study, jobs))
        else:
            tables = [study(job) for job in jobs]
    except Exception as exc:
        return _fail(f"study failed: {exc}", example=args.example, degree=args.degree)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for (tok, _, var), table in zip(jobs, tables):
        stem = f"example{args.example}_k{args.degree}_{var}_lambda{tok.replace('+', '')}"
        for fmt in formats:
            path = outdir / f"{stem}.{fmt}"
            path.write_text(emit_table(table, fmt))
            print(f"wrote {path}")
        last = table.rows[-1]
        print(f"{stem}: level {last.level} energy {_fmt_err(last.energy_err)} "
              f"l2 {_fmt_err(last.l2_err)}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args)
    return _fail(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
