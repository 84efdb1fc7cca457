"""Command line front-end: bound curves, scheme simulation, database encode/query.

Every command writes CSV (or a binary file) plus a JSON manifest next to it;
``sqid replay MANIFEST`` re-runs the recorded command.

Exit codes: 0 success, 2 usage error, 3 format error, 4 resource budget.
"""
import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as B
from . import engine as E
from .errors import DomainError, FormatError, ResourceBudgetError
from .wrapped import shape_rate

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_BUDGET = 0, 2, 3, 4

BOUND_COLUMNS = ["n", "R", "R_G", "R_S", "D", "value", "log2_value", "status"]
SIM_COLUMNS = ["n", "R", "R_G", "R_S", "D", "mode", "K", "scale", "N", "samples", "mean", "stderr", "log2_mean"]
VERDICT_COLUMNS = ["query_id", "record_id", "verdict", "min_dist_bound"]


class UsageError(Exception):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def parse_grid(text):
    """'a:b:step' (inclusive) or a comma list; '' gives an empty grid."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        try:
            a, b, h = (float(t) for t in text.split(":"))
        except ValueError:
            raise UsageError(f"bad range {text!r}, expected start:stop:step")
        if h <= 0:
            raise UsageError("range step must be positive")
        count = int(math.floor((b - a) / h + 1e-9)) + 1
        return [float(round(a + h * j, 12)) for j in range(max(count, 0))]
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}")


def parse_ints(text):
    try:
        return [int(v) for v in parse_grid(text)]
    except (TypeError, ValueError):
        raise UsageError(f"bad integer list {text!r}")


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    f, close = _open_out(path)
    try:
        f.write(buf.getvalue())
    finally:
        if close:
            f.close()


def _write_manifest(args, out_path):
    if out_path is None or out_path == "-":
        return
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- commands ----------------------------------------------------------------


def _bound_row(n, R, D, kind, K_grid):
    row = {"n": n, "R": R, "D": D, "status": "ok"}
    if kind in ("achievability", "genie"):
        try:
            pt = B.best_rate_split(n, R, D, K_grid)
        except DomainError as exc:
            row["status"] = f"infeasible: {exc}"
            return row
        row.update(R_G=pt.R_G, R_S=pt.R_S)
        if pt.status != "ok":
            row["status"] = pt.status
            return row
        if kind == "achievability":
            row.update(value=pt.value, log2_value=pt.log2_value)
        else:
            lv = B.log_genie_bound(n, D, pt.extra["theta"])
            row.update(value=math.exp(lv), log2_value=lv / B.LN2)
    elif kind == "converse":
        lv, info = B.log_converse_bound(n, R, D)
        row.update(value=math.exp(lv), log2_value=lv / B.LN2, status=info["status"])
    elif kind == "exponent":
        try:
            row["value"] = B.id_exponent(R, D)
        except DomainError as exc:
            row["status"] = f"infeasible: {exc}"
    return row


def cmd_bounds(args):
    D_grid = parse_grid(args.D)
    if args.kind == "idrate":
        rows = []
        for D in D_grid:
            v = B.id_rate(D)
            rows.append({"D": D, "value": v, "log2_value": math.log2(v) if 0 < v < math.inf else None,
                         "status": "ok" if math.isfinite(v) else "infinite"})
        _write_csv(args.out, BOUND_COLUMNS, rows)
        return EXIT_OK
    ns = parse_ints(args.n)
    Rs = parse_grid(args.R)
    K_grid = tuple(parse_ints(args.K_grid))
    rows = [_bound_row(n, R, D, args.kind, K_grid) for n in ns for D in D_grid for R in Rs]
    _write_csv(args.out, BOUND_COLUMNS, rows)
    return EXIT_OK


def _config(args, scale=None, levels=None):
    return E.build_config(
        args.n, args.similarity, args.rate_gain_levels if levels is None else levels,
        args.lattice, args.scale if scale is None else scale, args.N,
    )


def cmd_simulate(args):
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    rows = []
    for scale in parse_grid(args.scales) if args.scales else [args.scale]:
        for K in parse_ints(args.levels) if args.levels else [args.rate_gain_levels]:
            cfg = _config(args, scale, K)
            _, R_S = shape_rate(cfg.code)
            res = E.simulate_maybe(cfg, args.samples, args.seed, args.mode, args.workers)
            rows.append({
                "n": args.n, "R": R_S + cfg.gain.rate, "R_G": cfg.gain.rate, "R_S": R_S,
                "D": args.similarity, "mode": args.mode, "K": K, "scale": scale, "N": cfg.code.N,
                "samples": args.samples, "mean": res.mean, "stderr": res.stderr,
                "log2_mean": math.log2(res.mean) if res.mean > 0 else -math.inf,
            })
    _write_csv(args.out, SIM_COLUMNS, rows)
    return EXIT_OK


def cmd_gen_vectors(args):
    if args.count < 0 or args.n < 1:
        raise UsageError("--count must be >= 0 and --n >= 1")
    chunk = 4096
    blocks = []
    for c, s in enumerate(range(0, args.count, chunk)):
        rng = np.random.default_rng([args.seed, c])
        blocks.append(rng.standard_normal((min(chunk, args.count - s), args.n)))
    X = np.concatenate(blocks) if blocks else np.zeros((0, args.n))
    E.write_vectors(args.out, X)
    return EXIT_OK


def cmd_encode(args):
    cfg = _config(args)
    count = E.encode_database(cfg, args.input, args.out, flat=args.flat, workers=args.workers)
    print(f"encoded {count} vectors", file=sys.stderr)
    return EXIT_OK


def cmd_query(args):
    cfg = _config(args)
    Y = E.read_vectors(args.queries)
    if Y.shape[1] != cfg.n:
        raise FormatError(f"query length {Y.shape[1]} does not match n = {cfg.n}", 6)
    res = E.scan_query(cfg, args.signatures, Y, args.similarity, workers=args.workers)
    rows = []
    for q in range(res.maybe.shape[0]):
        for r in range(res.maybe.shape[1]):
            rows.append({"query_id": q, "record_id": r,
                         "verdict": "maybe" if res.maybe[q, r] else "no",
                         "min_dist_bound": float(res.min_dist[q, r])})
    _write_csv(args.out, VERDICT_COLUMNS, rows)
    print(f"maybe rate {res.maybe_rate:.6g} over {res.maybe.size} pairs", file=sys.stderr)
    return EXIT_OK


def cmd_convert(args):
    cfg = _config(args)
    layout, data = E.read_signatures(args.input, cfg)
    index = E.FlatIndex(cfg)
    if args.to == "flat":
        out = data if layout == E.LAYOUT_FLAT else index.encode(data)
        E.write_signatures(args.out, cfg, out, E.LAYOUT_FLAT)
    else:
        out = data if layout == E.LAYOUT_RECORDS else index.decode(data)
        E.write_signatures(args.out, cfg, out, E.LAYOUT_RECORDS)
    return EXIT_OK


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        params = manifest["params"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest: {exc}")
    ns = argparse.Namespace(**params)
    if args.out is not None:
        ns.out = args.out
    ns.func = COMMANDS[ns.command]
    return _run(ns)


COMMANDS = {
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "gen-vectors": cmd_gen_vectors,
    "encode": cmd_encode,
    "query": cmd_query,
    "convert": cmd_convert,
}


# -- argument parsing ----------------------------------------------------------


def _scheme_flags(p, with_similarity=True):
    p.add_argument("--n", type=int, required=True, help="blocklength (vector length)")
    if with_similarity:
        p.add_argument("--similarity", type=float, default=0.1, help="similarity threshold D (default 0.1)")
    p.add_argument("--rate-gain-levels", type=int, default=8, help="number K of gain cells (default 8)")
    p.add_argument("--lattice", default="leech", help="leech, zn or file:PATH (default leech)")
    p.add_argument("--scale", type=float, default=1.0, help="lattice scale factor (default 1)")
    p.add_argument("--N", type=int, default=None, help="annulus count (default from d_min)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (output does not depend on it)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sqid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sqid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="achievability, genie, converse, exponent or identification-rate curves")
    p.add_argument("--kind", required=True, choices=["achievability", "genie", "converse", "exponent", "idrate"])
    p.add_argument("--n", default="25", help="blocklengths, list or start:stop:step (default 25)")
    p.add_argument("--D", default="0.1", help="similarity thresholds, list or range (default 0.1)")
    p.add_argument("--R", default="0.5:3:0.25", help="rates in bits per dimension, list or range")
    p.add_argument("--K-grid", dest="K_grid", default=",".join(str(k) for k in B.DEFAULT_K_GRID),
                   help="gain level counts searched for the best rate split")
    p.add_argument("--out", default="-", help="CSV output path (default stdout)")

    p = sub.add_parser("simulate", help="semi-Monte-Carlo P(maybe) of the wrapped-code scheme")
    _scheme_flags(p)
    p.add_argument("--samples", type=int, default=1000, help="number of Gaussian draws (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--mode", choices=["bound", "true-angle"], default="bound",
                   help="cap angle from the covering bound or the measured angle")
    p.add_argument("--scales", default=None, help="several lattice scales, list or range (overrides --scale)")
    p.add_argument("--levels", default=None, help="several gain level counts (overrides --rate-gain-levels)")
    p.add_argument("--out", default="-", help="CSV output path (default stdout)")

    p = sub.add_parser("gen-vectors", help="write i.i.d. standard Gaussian vectors to a vector file")
    p.add_argument("--n", type=int, required=True, help="vector length")
    p.add_argument("--count", type=int, required=True, help="number of vectors")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", required=True, help="output vector file")

    p = sub.add_parser("encode", help="sign a vector file into a signature file")
    _scheme_flags(p)
    p.add_argument("--input", required=True, help="input vector file")
    p.add_argument("--out", required=True, help="output signature file")
    p.add_argument("--flat", action="store_true", help="store one flat integer index per record")
    p.add_argument("--seed", type=int, default=None, help="recorded in the manifest; encoding is deterministic")

    p = sub.add_parser("query", help="scan a signature file with query vectors")
    _scheme_flags(p)
    p.add_argument("--signatures", required=True, help="signature file")
    p.add_argument("--queries", required=True, help="vector file of queries")
    p.add_argument("--out", default="-", help="verdict CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=None, help="recorded in the manifest")

    p = sub.add_parser("convert", help="switch a signature file between record and flat layout")
    _scheme_flags(p, with_similarity=False)
    p.add_argument("--input", required=True, help="input signature file")
    p.add_argument("--out", required=True, help="output signature file")
    p.add_argument("--to", choices=["records", "flat"], required=True, help="target layout")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", help="manifest JSON written by an earlier run")
    p.add_argument("--out", default=None, help="write to this path instead of the recorded one")
    return parser


def _run(args):
    try:
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        if args.command == "convert":
            args.similarity = 1.0  # D does not enter the signature map
        code = args.func(args)
        if args.command != "replay":
            _write_manifest(args, getattr(args, "out", None))
        return code
    except UsageError as exc:
        print(f"sqid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"sqid: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ResourceBudgetError as exc:
        print(f"sqid: resource budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DomainError as exc:
        print(f"sqid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"sqid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.func = cmd_replay if args.command == "replay" else COMMANDS[args.command]
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
