"""Command-line front end: ``partmap convert|reconstruct|gate|pwarp|metrics``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import formats, metrics
from .gating import GatingConfig, predictions_from_frame, simulate_frame
from .partition import CTU_SIZE, DEFAULT_RULES, PartitionRules
from .post import PostConfig, SearchBudgetExceeded, reconstruct
from .pwarp import FlowField, pwarp_frame


class CliError(Exception):
    pass


def load_rules(path) -> PartitionRules:
    if path is None:
        return DEFAULT_RULES
    return PartitionRules.from_mapping(formats.parse_key_values(Path(path).read_text(), str(path)))


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        formats.atomic_write(out, text)


# ---------------------------------------------------------------------------


def cmd_convert(args) -> int:
    rules = load_rules(args.rules)
    text = Path(args.log).read_text()
    forest = formats.parse_split_log(text, rules, name=args.log)
    pocs = sorted(forest) or ([args.poc] if args.poc is not None else [])
    if not pocs:
        raise CliError("log holds no frames; pass --poc with --width/--height for an empty frame")
    frames = []
    for poc in pocs:
        trees = forest.get(poc, {})
        width, height = args.width, args.height
        if width is None or height is None:
            if not trees:
                raise CliError(f"frame {poc}: cannot infer size without --width/--height")
            width = width or CTU_SIZE * (1 + max(c for _, c in trees))
            height = height or CTU_SIZE * (1 + max(r for r, _ in trees))
        frames.append(formats.frame_from_trees(poc, width, height, trees))
    out = Path(args.out)
    if out.suffix == ".pmap":
        if len(frames) != 1:
            raise CliError("several frames in the log; --out must be a directory")
        targets = [(out, frames[0])]
    else:
        out.mkdir(parents=True, exist_ok=True)
        targets = [(out / f"poc{f.poc:04d}.pmap", f) for f in frames]
    # render everything first so a failure leaves no files behind
    rendered = [(p, formats.format_pmap(f)) for p, f in targets]
    for path, text in rendered:
        formats.atomic_write(path, text)
    return 0


def post_config(args) -> PostConfig:
    return PostConfig(th_qt=args.thqt, th_mtt=args.thmtt, max_tree_depth=args.max_tree_depth,
                      rules=load_rules(args.rules), node_budget=args.node_budget)


def cmd_reconstruct(args) -> int:
    cfg = post_config(args)
    frame = formats.read_pmap(args.pmap)
    trees = {}
    failed = []
    for r, c, m in frame.ctu_items():
        try:
            trees[(r, c)] = reconstruct(m, cfg, ctu=(r, c))
        except SearchBudgetExceeded as exc:
            failed.append(str(exc))
    _emit(formats.format_split_log(frame.poc, trees), args.out)
    for msg in failed:
        print(f"error: {msg}", file=sys.stderr)
    return 3 if failed else 0


def cmd_gate(args) -> int:
    rules = load_rules(args.rules)
    cfg = GatingConfig(level=args.level, th1=args.th1, th2=args.th2, d_max=args.dmax, rules=rules)
    label = formats.read_pmap(args.label)
    pred = formats.read_pmap(args.pred)
    if (label.width, label.height) != (pred.width, pred.height):
        raise CliError("label and prediction frames differ in size")
    side = formats.parse_sidecar(Path(args.pmask).read_text(), args.pmask)
    missing = [(r, c) for r, c, _ in pred.ctu_items() if (r, c) not in side]
    if missing:
        raise CliError(f"p_mask sidecar lacks CTU {missing[0]}")
    report = simulate_frame(label, predictions_from_frame(pred, side), cfg)
    _emit(report.to_csv() if args.format == "csv" else report.to_text(), args.out)
    return 0


def _load_depth(path: str) -> np.ndarray:
    data = Path(path).read_bytes()
    if data.startswith(b"PMAP1"):
        return formats.depth_from_frame(formats.parse_pmap(data.decode(), path))
    return formats.parse_float_grid(data, path)


def cmd_pwarp(args) -> int:
    cur = formats.read_pgm(args.cur)
    ref = formats.read_pgm(args.ref)
    u, v = formats.read_flo(args.flow)
    if cur.shape != ref.shape or u.shape != cur.shape:
        raise CliError(f"dimension mismatch: cur {cur.shape}, ref {ref.shape}, flow {u.shape}")
    depth = _load_depth(args.depth)
    h, w = cur.shape
    need = (-(-h // CTU_SIZE) * CTU_SIZE // 4, -(-w // CTU_SIZE) * CTU_SIZE // 4)
    if depth.shape[0] < -(-h // 4) or depth.shape[1] < -(-w // 4) or depth.shape[0] > need[0] or depth.shape[1] > need[1]:
        raise CliError(f"depth grid {depth.shape} does not cover a {w}x{h} frame")
    res, vp = pwarp_frame(cur, ref, FlowField(u, v), depth)
    res_bytes = formats.format_residual(res)
    flo_bytes = formats.format_flo(vp.u, vp.v) if args.flow_out else None
    formats.atomic_write(args.out, res_bytes)
    if flo_bytes is not None:
        formats.atomic_write(args.flow_out, flo_bytes)
    return 0


def cmd_metrics(args) -> int:
    sub = args.metric
    if sub == "ets":
        print(f"{metrics.ets(args.anchor, args.test):.4f}")
    elif sub == "eta":
        print(f"{metrics.eta(args.ets):.4f}")
    elif sub == "rho":
        print(f"{metrics.overhead_rho((args.enc, args.net, args.post)):.4f}")
    elif sub == "bdrate":
        a = formats.parse_rd_csv(Path(args.anchor).read_text(), args.anchor)
        t = formats.parse_rd_csv(Path(args.test).read_text(), args.test)
        print(f"{metrics.bd_rate(a, t):.4f}")
    elif sub == "delta":
        total = formats.parse_qp_values(Path(args.ets_total).read_text(), args.ets_total)
        basic = formats.parse_qp_values(Path(args.ets_basic).read_text(), args.ets_basic)
        d_ets, d_bdbr = metrics.delta_metrics(total, basic, args.bdbr_total, args.bdbr_basic)
        print(f"delta_ets={d_ets:.4f}")
        print(f"delta_bdbr={d_bdbr:.4f}")
    elif sub == "timestats":
        values = formats.parse_timings(Path(args.series).read_text(), args.series)
        series = metrics.TimingSeries([], alpha=args.alpha, beta=args.beta,
                                      min_m=args.min_m, max_m=args.max_m)
        feed = iter(values)

        def next_measurement():
            try:
                return next(feed)
            except StopIteration:
                raise CliError(f"series ended after {len(values)} values without a verdict") from None

        res = metrics.robust_mean_time(series, next_measurement)
        print(f"mean={res.mean:.4f}")
        print(f"m={res.m}")
        print(f"retained={len(res.retained)}")
        print(f"converged={int(res.converged)}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partmap", description="Partition-map tools for VVC inter CTUs.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="split-decision log -> PMAP1 files")
    c.add_argument("log")
    c.add_argument("--out", required=True, help="directory, or a .pmap file for a single frame")
    c.add_argument("--rules")
    c.add_argument("--width", type=int)
    c.add_argument("--height", type=int)
    c.add_argument("--poc", type=int, help="frame number for a log without records")
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("reconstruct", help="predicted PMAP1 -> split-decision log")
    r.add_argument("pmap")
    r.add_argument("--out")
    r.add_argument("--rules")
    r.add_argument("--thqt", type=float, default=0)
    r.add_argument("--thmtt", type=float, default=math.inf)
    r.add_argument("--max-tree-depth", type=int, default=7)
    r.add_argument("--node-budget", type=int, default=1_000_000)
    r.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("gate", help="simulate dual-threshold gating")
    g.add_argument("label")
    g.add_argument("pred")
    g.add_argument("--pmask", required=True, help="sidecar with row,col,p_mask lines")
    g.add_argument("--rules")
    g.add_argument("--level", type=int, default=3)
    g.add_argument("--th1", type=float, default=0.2)
    g.add_argument("--th2", type=float, default=0.9)
    g.add_argument("--dmax", type=int, default=7)
    g.add_argument("--format", choices=("text", "csv"), default="text")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gate)

    w = sub.add_parser("pwarp", help="partitioning-adaptive warping residual")
    w.add_argument("cur")
    w.add_argument("ref")
    w.add_argument("flow")
    w.add_argument("--depth", required=True, help="PMAP1 file or float grid")
    w.add_argument("--out", required=True, help="signed 16-bit residual")
    w.add_argument("--flow-out", help="write the adaptive flow as .flo")
    w.set_defaults(func=cmd_pwarp)

    m = sub.add_parser("metrics", help="evaluation arithmetic")
    msub = m.add_subparsers(dest="metric", required=True)
    e = msub.add_parser("ets")
    e.add_argument("anchor", type=float)
    e.add_argument("test", type=float)
    e = msub.add_parser("eta")
    e.add_argument("ets", type=float)
    e = msub.add_parser("rho")
    e.add_argument("enc", type=float)
    e.add_argument("net", type=float)
    e.add_argument("post", type=float)
    e = msub.add_parser("bdrate")
    e.add_argument("anchor")
    e.add_argument("test")
    e = msub.add_parser("delta")
    e.add_argument("--ets-total", required=True)
    e.add_argument("--ets-basic", required=True)
    e.add_argument("--bdbr-total", type=float, required=True)
    e.add_argument("--bdbr-basic", type=float, required=True)
    e = msub.add_parser("timestats")
    e.add_argument("series")
    e.add_argument("--alpha", type=float, default=0.99)
    e.add_argument("--beta", type=float, default=0.01)
    e.add_argument("--min-m", type=int, default=4)
    e.add_argument("--max-m", type=int, default=64)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
