"""Command-line surface: loss evaluation, direct flow optimization, flow
metrics, visualization, and the verification suites.

Exit status: 0 on success, 1 when a verification suite fails its
thresholds, 2 on I/O, parse, or input-validation errors.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import checks, fileio, metrics, optimize, viz


def _cmd_losses(args) -> int:
    image_t = fileio.read_image(args.image_t)
    image_t1 = fileio.read_image(args.image_t1)
    flow_f = fileio.read_flo(args.flow)
    # without a backward flow file, fall back to the negated forward flow
    # (exact for global translations)
    flow_b = fileio.read_flo(args.flow_back) if args.flow_back else -flow_f
    loss_cfg, _ = _configs(args)
    bd = optimize.total_loss(image_t, image_t1, flow_f, flow_b, loss_cfg)
    for key in ("census", "smoothness", "non_intersection", "non_blocking", "total"):
        print(f"{key}={getattr(bd, key):.6f}")
    return 0


def _cmd_optimize(args) -> int:
    image_t = fileio.read_image(args.image_t)
    image_t1 = fileio.read_image(args.image_t1)
    loss_cfg, opt_cfg = _configs(args)
    result = optimize.optimize_flow_pair(image_t, image_t1, loss_cfg, opt_cfg)
    fileio.write_flo(args.out_fwd, result.flow_forward)
    fileio.write_flo(args.out_bwd, result.flow_backward)
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "census", "smooth", "inter", "block", "total"])
            for row in result.trace:
                writer.writerow(
                    [row.step]
                    + [
                        f"{x:.9g}"
                        for x in (
                            row.census,
                            row.smoothness,
                            row.non_intersection,
                            row.non_blocking,
                            row.total,
                        )
                    ]
                )
    final = result.trace[-1]
    print(f"steps={final.step + 1}")
    print(f"final_total={final.total:.6f}")
    return 0


def _cmd_eval(args) -> int:
    flow = fileio.read_flo(args.flow)
    gt = fileio.read_flo(args.gt)
    valid = fileio.read_mask(args.valid) if args.valid else None
    occluded = fileio.read_mask(args.noc) if args.noc else None
    result = metrics.endpoint_error(flow, gt, valid, occluded)
    print(f"epe_mean={result.epe_mean:.6f}")
    print(f"epe_mean_noc={result.epe_mean_noc:.6f}")
    print(f"error_rate={result.error_rate:.6f}")
    print(f"valid_count={result.valid_count}")
    return 0


def _cmd_viz(args) -> int:
    flow = fileio.read_flo(args.flow)
    image = viz.flow_to_color(flow, args.max_mag)
    fileio.write_image(args.out, image)
    return 0


def _cmd_gradcheck(args) -> int:
    names = list(checks.GRADCHECK_THRESHOLDS) if args.loss == "all" else [args.loss]
    status = 0
    for name in names:
        result = checks.run_gradcheck(name, probes=args.probes, seed=args.seed)
        bound = checks.GRADCHECK_THRESHOLDS[name]
        ok = result.max_rel_error < bound
        print(
            f"{name}: max_rel_error={result.max_rel_error:.3e} "
            f"threshold={bound:.0e} probes={result.probes} "
            f"{'ok' if ok else 'FAIL'}"
        )
        if not ok:
            status = 1
    return status


def _cmd_oracle_check(args) -> int:
    seg = checks.segment_predicate_agreement(args.samples, seed=args.seed)
    print(
        f"segments: compared={seg.compared} mismatches={seg.mismatches} "
        f"skipped={seg.skipped_degenerate}"
    )
    quad_count = max(args.samples // 10, 100)
    quad, n_convex, n_concave = checks.quad_membership_agreement(
        quad_count, seed=args.seed
    )
    print(
        f"quads: compared={quad.compared} mismatches={quad.mismatches} "
        f"skipped={quad.skipped_degenerate} convex={n_convex} concave={n_concave}"
    )
    return 1 if seg.mismatches or quad.mismatches else 0


def _configs(args):
    if getattr(args, "config", None):
        return optimize.load_config(args.config)
    return optimize.LossConfig(), optimize.OptimizeConfig()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgeo",
        description="Optical-flow losses, direct optimization, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("losses", help="print the loss breakdown of a flow pair")
    p.add_argument("image_t")
    p.add_argument("image_t1")
    p.add_argument("flow", help="forward flow .flo")
    p.add_argument("flow_back", nargs="?", help="backward flow .flo (default: negated forward)")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=_cmd_losses)

    p = sub.add_parser("optimize", help="optimize a flow pair for two frames")
    p.add_argument("image_t")
    p.add_argument("image_t1")
    p.add_argument("--out-fwd", required=True)
    p.add_argument("--out-bwd", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--trace", help="write per-step loss CSV here")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("eval", help="endpoint error against a ground-truth flow")
    p.add_argument("flow")
    p.add_argument("gt")
    p.add_argument("--valid", help="mask image; nonzero = ground truth present")
    p.add_argument("--noc", help="occlusion mask image; nonzero = occluded")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("viz", help="render a flow field with the color wheel")
    p.add_argument("flow")
    p.add_argument("--out", required=True)
    p.add_argument("--max-mag", type=float, default=None)
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument(
        "--loss",
        choices=["census", "smooth", "inter", "block", "all"],
        default="all",
    )
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="geometric predicates vs. oracles")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (fileio.FloParseError, fileio.ImageReadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
