"""Command-line interface.

Subcommands: simulate, reconstruct, compare, figures, selftest.
Exit codes: 0 ok, 2 config error, 3 numerical-invariant failure,
4 insufficient statistics.
"""

import argparse
import sys

from .config import RunConfig
from .errors import PrhtError
from . import pipeline


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_dict({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if overrides:
        raw = cfg.to_dict()
        raw.update(overrides)
        cfg = RunConfig.from_dict(raw)
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prhtomo",
        description=(
            "Simulate phase-randomised dual-homodyne records and reconstruct "
            "photon-number-conditioned states from them."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    p_sim = sub.add_parser("simulate", help="write a PRHT record file")
    common(p_sim)

    p_rec = sub.add_parser("reconstruct", help="reconstruct a state from records")
    common(p_rec)
    p_rec.add_argument("records", type=str, help="PRHT record file")

    p_cmp = sub.add_parser("compare", help="fidelity between two density JSONs")
    p_cmp.add_argument("density_a", type=str)
    p_cmp.add_argument("density_b", type=str)
    p_cmp.add_argument("--out", type=str, default=None, help="report path")

    p_fig = sub.add_parser("figures", help="export figure CSV bundles")
    common(p_fig)

    p_self = sub.add_parser("selftest", help="run fast invariant checks")
    p_self.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _load_config(args)
            path, sidecar = pipeline.cmd_simulate(cfg, threads=args.threads)
            print(f"wrote {path}\nwrote {sidecar}")
        elif args.command == "reconstruct":
            cfg = _load_config(args)
            paths = pipeline.cmd_reconstruct(cfg, args.records)
            for kind, path in paths.items():
                print(f"wrote {kind}: {path}")
        elif args.command == "compare":
            report = pipeline.cmd_compare(args.density_a, args.density_b, args.out)
            print(f"fidelity: {report['fidelity']:.6f}")
            if args.out:
                print(f"wrote {args.out}")
        elif args.command == "figures":
            cfg = _load_config(args)
            for kind, path in pipeline.cmd_figures(cfg).items():
                print(f"wrote {kind}: {path}")
        elif args.command == "selftest":
            checks = pipeline.cmd_selftest(verbose=not args.quiet)
            if not all(ok for _, ok in checks):
                return 3
    except PrhtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
