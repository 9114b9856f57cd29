"""Command-line entry point: ``paretoflow {gen-data,train,optimize,ablate,report}``.

Success prints a JSON summary on stdout and exits 0; failure prints
``{"error": ..., "message": ...}`` on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from .config import RunConfig, config_from_dict, load_config


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.variant is not None:
        over["variant"] = args.variant
    if args.problem is not None:
        over["problem"] = args.problem
    if args.out is not None:
        over["output_dir"] = args.out
    if args.workers is not None:
        over["workers"] = args.workers
    if over:
        cfg = config_from_dict({**cfg.to_dict(), **over})
    return cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config (defaults apply when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant")
    p.add_argument("--problem")
    p.add_argument("--out", help="run directory (overrides output_dir)")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paretoflow", description="Offline multi-objective optimization with guided flows")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("gen-data", "sample an offline dataset"),
        ("train", "train predictors and the flow"),
        ("optimize", "run guided sampling and evaluate 256 candidates"),
        ("ablate", "train per seed and run all six variants"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "optimize":
            p.add_argument("--train-dir", help="directory holding dataset and checkpoints (default: the run directory)")
        if name == "ablate":
            p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p = sub.add_parser("report", help="export front, HV curve and reconstruction CSVs")
    p.add_argument("run_dirs", nargs="+")
    return parser


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        status = harness.cmd_report(args.run_dirs)
        failed = [d for d, s in status.items() if not s["ok"]]
        if failed:
            raise harness.RunError(json.dumps({d: status[d]["error"] for d in failed}))
        return status
    cfg = _config(args)
    if args.command == "gen-data":
        return {"dataset": str(harness.cmd_gen_data(cfg))}
    if args.command == "train":
        hist = harness.cmd_train(cfg)
        return {"flow_epochs": len(hist["flow_train_loss"]), "timings": hist["timings"]}
    if args.command == "optimize":
        result = harness.cmd_optimize(cfg, train_dir=args.train_dir)
        return {k: result[k] for k in ("config_hash", "hv", "offline_best_hv", "diversity", "n_candidates")}
    if args.command == "ablate":
        return {"table": harness.cmd_ablate(replace(cfg, variant="full"), args.seeds)}
    raise AssertionError(args.command)


def main(argv=None) -> int:
    try:
        out = run(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(out, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
