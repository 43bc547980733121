"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 memory budget too small for even the best single path.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import metrics
from .config import load_config
from .errors import BudgetTooSmall, ConfigError, RadarsError
from .evaluator import Surrogate, SurrogateEvaluator, SurrogateSpec, train_child, accuracy_of
from .metrics import CostModelParams, RewardParams
from .nncore import save_checkpoint
from .orchestrator import Radars, best_document, make_evaluator, write_artifacts
from .pool import ResultPool
from .report import (
    BRUTE_HEADER,
    PARETO_HEADER,
    RunReport,
    brute_force,
    brute_force_rows,
    pareto_rows,
    write_csv,
)
from .space import Architecture, SearchSpace

log = logging.getLogger("radars")

EXIT_RUNTIME, EXIT_CONFIG, EXIT_BUDGET = 1, 2, 3


def _threads(requested: int | None) -> int:
    """Worker count: the config value, capped by RADARS_THREADS when set."""
    cap = os.environ.get("RADARS_THREADS")
    if not cap:
        return requested or 1
    try:
        cap_n = max(1, int(cap))
    except ValueError:
        raise ConfigError(f"RADARS_THREADS must be an integer, got {cap!r}") from None
    return min(requested, cap_n) if requested else cap_n


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.pipelined:
        cfg.pipelined = True
    cfg.threads = _threads(cfg.threads)
    search = Radars(cfg)
    search.run()
    out = write_artifacts(args.out_dir, search)
    report = RunReport.from_search(search)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.render())
    return 0


def _cost_from_args(args) -> CostModelParams:
    return CostModelParams(args.eta, args.theta, args.batch, args.bytes_per_value)


def estimate_memory(space: SearchSpace, cost: CostModelParams, p: int) -> dict:
    k = space.max_kernel()
    layers = []
    for l, layer in enumerate(space.layers):
        nw = metrics.layer_weight_count(layer, space.hp_types, k)
        na = metrics.layer_activation_count(layer, space.hp_types, cost.batch)
        layers.append({
            "layer": l, "in_channels": layer.in_channels, "out_channels": layer.out_channels,
            "out_width": layer.out_width, "out_height": layer.out_height,
            "NW": nw, "NA": na, "bytes": cost.bytes_per_value * (cost.eta * nw + cost.theta * na),
        })
    m_sp = metrics.max_single_path_memory(space, cost)
    return {
        "candidates_per_layer": space.candidates_per_layer(),
        "max_kernel": k,
        "layers": layers,
        "full_supernet_bytes": metrics.supernet_memory_full(space, cost),
        "single_path_bytes": m_sp,
        "P": p,
        "pruned_bound_bytes": p * m_sp,
    }


def cmd_estimate_mem(args) -> int:
    space = SearchSpace.load(args.space)
    doc = estimate_memory(space, _cost_from_args(args), args.P)
    if args.json:
        print(json.dumps(doc, indent=2))
        return 0
    print(f"candidates per layer: {doc['candidates_per_layer']}  (max kernel {doc['max_kernel']})")
    print(f"{'layer':>5} {'CI':>6} {'CO':>6} {'WO':>4} {'HO':>4} {'NW':>14} {'NA':>16} {'GB':>10}")
    for r in doc["layers"]:
        print(
            f"{r['layer']:>5} {r['in_channels']:>6} {r['out_channels']:>6} {r['out_width']:>4} "
            f"{r['out_height']:>4} {r['NW']:>14} {r['NA']:>16} {r['bytes'] / 1e9:>10.4f}"
        )
    print(f"full SuperNet:      {doc['full_supernet_bytes'] / 1e9:.4f} GB ({doc['full_supernet_bytes']:.0f} bytes)")
    print(f"single path (M_sp): {doc['single_path_bytes'] / 1e9:.4f} GB ({doc['single_path_bytes']:.0f} bytes)")
    print(f"bound P*M_sp (P={doc['P']}): {doc['pruned_bound_bytes'] / 1e9:.4f} GB ({doc['pruned_bound_bytes']:.0f} bytes)")
    return 0


def cmd_brute_force(args) -> int:
    space = SearchSpace.load(args.space)
    surrogate = Surrogate(space, SurrogateSpec(args.surrogate_seed, args.interaction))
    rp = RewardParams(args.alpha, args.beta, args.gamma)
    scored = brute_force(space, surrogate, rp, args.limit)
    _emit(write_csv(BRUTE_HEADER, brute_force_rows(scored)), args.out)
    return 0


def cmd_report_pareto(args) -> int:
    pools = []
    for path in args.pools:
        try:
            pools.append((Path(path).name, ResultPool.load(path).snapshot()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: cannot parse pool dump ({exc})") from exc
    _emit(write_csv(PARETO_HEADER, pareto_rows(pools)), args.out)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    space = SearchSpace.from_dict(cfg.space_document())
    try:
        arch = Architecture.decode(args.arch)
        space.validate(arch)
    except ValueError as exc:
        raise ConfigError(f"bad architecture {args.arch!r}: {exc}") from exc
    evaluator = make_evaluator(cfg, space)
    rp = cfg.reward.build(cfg.target)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(evaluator, SurrogateEvaluator):
        acc = evaluator.accuracy(arch, full=True, seed=cfg.seed)
    else:
        net = train_child(space, arch, evaluator.dataset, evaluator.cfg, evaluator.cfg.full_epochs, cfg.seed)
        acc = accuracy_of(net, *evaluator.dataset.split("val"))
        save_checkpoint(out / "child.ckpt", *net.state())
    doc = best_document(space, arch, metrics.fom(space, arch, acc, rp))
    (out / "eval.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    def flags(top: bool) -> argparse.ArgumentParser:
        # subcommand copies use SUPPRESS so they never clobber values given before the subcommand
        p = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=dflt(None), help="override the run seed")
        p.add_argument("--out-dir", default=dflt("radars_out"), help="artifact directory")
        p.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
        return p

    common = flags(top=False)
    parser = argparse.ArgumentParser(prog="radars", description=__doc__.splitlines()[0], parents=[flags(top=True)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", parents=[common], help="run the full search")
    p.add_argument("config")
    p.add_argument("--pipelined", action="store_true", help="overlap exploration and exploitation")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("estimate-mem", parents=[common], help="analytical SuperNet memory")
    p.add_argument("space")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--bytes-per-value", type=float, default=4.0)
    p.add_argument("--P", type=int, default=6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_estimate_mem)

    p = sub.add_parser("brute-force", parents=[common], help="rank every architecture with the surrogate")
    p.add_argument("space")
    p.add_argument("--surrogate-seed", type=int, default=0)
    p.add_argument("--interaction", type=float, default=0.0)
    p.add_argument("--limit", type=int, default=100_000)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=1e9)
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_brute_force)

    p = sub.add_parser("report-pareto", parents=[common], help="non-dominated (AOPS, error) points")
    p.add_argument("pools", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report_pareto)

    p = sub.add_parser("eval", parents=[common], help="train and score one architecture")
    p.add_argument("config")
    p.add_argument("--arch", required=True, help='e.g. "1,0,2;3,1,0"')
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetTooSmall as exc:
        print(f"budget too small: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except RadarsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.exception("search failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
