"""Command-line front end: generate, derive, stats, embed, train, sweep, ablate.

All artifacts are JSON (CSV for sweep/stats tables) and embed the resolved
configuration and seed list. Verbosity is controlled by the HKTGNN_LOG
environment variable (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import embedding as emb
from . import training as tr
from .supply import GraphError, load_supply_graph, save_supply_graph, supply_graph_to_dict
from .synth import GenConfig, JoinMode, derive_company_graph, generate_supply_graph, \
    stats_table, stats_to_csv

log = logging.getLogger("hktgnn")


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative value, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive value, got {value}")
    return value


def _split(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"split must look like A:B:C, got {text!r}")
    try:
        ratio = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"split must be numeric, got {text!r}")
    if any(r < 0 for r in ratio) or sum(ratio) <= 0:
        raise argparse.ArgumentTypeError(f"split ratio {text!r} is not usable")
    return ratio


def _int_range(text: str) -> tuple[int, int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"range must look like LO:HI, got {text!r}")
    lo, hi = int(parts[0]), int(parts[1])
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"range {text!r} is invalid")
    return lo, hi


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated ints, got {text!r}")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base run seed")
    p.add_argument("--seeds", type=_seed_list, default=None,
                   help="explicit comma-separated seed list")
    p.add_argument("--runs", type=_positive_int, default=None, help="Monte Carlo runs")
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--lr", type=_positive_float, default=None)
    p.add_argument("--k", type=_nonneg_int, default=None, help="completion steps")
    p.add_argument("--lambda", dest="kl_weight", type=_nonneg_float, default=None,
                   help="distillation loss weight")
    p.add_argument("--gamma", dest="dist_weight", type=_nonneg_float, default=None,
                   help="distribution-consistency loss weight")
    p.add_argument("--split", type=_split, default=None, help="train:val:test ratio")
    p.add_argument("--m", dest="rounds", type=_positive_int, default=None,
                   help="message passing rounds")
    p.add_argument("--jobs", type=_positive_int, default=None,
                   help="parallel Monte Carlo workers")
    p.add_argument("--freeze-gee", action="store_true",
                   help="one-shot embedding before training (the default)")
    p.add_argument("--joint-gee", action="store_true",
                   help="train the embedding encoder end to end")
    p.add_argument("--no-centrality", action="store_true",
                   help="ablation: drop centrality weighting")
    p.add_argument("--symmetric-neighbors", action="store_true",
                   help="message passing over symmetrized neighborhoods")
    p.add_argument("--no-late-calibration", action="store_true",
                   help="calibrate provider values on the first completion step only")
    p.add_argument("--partition-conv", action="store_true",
                   help="enable the per-partition linear maps before completion")
    p.add_argument("--freeze-gap", action="store_true",
                   help="compute the passing domain gap once instead of per round")


def _config_from_args(args) -> tr.TrainConfig:
    if args.freeze_gee and args.joint_gee:
        raise ValueError("--freeze-gee and --joint-gee are mutually exclusive")
    cfg = tr.TrainConfig()
    overrides = {
        "seed": args.seed,
        "seeds": args.seeds,
        "n_runs": args.runs,
        "epochs": args.epochs,
        "lr": args.lr,
        "completion_steps": args.k,
        "kl_weight": args.kl_weight,
        "dist_weight": args.dist_weight,
        "split": args.split,
        "rounds": args.rounds,
        "jobs": args.jobs,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.joint_gee:
        cfg = dataclasses.replace(cfg, gee_mode="joint")
    flags = {
        "no_centrality": args.no_centrality,
        "symmetric_neighbors": args.symmetric_neighbors,
        "partition_conv": args.partition_conv,
        "freeze_gap": args.freeze_gap,
    }
    cfg = dataclasses.replace(cfg, **{k: True for k, v in flags.items() if v})
    if args.no_late_calibration:
        cfg = dataclasses.replace(cfg, late_calibration=False)
    cfg.validate()
    return cfg


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    log.info("wrote %s", path)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _load_graph(path: str):
    if not os.path.exists(path):
        raise FileNotFoundError(f"graph file not found: {path}")
    return load_supply_graph(path)


def cmd_generate(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = GenConfig.from_dict(json.load(fh))
    else:
        cfg = GenConfig()
    overrides = {
        "seed": args.seed,
        "n_products": args.products,
        "n_product_edges": args.edges,
        "biased_fraction": args.biased,
        "signal_strength": args.signal,
        "companies_per_product": args.companies,
        "investors_per_company": args.investors,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    graph = generate_supply_graph(cfg)
    save_supply_graph(graph, args.out, config=cfg.to_dict())
    log.info("generated %d nodes, %d edges", len(graph.node_ids), len(graph.edges))
    return 0


def cmd_derive(args) -> int:
    graph = _load_graph(args.graph)
    mode = JoinMode.parse(args.mode)
    company = derive_company_graph(graph, mode, seed=args.seed)
    payload = company.to_dict()
    payload["config"] = {"mode": args.mode, "seed": args.seed, "graph": args.graph}
    _write_json(args.out, payload)
    return 0


def cmd_stats(args) -> int:
    graph = _load_graph(args.graph)
    modes = [JoinMode.parse(m) for m in args.modes.split(",") if m]
    rows = stats_table(graph, modes, seed=args.seed, instances=args.instances)
    _write_text(args.out, stats_to_csv(rows))
    return 0


def cmd_embed(args) -> int:
    graph = _load_graph(args.graph)
    prep = tr.PreparedSupply.build(graph)
    encoder = emb.EncoderParams.init(np.random.default_rng([args.seed, 7]))
    x_embed = emb.encode_batch(prep.batch, encoder).data
    _write_json(args.out, {
        "config": {"seed": args.seed, "graph": args.graph},
        "nodes": graph.product_ids,
        "X_E": x_embed.tolist(),
    })
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    graph = _load_graph(args.graph)
    report = tr.monte_carlo(graph, cfg)
    _write_json(args.out, report.to_dict())
    log.info("f1 %.4f +/- %.4f, auc %.4f +/- %.4f",
             report.f1_mean, report.f1_std, report.auc_mean, report.auc_std)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    graph = _load_graph(args.graph)
    results = tr.sweep(graph, cfg, args.param)
    _write_text(args.out, tr.sweep_to_csv(results))
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    graph = _load_graph(args.graph)
    arms = tr.ablate(graph, cfg)
    payload = {name: report.to_dict() for name, report in arms.items()}
    _write_json(args.out, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hktgnn",
                                     description="supply-chain risk pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic supply graph")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="GenConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--products", type=_nonneg_int, default=None)
    p.add_argument("--edges", type=_nonneg_int, default=None)
    p.add_argument("--biased", type=_unit_float, default=None)
    p.add_argument("--signal", type=_unit_float, default=None)
    p.add_argument("--companies", type=_int_range, default=None, metavar="LO:HI")
    p.add_argument("--investors", type=_int_range, default=None, metavar="LO:HI")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("derive", help="project product links onto companies")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", default="full", help="full | p25 | p50 | p75 | p<pct>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("stats", help="centrality statistics per join mode")
    p.add_argument("--graph", required=True)
    p.add_argument("--modes", default="full,p25,p50,p75")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=_positive_int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("embed", help="write product embedding rows")
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="Monte Carlo training report")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="hyperparameter sweep table")
    p.add_argument("--graph", required=True)
    p.add_argument("--param", required=True, choices=["K", "lambda", "gamma", "split"])
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="paired ablation arms")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("HKTGNN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, GraphError, ValueError, tr.TrainingDiverged) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
