"""Command-line front end.

Subcommands: stats, convert, train, evaluate, sweep, synth. Every command
is deterministic given its config (seeds included); training runs are
resumable per node. Exit codes: 0 success, 2 config error, 3 data error,
4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .config import ExperimentConfig, build_config
from .errors import ConfigError, DataError, InternalError
from .evaluation import (
    REGIME_AVERAGED,
    REGIME_BALANCED,
    count_threshold_edges,
    evaluate,
    evaluate_averaged,
    evaluate_balanced,
)
from .graph import load_dataset, split_dataset
from .opinion import OpinionVariant, PeerPolicy, load_predictors, save_predictors
from .planted import PlantedParams, generate_planted
from .report import write_report, write_sweep, write_train_log
from .trainer import train_all

PREDICTOR_FILE = "predictors.tsv"


def _load_graph(cfg: ExperimentConfig):
    if not cfg.dataset:
        raise ConfigError("--dataset is required")
    if not os.path.exists(cfg.dataset):
        raise ConfigError(f"dataset file not found: {cfg.dataset}")
    kwargs = {}
    if cfg.format == "ratings":
        kwargs["negative_threshold"] = cfg.rating_threshold
    return load_dataset(cfg.dataset, cfg.format, **kwargs)


def _predictor_header(cfg: ExperimentConfig, graph_hash: str) -> dict[str, str]:
    keys = ("variant", "p", "q", "d", "lambda_min", "lambda_max", "lambda_step",
            "solver", "seed", "test_fraction")
    header = {"dataset_hash": graph_hash}
    for key in keys:
        header[key] = str(getattr(cfg, key))
    return header


# -- commands -----------------------------------------------------------------


def cmd_stats(cfg: ExperimentConfig) -> int:
    g = _load_graph(cfg)
    print("nodes\tedges\tpositive\tnegative")
    print(g.stats().as_tsv())
    return 0


def cmd_convert(cfg: ExperimentConfig) -> int:
    g = _load_graph(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "converted_edges.tsv")
    with open(path, "w") as fh:
        fh.write("# signed edge list (dense ids); raw-id mapping below\n")
        for i, raw in enumerate(g.raw_ids):
            fh.write(f"# node\t{i}\t{raw}\n")
        for u, v, s in g.edge_list():
            fh.write(f"{u}\t{v}\t{s:+d}\n")
    print("nodes\tedges\tpositive\tnegative")
    print(g.stats().as_tsv())
    print(f"wrote {path}")
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    g = _load_graph(cfg)
    train_cfg = cfg.to_train_config()
    split = split_dataset(g, cfg.test_fraction, cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    pred_path = os.path.join(cfg.out, PREDICTOR_FILE)
    header = _predictor_header(cfg, g.content_hash())

    existing = {}
    if os.path.exists(pred_path):
        existing, meta = load_predictors(pred_path)
        if meta.get("dataset_hash") != header["dataset_hash"]:
            raise ConfigError(
                f"{pred_path} was trained on a different dataset; "
                "remove it or change --out")
        stale = {k: v for k, v in header.items() if meta.get(k) != v}
        if stale:
            raise ConfigError(
                f"{pred_path} config mismatch on {sorted(stale)}; "
                "remove it or change --out")
        print(f"resuming: {len(existing)} node(s) already trained",
              file=sys.stderr)

    done = [0]

    def progress(_node):
        done[0] += 1
        if done[0] % 500 == 0:
            print(f"trained {done[0]} nodes", file=sys.stderr)

    predictors, logs = train_all(
        g, split, train_cfg, workers=cfg.effective_workers(),
        skip=set(existing), progress=progress)
    predictors.update(existing)
    save_predictors(predictors, pred_path, header=header)
    log_path = write_train_log(logs, cfg.out)
    print(f"trained {len(predictors)} source nodes "
          f"({len(existing)} reused); wrote {pred_path} and {log_path}")
    return 0


def _evaluate_with_predictors(cfg: ExperimentConfig, pred_path: str):
    g = _load_graph(cfg)
    predictors, meta = load_predictors(pred_path)
    if meta.get("dataset_hash") != g.content_hash():
        raise DataError(
            f"{pred_path} does not match the dataset id mapping "
            f"(hash {meta.get('dataset_hash')} vs {g.content_hash()})")
    variant = OpinionVariant.parse(meta["variant"])
    policy = PeerPolicy(variant=variant, p=int(meta["p"]), q=cfg.q)
    split = split_dataset(g, float(meta["test_fraction"]), int(meta["seed"]))
    if cfg.regime == REGIME_AVERAGED:
        return evaluate_averaged(g, predictors, split.test, policy, seed=cfg.seed)
    return evaluate(g, predictors, split.test, policy)


def cmd_evaluate(cfg: ExperimentConfig, pred_path: str | None) -> int:
    if cfg.regime == REGIME_BALANCED:
        g = _load_graph(cfg)
        report = evaluate_balanced(
            g, cfg.to_train_config(), seed=cfg.seed,
            test_fraction=cfg.test_fraction, workers=cfg.effective_workers())
    else:
        pred_path = pred_path or os.path.join(cfg.out, PREDICTOR_FILE)
        if not os.path.exists(pred_path):
            raise ConfigError(f"predictor file not found: {pred_path}")
        report = _evaluate_with_predictors(cfg, pred_path)
    tsv_path, png_path = write_report(report, cfg.out)
    print(report.TSV_HEADER)
    print(report.as_tsv())
    print()
    print(report.summary())
    print(f"\nwrote {tsv_path} and {png_path}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, p_list: list[int], q_list: list[int]) -> int:
    if not p_list or not q_list:
        raise ConfigError("sweep needs non-empty --p-list and --q-list")
    g = _load_graph(cfg)
    split = split_dataset(g, cfg.test_fraction, cfg.seed)
    rows = []
    for p in p_list:
        cfg_p = dataclasses.replace(cfg, p=p)
        train_cfg = cfg_p.to_train_config()
        predictors, _ = train_all(g, split, train_cfg,
                                  workers=cfg.effective_workers())
        for q in q_list:
            policy = dataclasses.replace(train_cfg.policy, q=q)
            report = evaluate(g, predictors, split.test, policy)
            rows.append((p, q, report))
            print(f"p={p} q={q}\t{report.as_tsv()}")
    tsv_path, png_path = write_sweep(rows, cfg.out)
    print(f"wrote {tsv_path} and {png_path}")
    return 0


def cmd_synth(cfg: ExperimentConfig, params: PlantedParams) -> int:
    g, model = generate_planted(params)
    os.makedirs(cfg.out, exist_ok=True)
    data_path = os.path.join(cfg.out, "synthetic_edges.tsv")
    with open(data_path, "w") as fh:
        for u, v, s in g.edge_list():
            fh.write(f"{u}\t{v}\t{s:+d}\n")
    model_path = os.path.join(cfg.out, "synthetic_model.json")
    with open(model_path, "w") as fh:
        json.dump({
            "params": dataclasses.asdict(params),
            "trusted": {str(x): pairs for x, pairs in model.trusted.items()},
            "consensus": model.consensus.tolist(),
            "targets": model.targets.tolist(),
            "flipped": sorted(model.flipped),
        }, fh, indent=1)
    print("nodes\tedges\tpositive\tnegative")
    print(g.stats().as_tsv())
    print(f"wrote {data_path} and {model_path}")
    return 0


def cmd_threshold(cfg: ExperimentConfig) -> int:
    g = _load_graph(cfg)
    count = count_threshold_edges(g, cfg.to_policy())
    print("p\tq\tedges_passing")
    print(f"{cfg.p}\t{cfg.q}\t{count}")
    return 0


# -- argument wiring -------------------------------------------------------------


def _add_shared(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file; flags override it")
    sub.add_argument("--dataset", help="input dataset path")
    sub.add_argument("--format", choices=["edges", "ratings", "wikielec"])
    sub.add_argument("--variant",
                     choices=["simple-adjacent", "standard-adjacent", "standard-pq"])
    sub.add_argument("--p", type=int)
    sub.add_argument("--q", type=int)
    sub.add_argument("--d", type=int)
    sub.add_argument("--lambda-min", dest="lambda_min", type=float)
    sub.add_argument("--lambda-max", dest="lambda_max", type=float)
    sub.add_argument("--lambda-step", dest="lambda_step", type=float)
    sub.add_argument("--solver", choices=["exact", "tabu"])
    sub.add_argument("--tabu-iters", dest="tabu_iters", type=int)
    sub.add_argument("--tabu-time-ms", dest="tabu_time_ms", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--regime", choices=["raw", "averaged", "balanced"])
    sub.add_argument("--workers", type=int)
    sub.add_argument("--out")
    sub.add_argument("--test-fraction", dest="test_fraction", type=float)
    sub.add_argument("--rating-threshold", dest="rating_threshold", type=int)


def _config_from(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items()
                 if k in ExperimentConfig.__dataclass_fields__}
    return build_config(args.config, overrides)


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peersign",
        description="Edge sign prediction from learned trusted peers")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, doc in [
        ("stats", "print node/edge counts and sign percentages"),
        ("convert", "convert ratings or vote logs to a signed edge list"),
        ("train", "train per-node predictors (resumable)"),
        ("evaluate", "evaluate predictors under a regime"),
        ("sweep", "train/evaluate over a (p, q) grid"),
        ("synth", "generate a synthetic dataset with known predictors"),
        ("threshold", "count edges passing the (p, q) gate"),
    ]:
        sub = subs.add_parser(name, help=doc)
        _add_shared(sub)
        if name == "evaluate":
            sub.add_argument("--predictors", help="trained predictor file")
        if name == "sweep":
            sub.add_argument("--p-list", type=_int_list, required=True)
            sub.add_argument("--q-list", type=_int_list, required=True)
        if name == "synth":
            sub.add_argument("--n", type=int, default=200)
            sub.add_argument("--peers-per-node", type=int, default=5)
            sub.add_argument("--anchors", type=int, default=25)
            sub.add_argument("--target-fraction", type=float, default=0.6)
            sub.add_argument("--out-degree", type=int, default=40)
            sub.add_argument("--noise", type=float, default=0.0)
            sub.add_argument("--positive-bias", type=float, default=0.5)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config_from(args)
    if args.command == "stats":
        return cmd_stats(cfg)
    if args.command == "convert":
        return cmd_convert(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.predictors)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.p_list, args.q_list)
    if args.command == "synth":
        params = PlantedParams(
            n=args.n, peers_per_node=args.peers_per_node, anchors=args.anchors,
            target_fraction=args.target_fraction, out_degree=args.out_degree,
            noise=args.noise, positive_bias=args.positive_bias, seed=cfg.seed)
        return cmd_synth(cfg, params)
    if args.command == "threshold":
        return cmd_threshold(cfg)
    raise InternalError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 -- map anything unexpected to 4
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
