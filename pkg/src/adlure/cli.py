"""Command-line pipeline: dataset generation, training, extension, evaluation.

Every stochastic step is driven by --seed, so reruns with identical flags
produce identical output bytes. Values may also come from a JSON config
file (flat mapping of option names); explicit flags win over the config,
which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .attributes import export_ldif, export_provisioning_script, generate_attributes, records_to_json
from .datasets import generate_dataset, load_dataset, save_dataset, standard_spec
from .errors import AdlureError, MalformedInputError
from .graph import graph_from_json, graph_to_json, parse_sharphound
from .model import DagRnnVAE, ModelConfig
from .model.estimator import write_history_csv

_CONFIG_DEFAULTS = ModelConfig()


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="adlure",
        description="Learn AD graph structure and extend it with honeyuser accounts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    common.add_argument("--config", type=Path, default=None, help="JSON file with option defaults")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    # "Required" options are validated after parsing so that a --config file
    # may supply them as well.
    p_dataset = sub.add_parser("dataset", parents=[common], help="generate a synthetic dataset")
    p_dataset.add_argument("--size", type=int, choices=[15, 50, 150, 500])
    p_dataset.add_argument("--count", type=int, default=2000, help="number of graphs")
    p_dataset.add_argument("--out", type=Path, help="output directory")

    p_train = sub.add_parser("train", parents=[common], help="train the model on a dataset")
    p_train.add_argument("--data", type=Path, help="dataset directory")
    p_train.add_argument("--epochs", type=int, default=_CONFIG_DEFAULTS.epochs)
    p_train.add_argument("--batch-size", type=int, default=_CONFIG_DEFAULTS.batch_size)
    p_train.add_argument("--lr", type=float, default=_CONFIG_DEFAULTS.lr_initial)
    p_train.add_argument("--latent-dim", type=int, default=_CONFIG_DEFAULTS.latent_dim)
    p_train.add_argument("--kl-free-bits", type=float, default=_CONFIG_DEFAULTS.kl_free_bits,
                         help="per-node KL floor in nats; 0 disables the floor")
    p_train.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    p_train.add_argument("--out", type=Path, help="checkpoint file to write")

    p_extend = sub.add_parser("extend", parents=[common], help="place honeyusers on a graph")
    p_extend.add_argument("--model", type=Path, help="trained checkpoint")
    p_extend.add_argument("--graph", type=Path, help="native JSON or collector export")
    p_extend.add_argument("--users", type=int, default=5, help="honeyusers to sample")
    p_extend.add_argument(
        "--latent-source", choices=["prior", "posterior"], default="prior",
        help="where new latent rows are drawn from",
    )
    p_extend.add_argument("--out", type=Path, help="output directory")

    p_eval = sub.add_parser("evaluate", parents=[common], help="run the evaluation suite")
    p_eval.add_argument("--model", type=Path, default=None, help="trained checkpoint")
    p_eval.add_argument("--data", type=Path, default=None, help="dataset directory")
    p_eval.add_argument("--split", choices=["train", "validation", "test"], default="test")
    p_eval.add_argument("--users", type=int, default=5, help="honeyusers per extended graph")
    p_eval.add_argument("--original", type=Path, default=None, help="original graph (pair mode)")
    p_eval.add_argument("--extended", type=Path, default=None, help="extended graph (pair mode)")
    p_eval.add_argument("--pr-csv", type=Path, default=None, help="write PR curve points here")
    p_eval.add_argument("--out", type=Path, help="report JSON file")

    return parser, {
        "dataset": p_dataset,
        "train": p_train,
        "extend": p_extend,
        "evaluate": p_eval,
    }


_REQUIRED = {
    "dataset": ("size", "out"),
    "train": ("data", "out"),
    "extend": ("model", "graph", "out"),
    "evaluate": ("out",),
}


_PATH_OPTIONS = {"out", "data", "model", "graph", "resume", "original", "extended", "pr_csv"}


def _apply_config_file(
    argv: list[str],
    parser: argparse.ArgumentParser,
    subparsers: dict[str, argparse.ArgumentParser],
) -> argparse.Namespace:
    """Parse argv with config-file values slotted between flags and defaults.

    Config values become subparser defaults, so explicit flags still win.
    """
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = Path(argv[i + 1])
        elif token.startswith("--config="):
            config_path = Path(token.split("=", 1)[1])
    if config_path is not None:
        try:
            values = json.loads(config_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config file {config_path}: {exc}")
        if not isinstance(values, dict):
            parser.error(f"config file {config_path} must hold a JSON object")
        coerced = {}
        for key, value in values.items():
            dest = key.replace("-", "_")
            coerced[dest] = Path(value) if dest in _PATH_OPTIONS else value
        for sub in subparsers.values():
            known = {action.dest for action in sub._actions}
            sub.set_defaults(**{k: v for k, v in coerced.items() if k in known})
    return parser.parse_args(argv)


def _check_overwrite(paths: list[Path], force: bool) -> None:
    existing = [p for p in paths if p.exists()]
    if existing and not force:
        raise FileExistsError(
            f"refusing to overwrite {', '.join(str(p) for p in existing)} (use --force)"
        )


def _read_graph_file(path: Path):
    text = path.read_text(encoding="utf-8")
    try:
        return graph_from_json(text)
    except MalformedInputError:
        return parse_sharphound(text)


def cmd_dataset(args: argparse.Namespace) -> int:
    spec = standard_spec(args.size, n_samples=args.count, seed=args.seed)
    dataset = generate_dataset(spec)
    save_dataset(dataset, args.out, force=args.force)
    stats = dataset.stats()
    counts = {
        label: sum(1 for s in dataset.split_labels if s == label)
        for label in ("train", "validation", "test")
    }
    print(
        f"wrote {stats['n_graphs']:.0f} graphs to {args.out} "
        f"(train={counts['train']}, validation={counts['validation']}, test={counts['test']})"
    )
    print(f"mean |V| = {stats['mean_nodes']:.2f}, mean |E| = {stats['mean_edges']:.2f}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data)
    history_path = args.out.with_suffix(".history.csv")
    _check_overwrite([args.out, history_path], args.force)
    if args.resume is not None:
        model = DagRnnVAE.load(args.resume)
        model.set_params(
            epochs=args.epochs, batch_size=args.batch_size, lr_initial=args.lr, seed=args.seed
        )
        model.fit(dataset, resume=True)
    else:
        model = DagRnnVAE(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr_initial=args.lr,
            latent_dim=args.latent_dim,
            kl_free_bits=args.kl_free_bits,
            seed=args.seed,
        )
        model.fit(dataset)
    model.save(args.out)
    write_history_csv(model.history_, history_path)
    if model.history_:
        best = model.best_val_loss_
        print(f"trained {len(model.history_)} epochs; best validation loss {best:.4f}")
    else:
        print("epochs=0: checkpoint holds the initial parameters")
    print(f"checkpoint: {args.out}\nhistory: {history_path}")
    return 0


def cmd_extend(args: argparse.Namespace) -> int:
    if args.users < 1:
        raise UsageError("--users must be >= 1")
    model = DagRnnVAE.load(args.model)
    graph = _read_graph_file(args.graph)
    out = Path(args.out)
    files = {
        "graph": out / "extended_graph.json",
        "ldif": out / "honeyusers.ldif",
        "script": out / "provision_honeyusers.ps1",
        "records": out / "honeyusers.json",
        "report": out / "extension_report.json",
    }
    _check_overwrite(list(files.values()), args.force)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    result = model.extend(graph, n_new=args.users, rng=rng, latent_source=args.latent_source)
    records = generate_attributes(result.graph, result.kept_ids, rng)
    result.records = records

    files["graph"].write_text(graph_to_json(result.graph), encoding="utf-8")
    files["ldif"].write_text(export_ldif(records, result.graph), encoding="utf-8")
    files["script"].write_text(export_provisioning_script(records, result.graph), encoding="utf-8")
    files["records"].write_text(records_to_json(records), encoding="utf-8")
    report = {
        "requested": args.users,
        "kept": list(result.kept_ids),
        "discarded": list(result.discarded_ids),
        "threshold": result.threshold,
        "added_edges": [list(e) for e in result.added_edges],
    }
    files["report"].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"kept {len(result.kept_ids)} of {args.users} honeyusers "
        f"({len(result.discarded_ids)} discarded); artifacts in {out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    pair_mode = args.original is not None or args.extended is not None
    if pair_mode and (args.original is None or args.extended is None):
        raise UsageError("pair mode needs both --original and --extended")
    if not pair_mode and (args.model is None or args.data is None):
        raise UsageError("split mode needs --model and --data")
    _check_overwrite([args.out] + ([args.pr_csv] if args.pr_csv else []), args.force)

    report = {
        "dataset": None,
        "precision": None,
        "recall": None,
        "f1": None,
        "pr_auc": None,
        "evr": None,
        "mecr": None,
        "wasserstein_new": None,
        "wasserstein_all": None,
    }
    pr_samples = None

    if pair_mode:
        original = _read_graph_file(args.original)
        extended = _read_graph_file(args.extended)
        new_nodes = set(extended.node_ids) - set(original.node_ids)
        ext = evaluation.extension_report(original, extended, new_nodes)
        report["dataset"] = "pair"
        for key in ("evr", "mecr", "wasserstein_new", "wasserstein_all"):
            report[key] = ext[key]
        report["n_new"] = ext["n_new"]
    else:
        if args.users < 1:
            raise UsageError("--users must be >= 1")
        model = DagRnnVAE.load(args.model)
        dataset = load_dataset(args.data)
        graphs = dataset.subset(args.split)
        if not graphs:
            raise UsageError(f"split {args.split!r} is empty")
        recon = evaluation.reconstruction_report(model, graphs)
        pr_samples = recon.pop("pr_samples")
        report["dataset"] = str(args.data)
        report["split"] = args.split
        report.update(
            {k: recon[k] for k in ("precision", "recall", "f1", "pr_auc")}
        )
        report["counts"] = recon["counts"]
        report["per_graph_means"] = recon["per_graph_means"]

        gen = _generation_metrics(model, graphs, args.users, args.seed)
        report.update(gen)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.pr_csv is not None:
        _write_pr_csv(args.pr_csv, pr_samples)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _generation_metrics(model: DagRnnVAE, graphs, n_new: int, seed: int) -> dict:
    """Extend every graph and average the extension metrics."""
    seeds = np.random.SeedSequence(seed).spawn(len(graphs))
    evr, mecr, w_new, w_all = [], [], [], []
    skipped = 0
    for graph, child in zip(graphs, seeds):
        result = model.extend(graph, n_new=n_new, rng=np.random.default_rng(child))
        if not result.kept_ids:
            skipped += 1
            continue
        ext = evaluation.extension_report(graph, result.graph, result.kept_ids)
        evr.append(ext["evr"])
        mecr.append(ext["mecr"])
        w_new.append(ext["wasserstein_new"])
        w_all.append(ext["wasserstein_all"])
    if not evr:
        return {"evr": None, "mecr": None, "wasserstein_new": None, "wasserstein_all": None,
                "graphs_extended": 0, "graphs_skipped": skipped}
    return {
        "evr": float(np.mean(evr)),
        "mecr": float(np.mean(mecr)),
        "wasserstein_new": float(np.mean(w_new)),
        "wasserstein_all": float(np.mean(w_all)),
        "graphs_extended": len(evr),
        "graphs_skipped": skipped,
    }


def _write_pr_csv(path: Path, pr_samples) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recall", "precision", "threshold"])
        if pr_samples is None:
            return
        y, s = pr_samples
        precision, recall, thresholds = evaluation.pr_curve_from_samples(y, s)
        # First point is the (0, 1) anchor with no threshold.
        writer.writerow([recall[0], precision[0], ""])
        for r, p, t in zip(recall[1:], precision[1:], thresholds):
            writer.writerow([r, p, t])


class UsageError(Exception):
    """Raised for bad flag combinations detected after parsing."""


_COMMANDS = {
    "dataset": cmd_dataset,
    "train": cmd_train,
    "extend": cmd_extend,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = build_parser()
    args = _apply_config_file(list(sys.argv[1:] if argv is None else argv), parser, subparsers)
    missing = [name for name in _REQUIRED[args.command] if getattr(args, name, None) is None]
    if missing:
        parser.error(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    if args.command == "dataset" and args.count < 1:
        parser.error("--count must be >= 1")
    if getattr(args, "users", 1) < 1:
        parser.error("--users must be >= 1")
    if getattr(args, "epochs", 0) < 0:
        parser.error("--epochs must be >= 0")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (AdlureError, FileExistsError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
