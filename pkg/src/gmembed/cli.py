"""Command-line surface: train, embed, eval, subspace, summarize, retrieve,
and gradcheck.

Configuration is a flat ``key = value`` text file (``#`` comments allowed);
command-line flags and ``--set key=value`` override file values, unknown keys
are fatal, and the fully resolved config is echoed into every report. Reports
are JSON with sorted keys; everything outside the "timing" block is
deterministic for a fixed config and seed.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import gradcheck as gradcheck_mod
from .clustering import gmm_em, hard_assign, kmeans, medoid, top_k_near_medoid
from .data import (
    Dataset,
    EmbeddingTable,
    apply_standardizer,
    fit_standardizer,
    load_csv_dataset,
    save_embeddings,
)
from .encoder import forward, load_checkpoint, save_checkpoint
from .exceptions import ContractError, DataError
from .gaussian_manifold import ClassGaussians
from .metrics import classification_report, gaussian_classify, knn_classify, nmi, retrieval_curve
from .numerics import RNG_ALGORITHM, seeded_rng
from .subspace import SubspaceConfig, train_subspace
from .trainer import PRESETS, TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_list(text):
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("expected a comma-separated integer list")
    return tuple(int(p) for p in parts)


def _parse_optional_int(text):
    lowered = str(text).strip().lower()
    if lowered in ("", "auto", "none"):
        return None
    return int(text)


def _parse_choice(options):
    def parse(text):
        value = str(text).strip()
        if value not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return value

    return parse


# key -> (parser, default); the single source of truth for RunConfig
CONFIG_SCHEMA = {
    "seed": (int, 0),
    "loss": (_parse_choice(("sgm", "triplet")), "sgm"),
    "preset": (_parse_choice(("", "paper-meth", "paper-exp")), ""),
    "samples_per_class": (int, 30),
    "n_updates": (int, 1000),
    "learning_rate": (float, 1e-4),
    "reg_weight": (float, 0.01),
    "sigma": (float, 0.5),
    "triplet_count": (int, 128),
    "margin": (float, 0.2),
    "hidden": (_parse_int_list, (64,)),
    "embed_dim": (int, 64),
    "activation": (_parse_choice(("relu", "tanh")), "relu"),
    "standardize": (_parse_bool, True),
    "max_level": (int, 5),
    "min_members": (_parse_optional_int, None),
    "warm_start": (_parse_bool, True),
    "em_restarts": (int, 1),
    "kmeans_restarts": (int, 1),
    "eval_ks": (_parse_int_list, (1, 2, 4, 8, 16, 32)),
    "knn_k": (int, 11),
    "mode": (_parse_choice(("global", "per-class")), "global"),
    "n_groups": (int, 40),
    "groups_per_class": (int, 5),
    "top_k": (int, 16),
    "retrieve_k": (int, 5),
}


class UsageError(Exception):
    pass


def parse_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment; unknown keys are fatal."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(file_values: dict, overrides: dict) -> dict:
    """Schema defaults <- preset <- config file <- overrides, typed throughout.

    A preset is a named default bundle; values given explicitly (file or
    flags) always win over it.
    """
    resolved = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    explicit = set()
    for source in (file_values, overrides):
        for key, value in source.items():
            if key not in CONFIG_SCHEMA:
                raise UsageError(f"unknown config key {key!r}")
            if value is None:
                continue
            parser, _ = CONFIG_SCHEMA[key]
            if isinstance(value, str):
                try:
                    value = parser(value)
                except ValueError as exc:
                    raise UsageError(f"config key {key!r}: {exc}") from exc
            resolved[key] = value
            explicit.add(key)
    if resolved["preset"]:
        for key, value in PRESETS[resolved["preset"]].items():
            if key not in explicit:
                resolved[key] = value
    return resolved


def _config_echo(config: dict) -> dict:
    echo = {}
    for key, value in sorted(config.items()):
        echo[key] = list(value) if isinstance(value, tuple) else value
    return echo


def _train_config(config: dict) -> TrainConfig:
    return TrainConfig(
        loss=config["loss"],
        samples_per_class=config["samples_per_class"],
        n_updates=config["n_updates"],
        learning_rate=config["learning_rate"],
        reg_weight=config["reg_weight"],
        sigma=config["sigma"],
        triplet_count=config["triplet_count"],
        margin=config["margin"],
        hidden=config["hidden"],
        embed_dim=config["embed_dim"],
        activation=config["activation"],
        seed=config["seed"],
        preset=config["preset"],
    )


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_report(path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _write_csv(path, header: str, rows) -> None:
    text = header + "\n" + "".join(f"{a},{b}\n" for a, b in rows)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _load_dataset(path) -> Dataset:
    if not path:
        raise UsageError("--dataset is required")
    return load_csv_dataset(path)


def _standardized(dataset: Dataset, config: dict):
    """(preprocessed X, stats dict or None) for training-time standardization."""
    if not config["standardize"]:
        return dataset, None
    mean, scale = fit_standardizer(dataset.X)
    X = apply_standardizer(dataset.X, mean, scale)
    stats = {"mean": mean.tolist(), "scale": scale.tolist()}
    return Dataset(X, dataset.labels, dataset.n_classes, dataset.class_names), stats


def _embed_with_checkpoint(checkpoint_path, dataset: Dataset):
    params, extra = load_checkpoint(checkpoint_path)
    if dataset.n_features != params.spec.input_dim:
        raise ContractError(
            f"dataset has {dataset.n_features} features but checkpoint "
            f"{os.path.basename(str(checkpoint_path))} expects {params.spec.input_dim}"
        )
    X = dataset.X
    pre = extra.get("standardize")
    if pre:
        X = apply_standardizer(X, np.array(pre["mean"]), np.array(pre["scale"]))
    Z, _ = forward(params, X)
    return Z, params, extra


def _base_report(command: str, config: dict, started: float) -> dict:
    return {
        "command": command,
        "config": _config_echo(config),
        "rng_algorithm": RNG_ALGORITHM,
        "timing": {"wall_time_s": time.perf_counter() - started},
    }


def cmd_train(args, config: dict) -> int:
    started = time.perf_counter()
    dataset = _load_dataset(args.dataset)
    train_set, stats = _standardized(dataset, config)
    tc = _train_config(config)
    params, report = train(train_set, tc, seeded_rng(tc.seed))
    os.makedirs(args.out, exist_ok=True)
    extra = {"loss": tc.loss, "seed": tc.seed}
    if stats:
        extra["standardize"] = stats
    payload = _base_report("train", config, started)
    payload.update(
        {
            "loss_kind": tc.loss,
            "preset": tc.preset,
            "seed": tc.seed,
            "loss_trace": report.loss_trace,
            "final_loss": report.final_loss,
            "files": {"checkpoint": "checkpoint.json"},
        }
    )
    save_checkpoint(params, os.path.join(args.out, "checkpoint.json"), extra=extra)
    _write_report(os.path.join(args.out, "train_report.json"), payload)
    return EXIT_OK


def cmd_embed(args, config: dict) -> int:
    dataset = _load_dataset(args.dataset)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    Z, _params, _extra = _embed_with_checkpoint(args.checkpoint[0], dataset)
    table = EmbeddingTable(
        ids=np.arange(dataset.n_samples),
        Z=Z,
        checkpoint_id=os.path.basename(args.checkpoint[0]),
    )
    os.makedirs(args.out, exist_ok=True)
    save_embeddings(table, os.path.join(args.out, "embeddings.csv"))
    return EXIT_OK


def _eval_one(checkpoint_path, test_set: Dataset, train_set, config: dict, rng) -> dict:
    """One model's metrics: nmi (k-means with K = class count), the retrieval
    curve, and (with a training set) KNN accuracy/precision/recall/f1 plus the
    posterior classifier, with the fitted class Gaussians echoed for audit."""
    Z_test, params, extra = _embed_with_checkpoint(checkpoint_path, test_set)
    c = test_set.n_classes
    for k in config["eval_ks"]:
        if k >= test_set.n_samples:
            raise ContractError(
                f"eval K={k} must be smaller than the test sample count {test_set.n_samples}"
            )
    km = kmeans(Z_test, c, rng.substream(0), restarts=config["kmeans_restarts"])
    curve = retrieval_curve(Z_test, test_set.labels, config["eval_ks"])
    section = {
        "checkpoint": os.path.basename(checkpoint_path),
        "loss_kind": extra.get("loss", ""),
        "kmeans_k": c,
        "kmeans_inertia": km.inertia,
        "nmi": nmi(km.assignments, test_set.labels),
        "recall_at_k": curve.to_dict()["recall_at_k"],
        "acc_at_k": curve.to_dict()["acc_at_k"],
    }
    if train_set is not None:
        Z_train, _, _ = _embed_with_checkpoint(checkpoint_path, train_set)
        preds_knn = knn_classify(Z_train, train_set.labels, Z_test, config["knn_k"])
        knn_report = classification_report(preds_knn, test_set.labels, c)
        g = ClassGaussians.from_embeddings(Z_train, train_set.labels, c, config["sigma"])
        gauss_report = classification_report(
            gaussian_classify(Z_test, g), test_set.labels, c
        )
        section.update(
            {
                "knn_k": config["knn_k"],
                "accuracy": knn_report.accuracy,
                "precision": knn_report.precision,
                "recall": knn_report.recall,
                "f1": knn_report.f1,
                "knn": knn_report.to_dict(),
                "gaussian": gauss_report.to_dict(),
                "class_gaussians": g.to_dict(),
            }
        )
    return section


def cmd_eval(args, config: dict) -> int:
    started = time.perf_counter()
    test_set = _load_dataset(args.dataset)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required (repeat it to compare models)")
    train_set = load_csv_dataset(args.train_dataset) if args.train_dataset else None
    rng = seeded_rng(config["seed"])
    models = {}
    for i, ckpt in enumerate(args.checkpoint):
        name = os.path.basename(ckpt)
        if name in models:
            name = f"{name}#{i}"
        models[name] = _eval_one(ckpt, test_set, train_set, config, rng.substream(i))
    payload = _base_report("eval", config, started)
    payload.update({"seed": config["seed"], "query_excluded": True, "models": models})
    os.makedirs(args.out, exist_ok=True)
    _write_report(os.path.join(args.out, "metrics_report.json"), payload)
    return EXIT_OK


def cmd_subspace(args, config: dict) -> int:
    started = time.perf_counter()
    dataset = _load_dataset(args.dataset)
    train_ds, stats = _standardized(dataset, config)
    sc = SubspaceConfig(
        train=_train_config(config),
        max_level=config["max_level"],
        min_members=config["min_members"],
        warm_start=config["warm_start"],
        em_restarts=config["em_restarts"],
    )
    params, sublabels, lineage = train_subspace(train_ds, sc, seeded_rng(config["seed"]))
    os.makedirs(args.out, exist_ok=True)
    extra = {"loss": "sgm", "seed": config["seed"]}
    if stats:
        extra["standardize"] = stats
    payload = _base_report("subspace", config, started)
    payload.update(
        {
            "seed": config["seed"],
            "subspace_config": sc.to_dict(),
            "n_subclasses": int(sublabels.max()) + 1,
            "levels": lineage.levels(),
            "files": {
                "checkpoint": "checkpoint.json",
                "lineage": "lineage.json",
                "sublabels": "sublabels.csv",
            },
        }
    )
    save_checkpoint(params, os.path.join(args.out, "checkpoint.json"), extra=extra)
    _write_report(os.path.join(args.out, "lineage.json"), {"lineage": lineage.to_records()})
    _write_csv(
        os.path.join(args.out, "sublabels.csv"),
        "sample_index,subclass_id",
        list(enumerate(int(s) for s in sublabels)),
    )
    _write_report(os.path.join(args.out, "subspace_report.json"), payload)
    return EXIT_OK


def cmd_summarize(args, config: dict) -> int:
    started = time.perf_counter()
    dataset = _load_dataset(args.dataset)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    Z, _params, _extra = _embed_with_checkpoint(args.checkpoint[0], dataset)
    rng = seeded_rng(config["seed"])
    if config["mode"] == "global":
        k = min(config["n_groups"], dataset.n_samples)
        model = gmm_em(Z, k, rng.substream(0), restarts=config["em_restarts"])
        assignments = hard_assign(model)
    else:
        assignments = np.empty(dataset.n_samples, dtype=np.int64)
        offset = 0
        for cls in range(dataset.n_classes):
            members = np.flatnonzero(dataset.labels == cls)
            if members.size == 0:
                raise ContractError(f"class {cls} has no members to summarize")
            k = min(config["groups_per_class"], members.size)
            model = gmm_em(Z[members], k, rng.substream(1, cls), restarts=config["em_restarts"])
            assignments[members] = hard_assign(model) + offset
            offset += k
    groups = []
    for gid in np.unique(assignments):
        members = np.flatnonzero(assignments == gid)
        med = int(members[medoid(Z[members])])
        top = top_k_near_medoid(Z, assignments, int(gid), config["top_k"])
        groups.append(
            {
                "group_id": int(gid),
                "size": int(members.size),
                "medoid": med,
                "top_k": [int(i) for i in top],
            }
        )
    payload = _base_report("summarize", config, started)
    payload.update(
        {
            "seed": config["seed"],
            "mode": config["mode"],
            "n_groups": len(groups),
            "groups": groups,
            "files": {"assignments": "assignments.csv"},
        }
    )
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "assignments.csv"),
        "sample_index,group_id",
        list(enumerate(int(a) for a in assignments)),
    )
    _write_report(os.path.join(args.out, "cluster_report.json"), payload)
    return EXIT_OK


def cmd_retrieve(args, config: dict) -> int:
    started = time.perf_counter()
    dataset = _load_dataset(args.dataset)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    if not args.query_ids:
        raise UsageError("--query-ids is required (comma-separated sample indices)")
    k = config["retrieve_k"]
    if k < 1:
        raise UsageError(f"retrieve_k must be >= 1, got {k}")
    try:
        query_ids = _parse_int_list(args.query_ids)
    except ValueError as exc:
        raise UsageError(f"--query-ids: {exc}") from exc
    for q in query_ids:
        if q < 0 or q >= dataset.n_samples:
            raise DataError(f"query id {q} out of range for {dataset.n_samples} samples")
    if k >= dataset.n_samples:
        raise DataError(f"retrieve_k={k} needs more than {dataset.n_samples} samples")
    Z, _params, _extra = _embed_with_checkpoint(args.checkpoint[0], dataset)
    queries = []
    for q in query_ids:
        dist = np.linalg.norm(Z - Z[q], axis=1)
        dist[q] = np.inf  # the query never retrieves itself
        order = np.argsort(dist, kind="stable")[:k]
        neighbors = [
            {
                "id": int(i),
                "distance": float(dist[i]),
                "label": int(dataset.labels[i]),
            }
            for i in order
        ]
        queries.append({"query_id": int(q), "label": int(dataset.labels[q]), "neighbors": neighbors})
        line = " ".join(f"{n['id']}:{n['distance']:.6f}" for n in neighbors)
        print(f"query {q} -> {line}")
    payload = _base_report("retrieve", config, started)
    payload.update({"seed": config["seed"], "k": k, "queries": queries})
    os.makedirs(args.out, exist_ok=True)
    _write_report(os.path.join(args.out, "retrieval.json"), payload)
    return EXIT_OK


def cmd_gradcheck(args, config: dict) -> int:
    started = time.perf_counter()
    errors = gradcheck_mod.run_all(config["seed"], corrupt=args.corrupt)
    ok = all(err < gradcheck_mod.DEFAULT_THRESHOLD for err in errors.values())
    for name, err in sorted(errors.items()):
        status = "ok" if err < gradcheck_mod.DEFAULT_THRESHOLD else "FAIL"
        print(f"{name}: max relative error {err:.3e} [{status}]")
    payload = _base_report("gradcheck", config, started)
    payload.update(
        {
            "seed": config["seed"],
            "threshold": gradcheck_mod.DEFAULT_THRESHOLD,
            "max_relative_errors": errors,
            "passed": ok,
        }
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_report(os.path.join(args.out, "gradcheck_report.json"), payload)
    return EXIT_OK if ok else EXIT_NUMERICAL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> _Parser:
    parser = _Parser(prog="gmembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, dataset=True, checkpoint=False, out=True):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key")
        if dataset:
            p.add_argument("--dataset", default=None, help="dataset CSV path")
        if checkpoint:
            p.add_argument("--checkpoint", action="append", default=[],
                           help="encoder checkpoint (repeatable where it makes sense)")
        if out:
            p.add_argument("--out", default=".", help="output directory")

    p_train = sub.add_parser("train", help="train an embedding (structured or triplet loss)")
    add_common(p_train)
    p_train.add_argument("--loss", choices=("sgm", "triplet"), default=None)
    p_train.add_argument("--preset", choices=("paper-meth", "paper-exp"), default=None)
    p_train.set_defaults(func=cmd_train)

    p_embed = sub.add_parser("embed", help="embed a dataset with a trained checkpoint")
    add_common(p_embed, checkpoint=True)
    p_embed.set_defaults(func=cmd_embed)

    p_eval = sub.add_parser("eval", help="clustering/retrieval/classification metrics")
    add_common(p_eval, checkpoint=True)
    p_eval.add_argument("--train-dataset", default=None,
                        help="training CSV for the KNN/Gaussian classification sections")
    p_eval.set_defaults(func=cmd_eval)

    p_sub = sub.add_parser("subspace", help="discover sub-classes via the level loop")
    add_common(p_sub)
    p_sub.set_defaults(func=cmd_subspace)

    p_sum = sub.add_parser("summarize", help="cluster embeddings into groups with medoids/top-k")
    add_common(p_sum, checkpoint=True)
    p_sum.add_argument("--mode", choices=("global", "per-class"), default=None)
    p_sum.set_defaults(func=cmd_summarize)

    p_ret = sub.add_parser("retrieve", help="nearest neighbors for query sample ids")
    add_common(p_ret, checkpoint=True)
    p_ret.add_argument("--query-ids", default=None, help="comma-separated sample indices")
    p_ret.add_argument("--k", type=int, default=None, help="neighbors per query")
    p_ret.set_defaults(func=cmd_retrieve)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    add_common(p_grad, dataset=False, out=False)
    p_grad.add_argument("--out", default=None, help="optional report directory")
    p_grad.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p_grad.set_defaults(func=cmd_gradcheck)
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "loss", None) is not None:
        overrides["loss"] = args.loss
    if getattr(args, "preset", None) is not None:
        overrides["preset"] = args.preset
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "k", None) is not None:
        overrides["retrieve_k"] = args.k
    return overrides


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        file_values = parse_config_file(args.config) if args.config else {}
        config = resolve_config(file_values, _collect_overrides(args))
        return args.func(args, config)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"gmembed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ContractError) as exc:
        print(f"gmembed: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
