"""Dataset ingestion, model serialization, metrics and the command surface.

Commands: ``train`` (large-spread training to a JSON model), ``verify``
(per-instance robustness over a CSV test set, optionally fanned out across
worker threads), ``spread`` (the ensemble's threshold-spread value),
``oracle-check`` (randomized differential run of the fast verifier against
the brute-force oracle), ``gadget`` (clique/spread-subset cross-check on a
graph file) and ``bench`` (wall-clock scaling of verification time).

Exit codes: 0 success, 1 usage error, 2 training failure, 3 spread
precondition violation, 4 exhaustive-search capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import gadget as gadget_mod
from . import oracle, synth
from .core import (
    AttackerModel,
    CapacityError,
    DecisionTree,
    Ensemble,
    Leaf,
    Node,
    NormOrder,
    Split,
    predict_ensemble,
    spread,
)
from .trainer import Dataset, TrainConfig, train_hierarchical, train_large_spread
from .verifier import NotLargeSpreadError, robust_ensemble

__all__ = [
    "load_csv",
    "stratified_split",
    "accuracy",
    "ensemble_to_dict",
    "ensemble_from_dict",
    "canonical_model_json",
    "save_model",
    "load_model",
    "bundled_dataset_path",
    "InstanceVerdict",
    "RunReport",
    "main",
]

SEED_ENV_VAR = "SPREADVERIFY_SEED"
MODEL_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------


def load_csv(path) -> Dataset:
    """Load a numeric CSV; the last column is the label.

    Labels may be {-1, +1} or {0, 1} (0 maps to -1).  A non-numeric first
    row is treated as a header and skipped.
    """
    with open(path, "r", newline="") as handle:
        raw_rows = [row for row in csv.reader(handle) if row]
    if not raw_rows:
        raise ValueError(f"{path}: empty file")

    def parse_row(row: list[str], index: int) -> list[float]:
        values = []
        for col, cell in enumerate(row):
            try:
                values.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}: row {index}, column {col}: cannot parse {cell.strip()!r}"
                ) from None
        return values

    start = 0
    try:
        parse_row(raw_rows[0], 0)
    except ValueError:
        start = 1  # header row
    if start >= len(raw_rows):
        raise ValueError(f"{path}: no data rows")

    width = len(raw_rows[start])
    if width < 2:
        raise ValueError(f"{path}: rows need at least one feature and a label")
    features, labels = [], []
    for index in range(start, len(raw_rows)):
        row = raw_rows[index]
        if len(row) != width:
            raise ValueError(
                f"{path}: row {index} has {len(row)} columns, expected {width}"
            )
        values = parse_row(row, index)
        raw_label = values[-1]
        if raw_label in (-1.0, 1.0):
            label = int(raw_label)
        elif raw_label == 0.0:
            label = -1
        else:
            raise ValueError(
                f"{path}: row {index}, column {width - 1}: label must be -1, 0 or 1, "
                f"got {raw_label!r}"
            )
        features.append(values[:-1])
        labels.append(label)
    return Dataset(np.asarray(features, dtype=np.float64), np.asarray(labels))


def stratified_split(
    dataset: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Split per class so both parts keep the label proportions within 1.

    Deterministic for a fixed seed; the parts are disjoint and exhaustive.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_class = {
        label: [i for i in range(len(dataset)) if dataset.labels[i] == label]
        for label in (-1, 1)
    }
    for label, indices in by_class.items():
        if not indices:
            raise ValueError(f"stratified split needs instances of class {label:+d}")
    rng = random.Random(seed)
    total_train = round(train_fraction * len(dataset))
    shares = {
        label: train_fraction * len(indices) for label, indices in by_class.items()
    }
    counts = {label: math.floor(share) for label, share in shares.items()}
    leftover = total_train - sum(counts.values())
    for label in sorted(by_class, key=lambda c: (-(shares[c] - counts[c]), c)):
        if leftover <= 0:
            break
        counts[label] += 1
        leftover -= 1
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in sorted(by_class):
        indices = list(by_class[label])
        rng.shuffle(indices)
        take = counts[label]
        train_idx.extend(indices[:take])
        test_idx.extend(indices[take:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def accuracy(ensemble: Ensemble, dataset: Dataset) -> float:
    """Fraction of instances whose majority vote matches the label."""
    if len(dataset) == 0:
        raise ValueError("accuracy over an empty dataset is undefined")
    hits = sum(1 for x, y in dataset.rows() if predict_ensemble(ensemble, x) == y)
    return hits / len(dataset)


def bundled_dataset_path(name: str = "breast_cancer"):
    """Filesystem path of a dataset CSV shipped with the package."""
    return resources.files("spreadverify").joinpath("data", f"{name}.csv")


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.label}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj) -> Node:
    if not isinstance(obj, dict):
        raise ValueError(f"malformed node: {obj!r}")
    if "leaf" in obj:
        return Leaf(int(obj["leaf"]))
    try:
        return Split(
            int(obj["feature"]),
            float(obj["threshold"]),
            _node_from_dict(obj["left"]),
            _node_from_dict(obj["right"]),
        )
    except KeyError as missing:
        raise ValueError(f"malformed node, missing key {missing}") from None


def ensemble_to_dict(ensemble: Ensemble) -> dict:
    return {
        "version": MODEL_SCHEMA_VERSION,
        "d": ensemble.dimensionality,
        "trees": [_node_to_dict(t.root) for t in ensemble.trees],
    }


def ensemble_from_dict(obj: dict) -> Ensemble:
    if obj.get("version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model version: {obj.get('version')!r}")
    trees = tuple(DecisionTree(_node_from_dict(node)) for node in obj["trees"])
    return Ensemble(trees, int(obj["d"]))


def canonical_model_json(ensemble: Ensemble) -> str:
    """Canonical serialized form: sorted keys, no whitespace, full-precision
    shortest round-trip decimals for thresholds."""
    return json.dumps(ensemble_to_dict(ensemble), sort_keys=True, separators=(",", ":"))


def save_model(ensemble: Ensemble, path) -> None:
    with open(path, "w") as handle:
        handle.write(canonical_model_json(ensemble))
        handle.write("\n")


def load_model(path) -> Ensemble:
    with open(path, "r") as handle:
        return ensemble_from_dict(json.load(handle))


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstanceVerdict:
    index: int
    label: int
    predicted: int
    robust: bool
    stable: bool
    min_attack_norm: Optional[float]


@dataclass(frozen=True)
class RunReport:
    """Per-instance verdicts plus timings; aggregates are recomputed from rows."""

    rows: tuple[InstanceVerdict, ...]
    spread_value: float
    timings: dict

    @property
    def accuracy(self) -> float:
        return sum(1 for r in self.rows if r.predicted == r.label) / len(self.rows)

    @property
    def robustness(self) -> float:
        return sum(1 for r in self.rows if r.robust) / len(self.rows)

    def to_dict(self) -> dict:
        return {
            "spread": _json_float(self.spread_value),
            "accuracy": self.accuracy,
            "robustness": self.robustness,
            "timings": self.timings,
            "instances": [
                {
                    "index": r.index,
                    "label": r.label,
                    "predicted": r.predicted,
                    "robust": r.robust,
                    "stable": r.stable,
                    "min_attack_norm": r.min_attack_norm,
                }
                for r in self.rows
            ],
        }


def _json_float(value: float):
    return "inf" if value == math.inf else value


# ---------------------------------------------------------------------------
# Command helpers
# ---------------------------------------------------------------------------


def _parse_norm(text: str) -> NormOrder:
    if text == "inf":
        return math.inf
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"norm must be '0', a positive integer or 'inf', got {text!r}"
        ) from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"norm must be >= 0, got {text!r}")
    return value


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{SEED_ENV_VAR} must be an integer, got {raw!r}"
        ) from None


def _emit(args, human: str, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _cmd_train(args) -> int:
    dataset = load_csv(args.data)
    config = TrainConfig(
        num_trees=args.trees,
        max_depth=args.depth,
        p=args.p,
        k=args.k,
        max_iter=args.max_iter,
        partitions=args.partitions,
        seed=args.seed,
    )
    start = time.perf_counter()
    if config.partitions > 1:
        model = train_hierarchical(dataset, config)
    else:
        model = train_large_spread(dataset, config)
    elapsed = time.perf_counter() - start
    if model is None:
        print(
            f"training failed: could not assemble {config.num_trees} trees "
            f"satisfying the spread condition",
            file=sys.stderr,
        )
        return 2
    save_model(model, args.out)
    train_acc = accuracy(model, dataset)
    psi = spread(model, args.p)
    _emit(
        args,
        (
            f"trained {model.num_trees} trees ({model.node_count} nodes) in {elapsed:.2f}s\n"
            f"training accuracy {train_acc:.4f}\n"
            f"spread {psi!r} (> 2k = {2 * args.k!r})\n"
            f"model written to {args.out}"
        ),
        {
            "trees": model.num_trees,
            "nodes": model.node_count,
            "train_accuracy": train_acc,
            "spread": _json_float(psi),
            "seconds": elapsed,
            "out": str(args.out),
        },
    )
    return 0


def _verify_rows(model, p, k, dataset, jobs) -> list[InstanceVerdict]:
    items = list(dataset.rows())

    def check(item):
        index, (x, y) = item
        verdict = robust_ensemble(model, p, k, x, y)
        return InstanceVerdict(
            index=index,
            label=y,
            predicted=verdict.predicted,
            robust=verdict.robust,
            stable=verdict.stable,
            min_attack_norm=verdict.min_attack_norm,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(check, enumerate(items)))
    return [check(item) for item in enumerate(items)]


def _cmd_verify(args) -> int:
    if args.p == 0:
        raise ValueError("ensemble verification supports p >= 1 or inf, not p = 0")
    attacker = AttackerModel(args.p, args.k)
    timings = {}
    start = time.perf_counter()
    model = load_model(args.model)
    dataset = load_csv(args.data)
    if dataset.dimensionality != model.dimensionality:
        raise ValueError(
            f"data has {dataset.dimensionality} features, model expects "
            f"{model.dimensionality}"
        )
    timings["load"] = time.perf_counter() - start

    start = time.perf_counter()
    psi = spread(model, attacker.p)
    if not psi > 2 * attacker.k:
        raise NotLargeSpreadError(psi, 2 * attacker.k)
    timings["spread_check"] = time.perf_counter() - start

    start = time.perf_counter()
    rows = _verify_rows(model, attacker.p, attacker.k, dataset, args.jobs)
    timings["verify"] = time.perf_counter() - start

    report = RunReport(tuple(rows), psi, timings)
    per_instance = timings["verify"] / len(rows)
    _emit(
        args,
        (
            f"instances {len(rows)}\n"
            f"accuracy {report.accuracy:.6f}\n"
            f"robustness {report.robustness:.6f}\n"
            f"spread {psi!r}\n"
            f"verify time {timings['verify']:.3f}s ({per_instance * 1e3:.3f} ms/instance)"
        ),
        report.to_dict(),
    )
    return 0


def _cmd_spread(args) -> int:
    model = load_model(args.model)
    psi = spread(model, args.p)
    _emit(
        args,
        f"spread {psi!r}",
        {"spread": _json_float(psi), "trees": model.num_trees},
    )
    return 0


def _cmd_oracle_check(args) -> int:
    rng = random.Random(args.seed)
    agree = 0
    mismatches = []
    tree_counts = tuple(m for m in (3, 5, 7) if m <= args.max_trees) or (1,)
    for case in range(args.cases):
        ensemble, p, k = synth.random_large_spread_case(
            rng,
            tree_counts=tree_counts,
            max_depth=args.max_depth,
            max_d=args.max_d,
        )
        if case % 3 == 0:
            x = synth.knife_edge_instance(rng, ensemble.trees, ensemble.dimensionality)
        else:
            x = synth.random_instance(rng, ensemble.dimensionality)
        y = rng.choice((-1, 1))
        fast = robust_ensemble(ensemble, p, k, x, y).robust
        exact, _ = oracle.exact_robust(ensemble, p, k, x, y)
        if fast == exact:
            agree += 1
        else:
            mismatches.append({"case": case, "fast": fast, "exact": exact})
    _emit(
        args,
        f"agreement {agree}/{args.cases}",
        {"agreement": agree, "cases": args.cases, "mismatches": mismatches},
    )
    return 0 if agree == args.cases else 1


def _cmd_gadget(args) -> int:
    with open(args.graph, "r") as handle:
        graph = gadget_mod.parse_graph(handle.read())
    trees, features = gadget_mod.graph_to_ensemble(graph)
    clique = gadget_mod.clique_exists(graph, args.s)
    subset = oracle.exists_large_spread_subset(trees, args.s, 0, 0.0)
    _emit(
        args,
        (
            f"vertices {graph.num_vertices}, edges {len(graph.edges)}, "
            f"features {len(features)}\n"
            f"clique of size {args.s}: {clique}\n"
            f"large-spread subset of size {args.s} (zero budget): {subset}\n"
            f"agreement: {clique == subset}"
        ),
        {
            "vertices": graph.num_vertices,
            "edges": len(graph.edges),
            "features": len(features),
            "s": args.s,
            "clique_exists": clique,
            "large_spread_subset_exists": subset,
            "agreement": clique == subset,
        },
    )
    return 0 if clique == subset else 1


def _time_verification(ensemble, p, k, instances) -> float:
    """Mean seconds per robust_ensemble call, best of three passes."""
    y = 1
    best = math.inf
    for _ in range(3):
        start = time.perf_counter()
        for x in instances:
            robust_ensemble(ensemble, p, k, x, y)
        best = min(best, (time.perf_counter() - start) / len(instances))
    return best


def _cmd_bench(args) -> int:
    rng = random.Random(args.seed)
    k = 1.0
    p = math.inf
    if args.family == "fixed":
        sizes = [args.trees]
    else:
        sizes = [m for m in (5, 11, 23, 47, 101) if m <= args.trees]
        if not sizes:
            sizes = [args.trees]
    rows = []
    for m in sizes:
        ensemble = synth.scaling_ensemble(rng, m, args.depth, args.d, k)
        instances = [
            synth.random_instance(rng, args.d, 0.0, m * 60.0)
            for _ in range(args.instances)
        ]
        seconds = _time_verification(ensemble, p, k, instances)
        rows.append(
            {"trees": m, "nodes": ensemble.node_count, "us_per_instance": seconds * 1e6}
        )
    slope = None
    if len(rows) >= 2:
        xs = [math.log(r["nodes"]) for r in rows]
        ys = [math.log(r["us_per_instance"]) for r in rows]
        mean_x, mean_y = sum(xs) / len(xs), sum(ys) / len(ys)
        denom = sum((x - mean_x) ** 2 for x in xs)
        slope = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys)) / denom
    human_lines = [
        f"{r['trees']:>5} trees {r['nodes']:>8} nodes {r['us_per_instance']:>12.1f} us/instance"
        for r in rows
    ]
    if slope is not None:
        human_lines.append(f"log-log slope vs nodes: {slope:.3f}")
    _emit(args, "\n".join(human_lines), {"rows": rows, "slope": slope})
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="spreadverify", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p_cmd, *, seed=True):
        p_cmd.add_argument("--json", action="store_true", help="machine-readable output")
        if seed:
            p_cmd.add_argument(
                "--seed",
                type=int,
                default=_default_seed(),
                help=f"RNG seed (default: ${SEED_ENV_VAR} or 0)",
            )

    p_train = sub.add_parser("train", help="train a large-spread ensemble")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--trees", type=int, required=True)
    p_train.add_argument("--depth", type=int, required=True)
    p_train.add_argument("--p", type=_parse_norm, required=True)
    p_train.add_argument("--k", type=float, required=True)
    p_train.add_argument("--max-iter", type=int, default=100)
    p_train.add_argument("--partitions", type=int, default=1)
    p_train.add_argument("--out", required=True)
    add_common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_verify = sub.add_parser("verify", help="verify robustness over a test set")
    p_verify.add_argument("--model", required=True)
    p_verify.add_argument("--data", required=True)
    p_verify.add_argument("--p", type=_parse_norm, required=True)
    p_verify.add_argument("--k", type=float, required=True)
    p_verify.add_argument("--jobs", type=int, default=1)
    add_common(p_verify, seed=False)
    p_verify.set_defaults(func=_cmd_verify)

    p_spread = sub.add_parser("spread", help="report the threshold spread")
    p_spread.add_argument("--model", required=True)
    p_spread.add_argument("--p", type=_parse_norm, required=True)
    add_common(p_spread, seed=False)
    p_spread.set_defaults(func=_cmd_spread)

    p_oracle = sub.add_parser(
        "oracle-check", help="differential run: fast verifier vs brute force"
    )
    p_oracle.add_argument("--cases", type=int, default=1000)
    p_oracle.add_argument("--max-trees", type=int, default=7)
    p_oracle.add_argument("--max-depth", type=int, default=3)
    p_oracle.add_argument("--max-d", type=int, default=5)
    add_common(p_oracle)
    p_oracle.set_defaults(func=_cmd_oracle_check)

    p_gadget = sub.add_parser(
        "gadget", help="clique vs large-spread-subset cross-check on a graph"
    )
    p_gadget.add_argument("--graph", required=True)
    p_gadget.add_argument("--s", type=int, required=True)
    add_common(p_gadget, seed=False)
    p_gadget.set_defaults(func=_cmd_gadget)

    p_bench = sub.add_parser("bench", help="verification wall-clock scaling")
    p_bench.add_argument("--family", choices=("scaling", "fixed"), default="scaling")
    p_bench.add_argument("--trees", type=int, default=101)
    p_bench.add_argument("--depth", type=int, default=6)
    p_bench.add_argument("--d", type=int, default=10)
    p_bench.add_argument("--instances", type=int, default=20)
    add_common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        code = exit_request.code
        return code if isinstance(code, int) else 1
    except argparse.ArgumentTypeError as err:  # e.g. malformed seed env var
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except NotLargeSpreadError as err:
        print(
            f"error: not large-spread: spread {err.spread_value!r} "
            f"<= 2k = {err.required_gap!r}",
            file=sys.stderr,
        )
        return 3
    except CapacityError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
