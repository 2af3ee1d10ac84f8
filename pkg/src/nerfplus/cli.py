"""Command-line interface: fit, predict, interpret, influence, simulate.

Exit codes: 0 on success, 2 on input/contract errors, 3 on numerical
failures.  Every command is deterministic given ``--seed`` and independent
of ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import load_dataset, load_network
from .exceptions import InputError, NumericalError
from .influence import sample_influence
from .interpret import (
    local_importance_report,
    mdi_plus_report,
    permutation_importance_report,
)
from .model import (
    NerfPlusConfig,
    decompose_blocks,
    dump_model,
    eval_blocks_for_nodes,
    fit,
    load_model,
    training_eval_blocks,
)
from .simulate import SimConfig, run_experiment, write_report
from .solver import PenaltyGrid


def _positive_threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected comma-separated floats")


def _require_file(path: str) -> str:
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    return path


def _read_train_index(path: str) -> np.ndarray:
    _require_file(path)
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        return np.array([int(v) for v in lines], dtype=np.intp)
    except ValueError:
        raise InputError(f"{path}: train index file must hold one integer per line") from None


def _read_feature_csv(path: str) -> tuple[np.ndarray, tuple[str, ...]]:
    _require_file(path)
    with open(path) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if len(lines) < 2:
        raise InputError(f"{path}: empty or header-only features file")
    names = tuple(c.strip() for c in lines[0].split(","))
    try:
        rows = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    except ValueError:
        raise InputError(f"{path}: non-numeric cell") from None
    matrix = np.array(rows, dtype=np.float64)
    if matrix.shape[1] != len(names):
        raise InputError(f"{path}: header/row width mismatch")
    if not np.all(np.isfinite(matrix)):
        raise InputError(f"{path}: non-finite entries")
    return matrix, names


def _read_response_column(path: str) -> np.ndarray:
    _require_file(path)
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        values = np.array([float(v) for v in lines], dtype=np.float64)
    except ValueError:
        raise InputError(f"{path}: non-numeric response value") from None
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: non-finite response value")
    return values


def _infer_n_nodes(path: str, train_indices: np.ndarray, explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    top = int(train_indices.max()) if len(train_indices) else -1
    _require_file(path)
    with open(path) as fh:
        for raw in fh:
            parts = raw.split()
            if len(parts) >= 2:
                top = max(top, int(parts[0]), int(parts[1]))
    return top + 1


def _combined_inputs(args):
    train_indices = _read_train_index(args.train_index)
    n_nodes = _infer_n_nodes(args.edges, train_indices, args.n_nodes)
    network = load_network(_require_file(args.edges), n_nodes)
    features, _ = _read_feature_csv(args.features)
    return features, network, train_indices


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    dataset = load_dataset(_require_file(args.features), _require_file(args.response))
    network = load_network(_require_file(args.edges), dataset.n_samples)
    default_grid = PenaltyGrid.default()
    grid = PenaltyGrid(
        cohesion=args.cohesion_grid or default_grid.cohesion,
        linear=args.linear_grid or default_grid.linear,
        stump=args.stump_grid or default_grid.stump,
    )
    config = NerfPlusConfig(
        n_trees=args.n_trees,
        mtry_fraction=args.mtry_fraction,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        embedding_dim=args.embedding_dim,
        laplacian_reg=args.laplacian_reg,
        penalty_grid=grid,
        cv_folds=args.cv_folds,
        trees_to_tune=args.trees_to_tune,
        fit_on_oob=args.fit_on_oob,
        restrict_linear_to_split_features=not args.no_restrict_linear,
        seed=args.seed,
    )
    model = fit(dataset, network, config, n_threads=args.threads)
    dump_model(model, args.out)
    specs = {tf.penalty for tf in model.tree_fits}
    print(f"training R^2: {model.training_r_squared():.6f}")
    print(f"selected penalties ({len(specs)} distinct):")
    for spec in sorted(specs, key=lambda s: (s.cohesion, s.linear, s.stump)):
        count = sum(1 for tf in model.tree_fits if tf.penalty == spec)
        print(
            f"  cohesion={spec.cohesion:g} linear={spec.linear:g} "
            f"stump={spec.stump:g} ({count} trees)"
        )
    print(f"model written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(_require_file(args.model))
    features, network, train_indices = _combined_inputs(args)
    mask = np.ones(network.n_nodes, dtype=bool)
    mask[train_indices] = False
    node_ids = np.flatnonzero(mask)
    blocks, node_ids = eval_blocks_for_nodes(model, features, network, train_indices, node_ids)
    dec = decompose_blocks(model, blocks)
    preds = dec.predictions
    with open(args.out, "w") as fh:
        fh.write("node_index,prediction,alpha_part,embedding_part,feature_part\n")
        for k, nid in enumerate(node_ids):
            fh.write(
                f"{int(nid)},{float(preds[k])!r},{float(dec.node_effect_part[k])!r},"
                f"{float(dec.embedding_part[k])!r},{float(dec.feature_parts[k].sum())!r}\n"
            )
    print(f"wrote {len(node_ids)} predictions to {args.out}")
    return 0


def _interpret_blocks(model, args):
    if args.eval == "train":
        response = model.train_response + model.response_mean
        return training_eval_blocks(model), response
    for required in ("features", "response", "edges", "train_index"):
        if getattr(args, required) is None:
            raise InputError(f"--eval test requires --{required.replace('_', '-')}")
    features, network, train_indices = _combined_inputs(args)
    mask = np.ones(network.n_nodes, dtype=bool)
    mask[train_indices] = False
    node_ids = np.flatnonzero(mask)
    blocks, _ = eval_blocks_for_nodes(model, features, network, train_indices, node_ids)
    response = _read_response_column(args.response)
    if len(response) != blocks.n_rows:
        raise InputError(
            f"response has {len(response)} rows but {blocks.n_rows} nodes are evaluated"
        )
    return blocks, response


def cmd_interpret(args) -> int:
    model = load_model(_require_file(args.model))
    blocks, response = _interpret_blocks(model, args)
    if args.mode == "permutation":
        report = permutation_importance_report(
            model, blocks, response,
            n_permutations=args.n_permutations, metric=args.metric, seed=args.seed,
        )
        _write_json(args.out, report.to_json())
    elif args.mode == "mdiplus":
        report = mdi_plus_report(model, blocks, response)
        _write_json(args.out, report.to_json())
    else:  # local
        report = local_importance_report(model, blocks)
        matrix = report.matrix()
        with open(args.out, "w") as fh:
            fh.write(",".join(report.column_names) + "\n")
            for row in matrix:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {args.mode} report to {args.out}")
    return 0


def cmd_influence(args) -> int:
    model = load_model(_require_file(args.model))
    features, network, train_indices = _combined_inputs(args)
    tree_indices = list(range(args.trees)) if args.trees else None
    report = sample_influence(
        model, features, network, train_indices, tree_indices=tree_indices
    )
    with open(args.out, "w") as fh:
        fh.write("sample_index,score,rank\n")
        for i, score, rank in report.to_rows():
            fh.write(f"{i},{score!r},{rank}\n")
    print(f"wrote influence scores for {len(report.scores)} samples to {args.out}")
    return 0


def _apply_overrides(doc: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise InputError(f"bad override {item!r}; expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return doc


def cmd_simulate(args) -> int:
    with open(_require_file(args.config)) as fh:
        doc = json.load(fh)
    doc = _apply_overrides(doc, args.set or [])
    config = SimConfig.from_json(doc)
    report = run_experiment(config, n_threads=args.threads)
    json_path, csv_path = write_report(report, args.out_dir)
    print(f"wrote {json_path} and {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerfplus",
        description="Network-assisted random forest regression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model and write it as JSON")
    p_fit.add_argument("--features", required=True, help="training features CSV (header row)")
    p_fit.add_argument("--response", required=True, help="training response column")
    p_fit.add_argument("--edges", required=True, help="training edge list (src dst [weight])")
    p_fit.add_argument("--out", required=True, help="output model JSON path")
    p_fit.add_argument("--n-trees", type=int, default=500)
    p_fit.add_argument("--mtry-fraction", type=float, default=1.0 / 3.0)
    p_fit.add_argument("--max-depth", type=int, default=None)
    p_fit.add_argument("--min-leaf", type=int, default=5)
    p_fit.add_argument("--embedding-dim", type=int, default=2)
    p_fit.add_argument("--laplacian-reg", type=float, default=0.05)
    p_fit.add_argument("--cv-folds", type=int, default=5)
    p_fit.add_argument("--trees-to-tune", type=int, default=10)
    p_fit.add_argument("--fit-on-oob", action="store_true")
    p_fit.add_argument(
        "--no-restrict-linear",
        action="store_true",
        help="keep every column in the linear block, not only split features",
    )
    p_fit.add_argument("--cohesion-grid", type=_parse_grid, default=None)
    p_fit.add_argument("--linear-grid", type=_parse_grid, default=None)
    p_fit.add_argument("--stump-grid", type=_parse_grid, default=None)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.set_defaults(func=cmd_fit)

    def add_eval_args(p, required: bool):
        p.add_argument("--features", required=required, help="features CSV for evaluated nodes")
        p.add_argument("--edges", required=required, help="combined train+test edge list")
        p.add_argument(
            "--train-index", required=required,
            help="file of training node ids (one per line, model training order)",
        )
        p.add_argument("--n-nodes", type=int, default=None, help="combined node count")

    p_pred = sub.add_parser("predict", help="predict for the non-training nodes")
    p_pred.add_argument("--model", required=True)
    add_eval_args(p_pred, required=True)
    p_pred.add_argument("--out", required=True, help="output predictions CSV")
    p_pred.set_defaults(func=cmd_predict)

    p_int = sub.add_parser("interpret", help="global or local importance reports")
    p_int.add_argument("--model", required=True)
    p_int.add_argument("--mode", choices=("permutation", "mdiplus", "local"), required=True)
    p_int.add_argument("--eval", choices=("test", "train"), default="test")
    add_eval_args(p_int, required=False)
    p_int.add_argument("--response", default=None, help="response column for evaluated nodes")
    p_int.add_argument("--n-permutations", type=int, default=50)
    p_int.add_argument("--metric", choices=("rmse", "r2"), default="rmse")
    p_int.add_argument("--seed", type=int, default=0)
    p_int.add_argument("--out", required=True, help="report path (JSON; CSV for local mode)")
    p_int.set_defaults(func=cmd_interpret)

    p_inf = sub.add_parser("influence", help="leave-one-out influence of training samples")
    p_inf.add_argument("--model", required=True)
    add_eval_args(p_inf, required=True)
    p_inf.add_argument("--trees", type=int, default=None, help="use only the first K trees")
    p_inf.add_argument("--out", required=True, help="output CSV (sample_index,score,rank)")
    p_inf.set_defaults(func=cmd_influence)

    p_sim = sub.add_parser("simulate", help="run a replicated synthetic experiment")
    p_sim.add_argument("--config", required=True, help="experiment config JSON")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument(
        "--set", action="append", default=None, metavar="KEY=VALUE",
        help="override a config entry (dotted keys; JSON-parsed values)",
    )
    p_sim.set_defaults(func=cmd_simulate)

    for p in (p_fit, p_pred, p_int, p_inf, p_sim):
        p.add_argument(
            "--threads", type=_positive_threads, default=os.cpu_count() or 1,
            help="worker threads; results are independent of this",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
