"""Synthetic experiments: block-model networks, network-effect responses,
noise calibrated to a target signal fraction, outlier injection, and a
replicated benchmark harness.

Responses follow one of two network-effect mechanisms on top of a
covariate function ``f`` (linear, polynomial, or a sum of indicator
interactions): an additive per-block shift, or an autocorrelation model
where each response mixes in its neighbors' responses.  Noise variance is
set from the empirical variance of ``f`` so that ``pve`` is the fraction
of (non-network) signal variance.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Network
from .exceptions import InputError, NumericalError
from .forest import ForestParams, fit_forest, forest_predict
from .influence import sample_influence
from .interpret import (
    mdi_plus_report,
    permutation_importance_report,
    r_squared,
)
from .model import NerfPlusConfig, NerfPlusModel, eval_blocks_for_nodes, fit, predict
from .solver import PenaltyGrid

SIM_STREAM = 3  # RNG namespace for replicate substreams

KNOWN_METHODS = ("nerfplus", "rfplus", "rnc", "rf", "linear")
SIGNAL_FEATURES = {"linear": (0, 1), "polynomial": (0, 1, 2, 3, 4, 5), "lss": (0, 1, 2, 3, 4, 5)}


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    p: int = 20
    blocks: int = 3
    p_in: float = 0.2
    p_out: float = 0.02
    effect_model: str = "autocorrelation"  # or "blockwise"
    effect_strengths: tuple[float, ...] = (0.5,)
    functional_form: str = "lss"
    pve: float = 0.4
    train_fraction: float = 0.8
    n_replicates: int = 20
    outlier_kappas: tuple[float, ...] = ()
    methods: tuple[str, ...] = ("nerfplus", "rfplus")
    compute_importance: bool = False
    n_permutations: int = 50
    compute_influence: bool = False
    seed: int = 0
    model: NerfPlusConfig = field(
        default_factory=lambda: NerfPlusConfig(n_trees=100, embedding_dim=2)
    )

    def __post_init__(self):
        if not (0 < self.pve < 1):
            raise InputError("pve must be in (0, 1)")
        if not (0 < self.train_fraction < 1):
            raise InputError("train_fraction must be in (0, 1)")
        if not (0 <= self.p_in <= 1 and 0 <= self.p_out <= 1):
            raise InputError("edge probabilities must be in [0, 1]")
        if self.effect_model not in ("blockwise", "autocorrelation"):
            raise InputError(f"unknown effect model {self.effect_model!r}")
        if self.functional_form not in SIGNAL_FEATURES:
            raise InputError(f"unknown functional form {self.functional_form!r}")
        if self.effect_model == "autocorrelation":
            for w in self.effect_strengths:
                if not (0 <= w < 1):
                    raise InputError("autocorrelation strength must be in [0, 1)")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise InputError(f"unknown method {m!r}; choose from {KNOWN_METHODS}")
        if self.n_replicates < 1:
            raise InputError("n_replicates must be >= 1")

    def to_json(self) -> dict:
        strength_key = "omega" if self.effect_model == "autocorrelation" else "eta"
        doc = {
            "n": self.n,
            "p": self.p,
            "blocks": self.blocks,
            "p_in": self.p_in,
            "p_out": self.p_out,
            "effect_model": {"kind": self.effect_model, strength_key: list(self.effect_strengths)},
            "functional_form": self.functional_form,
            "pve": self.pve,
            "train_fraction": self.train_fraction,
            "n_replicates": self.n_replicates,
            "methods": list(self.methods),
            "compute_importance": self.compute_importance,
            "n_permutations": self.n_permutations,
            "compute_influence": self.compute_influence,
            "seed": self.seed,
            "model": self.model.to_json(),
        }
        if self.outlier_kappas:
            doc["outlier"] = {"kappa": list(self.outlier_kappas)}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SimConfig":
        effect = doc.get("effect_model", {"kind": "autocorrelation", "omega": [0.5]})
        kind = effect["kind"]
        raw = effect.get("omega" if kind == "autocorrelation" else "eta", 0.5)
        strengths = tuple(raw) if isinstance(raw, (list, tuple)) else (float(raw),)
        outlier = doc.get("outlier") or {}
        raw_kappa = outlier.get("kappa", [])
        kappas = tuple(raw_kappa) if isinstance(raw_kappa, (list, tuple)) else (float(raw_kappa),)
        model_doc = NerfPlusConfig(n_trees=100, embedding_dim=2).to_json()
        model_doc.update(doc.get("model", {}))
        return cls(
            n=int(doc.get("n", 300)),
            p=int(doc.get("p", 20)),
            blocks=int(doc.get("blocks", 3)),
            p_in=float(doc.get("p_in", 0.2)),
            p_out=float(doc.get("p_out", 0.02)),
            effect_model=kind,
            effect_strengths=strengths,
            functional_form=doc.get("functional_form", "lss"),
            pve=float(doc.get("pve", 0.4)),
            train_fraction=float(doc.get("train_fraction", 0.8)),
            n_replicates=int(doc.get("n_replicates", 20)),
            outlier_kappas=kappas,
            methods=tuple(doc.get("methods", ["nerfplus", "rfplus"])),
            compute_importance=bool(doc.get("compute_importance", False)),
            n_permutations=int(doc.get("n_permutations", 50)),
            compute_influence=bool(doc.get("compute_influence", False)),
            seed=int(doc.get("seed", 0)),
            model=NerfPlusConfig.from_json(model_doc),
        )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def block_labels(n: int, blocks: int) -> np.ndarray:
    """Equal-size block memberships, remainder assigned to the last block."""
    size = n // blocks
    labels = np.repeat(np.arange(blocks), size)
    return np.concatenate([labels, np.full(n - len(labels), blocks - 1)])


def gen_sbm(
    n: int,
    blocks: int,
    p_in: float,
    p_out: float,
    rng: np.random.Generator,
    max_retries: int = 100,
) -> Network:
    """Stochastic block model draw, resampled until no node is isolated."""
    labels = block_labels(n, blocks)
    iu, ju = np.triu_indices(n, k=1)
    probs = np.where(labels[iu] == labels[ju], p_in, p_out)
    for _ in range(max_retries):
        mask = rng.random(len(probs)) < probs
        src, dst = iu[mask], ju[mask]
        degrees = np.bincount(src, minlength=n) + np.bincount(dst, minlength=n)
        if np.all(degrees > 0):
            return Network(
                n_nodes=n,
                edges=tuple((int(i), int(j), 1.0) for i, j in zip(src, dst)),
            )
    raise NumericalError(
        f"could not draw a block-model network without isolated nodes in "
        f"{max_retries} tries (p_in={p_in}, p_out={p_out})"
    )


def eval_f(form: str, features: np.ndarray) -> np.ndarray:
    """Covariate signal: linear, polynomial with interactions, or a sum of
    threshold-indicator products (strict inequalities)."""
    x = np.asarray(features, dtype=np.float64)
    if form == "linear":
        if x.shape[1] < 2:
            raise InputError("linear form needs at least 2 covariates")
        return x[:, 0] + x[:, 1]
    if x.shape[1] < 6:
        raise InputError(f"{form} form needs at least 6 covariates")
    if form == "polynomial":
        return (
            x[:, 0]
            + x[:, 0] * x[:, 1]
            + x[:, 2]
            + x[:, 2] * x[:, 3]
            + x[:, 4]
            + x[:, 4] * x[:, 5]
        )
    if form == "lss":
        pos = x > 0
        return (
            (pos[:, 0] & pos[:, 1]).astype(np.float64)
            + (pos[:, 2] & pos[:, 3])
            + (pos[:, 4] & pos[:, 5])
        )
    raise InputError(f"unknown functional form {form!r}")


def calibrate_noise(f_values: np.ndarray, pve: float) -> float:
    """Noise scale making ``pve`` the covariate-signal variance fraction."""
    var = float(np.var(f_values))
    if var <= 0:
        raise InputError("covariate signal is constant; cannot calibrate noise")
    return float(np.sqrt(var * (1.0 - pve) / pve))


def gen_response_blockwise(
    f_values: np.ndarray,
    labels: np.ndarray,
    eta: float,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Additive per-block shifts (-eta, 0, +eta) plus signal plus noise."""
    if len(np.unique(labels)) != 3:
        raise InputError("blockwise effect is defined for exactly 3 blocks")
    shifts = eta * (labels.astype(np.float64) - 1.0)
    noise = sigma * rng.standard_normal(len(f_values))
    return shifts + f_values + noise


def gen_response_autocorr(
    f_values: np.ndarray,
    network: Network,
    omega: float,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Solve ``(I - omega * D^-1 A) y = f + noise`` exactly."""
    if not (0 <= omega < 1):
        raise InputError("autocorrelation strength must be in [0, 1)")
    adjacency = network.adjacency()
    degrees = adjacency.sum(axis=1)
    if np.any(degrees == 0):
        raise InputError("autocorrelation model requires every node to have an edge")
    noise = sigma * rng.standard_normal(len(f_values))
    system = np.eye(network.n_nodes) - omega * (adjacency / degrees[:, None])
    return np.linalg.solve(system, f_values + noise)


def inject_outlier(y: np.ndarray, i_star: int, kappa: float) -> np.ndarray:
    """Shift one response outward by ``kappa`` response standard deviations."""
    out = np.array(y, dtype=np.float64)
    shift = kappa * float(np.std(y))
    out[i_star] += shift if y[i_star] > 0 else -shift
    return out


# ---------------------------------------------------------------------------
# Method fits
# ---------------------------------------------------------------------------


def _method_config(name: str, base: NerfPlusConfig, seed: int) -> NerfPlusConfig:
    cfg = replace(base, seed=seed)
    if name == "nerfplus":
        return cfg
    if name == "rfplus":
        grid = PenaltyGrid(cohesion=(0.0,), linear=cfg.penalty_grid.linear, stump=cfg.penalty_grid.stump)
        return replace(cfg, penalty_grid=grid, embedding_dim=0)
    if name == "rnc":
        return replace(
            cfg,
            n_trees=1,
            max_depth=0,
            trees_to_tune=1,
            restrict_linear_to_split_features=False,
        )
    raise InputError(f"no model configuration for method {name!r}")


def _fit_and_predict(
    name: str,
    features: np.ndarray,
    response: np.ndarray,
    network: Network,
    train: np.ndarray,
    test: np.ndarray,
    base: NerfPlusConfig,
    seed: int,
    n_threads: int = 1,
) -> tuple[np.ndarray, NerfPlusModel | None]:
    """Test predictions for one method; returns the fitted model when it is
    one of the network-aware pipeline configurations."""
    x_train, y_train = features[train], response[train]
    x_test = features[test]
    if name == "rf":
        params = ForestParams(
            n_trees=base.n_trees,
            mtry_fraction=base.mtry_fraction,
            max_depth=base.max_depth,
            min_leaf=base.min_leaf,
        )
        forest = fit_forest(x_train, y_train, params, seed, n_threads=n_threads)
        return forest_predict(forest, x_test), None
    if name == "linear":
        means = x_train.mean(axis=0)
        y_mean = y_train.mean()
        coef, *_ = np.linalg.lstsq(x_train - means, y_train - y_mean, rcond=None)
        return (x_test - means) @ coef + y_mean, None
    dataset = Dataset(
        features=x_train,
        response=y_train,
        column_means=np.zeros(features.shape[1]),
        response_mean=0.0,
        is_centered=False,
    )
    cfg = _method_config(name, base, seed)
    model = fit(dataset, network.subgraph(train), cfg, n_threads=n_threads)
    result = predict(model, x_test, network, train_indices=train, node_ids=test)
    return result.predictions, model


# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    """Per-replicate metric records plus mean/standard-error aggregates."""

    config: SimConfig
    records: list[dict]

    def aggregates(self) -> list[dict]:
        grouped: dict[tuple, list[float]] = {}
        for rec in self.records:
            for metric, value in rec["metrics"].items():
                key = (rec["strength"], rec["kappa"], rec["method"], metric)
                grouped.setdefault(key, []).append(value)
        out = []
        for (strength, kappa, method, metric), values in sorted(
            grouped.items(), key=lambda kv: tuple(str(x) for x in kv[0])
        ):
            arr = np.array(values, dtype=np.float64)
            stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
            out.append(
                {
                    "strength": strength,
                    "kappa": kappa,
                    "method": method,
                    "metric": metric,
                    "mean": float(arr.mean()),
                    "stderr": stderr,
                    "n": len(arr),
                }
            )
        return out

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "records": self.records,
            "aggregates": self.aggregates(),
        }

    def tidy_rows(self) -> list[tuple]:
        rows = []
        for rec in self.records:
            for metric, value in sorted(rec["metrics"].items()):
                rows.append(
                    (
                        rec["strength"],
                        rec["kappa"],
                        rec["replicate"],
                        rec["method"],
                        metric,
                        value,
                    )
                )
        return rows


def _replicate_records(
    config: SimConfig, strength: float, rep: int, n_threads: int = 1
) -> list[dict]:
    rng = np.random.default_rng([config.seed, SIM_STREAM, rep])
    network = gen_sbm(config.n, config.blocks, config.p_in, config.p_out, rng)
    features = rng.standard_normal((config.n, config.p))
    f_values = eval_f(config.functional_form, features)
    sigma = calibrate_noise(f_values, config.pve)
    noise_rng = rng  # responses consume the stream next, identically per strength
    if config.effect_model == "blockwise":
        labels = block_labels(config.n, config.blocks)
        response = gen_response_blockwise(f_values, labels, strength, sigma, noise_rng)
    else:
        response = gen_response_autocorr(f_values, network, strength, sigma, noise_rng)

    n_train = int(round(config.train_fraction * config.n))
    perm = rng.permutation(config.n)
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    i_star = int(train[rng.integers(0, len(train))])
    rep_seed = int(rng.integers(0, 2**31 - 1))

    records = []
    kappas = config.outlier_kappas if config.outlier_kappas else (None,)
    for kappa in kappas:
        y = response if kappa is None else inject_outlier(response, i_star, kappa)
        for method in config.methods:
            preds, model = _fit_and_predict(
                method, features, y, network, train, test, config.model, rep_seed,
                n_threads=n_threads,
            )
            metrics = {
                "test_r2": r_squared(y[test], preds, baseline_mean=float(y[train].mean()))
            }
            if model is not None and config.compute_importance:
                blocks, _ = eval_blocks_for_nodes(
                    model, features[test], network, train, node_ids=test
                )
                perm_report = permutation_importance_report(
                    model, blocks, y[test],
                    n_permutations=config.n_permutations, seed=rep_seed,
                )
                for name, score in zip(perm_report.names, perm_report.scores):
                    metrics[f"permutation_importance:{name}"] = float(score)
                mdi_report = mdi_plus_report(model, blocks, y[test])
                for name, score in zip(mdi_report.names, mdi_report.scores):
                    metrics[f"mdi_plus:{name}"] = float(score)
            if model is not None and config.compute_influence:
                report = sample_influence(model, features[test], network, train, node_ids=test)
                pos = int(np.searchsorted(train, i_star))
                metrics["outlier_rank"] = float(report.ranks[pos])
                metrics["outlier_score"] = float(report.scores[pos])
            records.append(
                {
                    "strength": strength,
                    "kappa": kappa,
                    "replicate": rep,
                    "method": method,
                    "designated_sample": i_star,
                    "metrics": metrics,
                }
            )
    return records


def run_experiment(config: SimConfig, n_threads: int = 1) -> ExperimentReport:
    """Run all replicates of every effect strength; deterministic per seed.

    Replicates share their random substream across strengths and outlier
    magnitudes, so comparisons within a replicate are paired.
    """
    jobs = [(s, r) for s in config.effect_strengths for r in range(config.n_replicates)]

    def run_one(job):
        strength, rep = job
        return _replicate_records(config, strength, rep)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_one, jobs))
    else:
        results = [run_one(job) for job in jobs]
    records = [rec for chunk in results for rec in chunk]
    return ExperimentReport(config=config, records=records)


def write_report(report: ExperimentReport, out_dir: str) -> tuple[str, str]:
    """Write ``report.json`` and tidy ``report.csv`` into a directory."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_json(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as fh:
        fh.write("strength,kappa,replicate,method,metric,value\n")
        for strength, kappa, rep, method, metric, value in report.tidy_rows():
            kappa_txt = "" if kappa is None else repr(float(kappa))
            fh.write(f"{strength!r},{kappa_txt},{rep},{method},{metric},{value!r}\n")
    return json_path, csv_path
