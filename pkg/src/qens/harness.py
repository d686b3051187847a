"""Experiment runner behind the command-line subcommands.

A run directory holds generated datasets, search tables, a results CSV, its
aggregates and serialized models. Every stage is deterministic for a fixed
config and seed; only the timestamp line of ``results.csv`` varies.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import CosineModel, ExperimentConfig, ForestModel, VariationalModel
from .cosine import CosineConfig, config_for, cosine_predict
from .data import (
    BlobConfig,
    Dataset,
    MinMaxScaler,
    PCAProjector,
    load_csv,
    make_blobs,
    preprocess_split,
    save_csv,
    stratified_splits,
)
from .ensemble import EnsembleModel, GridPoint, GridSpec, grid_search, train_bagging, train_ensemble
from .errors import ConfigError, DataError, QensError
from .forest import ForestConfig, fit_forest, randomized_search
from .metrics import evaluate, paired_t_test, welch_t_test
from .seeding import derive_seed
from .simulator import check_qubit_cap
from .variational import num_qubits_for

METRICS = ("accuracy", "f1_weighted", "brier")
CRITERIA = ("accuracy", "f1_weighted")
RESULT_COLUMNS = ("dataset", "model", "config_id", "params", "config_hash", "seed", "split_id",
                  "accuracy", "f1_weighted", "brier", "single_class")
BASELINE = "forest"
MODEL_FORMAT = "qens-model-1"


@dataclass
class DatasetEntry:
    name: str
    data: Dataset
    splits: list
    pca_components: int | None = None

    @property
    def num_features(self) -> int:
        return self.pca_components or self.data.num_features


# datasets


def blob_configs(cfg: ExperimentConfig) -> list:
    spec = cfg.dataset.blobs
    out = []
    for std in spec.cluster_std:
        for p1, p2 in spec.center_pairs():
            i = len(out)
            out.append(BlobConfig(std, p1, p2, spec.n_samples, derive_seed(cfg.seed, i)))
    return out


def _splits_for(cfg: ExperimentConfig, data: Dataset, index: int) -> list:
    return stratified_splits(data.labels, cfg.splits, cfg.test_fraction, derive_seed(cfg.seed, index, 1))


def load_datasets(cfg: ExperimentConfig, base_dir=".") -> list:
    if cfg.dataset.kind == "blobs":
        entries = []
        for i, bc in enumerate(blob_configs(cfg)):
            data = make_blobs(bc)
            entries.append(DatasetEntry(bc.name, data, _splits_for(cfg, data, i)))
        return entries
    spec = cfg.dataset.csv
    path = Path(spec.path)
    if not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    data = load_csv(path)
    if spec.features:
        data = data.select(spec.features)
    if spec.pca_components and spec.pca_components > data.num_features:
        raise ConfigError(f"pca_components={spec.pca_components} exceeds the {data.num_features} input features")
    return [DatasetEntry(path.stem, data, _splits_for(cfg, data, 0), spec.pca_components)]


def split_arrays(cfg: ExperimentConfig, entry: DatasetEntry, split, transforms=False):
    d = entry.data
    return preprocess_split(
        d.features[split.train], d.features[split.test], cfg.dataset.scale_scope,
        d.features, entry.pca_components, return_transforms=transforms,
    )


def _split_record(split) -> dict:
    return {
        "split_id": split.split_id,
        "train": split.train.tolist(),
        "test": split.test.tolist(),
        "folds": {str(k): v.tolist() for k, v in sorted(split.folds.items())},
    }


def gen_blobs(cfg: ExperimentConfig, out) -> list:
    """Write every blob dataset as CSV plus a JSON file of its split indices."""
    out = Path(out) / "datasets"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc.strerror}") from None
    written = []
    for i, bc in enumerate(blob_configs(cfg)):
        data = make_blobs(bc)
        splits = _splits_for(cfg, data, i)
        csv_path = out / f"{bc.name}.csv"
        json_path = out / f"{bc.name}.splits.json"
        try:
            save_csv(data, csv_path)
            payload = {"dataset": bc.name, "blob": asdict(bc), "test_fraction": cfg.test_fraction,
                       "splits": [_split_record(s) for s in splits]}
            json_path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot write under {out}: {exc.strerror}") from None
        written += [csv_path, json_path]
    return written


# validation


def validate_resources(cfg: ExperimentConfig, datasets) -> None:
    """Reject configs that exceed the qubit cap or cannot hold the data, before any run."""
    for entry in datasets:
        F = entry.num_features
        for spec in cfg.models:
            if isinstance(spec, CosineModel):
                for c in spec.configs():
                    c = config_for(spec.kind, c)
                    check_qubit_cap(c.num_qubits, f"{spec.kind} config {c.label}")
                    if F > c.n_feature:
                        raise ConfigError(f"{spec.kind} config {c.label}: n_feature={c.n_feature} "
                                          f"is smaller than the {F} features of {entry.name}")
                    smallest = min(s.train.size for s in entry.splits)
                    if c.n_train > smallest:
                        raise ConfigError(f"{spec.kind} config {c.label}: n_train={c.n_train} exceeds "
                                          f"the {smallest} training rows of {entry.name}")
            elif isinstance(spec, VariationalModel):
                check_qubit_cap(num_qubits_for(F), f"{spec.kind} learner")


# search


def _search_dir(out) -> Path:
    return Path(out) / "search"


def run_search(cfg: ExperimentConfig, out, base_dir=".") -> dict:
    """Per model and split, search hyperparameters on the split's training rows only."""
    datasets = load_datasets(cfg, base_dir)
    validate_resources(cfg, datasets)
    root = _search_dir(out)
    entries = []
    for di, entry in enumerate(datasets):
        (root / entry.name).mkdir(parents=True, exist_ok=True)
        for mi, spec in enumerate(cfg.models):
            if isinstance(spec, CosineModel):
                continue  # nothing to tune
            for split in entry.splits:
                Xtr, _ = split_arrays(cfg, entry, split)
                ytr = entry.data.labels[split.train]
                seed = derive_seed(cfg.seed, di, mi, split.split_id)
                table = root / entry.name / f"{spec.kind}-split{split.split_id}.csv"
                try:
                    if isinstance(spec, VariationalModel):
                        best = _search_variational(spec, Xtr, ytr, seed, cfg.workers, table)
                    else:
                        best = _search_forest(spec, Xtr, ytr, seed, table)
                except QensError as exc:
                    exc.args = (f"[{entry.name} {spec.kind} split {split.split_id}] {exc}",)
                    raise
                entries.append({
                    "dataset": entry.name, "model": spec.kind, "split_id": split.split_id,
                    "train_indices": split.train.tolist(), "best": best,
                    "table": str(table.relative_to(out)),
                })
    manifest = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "entries": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return manifest


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _search_variational(spec: VariationalModel, X, y, seed, workers, table) -> dict:
    grid = GridSpec(spec.learning_rate, spec.batch_size, spec.num_learners, spec.folds)
    results = grid_search(spec.kind, X, y, grid, seed, spec.epochs, spec.invert, workers)
    header = ["rank", "index", "learning_rate", "batch_size", "num_learners",
              "median_accuracy", "mean_accuracy", "fold_accuracies"]
    _write_table(table, header, [[r] + [res.as_row()[k] for k in header[1:]] for r, res in enumerate(results, 1)])
    return asdict(results[0].point)


def _search_forest(spec: ForestModel, X, y, seed, table) -> dict:
    best, results = randomized_search(X, y, spec.n_iter, spec.folds, seed)
    ranked = sorted(range(len(results)), key=lambda i: (-results[i].mean_score, i))
    header = ["rank", "index", "n_estimators", "max_depth", "min_samples_split", "min_samples_leaf",
              "max_features", "seed", "mean_f1_weighted", "fold_f1_weighted"]
    rows = []
    for r, i in enumerate(ranked, 1):
        c = results[i].config
        rows.append([r, i, c.n_estimators, c.max_depth, c.min_samples_split, c.min_samples_leaf, c.max_features,
                     c.seed, results[i].mean_score, ";".join(format(s, ".6g") for s in results[i].fold_scores)])
    _write_table(table, header, rows)
    return asdict(best)


def load_search_manifest(out) -> dict | None:
    path = _search_dir(out) / "manifest.json"
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed search manifest: {exc}") from None


# train / evaluate


@dataclass
class Task:
    dataset: str
    model: str
    config_id: str
    params: dict
    seed: int
    split_id: int
    Xtr: np.ndarray
    ytr: np.ndarray
    Xte: np.ndarray
    yte: np.ndarray
    mode: str
    shots: int
    options: dict
    transforms: tuple

    @property
    def context(self) -> str:
        return f"{self.dataset} {self.model} {self.config_id} split {self.split_id}"


def _params_text(params: dict) -> str:
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


def _config_hash(exp_hash: str, task: Task) -> str:
    payload = json.dumps([exp_hash, task.dataset, task.model, task.params, task.options], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def run_task(task: Task):
    """Train and evaluate one ``(model, config, split)``; returns ``(record, model text or None)``."""
    try:
        model_text = None
        if task.model in ("qcc", "qec", "qecru"):
            cc = CosineConfig(**{k: task.params[k] for k in ("d", "n_train", "n_swap", "n_feature")}, seed=task.seed)
            probs = cosine_predict(task.model, cc, task.Xtr, task.ytr, task.Xte, task.mode, task.shots,
                                   task.options["engine"])
            model_text = cosine_model_text(task.model, config_for(task.model, cc), task.Xtr, task.ytr, task.transforms)
        elif task.model == BASELINE:
            fc = ForestConfig(**task.params)
            probs = fit_forest(task.Xtr, task.ytr, fc).predict_proba(task.Xte)
        else:
            point = GridPoint(**task.params)
            opts = task.options
            if task.model == "bagging" and opts["weighting"] != "uniform":
                model, _ = train_bagging(task.Xtr, task.ytr, point, task.seed, opts["epochs"], opts["invert"],
                                         opts["weighting"])
            else:
                model = train_ensemble(task.model, task.Xtr, task.ytr, point, task.seed, opts["epochs"], opts["invert"])
            probs = model.predict_proba(task.Xte, task.mode, task.shots, derive_seed(task.seed, 1))
            model_text = ensemble_model_text(model, task.transforms)
        record = evaluate(task.model, task.config_id, task.split_id, probs, task.yte)
    except Exception as exc:
        exc.args = (f"[{task.context}] {exc}",) + tuple(exc.args[1:])
        raise
    return record, model_text


def build_tasks(cfg: ExperimentConfig, datasets, manifest=None) -> list:
    searched = {}
    if manifest is not None:
        for e in manifest.get("entries", []):
            searched[(e["dataset"], e["model"], e["split_id"])] = e
    tasks = []
    for di, entry in enumerate(datasets):
        arrays = {s.split_id: split_arrays(cfg, entry, s, transforms=True) for s in entry.splits}
        for mi, spec in enumerate(cfg.models):
            configs = _explicit_configs(spec)
            use_search = not isinstance(spec, CosineModel) and all(
                (entry.name, spec.kind, s.split_id) in searched for s in entry.splits)
            options = _options(spec)
            for ci, (config_id, params) in enumerate([("searched", None)] if use_search else configs):
                for split in entry.splits:
                    p = params
                    if use_search:
                        e = searched[(entry.name, spec.kind, split.split_id)]
                        if e["train_indices"] != split.train.tolist():
                            raise DataError(f"search manifest for {entry.name} {spec.kind} split "
                                            f"{split.split_id} was made on different training rows; rerun search")
                        p = e["best"]
                    Xtr, Xte, transforms = arrays[split.split_id]
                    tasks.append(Task(
                        entry.name, spec.kind, config_id, dict(p),
                        derive_seed(cfg.seed, di, mi, ci, split.split_id), split.split_id,
                        Xtr, entry.data.labels[split.train], Xte, entry.data.labels[split.test],
                        cfg.mode, cfg.shots, options, transforms,
                    ))
    return tasks


def _options(spec) -> dict:
    if isinstance(spec, CosineModel):
        return {"engine": spec.engine}
    if isinstance(spec, VariationalModel):
        return {"epochs": spec.epochs, "invert": spec.invert, "weighting": spec.weighting}
    return {}


def _explicit_configs(spec) -> list:
    if isinstance(spec, CosineModel):
        out = []
        for c in spec.configs():
            c = config_for(spec.kind, c)
            out.append((c.label, {"d": c.d, "n_train": c.n_train, "n_swap": c.n_swap, "n_feature": c.n_feature}))
        return out
    if isinstance(spec, VariationalModel):
        return [(p.label, asdict(p)) for p in spec.points()]
    return [(c.label, asdict(c)) for c in spec.explicit()]


def execute(tasks, workers: int = 1) -> list:
    """Run tasks over a bounded pool; results come back in task order."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_task, tasks))
    return [run_task(t) for t in tasks]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_rows(cfg: ExperimentConfig, tasks, outcomes) -> list:
    exp_hash = cfg.config_hash()
    rows = []
    for task, (rec, _) in zip(tasks, outcomes):
        rows.append({
            "dataset": task.dataset, "model": rec.model, "config_id": rec.config_id,
            "params": _params_text(task.params), "config_hash": _config_hash(exp_hash, task),
            "seed": task.seed, "split_id": rec.split_id, "accuracy": rec.accuracy,
            "f1_weighted": rec.f1_weighted, "brier": rec.brier, "single_class": rec.single_class,
        })
    return rows


def write_results(rows, path, timestamp=None) -> None:
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in RESULT_COLUMNS])


def read_results(path) -> list:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no results file at {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    if reader.fieldnames is None or set(RESULT_COLUMNS) - set(reader.fieldnames):
        raise DataError(f"{path}: missing results columns")
    rows = []
    for r in reader:
        for m in METRICS:
            r[m] = float(r[m])
        r["split_id"] = int(r["split_id"])
        r["single_class"] = r["single_class"] in ("1", "True")
        rows.append(r)
    if not rows:
        raise DataError(f"{path}: no result rows")
    return rows


def train_eval(cfg: ExperimentConfig, out, base_dir=".", timestamp=None) -> list:
    """Train and test every ``(model, config, split)`` and write results plus aggregates."""
    datasets = load_datasets(cfg, base_dir)
    validate_resources(cfg, datasets)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_search_manifest(out)
    tasks = build_tasks(cfg, datasets, manifest)
    if not tasks:
        raise ConfigError("no (model, config, split) tasks to run")
    outcomes = execute(tasks, cfg.workers)
    rows = results_rows(cfg, tasks, outcomes)
    write_results(rows, out / "results.csv", timestamp)
    for task, (_, text) in zip(tasks, outcomes):
        if text is not None:
            path = out / "models" / task.dataset / task.model / f"{task.config_id}-split{task.split_id}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
    write_aggregates(rows, out, cfg.ttest)
    run_manifest = {
        "name": cfg.name, "config_hash": cfg.config_hash(), "seed": cfg.seed, "ttest": cfg.ttest,
        "mode": cfg.mode, "shots": cfg.shots, "datasets": [d.name for d in datasets],
        "models": [m.kind for m in cfg.models], "searched": manifest is not None, "rows": len(rows),
        "config": cfg.model_dump(),
    }
    (out / "manifest.json").write_text(json.dumps(run_manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return rows


# aggregation


def mean_se(values):
    """Mean and standard error ``sd / sqrt(n)`` (sample sd); SE is ``None`` for ``n == 1``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
    return float(v.mean()), se


def summarize(rows) -> list:
    """One aggregate per ``(dataset, model, config_id)``, in first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["model"], r["config_id"]), []).append(r)
    out = []
    for (ds, model, cid), members in groups.items():
        agg = {"dataset": ds, "model": model, "config_id": cid, "n": len(members)}
        for m in METRICS:
            agg[f"{m}_mean"], agg[f"{m}_se"] = mean_se([r[m] for r in members])
        out.append(agg)
    return out


def best_configs(summary, criterion: str) -> dict:
    """``(dataset, model) -> aggregate`` with the highest mean ``criterion``; ties keep the first."""
    best = {}
    for agg in summary:
        key = (agg["dataset"], agg["model"])
        if key not in best or agg[f"{criterion}_mean"] > best[key][f"{criterion}_mean"]:
            best[key] = agg
    return best


def _values(rows, ds, model, cid, metric) -> dict:
    return {r["split_id"]: r[metric] for r in rows
            if r["dataset"] == ds and r["model"] == model and r["config_id"] == cid}


def compare_to_baseline(rows, test: str = "welch") -> list:
    """t-tests of each model's best config against the forest's best config."""
    summary = summarize(rows)
    out = []
    for criterion in CRITERIA:
        best = best_configs(summary, criterion)
        for (ds, model), agg in best.items():
            base = best.get((ds, BASELINE))
            if model == BASELINE or base is None:
                continue
            for metric in METRICS:
                a = _values(rows, ds, model, agg["config_id"], metric)
                b = _values(rows, ds, BASELINE, base["config_id"], metric)
                t = p = None
                try:
                    if test == "paired":
                        common = sorted(set(a) & set(b))
                        t, p = paired_t_test([a[k] for k in common], [b[k] for k in common])
                    else:
                        t, p = welch_t_test(list(a.values()), list(b.values()))
                except ValueError:
                    pass  # too few splits for a test
                out.append({
                    "dataset": ds, "criterion": criterion, "model": model, "config_id": agg["config_id"],
                    "baseline_config_id": base["config_id"], "metric": metric, "test": test,
                    "t": t, "p": p, "significant": p is not None and p < 0.05,
                })
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    return _fmt(v)


def _write_dicts(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r[h]) for h in header])


def write_aggregates(rows, out, test="welch") -> None:
    out = Path(out)
    summary = summarize(rows)
    header = ["dataset", "model", "config_id", "n"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "se")]
    _write_dicts(out / "summary.csv", header, summary)
    best_rows = []
    for criterion in CRITERIA:
        for agg in best_configs(summary, criterion).values():
            best_rows.append(dict(agg, criterion=criterion))
    _write_dicts(out / "best.csv", ["criterion"] + header, best_rows)
    _write_dicts(out / "ttests.csv", ["dataset", "criterion", "model", "config_id", "baseline_config_id",
                                      "metric", "test", "t", "p", "significant"], compare_to_baseline(rows, test))


def star(p) -> str:
    return "*" if p is not None and p < 0.05 else ""


def report(results_dir, test: str | None = None) -> str:
    """Write ``summary.txt`` and ``plot_data.csv`` for a results directory; returns the summary text."""
    results_dir = Path(results_dir)
    if not results_dir.is_dir():
        raise DataError(f"{results_dir} is not a directory")
    if not (results_dir / "results.csv").exists():
        raise DataError(f"{results_dir} holds no results.csv")
    if test is None:
        test = "welch"
        man = results_dir / "manifest.json"
        if man.exists():
            test = json.loads(man.read_text(encoding="utf-8")).get("ttest", "welch")
    rows = read_results(results_dir / "results.csv")
    summary = summarize(rows)
    tests = {(t["dataset"], t["criterion"], t["model"], t["metric"]): t["p"] for t in compare_to_baseline(rows, test)}
    lines, plot = [], []
    for criterion in CRITERIA:
        best = best_configs(summary, criterion)
        for ds in dict.fromkeys(k[0] for k in best):
            lines.append(f"{ds}: best config per model by mean {criterion} "
                         f"(* = p < 0.05 vs {BASELINE}, {test} t-test)")
            lines.append(f"  {'model':<10} {'config':<28} " + " ".join(f"{m:>22}" for m in METRICS))
            for (d, model), agg in best.items():
                if d != ds:
                    continue
                cells = []
                for m in METRICS:
                    mean, se = agg[f"{m}_mean"], agg[f"{m}_se"]
                    text = f"{mean:.3f} ± {se:.3f}" if se is not None else f"{mean:.3f} ± n/a"
                    cells.append(f"{text + star(tests.get((ds, criterion, model, m))):>22}")
                    plot.append({"model": model, "metric": m, "mean": mean, "stderr": se, "dataset": ds,
                                 "criterion": criterion, "config_id": agg["config_id"]})
                lines.append(f"  {model:<10} {agg['config_id']:<28} " + " ".join(cells))
            lines.append("")
    text = "\n".join(lines)
    (results_dir / "summary.txt").write_text(text, encoding="utf-8")
    _write_dicts(results_dir / "plot_data.csv",
                 ["model", "metric", "mean", "stderr", "dataset", "criterion", "config_id"], plot)
    return text


# model files


def _vec(name, values) -> str:
    return name + "," + ",".join(format(float(v), ".17g") for v in np.ravel(values))


def _transform_lines(transforms) -> list:
    scaler, proj = transforms
    lines = [_vec("scale_min", scaler.data_min), _vec("scale_range", scaler.data_range)]
    if proj is not None:
        lines.append(_vec("pca_mean", proj.mean))
        lines += [_vec("pca_component", row) for row in proj.components]
    return lines


def ensemble_model_text(model: EnsembleModel, transforms) -> str:
    return "\n".join([f"format,{MODEL_FORMAT}", "family,ensemble"] + _transform_lines(transforms)) + "\n" + model.to_manifest()


def cosine_model_text(kind: str, cc: CosineConfig, train_x, train_y, transforms) -> str:
    lines = [f"format,{MODEL_FORMAT}", "family,cosine"] + _transform_lines(transforms)
    lines.append(f"cosine,{kind},{cc.d},{cc.n_train},{cc.n_swap},{cc.n_feature},{cc.seed}")
    lines += [f"train,{int(lab)}," + ",".join(format(float(v), ".17g") for v in x) for x, lab in zip(train_x, train_y)]
    return "\n".join(lines) + "\n"


@dataclass
class LoadedModel:
    family: str
    scaler: MinMaxScaler
    projector: PCAProjector | None
    ensemble: EnsembleModel | None = None
    cosine: tuple | None = None  # (kind, CosineConfig, train_x, train_y)

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.scaler.data_min.size:
            raise DataError(f"model expects {self.scaler.data_min.size} features, input has {X.shape[1]}")
        X = self.scaler.apply(X)
        return self.projector.apply(X) if self.projector is not None else X

    def predict_proba(self, X, mode="exact", shots=8192, seed=0) -> np.ndarray:
        Z = self.transform(X)
        if self.family == "ensemble":
            return self.ensemble.predict_proba(Z, mode, shots, seed)
        kind, cc, tx, ty = self.cosine
        return cosine_predict(kind, cc, tx, ty, Z, mode, shots)


def load_model(path) -> LoadedModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc.strerror}") from None
    vecs, comps, train, rest, header = {}, [], [], [], {}
    try:
        for raw in text.splitlines():
            key, _, val = raw.partition(",")
            if key in ("format", "family"):
                header[key] = val
            elif key in ("scale_min", "scale_range", "pca_mean"):
                vecs[key] = np.array([float(v) for v in val.split(",")])
            elif key == "pca_component":
                comps.append([float(v) for v in val.split(",")])
            elif key == "cosine":
                header["cosine"] = val.split(",")
            elif key == "train":
                parts = val.split(",")
                train.append((int(parts[0]), [float(v) for v in parts[1:]]))
            elif raw.strip():
                rest.append(raw)
        if header.get("format") != MODEL_FORMAT:
            raise DataError(f"{path}: not a model file (missing 'format,{MODEL_FORMAT}')")
        scaler = MinMaxScaler(vecs["scale_min"], vecs["scale_range"])
        proj = None
        if "pca_mean" in vecs:
            c = np.array(comps)
            proj = PCAProjector(vecs["pca_mean"], c, np.zeros(c.shape[0]))
        if header.get("family") == "ensemble":
            return LoadedModel("ensemble", scaler, proj, ensemble=EnsembleModel.from_manifest("\n".join(rest)))
        if header.get("family") == "cosine":
            kind, d, nt, ns, nf, seed = header["cosine"]
            cc = CosineConfig(int(d), int(nt), int(ns), int(nf), int(seed))
            ty = np.array([t[0] for t in train])
            tx = np.array([t[1] for t in train])
            return LoadedModel("cosine", scaler, proj, cosine=(kind, cc, tx, ty))
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, QensError):
            raise
        raise DataError(f"{path}: malformed model file ({exc})") from None
    raise DataError(f"{path}: unknown model family {header.get('family')!r}")


def read_feature_csv(path) -> np.ndarray:
    """Feature matrix from a headed CSV; a ``label`` column, if present, is ignored."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    return load_csv(path, require_label=False).features


def predict_file(model_path, input_path, out_path=None, mode="exact", shots=8192, seed=0) -> np.ndarray:
    model = load_model(model_path)
    X = read_feature_csv(input_path)
    probs = model.predict_proba(X, mode, shots, seed)
    lines = ["index,probability,label"] + [f"{i},{p!r},{int(p >= 0.5)}" for i, p in enumerate(map(float, probs))]
    text = "\n".join(lines) + "\n"
    if out_path is None:
        print(text, end="")
    else:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text, encoding="utf-8")
    return probs
