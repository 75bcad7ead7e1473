"""Seeded multi-trial experiment runner and its config file format.

Config grammar, one setting per line::

    # comment
    key = <JSON value>

Top-level keys are the fields of :class:`ExperimentConfig`. Per-method
hyperparameters use dotted keys ``<block>.<field>``, e.g.
``ssdkl.alpha_grid = [0.1, 1, 10]`` or ``coreg.k = 3``. Unknown keys,
duplicate keys and values of the wrong type are errors.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import synthetic
from .baselines.coreg import CoregConfig, coreg_train
from .baselines.knn import knn_predict_many, select_k
from .baselines.labelprop import LabelPropConfig, label_prop
from .baselines.mean_teacher import MeanTeacherConfig, mean_teacher_train
from .baselines.regressor import RegressorConfig
from .baselines.vat import VatConfig, select_vat
from .data import Dataset, load_csv, make_split, percent_reduction, rmse
from .errors import ConfigError, UnknownMethod
from .trainer import TrainConfig, predict, select_alpha, train_dkl

logger = logging.getLogger(__name__)

# order fixes each method's stable seed id; never reorder, only append
METHODS = ("dkl", "ssdkl", "ssdkl_spatial", "coreg", "labelprop", "vat", "meanteacher", "knn")
# methods in one family share an initialization seed so their comparison is paired
_SEED_FAMILY = {"dkl": 0, "ssdkl": 0, "ssdkl_spatial": 0, "coreg": 3, "labelprop": 4, "vat": 5,
                "meanteacher": 5, "knn": 7}


@dataclass(frozen=True)
class KnnConfig:
    k_grid: tuple = (1, 3, 5, 7, 9)
    order: float = 2.0


def _default_blocks() -> dict:
    return {
        "dkl": TrainConfig(),
        "ssdkl": TrainConfig(),
        "ssdkl_spatial": TrainConfig(spatial_dims=2),
        "coreg": CoregConfig(),
        "labelprop": LabelPropConfig(),
        "vat": VatConfig(),
        "meanteacher": MeanTeacherConfig(),
        "nn": RegressorConfig(),  # shared trunk and optimizer settings for vat and meanteacher
        "knn": KnnConfig(),
    }


# fields set by the runner, not by the config file
_RUNTIME_FIELDS = {"seed", "alpha"}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    n_labeled: int
    methods: tuple = ("dkl", "ssdkl")
    trials: int = 10
    base_seed: int = 0
    output_dir: str = "results"
    test_size: int = 1000
    blocks: dict = field(default_factory=_default_blocks, compare=True)

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise UnknownMethod(f"unknown method {m!r}; choose from {', '.join(METHODS)}", field="methods")
        if "dkl" not in self.methods:
            object.__setattr__(self, "methods", ("dkl", *self.methods))
        if self.n_labeled < 2:
            raise ConfigError("n_labeled must be at least 2", field="n_labeled")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1", field="trials")


_TOP_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "blocks"}


def _coerce(value, default, where: str, line: int | None):
    """Check a JSON value against the type of the field's default."""
    def bad(expected):
        return ConfigError(f"expected {expected}, got {json.dumps(value)}", line=line, field=where)

    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise bad("a list")
        if default:
            return tuple(_coerce(v, default[0], where, line) for v in value)
        return tuple(value)
    raise bad(type(default).__name__)


def parse_config_text(text: str) -> ExperimentConfig:
    top = {}
    block_values: dict = {}
    seen = {}
    defaults = _default_blocks()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", line=lineno, field=key)
        seen[key] = lineno
        try:
            value = json.loads(rhs.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"value is not valid JSON ({exc.msg})", line=lineno, field=key) from None
        if "." in key:
            block, _, name = key.partition(".")
            if block not in defaults:
                raise ConfigError(f"unknown block {block!r} in key {key!r}", line=lineno, field=key)
            fields = {f.name for f in dataclasses.fields(defaults[block])} - _RUNTIME_FIELDS
            if name not in fields:
                raise ConfigError(f"unknown key {key!r}", line=lineno, field=key)
            default = getattr(defaults[block], name)
            block_values.setdefault(block, {})[name] = (_coerce(value, default, key, lineno), lineno)
        elif key in _TOP_FIELDS:
            f = _TOP_FIELDS[key]
            default = f.default if f.default is not dataclasses.MISSING else ("" if key == "dataset_path" else 0)
            top[key] = (_coerce(value, default, key, lineno), lineno)
        else:
            raise ConfigError(f"unknown key {key!r}", line=lineno, field=key)
    for required in ("dataset_path", "n_labeled"):
        if required not in top:
            raise ConfigError(f"missing required key {required!r}", field=required)
    blocks = dict(defaults)
    for block, values in block_values.items():
        try:
            blocks[block] = replace(defaults[block], **{k: v for k, (v, _) in values.items()})
        except (ValueError, TypeError) as exc:
            first = min(ln for _, ln in values.values())
            raise ConfigError(f"invalid {block} settings: {exc}", line=first, field=block) from None
    kwargs = {k: v for k, (v, _) in top.items()}
    try:
        return ExperimentConfig(blocks=blocks, **kwargs)
    except UnknownMethod as exc:
        raise UnknownMethod(exc.args[0].split(": ", 1)[-1], line=top["methods"][1], field="methods") from None
    except ConfigError as exc:
        if exc.field not in top:
            raise
        raise ConfigError(exc.args[0].split(": ", 1)[-1], line=top[exc.field][1], field=exc.field) from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def serialize_config(config: ExperimentConfig) -> str:
    """Every setting written out explicitly; ``parse_config_text`` inverts it."""
    out = io.StringIO()
    for name in _TOP_FIELDS:
        value = getattr(config, name)
        out.write(f"{name} = {json.dumps(list(value) if isinstance(value, tuple) else value)}\n")
    for block, cfg in config.blocks.items():
        for f in dataclasses.fields(cfg):
            if f.name in _RUNTIME_FIELDS:
                continue
            value = getattr(cfg, f.name)
            out.write(f"{block}.{f.name} = {json.dumps(list(value) if isinstance(value, tuple) else value)}\n")
    return out.getvalue()


# -- datasets ----------------------------------------------------------------------

SYNTHETIC_UNLABELED = 200


def load_dataset(config: ExperimentConfig) -> Dataset:
    """A CSV path, or ``synthetic:sine`` / ``synthetic:spatial`` for the generated tasks."""
    path = config.dataset_path
    if path == "synthetic:sine":
        return synthetic.sine_task(config.n_labeled, SYNTHETIC_UNLABELED, seed=config.base_seed,
                                   test_size=config.test_size)
    if path == "synthetic:spatial":
        return synthetic.spatial_task(config.n_labeled, 500, seed=config.base_seed, test_size=config.test_size)
    if path.startswith("synthetic:"):
        raise ConfigError(f"unknown synthetic dataset {path!r}", field="dataset_path")
    return load_csv(path)


def method_seed(base_seed: int, trial: int, method: str) -> int:
    ss = np.random.SeedSequence([base_seed, trial, _SEED_FAMILY[method]])
    return int(ss.generate_state(1)[0])


# -- single cell -----------------------------------------------------------------

def run_method(method: str, config: ExperimentConfig, view, seed: int):
    """Train one method on one split; returns (test predictions in original units, selected hyperparameters)."""
    b = config.blocks
    if method in ("dkl", "ssdkl", "ssdkl_spatial"):
        cfg = replace(b[method], seed=seed)
        if method == "dkl":
            model = train_dkl(cfg, view)
            return predict(model, view.X_test, standardized=True)[0], {"best_epoch": model.best_epoch}
        sel = select_alpha(cfg, view)
        return (predict(sel.model, view.X_test, standardized=True)[0],
                {"alpha": sel.best_alpha, "best_epoch": sel.model.best_epoch})
    if method == "coreg":
        model = coreg_train(b["coreg"], view.X_train, view.y_train, view.X_unlabeled, seed=seed)
        return view.unstandardize_y(model.predict(view.X_test)), {"rounds": model.rounds}
    if method == "labelprop":
        cfg = b["labelprop"]
        X_test = view.X_test
        # test points are transductive nodes; the unlabeled subsample fills the rest of the budget
        room = max(0, cfg.max_unlabeled - X_test.shape[0])
        X_U = view.X_unlabeled
        if X_U.shape[0] > room:
            X_U = X_U[np.sort(np.random.default_rng(seed).choice(X_U.shape[0], room, replace=False))]
        nodes = np.vstack([X_test, X_U])
        if nodes.shape[0] > cfg.max_unlabeled:
            raise ValueError(f"test set alone ({X_test.shape[0]}) exceeds labelprop.max_unlabeled")
        res = label_prop(cfg, view.X_train, view.y_train, nodes, view.X_val, view.standardize_y(view.y_val))
        return (view.unstandardize_y(res.predictions[:X_test.shape[0]]),
                {"rbf_scale": res.scale, "converged": res.converged})
    if method == "vat":
        sel = select_vat(b["vat"], replace(b["nn"], seed=seed), view)
        return view.unstandardize_y(sel.run.predict(view.X_test)), {"epsilon": sel.epsilon, "lambda": sel.lam}
    if method == "meanteacher":
        mt = mean_teacher_train(b["meanteacher"], replace(b["nn"], seed=seed), view)
        return view.unstandardize_y(mt.predict(view.X_test)), {"best_epoch": mt.run.best_epoch}
    if method == "knn":
        cfg = b["knn"]
        y_train = view.dataset.y[view.train_idx]
        k_grid = tuple(k for k in cfg.k_grid if k <= len(y_train)) or (len(y_train),)
        k = select_k(view.X_train, y_train, view.X_val, view.y_val, k_grid, cfg.order)
        return knn_predict_many(view.X_train, y_train, view.X_test, k, cfg.order), {"k": k}
    raise UnknownMethod(f"unknown method {method!r}")


def _run_cell(job):
    config, dataset, trial, method = job
    split_seed = config.base_seed + trial
    seed = method_seed(config.base_seed, trial, method)
    start = time.perf_counter()
    try:
        view = make_split(dataset, config.n_labeled, split_seed, config.test_size)
        pred, selected = run_method(method, config, view, seed)
        return {"trial": trial, "split_seed": split_seed, "method": method, "seed": seed, "status": "ok",
                "test_rmse": rmse(pred, view.y_test), "selected": selected,
                "wall_seconds": time.perf_counter() - start}
    except Exception as exc:  # recorded per cell, excluded from aggregates
        logger.warning("trial %d %s failed: %s: %s", trial, method, type(exc).__name__, exc)
        return {"trial": trial, "split_seed": split_seed, "method": method, "seed": seed,
                "status": f"error: {type(exc).__name__}: {exc}", "test_rmse": float("nan"), "selected": {},
                "wall_seconds": time.perf_counter() - start}


# -- aggregation ---------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list  # one dict per (trial, method)
    aggregate: list  # one dict per method

    def table(self) -> str:
        return format_table(self.aggregate)


def aggregate_records(records: list, methods) -> list:
    """Mean test RMSE per method over successful trials and percent reduction vs DKL.

    ``reduction`` compares trial-mean RMSEs; ``mean_trial_reduction`` averages
    the per-trial reductions instead.
    """
    dkl = {r["trial"]: r["test_rmse"] for r in records if r["method"] == "dkl" and r["status"] == "ok"}
    dkl_mean = float(np.mean(list(dkl.values()))) if dkl else float("nan")
    rows = []
    for method in methods:
        ok = [r for r in records if r["method"] == method and r["status"] == "ok"]
        vals = np.array([r["test_rmse"] for r in ok])
        mean = float(vals.mean()) if ok else float("nan")
        per_trial = [r["trial_reduction"] for r in ok if np.isfinite(r.get("trial_reduction", float("nan")))]
        rows.append({
            "method": method,
            "trials_ok": len(ok),
            "mean_rmse": mean,
            "std_rmse": float(vals.std()) if ok else float("nan"),
            "reduction": percent_reduction(dkl_mean, mean) if ok and dkl and dkl_mean > 0 else float("nan"),
            "mean_trial_reduction": float(np.mean(per_trial)) if per_trial else float("nan"),
        })
    return rows


def _attach_trial_reductions(records: list) -> None:
    dkl = {r["trial"]: r["test_rmse"] for r in records if r["method"] == "dkl" and r["status"] == "ok"}
    for r in records:
        base = dkl.get(r["trial"])
        ok = r["status"] == "ok" and base is not None and base > 0
        r["trial_reduction"] = percent_reduction(base, r["test_rmse"]) if ok else float("nan")


def format_table(rows: list) -> str:
    header = ("method", "trials", "mean_rmse", "std_rmse", "reduction_%", "mean_trial_red_%")
    body = [(r["method"], str(r["trials_ok"]), f"{r['mean_rmse']:.6g}", f"{r['std_rmse']:.4g}",
             f"{r['reduction']:.2f}", f"{r['mean_trial_reduction']:.2f}") for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def median_reductions(results: list) -> dict:
    """Median percent reduction per method across several experiments (e.g. datasets)."""
    by_method: dict = {}
    for res in results:
        for row in res.aggregate:
            if np.isfinite(row["reduction"]):
                by_method.setdefault(row["method"], []).append(row["reduction"])
    return {m: float(np.median(v)) for m, v in by_method.items()}


RECORD_FIELDS = ("trial", "split_seed", "method", "seed", "status", "test_rmse", "trial_reduction", "selected")


def write_outputs(result: ExperimentResult, out_dir) -> None:
    """records.csv (deterministic), timings.csv (wall clock), aggregate.csv and table.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in result.records:
            w.writerow([r["trial"], r["split_seed"], r["method"], r["seed"], r["status"], repr(r["test_rmse"]),
                        repr(r["trial_reduction"]), json.dumps(r["selected"], sort_keys=True)])
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("trial", "method", "wall_seconds"))
        for r in result.records:
            w.writerow([r["trial"], r["method"], f"{r['wall_seconds']:.3f}"])
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = ("method", "trials_ok", "mean_rmse", "std_rmse", "reduction", "mean_trial_reduction")
        w.writerow(keys)
        for row in result.aggregate:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
    (out / "table.txt").write_text(result.table())
    (out / "config.txt").write_text(serialize_config(result.config))


def read_records(path) -> list:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append({
                "trial": int(row["trial"]), "split_seed": int(row["split_seed"]), "method": row["method"],
                "seed": int(row["seed"]), "status": row["status"], "test_rmse": float(row["test_rmse"]),
                "trial_reduction": float(row["trial_reduction"]), "selected": json.loads(row["selected"]),
            })
    return records


def worker_count() -> int:
    raw = os.environ.get("SSKL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SSKL_THREADS must be an integer, got {raw!r}") from None


def run_experiment(config: ExperimentConfig, out_dir=None, dataset: Dataset | None = None) -> ExperimentResult:
    """Every (trial, method) cell is independent; cells run in a pool of ``SSKL_THREADS`` processes."""
    dataset = dataset if dataset is not None else load_dataset(config)
    jobs = [(config, dataset, t, m) for t in range(config.trials) for m in config.methods]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(j) for j in jobs]
    _attach_trial_reductions(records)
    result = ExperimentResult(config, records, aggregate_records(records, config.methods))
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result
