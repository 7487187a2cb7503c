"""CSV ingestion, cross-validation, and experiment reports.

The schema file types each CSV column (numerical, categorical, temporal,
response, or ignore) and carries the time step and seasonal period for
temporal columns.  Evaluation is k-fold cross-validation reporting RMSE
per fold and the wall-clock training time of the fit alone.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .model import predict_batch
from .training import TemporalRule, TrainConfig, tsi_train

COLUMN_KINDS = ("numerical", "categorical", "temporal", "response", "ignore")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    tau: int = 1
    period: int | None = None

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValueError(
                f"column '{self.name}': unknown kind '{self.kind}'"
            )
        if self.kind == "temporal":
            if self.period is None or self.period <= 1:
                raise ValueError(
                    f"column '{self.name}': temporal columns need a "
                    "seasonal period greater than 1"
                )
            if self.tau <= 0:
                raise ValueError(
                    f"column '{self.name}': tau must be positive"
                )


@dataclass(frozen=True)
class SchemaFile:
    """Typed column list; exactly one response, at least one feature."""

    columns: tuple

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("schema has duplicate column names")
        responses = [c for c in self.columns if c.kind == "response"]
        if len(responses) != 1:
            raise ValueError("schema must declare exactly one response")
        features = [
            c for c in self.columns
            if c.kind in ("numerical", "categorical", "temporal")
        ]
        if not features:
            raise ValueError("schema must declare at least one feature")

    @property
    def response(self):
        return next(c for c in self.columns if c.kind == "response")

    def of_kind(self, kind):
        return [c for c in self.columns if c.kind == kind]

    def temporal_rules(self):
        return {
            c.name: TemporalRule(period=c.period, tau=c.tau)
            for c in self.of_kind("temporal")
        }


def load_schema(path):
    """Read a schema JSON file ({"columns": [{name, kind, tau, period}]})."""
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    columns = tuple(
        ColumnSpec(
            name=entry["name"],
            kind=entry["kind"],
            tau=int(entry.get("tau", 1)),
            period=(
                int(entry["period"]) if entry.get("period") is not None
                else None
            ),
        )
        for entry in doc["columns"]
    )
    return SchemaFile(columns=columns)


def save_schema(schema, path):
    doc = {"columns": []}
    for col in schema.columns:
        entry = {"name": col.name, "kind": col.kind}
        if col.kind == "temporal":
            entry["tau"] = col.tau
            entry["period"] = col.period
        doc["columns"].append(entry)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=1)


def ingest_csv(path, schema, require_response=True):
    """Parse a typed CSV into a Dataset.

    The header must contain every schema column (extra file columns are
    ignored).  Numeric parse failures report the row and column; temporal
    values must be integer multiples of the column's tau.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        positions = {}
        for col in schema.columns:
            if col.kind == "ignore":
                continue
            if col.kind == "response" and not require_response:
                if col.name not in header:
                    continue
            if col.name not in header:
                raise ValueError(f"{path}: missing column '{col.name}'")
            positions[col.name] = header.index(col.name)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    def parse_float(col, kind):
        out = np.empty(len(rows))
        pos = positions[col]
        for i, row in enumerate(rows):
            token = row[pos]
            try:
                out[i] = float(token)
            except ValueError:
                raise ValueError(
                    f"{path}: row {i + 2}: column '{col}': could not parse "
                    f"'{token}' as a number"
                ) from None
            if not np.isfinite(out[i]):
                raise ValueError(
                    f"{path}: row {i + 2}: column '{col}': non-finite value"
                )
        return out

    numerical = {}
    categorical = {}
    temporal = {}
    for col in schema.columns:
        if col.kind == "numerical":
            numerical[col.name] = parse_float(col.name, col.kind)
        elif col.kind == "categorical":
            pos = positions[col.name]
            categorical[col.name] = np.array([row[pos] for row in rows])
        elif col.kind == "temporal":
            values = parse_float(col.name, col.kind)
            if np.any(values != np.round(values)):
                bad = int(np.flatnonzero(values != np.round(values))[0])
                raise ValueError(
                    f"{path}: row {bad + 2}: column '{col.name}': temporal "
                    "values must be integers"
                )
            ticks = values.astype(np.int64)
            if np.any(ticks % col.tau != 0):
                bad = int(np.flatnonzero(ticks % col.tau != 0)[0])
                raise ValueError(
                    f"{path}: row {bad + 2}: column '{col.name}': time "
                    f"{ticks[bad]} is not divisible by tau={col.tau}"
                )
            temporal[col.name] = ticks

    name = schema.response.name
    if name in positions:
        response = parse_float(name, "response")
    else:
        response = np.zeros(len(rows))
    return Dataset(
        response=response,
        numerical=numerical,
        categorical=categorical,
        temporal=temporal,
    )


def write_csv(dataset, path, response_name="y"):
    """Write a Dataset back to CSV (features in declaration order)."""
    names = dataset.feature_names()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(names + [response_name])
        columns = []
        for name in names:
            if name in dataset.numerical:
                columns.append(
                    [repr(float(v)) for v in dataset.numerical[name]]
                )
            elif name in dataset.categorical:
                columns.append([str(v) for v in dataset.categorical[name]])
            else:
                columns.append([str(int(v)) for v in dataset.temporal[name]])
        columns.append([repr(float(v)) for v in dataset.response])
        for row in zip(*columns):
            writer.writerow(row)


def dataset_schema(dataset, rules, response_name="y"):
    """Schema matching a Dataset's column kinds."""
    columns = []
    for name in dataset.numerical:
        columns.append(ColumnSpec(name=name, kind="numerical"))
    for name in dataset.categorical:
        columns.append(ColumnSpec(name=name, kind="categorical"))
    for name in dataset.temporal:
        rule = rules[name]
        columns.append(ColumnSpec(
            name=name, kind="temporal", tau=rule.tau, period=rule.period,
        ))
    columns.append(ColumnSpec(name=response_name, kind="response"))
    return SchemaFile(columns=tuple(columns))


def kfold_split(n_records, k, seed):
    """Shuffled partition into k folds with sizes differing by at most 1."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n_records < k:
        raise ValueError("need at least one record per fold")
    permutation = np.random.default_rng(seed).permutation(n_records)
    return [fold.copy() for fold in np.array_split(permutation, k)]


def rmse(predicted, actual):
    """Root mean squared error."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise ValueError("prediction and actual lengths differ")
    if predicted.size == 0:
        raise ValueError("empty vectors")
    diff = predicted - actual
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class FoldResult:
    fold: int
    rmse: float
    train_seconds: float


@dataclass
class EvalReport:
    """Cross-validation outcome plus the configuration that produced it."""

    folds: list
    mean_rmse: float
    mean_train_seconds: float
    seed: int
    config: dict = field(default_factory=dict)
    converged: bool = True

    def csv_rows(self):
        rows = [["fold", "rmse", "train_seconds"]]
        for fold in self.folds:
            rows.append([
                fold.fold, repr(fold.rmse), repr(fold.train_seconds)
            ])
        rows.append(["mean", repr(self.mean_rmse),
                     repr(self.mean_train_seconds)])
        return rows

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            csv.writer(handle).writerows(self.csv_rows())

    def summary(self):
        lines = [
            f"folds: {len(self.folds)}  seed: {self.seed}",
            f"mean rmse: {self.mean_rmse:.6g}",
            f"mean train seconds: {self.mean_train_seconds:.3f}",
        ]
        for fold in self.folds:
            lines.append(
                f"  fold {fold.fold}: rmse {fold.rmse:.6g} "
                f"({fold.train_seconds:.3f}s)"
            )
        return "\n".join(lines)


def _subset(dataset, indices):
    return Dataset(
        response=dataset.response[indices],
        numerical={k: v[indices] for k, v in dataset.numerical.items()},
        categorical={k: v[indices] for k, v in dataset.categorical.items()},
        temporal={k: v[indices] for k, v in dataset.temporal.items()},
    )


def _columns_of(dataset, indices):
    columns = {}
    for mapping in (dataset.numerical, dataset.categorical, dataset.temporal):
        for name, col in mapping.items():
            columns[name] = col[indices]
    return columns


def temporal_as_numerical(dataset):
    """Re-type every temporal column as numerical (ablation support)."""
    numerical = dict(dataset.numerical)
    for name, col in dataset.temporal.items():
        numerical[name] = col.astype(float)
    return Dataset(
        response=dataset.response,
        numerical=numerical,
        categorical=dict(dataset.categorical),
        temporal={},
    )


def fold_parallelism():
    """Fold-level worker count, capped by the FXAM_THREADS variable."""
    raw = os.environ.get("FXAM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(dataset, train_config, k=5, seed=0,
                   no_sampling=False, no_dynamic_ordering=False,
                   no_temporal_stage=False):
    """k-fold cross-validation of one training configuration.

    Ablation switches: ``no_sampling`` and ``no_dynamic_ordering`` toggle
    the corresponding accelerations off; ``no_temporal_stage`` re-types
    temporal columns as plain numerical features before training.  Timing
    covers the fit call only, never ingestion or reporting.
    """
    config = train_config
    if no_sampling:
        config = replace(config, sampling=False)
    if no_dynamic_ordering:
        config = replace(config, dynamic_ordering=False)
    if no_temporal_stage:
        dataset = temporal_as_numerical(dataset)
        config = replace(config, temporal_rules={})

    folds = kfold_split(dataset.n_records, k, seed)
    all_indices = np.arange(dataset.n_records)

    def run_fold(fold_id):
        test_idx = np.sort(folds[fold_id])
        train_mask = np.ones(dataset.n_records, dtype=bool)
        train_mask[test_idx] = False
        train_idx = all_indices[train_mask]
        train_data = _subset(dataset, train_idx)
        start = time.perf_counter()
        model = tsi_train(train_data, config)
        seconds = time.perf_counter() - start
        predictions = predict_batch(model, _columns_of(dataset, test_idx))
        error = rmse(predictions, dataset.response[test_idx])
        return FoldResult(fold=fold_id, rmse=error, train_seconds=seconds), \
            model.converged

    workers = min(fold_parallelism(), k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_fold, range(k)))
    else:
        outcomes = [run_fold(i) for i in range(k)]

    results = [fold for fold, _ in outcomes]
    converged = all(flag for _, flag in outcomes)
    return EvalReport(
        folds=results,
        mean_rmse=float(np.mean([fold.rmse for fold in results])),
        mean_train_seconds=float(
            np.mean([fold.train_seconds for fold in results])
        ),
        seed=seed,
        config={
            "k": k,
            "backend": config.backend,
            "sampling": config.sampling,
            "dynamic_ordering": config.dynamic_ordering,
            "temporal_stage": not no_temporal_stage,
        },
        converged=converged,
    )
