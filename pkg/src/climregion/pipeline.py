"""Regionalize, train one model per region, predict every cell, score.

Training rows for a region are its annual regional means over the training
years: the six non-target variables (optionally plus the calendar year) as
features and the target as label.  At prediction time each cell's own
observations for a test year go through its region's model.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

import numpy as np

from . import clustering
from .clustering import RegionAssignment
from .errors import EmptyPredictions, MissingTestRecord, RegionTooSmall, UnassignedCell
from .folds import derive_seed
from .grid_store import (
    VARIABLES,
    ClimateVariable,
    Dataset,
    long_term_means,
    regional_annual_means,
    split_years,
)
from .regressors import (
    CvReport,
    cv_rmse,
    grid_search,
    model_from_dict,
    ols_fit,
    svr_train,
)

YEAR_FEATURE = "year"


class Method(str, Enum):
    EM_SVR = "EM_SVR"
    KM_LR = "KM_LR"


@dataclass(frozen=True)
class PipelineConfig:
    method: Method = Method.EM_SVR
    target: ClimateVariable = ClimateVariable.AIR_TEMPERATURE
    p: int = 1
    seed: int = 0
    k_override: int | None = None
    include_year_feature: bool = False
    svr_grid: tuple | None = None  # None: default_svr_grid(d)
    folds: int = 10
    k_max: int = 12
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "target", ClimateVariable.parse(self.target))
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def feature_layout(self) -> tuple[str, ...]:
        names = tuple(v.value for v in VARIABLES if v != self.target)
        return names + ((YEAR_FEATURE,) if self.include_year_feature else ())


@dataclass(frozen=True, eq=False)
class RegionModels:
    assignment: RegionAssignment
    per_region: dict
    feature_layout: tuple[str, ...]
    target: ClimateVariable
    cv_reports: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target": self.target.value,
            "feature_layout": list(self.feature_layout),
            "regions": {
                str(r): {
                    "model": m.to_dict(),
                    "cv": _cv_to_dict(self.cv_reports.get(r)),
                }
                for r, m in sorted(self.per_region.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict, assignment: RegionAssignment) -> "RegionModels":
        regions = doc["regions"]
        return cls(
            assignment=assignment,
            per_region={int(r): model_from_dict(v["model"]) for r, v in regions.items()},
            feature_layout=tuple(doc["feature_layout"]),
            target=ClimateVariable.parse(doc["target"]),
            cv_reports={int(r): _cv_from_dict(v["cv"]) for r, v in regions.items() if v.get("cv")},
        )


def _cv_to_dict(report: CvReport | None):
    if report is None:
        return None
    return {
        "per_fold_rmse": list(report.per_fold_rmse),
        "mean_rmse": report.mean_rmse,
        "std_rmse": report.std_rmse,
        "chosen_hyperparams": report.chosen_hyperparams,
    }


def _cv_from_dict(doc) -> CvReport:
    return CvReport(tuple(doc["per_fold_rmse"]), doc["mean_rmse"], doc["std_rmse"],
                    dict(doc["chosen_hyperparams"]))


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """One entry per (test cell, test year), cell-major."""

    cell: np.ndarray
    year: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray
    target: ClimateVariable

    def __len__(self):
        return self.cell.size

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.predicted - self.actual)


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    per_region_rmse: dict
    overall_rmse: float
    per_region_correlation: dict  # None where undefined
    region_entries: dict
    region_sizes: dict
    per_cell_abs_error: np.ndarray
    method: str = ""


# --- Algorithm steps ---------------------------------------------------------

def regionalize(ds: Dataset, cfg: PipelineConfig) -> tuple[RegionAssignment, dict]:
    """Cluster cell climatologies over the training years.

    Returns the (compacted) assignment and the serialized cluster model.
    Components that end up owning no cell are dropped from the numbering;
    ``model["region_of_component"]`` maps component index to region id.
    """
    train_years, _ = split_years(ds, cfg.p)
    clim = long_term_means(ds, train_years)
    if cfg.k_override is not None:
        k = int(cfg.k_override)
    else:
        k = clustering.select_k_cv(clim, k_max=min(cfg.k_max, clim.shape[0] - 1),
                                   folds=cfg.folds, seed=cfg.seed)
    if ds.n_cells == 1:
        if k != 1:
            raise clustering.TooFewPoints("a single cell supports only k=1")
        assignment = RegionAssignment(np.zeros(1, dtype=np.int64), 1)
        doc = {"kind": "single_cell", "k": 1}
    elif cfg.method is Method.EM_SVR:
        model = clustering.em_fit(clim, k, seed=cfg.seed)
        assignment = clustering.assign_hard(clim, model)
        doc = model.to_dict()
    else:
        model = clustering.kmeans_fit(clim, k, seed=cfg.seed)
        assignment = clustering.kmeans_assign(clim, model)
        doc = model.to_dict()
    compact = assignment.compact()
    remap = {int(c): int(r) for c, r in zip(assignment.labels, compact.labels)}
    doc["region_of_component"] = [remap.get(j) for j in range(assignment.region_count)]
    return compact, doc


def _features(values: np.ndarray, years: np.ndarray, cfg_layout, target: ClimateVariable):
    """Feature matrix from ``(..., 7)`` values and matching years."""
    cols = [v.index for v in VARIABLES if v != target]
    X = values[..., cols]
    if YEAR_FEATURE in cfg_layout:
        X = np.concatenate([X, np.broadcast_to(years, X.shape[:-1])[..., None]], axis=-1)
    return X


def _train_region(r, X, y, cfg: PipelineConfig):
    seed = derive_seed(cfg.seed, r)
    if cfg.method is Method.EM_SVR:
        params, report = grid_search(X, y, cfg.svr_grid, folds=cfg.folds, seed=seed)
        return svr_train(X, y, **params), report
    report = cv_rmse(X, y, ols_fit, folds=cfg.folds, seed=seed)
    return ols_fit(X, y), report


def build_region_models(ds: Dataset, assignment: RegionAssignment,
                        cfg: PipelineConfig) -> RegionModels:
    """Fit one regressor per region on its training-year regional means."""
    train_years, _ = split_years(ds, cfg.p)
    if train_years.size < max(10, cfg.folds):
        raise RegionTooSmall(
            f"{train_years.size} training years cannot support {max(10, cfg.folds)}-fold CV")
    means = regional_annual_means(ds, assignment, train_years)
    X_all = _features(means, train_years, cfg.feature_layout, cfg.target)
    y_all = means[..., cfg.target.index]

    regions = range(assignment.region_count)
    work = lambda r: _train_region(r, X_all[r], y_all[r], cfg)  # noqa: E731
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            results = list(pool.map(work, regions))
    else:
        results = [work(r) for r in regions]
    return RegionModels(
        assignment=assignment,
        per_region={r: res[0] for r, res in zip(regions, results)},
        feature_layout=cfg.feature_layout,
        target=cfg.target,
        cv_reports={r: res[1] for r, res in zip(regions, results)},
    )


def predict_cells(ds: Dataset, models: RegionModels, test_years) -> PredictionSet:
    """Apply each cell's region model to the cell's own test-year data."""
    test_years = np.asarray(test_years, dtype=np.int64)
    labels = models.assignment.labels
    if labels.size != ds.n_cells:
        raise UnassignedCell(f"assignment covers {labels.size} cells, dataset has {ds.n_cells}")
    try:
        t_idx = ds.year_indices(test_years)
    except ValueError as exc:
        raise MissingTestRecord(str(exc)) from None
    block = ds.values[:, t_idx, :]
    X = _features(block, test_years, models.feature_layout, models.target)
    predicted = np.empty((ds.n_cells, t_idx.size))
    for r in np.unique(labels):
        if int(r) not in models.per_region:
            raise MissingTestRecord(f"no model for region {int(r)}")
        members = labels == r
        rows = X[members].reshape(-1, X.shape[-1])
        predicted[members] = models.per_region[int(r)].predict(rows).reshape(-1, t_idx.size)
    return PredictionSet(
        cell=np.repeat(np.arange(ds.n_cells), t_idx.size),
        year=np.tile(test_years, ds.n_cells),
        predicted=predicted.ravel(),
        actual=block[..., models.target.index].ravel(),
        target=models.target,
    )


def pearson(a, b) -> float | None:
    """Pearson r, or ``None`` when either side has zero variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2:
        return None
    da = a - a.mean()
    db = b - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        return None
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def evaluate(preds: PredictionSet, assignment: RegionAssignment, method: str = "") -> EvaluationReport:
    """Per-region and overall RMSE plus per-region Pearson correlation."""
    if len(preds) == 0:
        raise EmptyPredictions("no predictions to evaluate")
    region = assignment.labels[preds.cell]
    err = preds.predicted - preds.actual
    sizes = assignment.sizes()
    per_rmse, per_corr, entries, region_sizes = {}, {}, {}, {}
    for r in np.unique(region):
        m = region == r
        r = int(r)
        per_rmse[r] = float(math.sqrt(np.mean(err[m] ** 2)))
        per_corr[r] = pearson(preds.predicted[m], preds.actual[m])
        entries[r] = int(m.sum())
        region_sizes[r] = int(sizes[r])
    return EvaluationReport(
        per_region_rmse=per_rmse,
        overall_rmse=float(math.sqrt(np.mean(err ** 2))),
        per_region_correlation=per_corr,
        region_entries=entries,
        region_sizes=region_sizes,
        per_cell_abs_error=np.abs(err),
        method=method,
    )


@dataclass(frozen=True, eq=False)
class PipelineResult:
    assignment: RegionAssignment
    cluster_model: dict
    models: RegionModels
    predictions: PredictionSet
    report: EvaluationReport


def run(ds: Dataset, cfg: PipelineConfig) -> PipelineResult:
    """The whole procedure for one method: regions, models, predictions, scores."""
    _, test_years = split_years(ds, cfg.p)
    assignment, cluster_model = regionalize(ds, cfg)
    models = build_region_models(ds, assignment, cfg)
    preds = predict_cells(ds, models, test_years)
    report = evaluate(preds, assignment, cfg.method.value)
    return PipelineResult(assignment, cluster_model, models, preds, report)


# --- method comparison -------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    region_label: str
    em_svm_rmse: float
    km_lr_rmse: float
    overlap_fraction: float


@dataclass(frozen=True, eq=False)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    first: PipelineResult
    second: PipelineResult

    @property
    def overall(self) -> ComparisonRow:
        return self.rows[-1]


def match_regions(a: RegionAssignment, b: RegionAssignment) -> dict[int, tuple[int, float]]:
    """For each region of ``a``, the region of ``b`` sharing the most cells
    (ties: lowest id) and the shared fraction of the ``a`` region."""
    table = np.zeros((a.region_count, b.region_count), dtype=np.int64)
    np.add.at(table, (a.labels, b.labels), 1)
    out = {}
    for r in range(a.region_count):
        size = table[r].sum()
        if size == 0:
            continue
        m = int(np.argmax(table[r]))
        out[r] = (m, float(table[r, m] / size))
    return out


def compare_methods(ds: Dataset, cfg_first: PipelineConfig, cfg_second: PipelineConfig,
                    labels: dict | None = None) -> Comparison:
    """Run both pipelines and line up their per-region RMSE.

    Rows follow the first pipeline's regions (normally EM+SVR), each matched
    to the second pipeline's region of largest cell overlap; the last row,
    labelled ``overall``, holds the overall RMSEs and overlap 1.
    ``labels`` optionally names the first pipeline's regions.
    """
    if (cfg_first.target, cfg_first.p, cfg_first.seed) != (cfg_second.target, cfg_second.p, cfg_second.seed):
        raise ValueError("compared configurations must share target, p and seed")
    first = run(ds, cfg_first)
    second = run(ds, cfg_second)
    matches = match_regions(first.assignment, second.assignment)
    rows = []
    for r, (m, frac) in sorted(matches.items()):
        label = (labels or {}).get(r, f"R{r}")
        rows.append(ComparisonRow(label, first.report.per_region_rmse[r],
                                  second.report.per_region_rmse[m], frac))
    rows.append(ComparisonRow("overall", first.report.overall_rmse,
                              second.report.overall_rmse, 1.0))
    return Comparison(tuple(rows), first, second)


# --- CSV exports --------------------------------------------------------------

def _num(x) -> str:
    return "" if x is None else repr(float(x))


def write_report_csv(report: EvaluationReport, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("region_id", "region_size", "rmse", "correlation"))
    for r in sorted(report.per_region_rmse):
        w.writerow([r, report.region_sizes[r], _num(report.per_region_rmse[r]),
                    _num(report.per_region_correlation[r])])


def write_predictions_csv(ds: Dataset, preds: PredictionSet, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("lat", "lon", "year", "predicted", "actual", "abs_error"))
    for c, y, p, a, e in zip(preds.cell, preds.year, preds.predicted, preds.actual, preds.abs_error):
        w.writerow([_num(ds.lat[c]), _num(ds.lon[c]), int(y), _num(p), _num(a), _num(e)])


def write_comparison_csv(comp: Comparison, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("region_label", "em_svm_rmse", "km_lr_rmse", "overlap_fraction"))
    for row in comp.rows:
        w.writerow([row.region_label, _num(row.em_svm_rmse), _num(row.km_lr_rmse),
                    _num(row.overlap_fraction)])
