"""Labelled synthetic climate panels and the adjusted Rand index.

The default generator plants seven climate regions whose means are the EM
cluster centroids reported for the Indian 2.5 degree grid (air temperature,
precipitable water, precipitation, relative humidity, sea-level pressure,
zonal and meridional wind).  Each cell draws its own climatology around its
region's mean, then every year adds Gaussian anomalies.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import TextIO

import numpy as np
from scipy.special import comb

from .errors import InvalidSpec, KeyMismatch
from .grid_store import (
    DEFAULT_RESOLUTION,
    N_VARIABLES,
    ClimateVariable,
    Dataset,
)

# rows follow VARIABLES: air_temperature, precipitable_water, precipitation,
# relative_humidity, sea_level_pressure, zonal_wind, meridional_wind
TABLE1_CENTROIDS: dict[str, tuple[float, ...]] = {
    "Montanenew": (12.44, 18.86, 4.8, 81.96, 1011.07, 0.69, 1.02),
    "Semi Arid": (27.04, 41.32, 3.1, 76.73, 1008.87, 0.94, 1.63),
    "Tropical Wet and Dry": (25.79, 29.19, 2.57, 53.05, 1008.08, 0.57, -0.36),
    "Arid": (25.81, 22.02, 0.67, 35.19, 1007.8, 1.1, 0.88),
    "Montane": (-2.54, 6.31, 2.36, 78.81, 1015.22, 2.99, 1.82),
    "Tropical Wet": (26.83, 38.01, 3.03, 75.51, 1009.76, 2.67, -1.01),
    "Humid Sub Tropical": (24.8, 37.61, 6.4, 74.5, 1009.43, 0.69, 0.54),
}

# sums to the 169 cells of the 13 x 13 window, lat 7.5-37.5 N, lon 67.5-97.5 E
TABLE1_CELL_COUNTS: dict[str, int] = {
    "Montanenew": 12,
    "Semi Arid": 30,
    "Tropical Wet and Dry": 34,
    "Arid": 20,
    "Montane": 18,
    "Tropical Wet": 25,
    "Humid Sub Tropical": 30,
}

DEFAULT_SD_FRACTION = 0.25
INDIA_ORIGIN = (7.5, 67.5)
INDIA_COLUMNS = 13


@dataclass(frozen=True)
class Component:
    mean: tuple[float, ...]
    sd: tuple[float, ...]
    cells: int
    name: str = ""


@dataclass(frozen=True)
class TargetRelation:
    """How the target column is rewritten from the other six columns.

    ``kind``: ``"none"``, ``"linear"`` (``intercept + sum(coef * x)``) or
    ``"sinusoidal"`` (``intercept + amplitude * sin(2 pi frequency x_p)``
    for predictor ``x_p``).
    """

    kind: str = "none"
    target: str = ClimateVariable.AIR_TEMPERATURE.value
    coefficients: dict = field(default_factory=dict)
    intercept: float = 0.0
    amplitude: float = 1.0
    frequency: float = 1.0
    predictor: str = ClimateVariable.PRECIPITATION.value


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic panel.

    ``year_sd`` is the per-variable sd of independent cell-year anomalies
    (``None``: equal to each component's ``sd``).  ``regional_year_sd`` adds
    an anomaly shared by all cells of a component in a given year
    (default 0).  ``noise_sigma`` is observation noise on a rewritten target.
    """

    components: tuple[Component, ...]
    years: tuple[int, int] = (1948, 2012)
    year_sd: tuple[float, ...] | None = None
    regional_year_sd: tuple[float, ...] = (0.0,) * N_VARIABLES
    target_relation: TargetRelation = TargetRelation()
    noise_sigma: float = 0.0
    seed: int = 0
    resolution: float = DEFAULT_RESOLUTION
    origin: tuple[float, float] = INDIA_ORIGIN
    columns: int = INDIA_COLUMNS

    @property
    def n_cells(self) -> int:
        return sum(c.cells for c in self.components)

    def validate(self) -> None:
        if not self.components:
            raise InvalidSpec("at least one component is required")
        for i, c in enumerate(self.components):
            if len(c.mean) != N_VARIABLES or len(c.sd) != N_VARIABLES:
                raise InvalidSpec(f"component {i}: mean and sd need {N_VARIABLES} entries")
            if c.cells < 1:
                raise InvalidSpec(f"component {i}: cell count must be >= 1")
            if any(s < 0 for s in c.sd) or not np.all(np.isfinite(c.mean + c.sd)):
                raise InvalidSpec(f"component {i}: sd must be finite and non-negative")
        if self.years[1] < self.years[0]:
            raise InvalidSpec("years must be [first, last] with first <= last")
        for name, vec in (("year_sd", self.year_sd), ("regional_year_sd", self.regional_year_sd)):
            if vec is not None and (len(vec) != N_VARIABLES or any(s < 0 for s in vec)):
                raise InvalidSpec(f"{name} needs {N_VARIABLES} non-negative entries")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if self.columns < 1:
            raise InvalidSpec("columns must be >= 1")
        rel = self.target_relation
        if rel.kind not in ("none", "linear", "sinusoidal"):
            raise InvalidSpec(f"unknown target relation {rel.kind!r}")
        if rel.kind != "none":
            try:
                target = ClimateVariable.parse(rel.target)
                names = [ClimateVariable.parse(n) for n in rel.coefficients]
                pred = ClimateVariable.parse(rel.predictor)
            except ValueError as exc:
                raise InvalidSpec(str(exc)) from None
            if target in names or (rel.kind == "sinusoidal" and pred == target):
                raise InvalidSpec("the target cannot be its own predictor")
        top = self.origin[0] + ((self.n_cells - 1) // self.columns) * self.resolution
        if top > 90:
            raise InvalidSpec("grid does not fit below the north pole")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    dataset: Dataset
    true_labels: np.ndarray
    generator: GeneratorSpec


def table1_spec(
    seed: int = 0,
    sd_fraction: float = DEFAULT_SD_FRACTION,
    years: tuple[int, int] = (1948, 2012),
    scale_cells: int = 1,
) -> GeneratorSpec:
    """Seven-region spec with the seven reference climate centroids as component means.

    Per-variable sd is ``sd_fraction`` times the sample sd (ddof=1) of that
    variable across the seven centroids.  ``scale_cells`` multiplies every
    component's cell count.
    """
    centroids = np.array(list(TABLE1_CENTROIDS.values()))
    sd = tuple(float(s) for s in sd_fraction * centroids.std(axis=0, ddof=1))
    comps = tuple(
        Component(mean=tuple(TABLE1_CENTROIDS[name]), sd=sd,
                  cells=TABLE1_CELL_COUNTS[name] * scale_cells, name=name)
        for name in TABLE1_CENTROIDS
    )
    return GeneratorSpec(components=comps, years=years, seed=seed,
                         columns=INDIA_COLUMNS * scale_cells)


def sinusoidal_spec(seed: int = 0, cells_per_region: int = 8,
                    regions=("Arid", "Montane", "Humid Sub Tropical"),
                    noise_sigma: float = 0.1) -> GeneratorSpec:
    """Nonlinear benchmark: air temperature = 20 + 2 sin(2 pi precipitation / 4).

    Three tight reference regions; year-to-year variation is mostly shared
    within a region (regional precipitation anomalies have sd 1 mm/day), so
    regional means span the same predictor range as individual cells.
    """
    centroids = np.array(list(TABLE1_CENTROIDS.values()))
    spread = centroids.std(axis=0, ddof=1)
    regional = 0.125 * spread
    regional[ClimateVariable.PRECIPITATION.index] = 1.0
    comps = tuple(
        Component(mean=TABLE1_CENTROIDS[name], sd=tuple(0.05 * spread), cells=cells_per_region,
                  name=name)
        for name in regions
    )
    return GeneratorSpec(
        components=comps,
        year_sd=tuple(0.05 * spread),
        regional_year_sd=tuple(float(v) for v in regional),
        target_relation=TargetRelation("sinusoidal", amplitude=2.0, frequency=0.25,
                                       predictor=ClimateVariable.PRECIPITATION.value,
                                       intercept=20.0),
        noise_sigma=noise_sigma,
        seed=seed,
        columns=6,
    )


def _apply_relation(values: np.ndarray, rel: TargetRelation) -> np.ndarray:
    """Target column implied by ``rel`` from the other columns of ``values``."""
    if rel.kind == "linear":
        out = np.full(values.shape[:-1], float(rel.intercept))
        for name, coef in rel.coefficients.items():
            out = out + float(coef) * values[..., ClimateVariable.parse(name).index]
        return out
    x = values[..., ClimateVariable.parse(rel.predictor).index]
    return rel.intercept + rel.amplitude * np.sin(2.0 * np.pi * rel.frequency * x)


def generate(spec: GeneratorSpec) -> LabeledDataset:
    """Draw a labelled panel; deterministic given ``spec.seed``.

    Cells fill the lattice row-major from ``spec.origin`` (south-west
    corner), ``spec.columns`` cells per row, component by component.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    years = np.arange(spec.years[0], spec.years[1] + 1)
    n_years = years.size
    n = spec.n_cells

    labels = np.repeat(np.arange(len(spec.components)), [c.cells for c in spec.components])
    means = np.array([c.mean for c in spec.components], dtype=float)
    sds = np.array([c.sd for c in spec.components], dtype=float)

    cell_mean = means[labels] + sds[labels] * rng.standard_normal((n, N_VARIABLES))
    year_sd = sds[labels] if spec.year_sd is None else np.broadcast_to(
        np.asarray(spec.year_sd, dtype=float), (n, N_VARIABLES))
    anomalies = year_sd[:, None, :] * rng.standard_normal((n, n_years, N_VARIABLES))
    shared = np.asarray(spec.regional_year_sd, dtype=float) * rng.standard_normal(
        (len(spec.components), n_years, N_VARIABLES))
    values = cell_mean[:, None, :] + anomalies + shared[labels]

    rel = spec.target_relation
    if rel.kind != "none":
        t = ClimateVariable.parse(rel.target).index
        noise = spec.noise_sigma * rng.standard_normal((n, n_years))
        values[:, :, t] = _apply_relation(values, rel) + noise

    row, col = np.divmod(np.arange(n), spec.columns)
    lat = spec.origin[0] + row * spec.resolution
    lon = spec.origin[1] + col * spec.resolution
    ds = Dataset(lat=lat, lon=lon, years=years, values=values, resolution=spec.resolution)
    # Dataset order is (lat, lon) sorted, which row-major placement already is
    labels.setflags(write=False)
    return LabeledDataset(dataset=ds, true_labels=labels, generator=spec)


def write_labels_csv(labeled: LabeledDataset, fh: TextIO) -> None:
    ds = labeled.dataset
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("lat", "lon", "true_region"))
    for c in range(ds.n_cells):
        w.writerow([repr(float(ds.lat[c])), repr(float(ds.lon[c])), int(labeled.true_labels[c])])


# --- JSON spec files -------------------------------------------------------

def spec_to_dict(spec: GeneratorSpec) -> dict:
    rel = spec.target_relation
    return {
        "components": [
            {"name": c.name, "mean": list(c.mean), "sd": list(c.sd), "cells": c.cells}
            for c in spec.components
        ],
        "years": list(spec.years),
        "year_sd": None if spec.year_sd is None else list(spec.year_sd),
        "regional_year_sd": list(spec.regional_year_sd),
        "target_relation": {
            "kind": rel.kind, "target": rel.target, "coefficients": dict(rel.coefficients),
            "intercept": rel.intercept, "amplitude": rel.amplitude,
            "frequency": rel.frequency, "predictor": rel.predictor,
        },
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "resolution": spec.resolution,
        "origin": list(spec.origin),
        "columns": spec.columns,
    }


def spec_from_dict(doc: dict) -> GeneratorSpec:
    try:
        comps = tuple(
            Component(mean=tuple(float(v) for v in c["mean"]),
                      sd=tuple(float(v) for v in c["sd"]),
                      cells=int(c["cells"]), name=str(c.get("name", "")))
            for c in doc["components"]
        )
        rel_doc = doc.get("target_relation") or {}
        rel = TargetRelation(**rel_doc)
        kwargs = {}
        for key in ("noise_sigma", "resolution"):
            if key in doc:
                kwargs[key] = float(doc[key])
        for key in ("seed", "columns"):
            if key in doc:
                kwargs[key] = int(doc[key])
        if "years" in doc:
            kwargs["years"] = tuple(int(y) for y in doc["years"])
        if "origin" in doc:
            kwargs["origin"] = tuple(float(v) for v in doc["origin"])
        if doc.get("year_sd") is not None:
            kwargs["year_sd"] = tuple(float(v) for v in doc["year_sd"])
        if "regional_year_sd" in doc:
            kwargs["regional_year_sd"] = tuple(float(v) for v in doc["regional_year_sd"])
        spec = GeneratorSpec(components=comps, target_relation=rel, **kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"bad generator spec: {exc}") from None
    spec.validate()
    return spec


def load_spec(path) -> GeneratorSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"cannot read spec {path}: {exc}") from None
    return spec_from_dict(doc)


def with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return replace(spec, seed=seed)


# --- adjusted Rand index ---------------------------------------------------

def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement of two labelings.

    Accepts equal-length sequences or two mappings over the same keys.
    Returns 1.0 when both partitions are trivial and identical.
    """
    if isinstance(a, dict) or isinstance(b, dict):
        if not (isinstance(a, dict) and isinstance(b, dict)) or a.keys() != b.keys():
            raise KeyMismatch("labelings must cover the same keys")
        keys = sorted(a)
        a = [a[key] for key in keys]
        b = [b[key] for key in keys]
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise KeyMismatch(f"labelings have {a.size} and {b.size} items")
    if a.size < 2:
        raise ValueError("ARI needs at least 2 items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = comb(table, 2).sum()
    sum_rows = comb(table.sum(axis=1), 2).sum()
    sum_cols = comb(table.sum(axis=0), 2).sum()
    total = comb(a.size, 2)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
