"""Gridded annual climate panel: CSV ingestion, climatologies, year splits.

A :class:`Dataset` is a rectangular panel of annual records, one 7-vector
per grid cell per year.  Values are stored as a ``(n_cells, n_years, 7)``
array whose last axis follows :data:`VARIABLES`.  Cells are sorted by
``(lat, lon)`` so that ingestion does not depend on row order; a cell's
``cell_id`` is its index in that order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

from .errors import (
    BadHeader,
    DuplicateRecord,
    EmptyRegion,
    EmptyYearSet,
    InvalidHorizon,
    MalformedRow,
    NonFiniteValue,
    OffGrid,
    RaggedPanel,
    UnassignedCell,
)


class ClimateVariable(str, Enum):
    AIR_TEMPERATURE = "air_temperature"  # degC
    PRECIPITABLE_WATER = "precipitable_water"  # kg/m^2
    PRECIPITATION = "precipitation"  # mm/day
    RELATIVE_HUMIDITY = "relative_humidity"  # %
    SEA_LEVEL_PRESSURE = "sea_level_pressure"  # hPa
    ZONAL_WIND = "zonal_wind"  # m/s
    MERIDIONAL_WIND = "meridional_wind"  # m/s

    @property
    def index(self) -> int:
        return VARIABLES.index(self)

    @classmethod
    def parse(cls, name: "str | ClimateVariable") -> "ClimateVariable":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown climate variable {name!r}; expected one of "
                + ", ".join(v.value for v in cls)
            ) from None


VARIABLES: tuple[ClimateVariable, ...] = tuple(ClimateVariable)
VARIABLE_NAMES: tuple[str, ...] = tuple(v.value for v in VARIABLES)
N_VARIABLES = len(VARIABLES)

CSV_HEADER: tuple[str, ...] = ("lat", "lon", "year") + VARIABLE_NAMES

DEFAULT_RESOLUTION = 2.5

_LATTICE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable rectangular panel of annual climate records.

    Attributes
    ----------
    lat, lon : (n_cells,) arrays
        Cell centres; ``lon`` normalised to ``[0, 360)``.
    years : (n_years,) int array
        Consecutive calendar years ``first_year .. last_year``.
    values : (n_cells, n_years, 7) array
        ``values[c, t, v]`` is variable ``VARIABLES[v]`` at cell ``c`` in
        ``years[t]``.
    """

    lat: np.ndarray
    lon: np.ndarray
    years: np.ndarray
    values: np.ndarray
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        lat = np.asarray(self.lat, dtype=float)
        lon = np.mod(np.asarray(self.lon, dtype=float), 360.0)
        years = np.asarray(self.years, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (lat.size, years.size, N_VARIABLES):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"({lat.size}, {years.size}, {N_VARIABLES})"
            )
        if years.size and np.any(np.diff(years) != 1):
            raise ValueError("years must be consecutive and increasing")
        for arr in (lat, lon, years, values):
            arr.setflags(write=False)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", values)

    @property
    def n_cells(self) -> int:
        return self.lat.size

    @property
    def n_years(self) -> int:
        return self.years.size

    @property
    def year_range(self) -> tuple[int, int]:
        return int(self.years[0]), int(self.years[-1])

    @property
    def n_records(self) -> int:
        return self.n_cells * self.n_years

    def year_indices(self, years: Iterable[int]) -> np.ndarray:
        years = np.asarray(list(years), dtype=np.int64)
        idx = years - self.years[0]
        bad = (idx < 0) | (idx >= self.n_years)
        if np.any(bad):
            raise ValueError(f"years outside {self.year_range}: {years[bad].tolist()}")
        return idx

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
            and np.array_equal(self.years, other.years)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _on_lattice(x: float, resolution: float) -> bool:
    q = x / resolution
    return abs(q - round(q)) <= _LATTICE_TOL


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"column {column!r}: non-finite value {text!r}", line)
    return value


def ingest_csv(source, resolution: float = DEFAULT_RESOLUTION) -> Dataset:
    """Read and validate a climate CSV.

    ``source`` may be a path, a binary or text stream, or raw ``bytes``.
    The header must equal :data:`CSV_HEADER` exactly.  Raises a subclass of
    :class:`~climregion.errors.IngestError` on any violation.
    """
    if isinstance(source, (bytes, bytearray)):
        text = io.StringIO(bytes(source).decode("utf-8"), newline="")
    elif isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            return _ingest_text(fh, resolution)
    elif isinstance(source, io.TextIOBase):
        text = source
    else:
        text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    return _ingest_text(text, resolution)


def _ingest_text(fh: TextIO, resolution: float) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeader("empty input; expected header " + ",".join(CSV_HEADER), 1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise BadHeader("expected header " + ",".join(CSV_HEADER), 1)

    records: dict[tuple[float, float, int], np.ndarray] = {}
    first_line: dict[tuple[float, float, int], int] = {}
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(CSV_HEADER):
            raise MalformedRow(f"expected {len(CSV_HEADER)} columns, got {len(row)}", line)
        lat = _parse_float(row[0], "lat", line)
        lon = _parse_float(row[1], "lon", line)
        try:
            year = int(row[2])
        except ValueError:
            raise MalformedRow(f"column 'year': cannot parse {row[2]!r} as an integer", line) from None
        vals = np.array(
            [_parse_float(t, name, line) for t, name in zip(row[3:], VARIABLE_NAMES)]
        )
        if not -90.0 <= lat <= 90.0:
            raise OffGrid(f"latitude {lat} outside [-90, 90]", line)
        lon = lon % 360.0
        if not (_on_lattice(lat, resolution) and _on_lattice(lon, resolution)):
            raise OffGrid(f"({lat}, {lon}) is not on the {resolution} degree lattice", line)
        # snap to the lattice so that textual variants ("7.5" / "7.50") coincide
        lat = round(lat / resolution) * resolution
        lon = (round(lon / resolution) * resolution) % 360.0
        key = (lat, lon, year)
        if key in records:
            raise DuplicateRecord(
                f"cell ({lat}, {lon}) year {year} already given on line {first_line[key]}", line
            )
        records[key] = vals
        first_line[key] = line

    if not records:
        raise RaggedPanel("no data rows")

    cells = sorted({(la, lo) for la, lo, _ in records})
    years = sorted({y for _, _, y in records})
    y0, y1 = years[0], years[-1]
    year_axis = np.arange(y0, y1 + 1)
    values = np.empty((len(cells), year_axis.size, N_VARIABLES))
    for c, (la, lo) in enumerate(cells):
        for t, y in enumerate(year_axis):
            vals = records.get((la, lo, int(y)))
            if vals is None:
                raise RaggedPanel(f"missing record for cell ({la}, {lo}) year {int(y)}")
            values[c, t] = vals
    lat = np.array([c[0] for c in cells])
    lon = np.array([c[1] for c in cells])
    return Dataset(lat=lat, lon=lon, years=year_axis, values=values, resolution=resolution)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(ds: Dataset, fh: TextIO) -> None:
    """Write ``ds`` in the ingestion schema (cell-major, year-minor order)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in range(ds.n_cells):
        for t in range(ds.n_years):
            w.writerow(
                [_fmt(ds.lat[c]), _fmt(ds.lon[c]), int(ds.years[t])]
                + [_fmt(v) for v in ds.values[c, t]]
            )


def _resolve_years(ds: Dataset, years) -> np.ndarray:
    if years is None:
        return np.arange(ds.n_years)
    years = list(years)
    if not years:
        raise EmptyYearSet("year set is empty")
    return ds.year_indices(years)


def long_term_means(ds: Dataset, years=None) -> np.ndarray:
    """Per-cell mean of every variable over ``years`` (default: all years).

    Returns an ``(n_cells, 7)`` array; row ``c`` is the climatology of cell
    ``c``.
    """
    idx = _resolve_years(ds, years)
    return ds.values[:, idx, :].mean(axis=1)


def write_climatology_csv(ds: Dataset, means: np.ndarray, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("lat", "lon") + VARIABLE_NAMES)
    for c in range(ds.n_cells):
        w.writerow([_fmt(ds.lat[c]), _fmt(ds.lon[c])] + [_fmt(v) for v in means[c]])


def split_years(ds: Dataset, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out the last ``p`` years; train on the first ``j - p``.

    At least two training years are required, so ``1 <= p <= j - 2``.
    """
    j = ds.n_years
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= j - 2:
        raise InvalidHorizon(
            f"prediction horizon p={p} invalid for {j} years (need 1 <= p <= {j - 2})"
        )
    return ds.years[: j - p].copy(), ds.years[j - p:].copy()


def regional_annual_means(ds: Dataset, labels, years=None) -> np.ndarray:
    """Mean over each region's cells of every variable, for every year.

    ``labels`` is a length-``n_cells`` integer array (or a
    :class:`~climregion.clustering.RegionAssignment`).  Returns an array of
    shape ``(n_regions, len(years), 7)`` indexed ``[region, year, variable]``.
    """
    labels, n_regions = _labels_and_count(labels)
    if labels.size != ds.n_cells:
        raise UnassignedCell(f"assignment covers {labels.size} cells, dataset has {ds.n_cells}")
    if np.any(labels < 0):
        raise UnassignedCell(f"cells without a region: {np.flatnonzero(labels < 0).tolist()}")
    idx = _resolve_years(ds, years)
    block = ds.values[:, idx, :]
    out = np.empty((n_regions, idx.size, N_VARIABLES))
    for r in range(n_regions):
        members = labels == r
        if not members.any():
            raise EmptyRegion(f"region {r} has no cells")
        out[r] = block[members].mean(axis=0)
    return out


def _labels_and_count(labels) -> tuple[np.ndarray, int]:
    if hasattr(labels, "labels") and hasattr(labels, "region_count"):
        return np.asarray(labels.labels), int(labels.region_count)
    labels = np.asarray(labels, dtype=np.int64)
    return labels, int(labels.max()) + 1 if labels.size else 0
