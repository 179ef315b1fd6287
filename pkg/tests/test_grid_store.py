import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climregion import grid_store, synth
from climregion.errors import (
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
from climregion.grid_store import ClimateVariable, Dataset

from conftest import csv_bytes

ROW = "17.5,77.5,2010,25.0,30.0,3.0,70.0,1009.0,1.0,0.5"


def random_dataset(rng, n_cells, n_years, first_year=2000):
    lat = 7.5 + 2.5 * np.arange(n_cells)
    lon = np.full(n_cells, 77.5)
    values = rng.normal(size=(n_cells, n_years, 7)) * 10 + 50
    return Dataset(lat, lon, np.arange(first_year, first_year + n_years), values)


class TestClimateVariable:
    def test_seven_members_in_canonical_order(self):
        assert len(grid_store.VARIABLES) == 7
        assert grid_store.VARIABLE_NAMES == (
            "air_temperature", "precipitable_water", "precipitation", "relative_humidity",
            "sea_level_pressure", "zonal_wind", "meridional_wind")
        assert ClimateVariable.SEA_LEVEL_PRESSURE.index == 4

    def test_parse_rejects_unknown(self):
        with pytest.raises(ValueError):
            ClimateVariable.parse("atmospheric_pressure")


class TestIngest:
    def test_minimal_row(self):
        ds = grid_store.ingest_csv(csv_bytes([ROW]))
        assert ds.n_cells == 1 and ds.n_records == 1
        assert ds.year_range == (2010, 2010)
        np.testing.assert_array_equal(ds.values[0, 0], [25, 30, 3, 70, 1009, 1, 0.5])

    def test_duplicate_row(self):
        with pytest.raises(DuplicateRecord) as exc:
            grid_store.ingest_csv(csv_bytes([ROW, ROW]))
        assert exc.value.line == 3

    def test_crlf_and_text_stream(self):
        ds = grid_store.ingest_csv(io.StringIO(csv_bytes([ROW], newline="\r\n").decode()))
        assert ds.n_records == 1

    def test_table1_file_counts(self, tmp_path, table1_labeled):
        path = tmp_path / "t1.csv"
        with open(path, "w", newline="") as fh:
            grid_store.write_csv(table1_labeled.dataset, fh)
        ds = grid_store.ingest_csv(path)
        assert ds.n_cells == 13 * 13
        assert ds.n_records == 169 * 65
        assert ds == table1_labeled.dataset

    @pytest.mark.parametrize("row, error", [
        ("17.5,77.5,2010,25.0,30.0,3.0,70.0,1009.0,1.0", MalformedRow),
        ("17.5,77.5,2010,abc,30.0,3.0,70.0,1009.0,1.0,0.5", MalformedRow),
        ("17.5,77.5,20x0,25.0,30.0,3.0,70.0,1009.0,1.0,0.5", MalformedRow),
        ("17.5,77.5,2010,nan,30.0,3.0,70.0,1009.0,1.0,0.5", NonFiniteValue),
        ("17.5,77.5,2010,25.0,inf,3.0,70.0,1009.0,1.0,0.5", NonFiniteValue),
        ("17.6,77.5,2010,25.0,30.0,3.0,70.0,1009.0,1.0,0.5", OffGrid),
        ("92.5,77.5,2010,25.0,30.0,3.0,70.0,1009.0,1.0,0.5", OffGrid),
    ])
    def test_bad_rows(self, row, error):
        with pytest.raises(error) as exc:
            grid_store.ingest_csv(csv_bytes([ROW.replace("2010", "2011"), row]))
        assert exc.value.line == 3

    def test_ragged_panel_names_cell_and_year(self):
        rows = [ROW, ROW.replace("2010", "2011"), ROW.replace("77.5", "80.0")]
        with pytest.raises(RaggedPanel, match=r"\(17.5, 80.0\) year 2011"):
            grid_store.ingest_csv(csv_bytes(rows))

    def test_bad_header_and_empty(self):
        with pytest.raises(BadHeader):
            grid_store.ingest_csv(csv_bytes([ROW], header="lat,lon,year,t"))
        with pytest.raises(BadHeader):
            grid_store.ingest_csv(b"")

    def test_header_only(self):
        with pytest.raises(RaggedPanel):
            grid_store.ingest_csv(csv_bytes([]))

    def test_longitude_normalised(self):
        ds = grid_store.ingest_csv(csv_bytes([ROW.replace("77.5", "-67.5")]))
        assert ds.lon[0] == 292.5

    def test_dataset_is_immutable(self):
        ds = grid_store.ingest_csv(csv_bytes([ROW]))
        with pytest.raises(ValueError):
            ds.values[0, 0, 0] = 1.0

    @settings(max_examples=25, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_row_order_irrelevant(self, rnd):
        rng = np.random.default_rng(7)
        ds = random_dataset(rng, 4, 3)
        buf = io.StringIO()
        grid_store.write_csv(ds, buf)
        header, *rows = buf.getvalue().strip().split("\n")
        rnd.shuffle(rows)
        shuffled = grid_store.ingest_csv(("\n".join([header, *rows]) + "\n").encode())
        assert shuffled == ds


class TestLongTermMeans:
    def test_constant(self):
        values = np.zeros((1, 5, 7))
        values[..., 0] = 25.0
        ds = Dataset([7.5], [70.0], np.arange(2000, 2005), values)
        assert grid_store.long_term_means(ds)[0, 0] == 25.0

    def test_two_points(self):
        values = np.zeros((1, 2, 7))
        values[0, :, 2] = [10.0, 20.0]
        ds = Dataset([7.5], [70.0], [2000, 2001], values)
        assert grid_store.long_term_means(ds)[0, 2] == 15.0

    def test_matches_direct_summation(self, rng):
        ds = random_dataset(rng, 5, 9)
        years = [2001, 2003, 2004, 2008]
        got = grid_store.long_term_means(ds, years)
        for c in range(5):
            for v in range(7):
                total = 0.0
                for y in years:
                    total += ds.values[c, y - 2000, v]
                expected = total / len(years)
                assert abs(got[c, v] - expected) <= 1e-12 * abs(expected)
                vals = [ds.values[c, y - 2000, v] for y in years]
                assert min(vals) <= got[c, v] <= max(vals)

    def test_empty_year_set(self, rng):
        with pytest.raises(EmptyYearSet):
            grid_store.long_term_means(random_dataset(rng, 2, 3), [])

    def test_climatology_export(self, rng):
        ds = random_dataset(rng, 2, 3)
        buf = io.StringIO()
        grid_store.write_climatology_csv(ds, grid_store.long_term_means(ds), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "lat,lon," + ",".join(grid_store.VARIABLE_NAMES)
        assert len(lines) == 3


class TestSplitYears:
    def test_single_final_year_of_65(self):
        ds = Dataset([7.5], [70.0], np.arange(1948, 2013), np.zeros((1, 65, 7)))
        train, test = grid_store.split_years(ds, 1)
        assert train[0] == 1948 and train[-1] == 2011 and train.size == 64
        assert test.tolist() == [2012]

    def test_five_years(self):
        ds = Dataset([7.5], [70.0], np.arange(2000, 2005), np.zeros((1, 5, 7)))
        train, test = grid_store.split_years(ds, 2)
        assert train.tolist() == [2000, 2001, 2002]
        assert test.tolist() == [2003, 2004]

    @pytest.mark.parametrize("p", [0, 4, 5, -1])
    def test_invalid_horizon(self, p):
        ds = Dataset([7.5], [70.0], np.arange(2000, 2005), np.zeros((1, 5, 7)))
        with pytest.raises(InvalidHorizon):
            grid_store.split_years(ds, p)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 80), st.data())
    def test_partition(self, j, data):
        p = data.draw(st.integers(1, j - 2))
        ds = Dataset([7.5], [70.0], np.arange(1900, 1900 + j), np.zeros((1, j, 7)))
        train, test = grid_store.split_years(ds, p)
        assert not set(train) & set(test)
        assert train.size + test.size == j
        assert test.size == p and test[-1] == 1900 + j - 1


class TestRegionalAnnualMeans:
    def test_single_region_is_cross_cell_mean(self, rng):
        ds = random_dataset(rng, 6, 1)
        got = grid_store.regional_annual_means(ds, np.zeros(6, dtype=int))
        np.testing.assert_allclose(got[0, 0], ds.values[:, 0].mean(axis=0), rtol=1e-14)

    def test_singletons(self, rng):
        ds = random_dataset(rng, 2, 4)
        got = grid_store.regional_annual_means(ds, [1, 0])
        np.testing.assert_array_equal(got[0], ds.values[1])
        np.testing.assert_array_equal(got[1], ds.values[0])

    def test_matches_direct_recomputation(self, rng):
        ds = random_dataset(rng, 20, 6)
        labels = rng.permutation(np.arange(20) % 3)
        years = [2001, 2002, 2005]
        got = grid_store.regional_annual_means(ds, labels, years)
        for r in range(3):
            cells = [c for c in range(20) if labels[c] == r]
            for t, y in enumerate(years):
                for v in range(7):
                    expected = sum(ds.values[c, y - 2000, v] for c in cells) / len(cells)
                    assert abs(got[r, t, v] - expected) <= 1e-12 * abs(expected)

    def test_equal_size_regions_commute_with_climatology(self, rng):
        ds = random_dataset(rng, 12, 5)
        labels = np.arange(12) % 4
        regional = grid_store.regional_annual_means(ds, labels)
        clim = grid_store.long_term_means(ds)
        np.testing.assert_allclose(regional.mean(axis=(0, 1)), clim.mean(axis=0), rtol=1e-12)

    def test_errors(self, rng):
        ds = random_dataset(rng, 3, 2)
        with pytest.raises(UnassignedCell):
            grid_store.regional_annual_means(ds, [0, 0])
        with pytest.raises(UnassignedCell):
            grid_store.regional_annual_means(ds, [0, -1, 0])
        with pytest.raises(EmptyRegion):
            grid_store.regional_annual_means(ds, [0, 2, 0])


def test_synthetic_file_passes_ingest(tmp_path):
    lab = synth.generate(synth.table1_spec(seed=11))
    buf = io.StringIO()
    grid_store.write_csv(lab.dataset, buf)
    assert grid_store.ingest_csv(buf.getvalue().encode()) == lab.dataset
