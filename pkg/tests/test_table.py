import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from airshed.errors import (
    EmptyResult,
    HeaderMismatch,
    NonNumericField,
    NullCellsPresent,
    RaggedRow,
    TooFewRows,
)
from airshed.raster import POLLUTANTS
from airshed.table import FeatureTable, drop_null_rows, read_table, standardize, write_table

HEADER = "region,NO2,SO2,CO,AER_AI,O3,HCHO\n"
nan = math.nan


def table(rows, names=None, columns=("x",)):
    rows = np.asarray(rows, dtype=float)
    names = names or [f"r{i}" for i in range(len(rows))]
    return FeatureTable(names, columns, rows)


class TestDropNulls:
    def test_drops_row_with_null(self):
        t = FeatureTable(["a", "b", "c"], ("NO2", "CO"), [[1, 2], [3, nan], [5, 6]])
        clean, dropped = drop_null_rows(t)
        assert clean.row_names == ("a", "c")
        assert dropped == ["b"]
        assert clean.cells.tolist() == [[1, 2], [5, 6]]

    def test_no_nulls(self):
        t = FeatureTable(["a", "b"], ("NO2",), [[1], [2]])
        clean, dropped = drop_null_rows(t)
        assert dropped == [] and np.array_equal(clean.cells, t.cells)

    def test_everything_null(self):
        with pytest.raises(EmptyResult):
            drop_null_rows(FeatureTable(["a"], ("NO2",), [[nan]]))


class TestStandardize:
    def test_one_two_three(self):
        z = standardize(table([[1], [2], [3]])).cells[:, 0]
        expected = [-math.sqrt(1.5), 0.0, math.sqrt(1.5)]
        assert np.allclose(z, expected, rtol=0, atol=1e-12)
        assert abs(z[2] - 1.224744871) < 1e-9

    def test_fixed_point(self):
        col = np.array([-1.0, 1.0, -1.0, 1.0])
        z = standardize(table(col[:, None])).cells[:, 0]
        assert np.max(np.abs(z - col)) <= 1e-12

    def test_constant_column(self):
        t = standardize(table([[5, 1], [5, 2], [5, 3]], columns=("a", "b")))
        assert t.cells[:, 0].tolist() == [0, 0, 0]
        assert len(t.warnings) == 1 and "a" in t.warnings[0]
        assert t.column_stats[0].tolist() == [5.0, 0.0]

    def test_records_stats(self):
        t = standardize(table([[1], [2], [3]]))
        assert t.standardized
        mean, sd = t.column_stats[0]
        assert mean == 2.0 and abs(sd - math.sqrt(2 / 3)) < 1e-15

    def test_nulls_rejected(self):
        with pytest.raises(NullCellsPresent):
            standardize(table([[1], [nan]]))

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            standardize(table([[1]]))


matrices = hnp.arrays(
    np.float64,
    st.tuples(st.integers(2, 40), st.integers(1, 6)),
    elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
)


@settings(max_examples=150, deadline=None)
@given(matrices)
def test_standardize_moments_and_idempotence(x):
    t = standardize(table(x, columns=tuple(f"c{j}" for j in range(x.shape[1]))))
    z = t.cells
    for j in range(x.shape[1]):
        col = z[:, j]
        assert abs(math.fsum(col) / len(col)) <= 1e-12
        if t.column_stats[j, 1] > 0:
            assume(np.ptp(x[:, j]) > 1e-9 * max(1.0, np.max(np.abs(x[:, j]))))
            sd = math.sqrt(math.fsum((col - math.fsum(col) / len(col)) ** 2) / len(col))
            assert abs(sd - 1) <= 1e-12
    again = standardize(t)
    assert np.max(np.abs(again.cells - z)) <= 1e-12


class TestCsv:
    def test_published_row(self):
        t = read_table(HEADER + "Anantapur,5.97E-05,4.64E-05,0.035942,-1.11059,0.116844,0.000145\n")
        assert t.row_names == ("Anantapur",)
        assert t.cells[0].tolist() == [5.97e-05, 4.64e-05, 0.035942, -1.11059, 0.116844, 0.000145]

    def test_empty_field_null(self):
        t = read_table(HEADER + "X,1,,3,4,5,6\n")
        assert np.isnan(t.cells[0, 1])
        assert t.cells[0, [0, 2, 3, 4, 5]].tolist() == [1, 3, 4, 5, 6]

    def test_short_header(self):
        with pytest.raises(HeaderMismatch):
            read_table("region,NO2,SO2\nA,1,2\n")

    def test_short_header_allowed_when_open(self):
        t = read_table("region,NO2,SO2\nA,1,2\n", columns=None)
        assert t.columns == ("NO2", "SO2")

    def test_out_of_order_rejected_when_open(self):
        with pytest.raises(HeaderMismatch):
            read_table("region,SO2,NO2\nA,1,2\n", columns=None)

    def test_ragged(self):
        with pytest.raises(RaggedRow):
            read_table(HEADER + "X,1,2,3\n")

    def test_non_numeric(self):
        with pytest.raises(NonNumericField):
            read_table(HEADER + "X,1,abc,3,4,5,6\n")

    def test_write_then_read(self):
        text = (
            HEADER
            + "Andaman Islands,4.28e-05,-4.73e-08,0.037036,-1.27958,0.117128,9.89e-05\n"
            + '"Jammu, Kashmir",1,,3,4,5,6\n'
        )
        assert write_table(read_table(text)) == text


@settings(max_examples=80, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.text("abcdefghij ,\"-", min_size=1, max_size=8),
            st.lists(st.one_of(st.none(), st.floats(-1e9, 1e9, allow_nan=False, allow_subnormal=False)), min_size=6, max_size=6),
        ),
        min_size=1,
        max_size=10,
        unique_by=lambda r: r[0],
    )
)
def test_csv_roundtrip(rows):
    assume(all(name.strip() == name for name, _ in rows))
    cells = [[nan if v is None else float(format(v, ".12g")) for v in vals] for _, vals in rows]
    t = FeatureTable([r[0] for r in rows], POLLUTANTS, cells)
    back = read_table(write_table(t))
    assert back.row_names == t.row_names
    assert np.array_equal(np.isnan(back.cells), np.isnan(t.cells))
    assert np.array_equal(np.nan_to_num(back.cells), np.nan_to_num(t.cells))
    assert write_table(back) == write_table(t)
