from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxlab.data import (
    SplitSpec,
    TimeSeriesFrame,
    build_panel,
    chronological_split,
    country_delta,
    difference,
    difference_anchor,
    difference_frame,
    invert_difference,
    lagged_design,
    load_csv,
    minmax_fit,
    minmax_inverse,
    minmax_transform,
)
from fxlab.errors import (
    ColumnMismatch,
    DateMismatch,
    DegenerateColumn,
    EmptyPartition,
    FxlabError,
    InvalidParameter,
    MalformedDate,
    MissingFile,
    MonthGap,
    NameMismatch,
    NonNumericCell,
    SeriesTooShort,
)
from fxlab.synthetic import month_range


def write_csv(folder: Path, name: str, text: str) -> Path:
    path = folder / name
    path.write_text(text, encoding="utf-8")
    return path


def make_frame(columns: dict, start: str = "2000-01") -> TimeSeriesFrame:
    names = tuple(columns)
    values = np.column_stack([np.asarray(columns[name], dtype=float) for name in names])
    return TimeSeriesFrame(month_range(start, values.shape[0]), names, values)


GOOD_CSV = "date,forex,cpi\n2000-01,45.5,100\n2000-02,46.0,101.5\n2000-03,46.2,102\n"


def test_load_csv(tmp_path):
    frame = load_csv(write_csv(tmp_path, "usa.csv", GOOD_CSV))

    assert frame.dates == ("2000-01", "2000-02", "2000-03")
    assert frame.names == ("forex", "cpi")
    np.testing.assert_array_equal(frame.column("cpi"), [100, 101.5, 102])
    assert not frame.values.flags.writeable


@pytest.mark.parametrize(
    "text, expected, attributes",
    [
        (
            "date,forex\n2000-01,1\n2000/02,2\n",
            MalformedDate,
            {"row": 3, "value": "2000/02"},
        ),
        (
            "date,forex,cpi\n2000-01,1,2\n2000-02,abc,3\n",
            NonNumericCell,
            {"row": 3, "column": "forex", "value": "abc"},
        ),
        (
            "date,forex\n2000-01,1\n2000-02,\n",
            NonNumericCell,
            {"row": 3, "column": "forex"},
        ),
        (
            "date,forex\n2000-01,1\n2000-02,inf\n",
            NonNumericCell,
            {"row": 3},
        ),
        (
            "date,forex\n2000-01,1\n2000-03,2\n",
            MonthGap,
            {"date": "2000-03", "previous": "2000-01"},
        ),
        ("month,forex\n2000-01,1\n", ColumnMismatch, {}),
        ("date,forex\n2000-13,1\n", MalformedDate, {"row": 2}),
    ],
)
def test_load_csv_errors(tmp_path, text, expected, attributes):
    path = write_csv(tmp_path, "bad.csv", text)

    with pytest.raises(expected) as error:
        load_csv(path)

    for name, value in attributes.items():
        assert getattr(error.value, name) == value
    assert "bad.csv" in str(error.value)


def test_load_csv_missing_file(tmp_path):
    path = tmp_path / "nowhere.csv"

    with pytest.raises(MissingFile) as error:
        load_csv(path)

    assert error.value.path == path
    assert "nowhere.csv" in str(error.value)


def test_load_csv_expected_columns(tmp_path):
    path = write_csv(tmp_path, "ind.csv", GOOD_CSV)

    assert load_csv(path, expected_columns=("cpi", "forex")).n_cols == 2
    with pytest.raises(ColumnMismatch):
        load_csv(path, expected_columns=("forex", "iip"))


def test_load_csv_parses_shortest_repr_exactly(tmp_path):
    values = np.random.default_rng(0).normal(scale=[1.0, 1e-3, 1e4], size=(12, 3))
    rows = [
        f"{date},{','.join(repr(float(value)) for value in row)}"
        for date, row in zip(month_range("2001-01", 12), values)
    ]
    path = write_csv(tmp_path, "usa.csv", "date,a,b,c\n" + "\n".join(rows) + "\n")

    np.testing.assert_array_equal(load_csv(path).values, values)


def test_load_csv_rejects_python_literals(tmp_path):
    path = write_csv(tmp_path, "bad.csv", "date,forex\n2000-01,1_000\n")

    with pytest.raises(NonNumericCell) as error:
        load_csv(path)

    assert error.value.value == "1_000"


@st.composite
def corrupted_csv(draw) -> str:
    chars = list(GOOD_CSV)
    for _ in range(draw(st.integers(1, 6))):
        action = draw(st.sampled_from(["replace", "delete", "insert"]))
        char = draw(st.sampled_from(list("0123456789-.,\nae_ ")))
        index = draw(st.integers(0, max(len(chars) - 1, 0)))
        if action == "insert" or not chars:
            chars.insert(index, char)
        elif action == "replace":
            chars[index] = char
        else:
            del chars[index]
    return "".join(chars)


@settings(deadline=None)
@given(text=corrupted_csv())
def test_loader_never_yields_invalid_frame(tmp_path_factory, text):
    path = tmp_path_factory.getbasetemp() / "corrupted.csv"
    path.write_text(text, encoding="utf-8")

    try:
        frame = load_csv(path)
    except FxlabError:
        return

    assert frame.n_rows >= 1 and frame.n_cols >= 1
    assert frame.values.shape == (frame.n_rows, frame.n_cols)
    assert np.all(np.isfinite(frame.values))
    assert not frame.values.flags.writeable
    assert len(set(frame.names)) == frame.n_cols
    assert frame.dates == month_range(frame.dates[0], frame.n_rows)




def test_frame_rejects_non_finite():
    with pytest.raises(InvalidParameter):
        TimeSeriesFrame(("2000-01",), ("a",), np.array([[np.nan]]))


def test_frame_helpers():
    frame = make_frame({"a": [1, 2, 3], "b": [4, 5, 6]})

    assert frame.select(["b", "a"]).names == ("b", "a")
    assert frame.rows(1, 3).dates == ("2000-02", "2000-03")
    moved = frame.with_column("c", [7, 8, 9], position=0)
    assert moved.names == ("c", "a", "b")
    replaced = frame.with_column("a", [0, 0, 0])
    assert replaced.names == ("b", "a")
    np.testing.assert_array_equal(replaced.column("a"), [0, 0, 0])
    restored = TimeSeriesFrame.from_pandas(frame.to_pandas())
    assert restored.dates == frame.dates and restored.names == frame.names
    np.testing.assert_array_equal(restored.values, frame.values)
    with pytest.raises(NameMismatch):
        frame.column("z")


def test_country_delta():
    usa = make_frame({"cpi": [5, 6, 7], "iip": [1, 1, 1]})
    ind = make_frame({"cpi": [4, 4, 4], "iip": [2, 3, 4]})

    delta = country_delta(usa, ind)

    np.testing.assert_array_equal(delta.column("cpi"), [1, 2, 3])
    np.testing.assert_array_equal(delta.column("iip"), [-1, -2, -3])


def test_country_delta_mismatches():
    usa = make_frame({"cpi": [5, 6, 7]})

    with pytest.raises(DateMismatch):
        country_delta(usa, make_frame({"cpi": [5, 6, 7]}, start="2001-01"))
    with pytest.raises(NameMismatch):
        country_delta(usa, make_frame({"iip": [5, 6, 7]}))


def test_build_panel():
    usa = make_frame({"forex": [40, 41, 42], "cpi": [5, 6, 7]})
    ind = make_frame({"cpi": [1, 1, 1], "forex": [40, 41, 42]})

    panel = build_panel(usa, ind, "forex")

    assert panel.names == ("forex", "cpi")
    np.testing.assert_array_equal(panel.column("forex"), [40, 41, 42])
    np.testing.assert_array_equal(panel.column("cpi"), [4, 5, 6])
    with pytest.raises(ColumnMismatch):
        build_panel(usa, ind, "gold")


def test_minmax_fits_training_rows_only():
    frame = make_frame({"a": [0, 10, 5, 100], "b": [1, 3, 2, -50]})
    split = SplitSpec.from_fraction(4, 0.75)

    params = minmax_fit(frame, split)
    scaled = minmax_transform(frame, params)

    assert params.fitted_rows == 3
    assert params.bounds("a") == (0, 10)
    np.testing.assert_allclose(scaled.column("a"), [0, 1, 0.5, 10])
    np.testing.assert_allclose(scaled.column("b"), [0, 1, 0.5, -25.5])
    np.testing.assert_allclose(minmax_inverse(scaled, params).values, frame.values)


def test_minmax_degenerate_column():
    frame = make_frame({"a": [1, 2, 3], "flat": [4, 4, 4]})

    with pytest.raises(DegenerateColumn) as error:
        minmax_fit(frame, SplitSpec.from_fraction(3, 0.99))

    assert error.value.name == "flat"


@given(
    st.lists(
        st.integers(min_value=-(10**6), max_value=10**6),
        min_size=4,
        max_size=40,
        unique=True,
    )
)
def test_scaled_training_rows_in_unit_interval(values):
    frame = make_frame({"x": values})
    split = SplitSpec.from_fraction(len(values), 0.5)

    scaled = minmax_transform(frame, minmax_fit(frame, split))
    train = scaled.values[: split.boundary_index]

    assert np.all(train >= -1e-12) and np.all(train <= 1 + 1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_invert_difference_rebuilds_series(order):
    series = np.random.default_rng(order).normal(size=30).cumsum()

    rebuilt = invert_difference(difference(series, order), series[:order])

    np.testing.assert_allclose(rebuilt, series, atol=1e-9)


def test_difference_errors():
    with pytest.raises(SeriesTooShort):
        difference([1.0], 1)
    with pytest.raises(InvalidParameter):
        difference([1.0, 2.0], 0)


def test_difference_anchor():
    levels = np.array([1.0, 4.0, 9.0, 16.0, 25.0])

    assert difference_anchor(levels, 1, 3) == 9.0
    # Second difference at 4 is 2, so the anchor is 25 - 2
    assert difference_anchor(levels, 2, 4) == 23.0
    for order in (1, 2):
        assert difference_anchor(levels, order, 4) + difference(levels, order)[-1] == 25.0


def test_difference_frame_aligns_columns():
    frame = make_frame({"a": [1, 2, 4, 7, 11], "b": [0, 1, 0, 1, 0], "c": [5, 5, 6, 6, 7]})

    diffed = difference_frame(frame, {"a": 2, "b": 1, "c": 0})

    assert diffed.dates == frame.dates[2:]
    np.testing.assert_array_equal(diffed.column("a"), [1, 1, 1])
    np.testing.assert_array_equal(diffed.column("b"), [-1, 1, -1])
    np.testing.assert_array_equal(diffed.column("c"), [6, 6, 7])


def test_chronological_split():
    frame = make_frame({"x": np.arange(297.0)}, start="1994-04")

    train, test = chronological_split(frame, 0.9)

    assert (train.n_rows, test.n_rows) == (267, 30)
    assert train.dates[-1] < test.dates[0]
    assert test.dates[-1] == "2018-12"


@pytest.mark.parametrize("n_rows, fraction", [(10, 0.05), (2, 0.99), (5, 0.3)])
def test_chronological_split_empty_partition(n_rows, fraction):
    with pytest.raises(EmptyPartition):
        chronological_split(make_frame({"x": np.arange(float(n_rows))}), fraction)


def test_lagged_design():
    frame = make_frame({"d": [10, 20, 30, 40], "forex": [1, 2, 3, 4]})

    design = lagged_design(frame, "forex")

    assert design.feature_names == ("forex_lag1", "d_lag1")
    np.testing.assert_array_equal(design.X, [[1, 10], [2, 20], [3, 30]])
    np.testing.assert_array_equal(design.y, [2, 3, 4])
    assert design.dates == ("2000-02", "2000-03", "2000-04")
