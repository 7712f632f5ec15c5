import numpy as np
import pytest

from survdiag.data import (DataError, Dataset, RowError, SchemaError, SurvivalRecord,
                           censoring_fraction, load_csv, write_csv)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    path = write(tmp_path, "time,status,x\n1,1,0.5\n2,0,1.5\n3,1,-1\n")
    d = load_csv(path, "time", "status", ["x"])
    assert d.n == 3 and d.dim == 1
    assert d.records[1] == SurvivalRecord(2.0, 0, (1.5,))
    np.testing.assert_array_equal(d.status, [1, 0, 1])


def test_missing_status_column(tmp_path):
    path = write(tmp_path, "time,event\n1,1\n")
    with pytest.raises(SchemaError, match="status_col not found"):
        load_csv(path, "time", "status")


def test_missing_covariate_column(tmp_path):
    path = write(tmp_path, "time,status\n1,1\n")
    with pytest.raises(SchemaError, match="covariate_cols not found"):
        load_csv(path, "time", "status", ["age"])


def test_negative_time_reports_row(tmp_path):
    path = write(tmp_path, "time,status\n1,1\n-1,0\n3,1\n")
    with pytest.raises(RowError) as info:
        load_csv(path, "time", "status")
    assert info.value.row == 1


@pytest.mark.parametrize("body", ["1,2\n", "1,\n", "x,1\n", "0,1\n", "nan,1\n"])
def test_bad_rows(tmp_path, body):
    path = write(tmp_path, "time,status\n" + body)
    with pytest.raises(RowError):
        load_csv(path, "time", "status")


def test_all_censored_needs_opt_in(tmp_path):
    path = write(tmp_path, "time,status\n1,0\n2,0\n")
    with pytest.raises(DataError):
        load_csv(path, "time", "status")
    d = load_csv(path, "time", "status", require_event=False)
    assert censoring_fraction(d) == 1.0


@pytest.mark.parametrize("status, expected", [([1, 1, 1], 0.0), ([1, 0, 1, 0], 0.5)])
def test_censoring_fraction(status, expected):
    d = Dataset(np.arange(1, len(status) + 1), status)
    assert censoring_fraction(d) == expected


def test_censoring_fraction_all_censored():
    assert censoring_fraction(Dataset([1.0, 2.0], [0, 0], require_event=False)) == 1.0


def test_round_trip(tmp_path, weibull_data):
    path = tmp_path / "w.csv"
    write_csv(weibull_data, path)
    back = load_csv(path, "time", "status", ["g", "z"])
    assert back == weibull_data


def test_dataset_is_immutable(toy3):
    with pytest.raises(ValueError):
        toy3.times[0] = 5.0
    with pytest.raises(ValueError):
        toy3.covariates[0, 0] = 5.0


def test_subset_and_drop(toy3):
    assert toy3.drop(1).n == 2
    np.testing.assert_array_equal(toy3.drop(1).times, [1.0, 3.0])
    assert toy3.subset([2]).record(0).time == 3.0


def test_validation():
    with pytest.raises(DataError):
        Dataset([], [])
    with pytest.raises(DataError):
        Dataset([1.0, 2.0], [1])
    with pytest.raises(RowError):
        Dataset([1.0, 2.0], [1, 2])
    with pytest.raises(DataError):
        Dataset([1.0], [1], [[1.0, 2.0]], ["a"])
