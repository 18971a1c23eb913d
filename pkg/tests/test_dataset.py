import numpy as np
import pytest

from sspsurv import DatasetError, SurvivalDataset, load_csv, summarize, write_csv
from sspsurv.dataset import from_arrays


def test_basic_construction():
    ds = SurvivalDataset([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], [0, 0, 1, 1])
    assert ds.n == 4
    assert ds.n_groups == 2
    assert tuple(ds.group_sizes) == (2, 2)
    assert ds.group_labels == ("0", "1")


def test_arrays_are_immutable():
    ds = SurvivalDataset([1.0, 2.0], [1, 1], [0, 1])
    with pytest.raises(ValueError):
        ds.time[0] = 5.0


@pytest.mark.parametrize("time,event,group,msg", [
    ([1.0, -1.0], [1, 1], [0, 1], "negative"),
    ([1.0, np.inf], [1, 1], [0, 1], "non-finite"),
    ([1.0, 2.0], [1, 2], [0, 1], "status"),
    ([1.0, 2.0], [1, 1], [0, 0], "fewer than 2 groups"),
    ([1.0, 2.0], [0, 0], [0, 1], "no observed events"),
    ([], [], [], "empty|equal length"),
])
def test_validation_failures(time, event, group, msg):
    with pytest.raises(DatasetError, match=msg):
        SurvivalDataset(time, event, group)


def test_empty_group_rejected():
    with pytest.raises(DatasetError, match="at least one record"):
        SurvivalDataset([1.0, 2.0], [1, 1], [0, 2], ("a", "b", "c"))


def test_from_arrays_first_appearance_order():
    ds = from_arrays([3.0, 1.0, 2.0], [1, 1, 0], ["beta", "alpha", "beta"])
    assert ds.group_labels == ("beta", "alpha")
    assert list(ds.group) == [0, 1, 0]


def test_csv_roundtrip(tmp_path):
    ds = from_arrays([1.5, 2.25, 3.125], [1, 0, 1], ["x", "y", "x"])
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back = load_csv(path)
    assert np.array_equal(back.time, ds.time)
    assert np.array_equal(back.event, ds.event)
    assert np.array_equal(back.group, ds.group)
    assert back.group_labels == ds.group_labels


def test_load_csv_diagnostics(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,status,group\n1.0,1,a\nxx,1,b\n")
    with pytest.raises(DatasetError, match="non-numeric time"):
        load_csv(path)
    path.write_text("time,status,group\n1.0,7,a\n2.0,1,b\n")
    with pytest.raises(DatasetError, match="status"):
        load_csv(path)
    path.write_text("t,status,group\n1.0,1,a\n")
    with pytest.raises(DatasetError, match="missing column"):
        load_csv(path)


def test_load_csv_custom_columns(tmp_path):
    path = tmp_path / "cols.csv"
    path.write_text("T,D,arm\n1.0,1,a\n2.0,0,b\n3.0,1,a\n")
    ds = load_csv(path, time_col="T", status_col="D", group_col="arm")
    assert ds.n == 3
    assert ds.group_labels == ("a", "b")


def test_summarize():
    ds = from_arrays([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], ["a", "a", "b", "b"])
    rows = summarize(ds)
    assert rows[0]["n"] == 2 and rows[0]["events"] == 1
    assert rows[0]["censoring_rate"] == 0.5
    assert rows[1]["max_event_time"] == 4.0


def test_relabeled_bijection():
    ds = from_arrays([1.0, 2.0], [1, 1], ["a", "b"])
    out = ds.relabeled({"a": "x", "b": "y"})
    assert out.group_labels == ("x", "y")
    with pytest.raises(DatasetError):
        ds.relabeled({"a": "z", "b": "z"})
