"""Right-censored K-sample survival data: loading, validation, summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DatasetError",
    "SurvivalDataset",
    "load_csv",
    "write_csv",
    "summarize",
]


class DatasetError(ValueError):
    """Raised when input data violates the survival-data contract."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable right-censored K-sample dataset.

    ``time`` is the observed time T = min(X, C), ``event`` is 1 for an
    observed failure and 0 for censoring, ``group`` holds integer group
    indices 0..K-1 and ``group_labels`` maps each index back to the
    original label.  Record order is preserved from the source.
    """

    time: np.ndarray
    event: np.ndarray
    group: np.ndarray
    group_labels: tuple = field(default=())

    def __post_init__(self):
        time = np.asarray(self.time, dtype=np.float64)
        event = np.asarray(self.event, dtype=np.int64)
        group = np.asarray(self.group, dtype=np.int64)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "group", group)
        if time.ndim != 1 or event.shape != time.shape or group.shape != time.shape:
            raise DatasetError("time, event and group must be 1-d arrays of equal length")
        if time.size == 0:
            raise DatasetError("empty dataset")
        if not np.all(np.isfinite(time)):
            raise DatasetError("non-finite time value")
        if np.any(time < 0):
            raise DatasetError("negative time value")
        if not np.all((event == 0) | (event == 1)):
            raise DatasetError("status values must be 0 or 1")
        labels = self.group_labels or tuple(str(k) for k in range(int(group.max()) + 1))
        object.__setattr__(self, "group_labels", tuple(labels))
        k = len(self.group_labels)
        if k < 2:
            raise DatasetError("fewer than 2 groups")
        if np.any(group < 0) or np.any(group >= k):
            raise DatasetError("group index out of range")
        counts = np.bincount(group, minlength=k)
        if np.any(counts == 0):
            raise DatasetError("every group needs at least one record")
        if not np.any(event == 1):
            raise DatasetError("no observed events in dataset")
        time.setflags(write=False)
        event.setflags(write=False)
        group.setflags(write=False)

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.n_groups)

    def relabeled(self, mapping: dict) -> "SurvivalDataset":
        """Return a dataset with group labels renamed via a bijection."""
        new = [mapping[lab] for lab in self.group_labels]
        if len(set(new)) != len(new):
            raise DatasetError("relabeling must be a bijection")
        return SurvivalDataset(self.time, self.event, self.group, tuple(new))


def from_arrays(time, event, group_labels) -> SurvivalDataset:
    """Build a dataset from raw label values (any hashables), preserving
    first-appearance label order."""
    labels = []
    index = {}
    codes = np.empty(len(group_labels), dtype=np.int64)
    for i, lab in enumerate(group_labels):
        if lab not in index:
            index[lab] = len(labels)
            labels.append(lab)
        codes[i] = index[lab]
    if len(labels) < 2:
        raise DatasetError("fewer than 2 groups")
    return SurvivalDataset(np.asarray(time, dtype=float), np.asarray(event), codes, tuple(labels))


def load_csv(path, time_col="time", status_col="status", group_col="group") -> SurvivalDataset:
    """Load a dataset from a headed CSV file.

    Status must be encoded 0/1 (1 = event).  Raises :class:`DatasetError`
    with a distinct message for each validation failure.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{path}: empty file")
        for col in (time_col, status_col, group_col):
            if col not in reader.fieldnames:
                raise DatasetError(f"{path}: missing column {col!r}")
        times, statuses, groups = [], [], []
        for lineno, row in enumerate(reader, start=2):
            raw_t = row[time_col]
            try:
                t = float(raw_t)
            except (TypeError, ValueError):
                raise DatasetError(f"{path}:{lineno}: non-numeric time {raw_t!r}") from None
            if not np.isfinite(t):
                raise DatasetError(f"{path}:{lineno}: non-finite time {raw_t!r}")
            if t < 0:
                raise DatasetError(f"{path}:{lineno}: negative time {raw_t!r}")
            raw_s = (row[status_col] or "").strip()
            if raw_s not in ("0", "1"):
                raise DatasetError(f"{path}:{lineno}: status {raw_s!r} outside {{0,1}}")
            times.append(t)
            statuses.append(int(raw_s))
            groups.append(row[group_col])
    if not times:
        raise DatasetError(f"{path}: empty file")
    return from_arrays(times, statuses, groups)


def write_csv(ds: SurvivalDataset, path, time_col="time", status_col="status", group_col="group"):
    """Write a dataset back to CSV; round-trips through :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([time_col, status_col, group_col])
        for t, e, g in zip(ds.time, ds.event, ds.group):
            writer.writerow([repr(float(t)), int(e), ds.group_labels[g]])


def summarize(ds: SurvivalDataset) -> list:
    """Per-group summary rows: label, n, events, censoring rate, max event
    time, max observed time."""
    rows = []
    for k, label in enumerate(ds.group_labels):
        sel = ds.group == k
        n_k = int(sel.sum())
        events = int(ds.event[sel].sum())
        ev_times = ds.time[sel & (ds.event == 1)]
        rows.append(
            {
                "group": label,
                "n": n_k,
                "events": events,
                "censoring_rate": (n_k - events) / n_k,
                "max_event_time": float(ev_times.max()) if ev_times.size else float("nan"),
                "max_time": float(ds.time[sel].max()),
            }
        )
    return rows
