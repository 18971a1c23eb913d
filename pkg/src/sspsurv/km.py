"""Kaplan-Meier estimation (failure, censoring, conditional) and sampling
from fitted jump distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KMCurve",
    "km_fit",
    "km_censoring_fit",
    "km_conditional_fit",
    "km_sample",
]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class KMCurve:
    """Step-function product-limit estimate of a CDF.

    ``jump_times`` are the strictly increasing distinct event times,
    ``jump_masses`` the CDF mass placed at each, ``survival_after`` the
    survival value just after each jump.  ``complete`` means the masses
    sum to one (largest observed time was an event); the residual mass
    ``1 - sum(jump_masses)`` otherwise sits beyond ``support_end``.
    """

    jump_times: np.ndarray
    jump_masses: np.ndarray
    survival_after: np.ndarray
    complete: bool
    support_end: float

    def __post_init__(self):
        jt = np.ascontiguousarray(self.jump_times, dtype=np.float64)
        jm = np.ascontiguousarray(self.jump_masses, dtype=np.float64)
        sa = np.ascontiguousarray(self.survival_after, dtype=np.float64)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_masses", jm)
        object.__setattr__(self, "survival_after", sa)
        object.__setattr__(self, "cum_mass", np.cumsum(jm))
        for arr in (jt, jm, sa, self.cum_mass):
            arr.setflags(write=False)

    @property
    def total_mass(self) -> float:
        return float(self.cum_mass[-1]) if self.jump_masses.size else 0.0

    def cdf(self, t):
        """Right-continuous F(t)."""
        if self.jump_times.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float)) + 0.0
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate(([0.0], self.cum_mass))
        return padded[idx]

    def cdf_left(self, t):
        """Left limit F(t-): mass strictly below t."""
        if self.jump_times.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float)) + 0.0
        idx = np.searchsorted(self.jump_times, t, side="left")
        padded = np.concatenate(([0.0], self.cum_mass))
        return padded[idx]

    def survival(self, t):
        return 1.0 - self.cdf(t)


def km_fit(times, events) -> KMCurve:
    """Product-limit estimator of the CDF from right-censored data.

    Ties between events and censorings at the same time are resolved by
    processing events first (at-risk set counts T >= t).  The curve is
    defined up to the last observed time; it is complete iff the largest
    observed time is an event.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    if times.size == 0:
        raise ValueError("km_fit needs at least one record")
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    n = times.size
    support_end = float(t_sorted[-1])

    ev_times = t_sorted[e_sorted]
    if ev_times.size == 0:
        return KMCurve(
            np.empty(0), np.empty(0), np.empty(0), complete=False, support_end=support_end
        )
    uniq, first = np.unique(ev_times, return_index=True)
    d = np.diff(np.append(first, ev_times.size))  # events per distinct time
    # at risk: number of observed times >= t
    r = n - np.searchsorted(t_sorted, uniq, side="left")
    surv = np.cumprod(1.0 - d / r)
    surv_before = np.concatenate(([1.0], surv[:-1]))
    masses = surv_before * d / r
    # when the largest observed time is an event the last at-risk set is
    # exhausted there, so the survival curve reaches exactly zero
    complete = bool(surv[-1] <= _MASS_TOL)
    return KMCurve(uniq, masses, surv, complete=complete, support_end=support_end)


def km_censoring_fit(ds, group: int) -> KMCurve:
    """KM of the censoring distribution of one group (roles of event and
    censoring reversed)."""
    sel = ds.group == group
    return km_fit(ds.time[sel], 1 - ds.event[sel])


def km_conditional_fit(ds, threshold: float) -> KMCurve:
    """Pooled KM of the failure distribution conditional on T > threshold.

    Estimates pr(X > x | X > threshold) under the null, using all records
    from all groups with observed time strictly larger than the threshold.
    """
    sel = ds.time > threshold
    if not np.any(sel):
        return KMCurve(np.empty(0), np.empty(0), np.empty(0), complete=False, support_end=threshold)
    return km_fit(ds.time[sel], ds.event[sel])


def km_sample(curve: KMCurve, rng: np.random.Generator, tail_value=None, size=None):
    """Sample from a fitted KM jump distribution.

    Each jump time is drawn with probability equal to its mass; the
    residual mass ``1 - total_mass`` returns ``tail_value`` with
    ``synthetic_tail=True``.  Returns ``(value, synthetic_tail)`` scalars,
    or arrays when ``size`` is given.
    """
    scalar = size is None
    m = 1 if scalar else int(size)
    residual = max(0.0, 1.0 - curve.total_mass)
    if curve.jump_times.size == 0:
        if tail_value is None:
            raise ValueError("zero-jump curve requires a tail value")
        vals = np.full(m, float(tail_value))
        synth = np.ones(m, dtype=bool)
    else:
        if residual > _MASS_TOL and tail_value is None:
            raise ValueError("incomplete curve requires a tail value")
        u = rng.random(m) * (curve.total_mass + residual)
        idx = np.searchsorted(curve.cum_mass, u, side="right")
        synth = idx >= curve.jump_times.size
        vals = np.where(synth, float(tail_value) if tail_value is not None else np.nan,
                        curve.jump_times[np.minimum(idx, curve.jump_times.size - 1)])
    if scalar:
        return float(vals[0]), bool(synth[0])
    return vals, synth


def synthetic_tail_epsilon(max_observed_time: float) -> float:
    """Offset placing a synthetic failure draw strictly beyond the support,
    scaled so it works at any time unit."""
    return 1e-9 * (1.0 + float(max_observed_time))
