"""K-sample omnibus non-proportional-hazards (KONP) test statistics.

For every ordered pair of observed failure times (i, j) a 2x2 contingency
table is built from the KM-estimated mass of the interval
[a_ij, b_ij] = [min(T_j, 2T_i - T_j), max(T_j, 2T_i - T_j)], comparing the
group of record i against all other usable groups.  Pearson and
likelihood-ratio summaries of all included tables are averaged into the
two test statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .km import km_fit

__all__ = [
    "TruncationBounds",
    "PartitionTable",
    "KonpResult",
    "truncation_bounds",
    "partition_table",
    "table_statistic_pearson",
    "table_statistic_lr",
    "konp_statistic",
    "konp_statistic_arrays",
]

ZERO_MARGIN_TOL = 1e-12


@dataclass(frozen=True)
class TruncationBounds:
    """Usable-time limits of the per-group KM estimators.

    ``gamma[k]`` is the largest time at which group k's KM estimate may be
    evaluated, ``gamma_minus[k] = max_{m != k} gamma[m]`` and
    ``tau[k] = min(gamma[k], gamma_minus[k])``.
    """

    gamma: np.ndarray
    gamma_minus: np.ndarray
    tau: np.ndarray
    eventless_groups: tuple = ()


@dataclass(frozen=True)
class PartitionTable:
    a11: float
    a12: float
    a21: float
    a22: float
    n_included: float
    pair: tuple

    @property
    def cells(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])


@dataclass(frozen=True)
class KonpResult:
    q_pearson: float
    q_lr: float
    n_tables: int

    @property
    def degenerate(self) -> bool:
        return self.n_tables == 0


def truncation_bounds(ds, curves=None) -> TruncationBounds:
    """Per-group gamma/tau limits.

    gamma_k = 2*max(T) - min(T) (global extremes) when group k's largest
    observed time is an event, otherwise group k's largest event time
    (0 for a group with no events at all).
    """
    k = ds.n_groups
    t_max = float(ds.time.max())
    t_min = float(ds.time.min())
    gamma = np.zeros(k)
    eventless = []
    for g in range(k):
        sel = ds.group == g
        ev_times = ds.time[sel & (ds.event == 1)]
        if ev_times.size == 0:
            gamma[g] = 0.0
            eventless.append(g)
        elif ev_times.max() == ds.time[sel].max():
            gamma[g] = 2.0 * t_max - t_min
        else:
            gamma[g] = float(ev_times.max())
    gamma_minus = np.array([max(gamma[m] for m in range(k) if m != g) for g in range(k)])
    tau = np.minimum(gamma, gamma_minus)
    return TruncationBounds(gamma, gamma_minus, tau, tuple(eventless))


def _group_curves(ds):
    return [km_fit(ds.time[ds.group == g], ds.event[ds.group == g]) for g in range(ds.n_groups)]


def partition_table(ds, curves, bounds, i, j):
    """Contingency table for one ordered pair of event records, or None
    when the pair is excluded by the truncation rule.

    Reference (non-JIT) path; the pair loop in :func:`konp_statistic`
    computes identical cells.
    """
    if i == j:
        raise ValueError("pair requires distinct records")
    if ds.event[i] != 1 or ds.event[j] != 1:
        raise ValueError("both records of a pair must be events")
    k = int(ds.group[i])
    ti, tj = float(ds.time[i]), float(ds.time[j])
    b = max(tj, 2.0 * ti - tj)
    a = min(tj, 2.0 * ti - tj)
    if b > bounds.tau[k]:
        return None
    same = 1.0 if ds.group[i] == ds.group[j] else 0.0
    nk = ds.group_sizes.astype(float)
    n_incl = 0.0
    sum_other = 0.0
    d_fk = 0.0
    for g in range(ds.n_groups):
        if bounds.gamma[g] >= b:
            n_incl += nk[g]
            df = float(curves[g].cdf(b) - curves[g].cdf_left(a))
            if g == k:
                d_fk = df
            else:
                sum_other += nk[g] * df
    a11 = nk[k] * d_fk - 1.0 - same
    a12 = sum_other - (1.0 - same)
    a21 = nk[k] - a11 - 1.0 - same
    a22 = (n_incl - nk[k]) - a12 - (1.0 - same)
    return PartitionTable(a11, a12, a21, a22, n_incl, (i, j))


def _clamped(t: PartitionTable):
    return (max(t.a11, 0.0), max(t.a12, 0.0), max(t.a21, 0.0), max(t.a22, 0.0))


def table_statistic_pearson(t: PartitionTable) -> float:
    a11, a12, a21, a22 = _clamped(t)
    r1, r2 = a11 + a12, a21 + a22
    c1, c2 = a11 + a21, a12 + a22
    if min(r1, r2, c1, c2) <= ZERO_MARGIN_TOL:
        return 0.0
    return (t.n_included - 2.0) * (a12 * a21 - a11 * a22) ** 2 / (r1 * r2 * c1 * c2)


def table_statistic_lr(t: PartitionTable) -> float:
    a11, a12, a21, a22 = _clamped(t)
    r1, r2 = a11 + a12, a21 + a22
    c1, c2 = a11 + a21, a12 + a22
    if min(r1, r2, c1, c2) <= ZERO_MARGIN_TOL:
        return 0.0
    tot = t.n_included - 2.0
    s = 0.0
    for cell, rm, cm in ((a11, r1, c1), (a12, r1, c2), (a21, r2, c1), (a22, r2, c2)):
        if cell > 0.0:
            s += cell * np.log(tot * cell / (rm * cm))
    return 2.0 * s


@numba.njit(cache=True, fastmath=False, inline="always")
def _table_terms(a11, a12, a21, a22, n_incl):
    """Pearson and LR summaries of one clamped table (0 on zero margin)."""
    if a11 < 0.0:
        a11 = 0.0
    if a12 < 0.0:
        a12 = 0.0
    if a21 < 0.0:
        a21 = 0.0
    if a22 < 0.0:
        a22 = 0.0
    r1 = a11 + a12
    r2 = a21 + a22
    c1 = a11 + a21
    c2 = a12 + a22
    if r1 <= ZERO_MARGIN_TOL or r2 <= ZERO_MARGIN_TOL or c1 <= ZERO_MARGIN_TOL or c2 <= ZERO_MARGIN_TOL:
        return 0.0, 0.0
    tot = n_incl - 2.0
    s_p = tot * (a12 * a21 - a11 * a22) ** 2 / (r1 * r2 * c1 * c2)
    s_lr = 0.0
    if a11 > 0.0:
        s_lr += a11 * np.log(tot * a11 / (r1 * c1))
    if a12 > 0.0:
        s_lr += a12 * np.log(tot * a12 / (r1 * c2))
    if a21 > 0.0:
        s_lr += a21 * np.log(tot * a21 / (r2 * c1))
    if a22 > 0.0:
        s_lr += a22 * np.log(tot * a22 / (r2 * c2))
    return s_p, 2.0 * s_lr


@numba.njit(cache=True, fastmath=False)
def _pair_loop(et, eg, nk, gamma, tau, jt_flat, cum_flat, offsets):
    """Accumulate S_P and S_LR over all included ordered event pairs.

    Events are walked in time order; for a fixed center i the partners j
    are visited by increasing distance, so the interval end b = T_i + d
    grows monotonically.  That allows per-group CDF pointers to advance
    incrementally and the truncation rule b > tau_k to break the walk.
    Compensated (Kahan) accumulation keeps results bit-stable for a given
    iteration order.
    """
    m = et.shape[0]
    k_groups = nk.shape[0]
    order = np.argsort(et, kind="mergesort")
    ets = et[order]
    egs = eg[order]
    his = np.empty(k_groups, dtype=np.int64)
    los = np.empty(k_groups, dtype=np.int64)
    sum_p = 0.0
    comp_p = 0.0
    sum_lr = 0.0
    comp_lr = 0.0
    n_tables = 0
    for p in range(m):
        k = egs[p]
        ti = ets[p]
        tau_k = tau[k]
        if ti > tau_k:
            continue
        # per-group pointers: his[g] = #jumps <= b, los[g] = #jumps < a
        for g in range(k_groups):
            lo = offsets[g]
            hi = offsets[g + 1]
            his[g] = lo + np.searchsorted(jt_flat[lo:hi], ti, side="right")
            los[g] = lo + np.searchsorted(jt_flat[lo:hi], ti, side="left")
        left = p - 1
        right = p + 1
        while left >= 0 or right < m:
            if left >= 0 and (right >= m or ti - ets[left] <= ets[right] - ti):
                q = left
                left -= 1
            else:
                q = right
                right += 1
            tj = ets[q]
            refl = 2.0 * ti - tj
            if tj >= refl:
                b = tj
                a = refl
            else:
                b = refl
                a = tj
            if b > tau_k:
                break
            for g in range(k_groups):
                lo = offsets[g]
                hi = offsets[g + 1]
                h = his[g]
                while h < hi and jt_flat[h] <= b:
                    h += 1
                while h > lo and jt_flat[h - 1] > b:
                    h -= 1
                his[g] = h
                lw = los[g]
                while lw > lo and jt_flat[lw - 1] >= a:
                    lw -= 1
                while lw < hi and jt_flat[lw] < a:
                    lw += 1
                los[g] = lw
            n_tables += 1
            same = 1.0 if egs[q] == k else 0.0
            n_incl = 0.0
            sum_other = 0.0
            d_fk = 0.0
            for g in range(k_groups):
                if gamma[g] >= b:
                    n_incl += nk[g]
                    lo = offsets[g]
                    fb = cum_flat[his[g] - 1] if his[g] > lo else 0.0
                    fa = cum_flat[los[g] - 1] if los[g] > lo else 0.0
                    if g == k:
                        d_fk = fb - fa
                    else:
                        sum_other += nk[g] * (fb - fa)
            a11 = nk[k] * d_fk - 1.0 - same
            a12 = sum_other - (1.0 - same)
            a21 = nk[k] - a11 - 1.0 - same
            a22 = (n_incl - nk[k]) - a12 - (1.0 - same)
            s_p, s_lr = _table_terms(a11, a12, a21, a22, n_incl)

            y = s_p - comp_p
            t_new = sum_p + y
            comp_p = (t_new - sum_p) - y
            sum_p = t_new
            y = s_lr - comp_lr
            t_new = sum_lr + y
            comp_lr = (t_new - sum_lr) - y
            sum_lr = t_new
    return sum_p, sum_lr, n_tables


def konp_statistic_arrays(time, event, group, n_groups) -> KonpResult:
    """KONP statistics straight from raw arrays (hot path for the
    permutation engine)."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    group = np.asarray(group, dtype=np.int64)
    nk = np.bincount(group, minlength=n_groups).astype(np.float64)
    t_max = time.max()
    t_min = time.min()

    gamma = np.zeros(n_groups)
    jts, cums = [], []
    for g in range(n_groups):
        sel = group == g
        curve = km_fit(time[sel], event[sel])
        jts.append(curve.jump_times)
        cums.append(curve.cum_mass if curve.jump_times.size else np.empty(0))
        ev = time[sel & (event == 1)]
        if ev.size == 0:
            gamma[g] = 0.0
        elif ev.max() == time[sel].max():
            gamma[g] = 2.0 * t_max - t_min
        else:
            gamma[g] = ev.max()
    gamma_minus = np.array(
        [max(gamma[m] for m in range(n_groups) if m != g) for g in range(n_groups)]
    )
    tau = np.minimum(gamma, gamma_minus)

    ev_mask = event == 1
    et = time[ev_mask]
    eg = group[ev_mask]
    offsets = np.zeros(n_groups + 1, dtype=np.int64)
    for g in range(n_groups):
        offsets[g + 1] = offsets[g] + jts[g].size
    jt_flat = np.concatenate(jts) if offsets[-1] else np.empty(0)
    cum_flat = np.concatenate(cums) if offsets[-1] else np.empty(0)

    sum_p, sum_lr, n_tables = _pair_loop(
        np.ascontiguousarray(et), np.ascontiguousarray(eg), nk, gamma, tau,
        np.ascontiguousarray(jt_flat), np.ascontiguousarray(cum_flat), offsets
    )
    if n_tables == 0:
        return KonpResult(0.0, 0.0, 0)
    return KonpResult(sum_p / n_tables, sum_lr / n_tables, int(n_tables))


def konp_statistic(ds) -> KonpResult:
    """KONP Pearson and likelihood-ratio statistics of a dataset."""
    return konp_statistic_arrays(ds.time, ds.event, ds.group, ds.n_groups)
