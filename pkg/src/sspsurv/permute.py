"""Imputation-based permutation engine and the Cauchy combination test.

Plain label shuffling is invalid when the groups censor differently, so a
relabeled record gets a censoring time imputed from the new group's
censoring KM, and an originally censored record additionally gets a
failure time imputed from the pooled conditional null KM.

Each imputation round draws one complete table of imputed values (a
failure draw per censored record and a censoring draw per record per
group); all B permutations of that round reuse the table, so the
permutation distribution is conditional on the imputed data.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._streams import derive_rng
from .dataset import SurvivalDataset
from .km import km_censoring_fit, km_conditional_fit, synthetic_tail_epsilon
from .konp import konp_statistic_arrays
from .report import TestReport

__all__ = [
    "PermutationPlan",
    "TestReport",
    "ImputedTable",
    "NullImputer",
    "impute_replicate",
    "permutation_pvalue",
    "cauchy_combination",
    "run_test_suite",
    "PERMUTATION_METHODS",
    "ALL_METHODS",
]

PERMUTATION_METHODS = ("konp_p", "konp_lr", "pepe_fleming")
ALL_METHODS = ("konp_p", "konp_lr", "cau", "logrank", "peto_peto",
               "pepe_fleming", "lee", "maxcombo")


@dataclass(frozen=True)
class PermutationPlan:
    imputations: int = 1
    permutations: int = 1000
    master_seed: int = 0
    pvalue_rule: str = "paper_exact"

    def __post_init__(self):
        if self.imputations < 1 or self.permutations < 1:
            raise ValueError("imputations and permutations must be >= 1")
        if self.pvalue_rule not in ("paper_exact", "add_one"):
            raise ValueError(f"unknown p-value rule {self.pvalue_rule!r}")
        if self.imputations * self.permutations < 100:
            warnings.warn("fewer than 100 replicates: p-value resolution is poor",
                          stacklevel=2)

    @property
    def replicates(self) -> int:
        return self.imputations * self.permutations

    def pvalue(self, count_ge: int) -> float:
        if self.pvalue_rule == "add_one":
            return (count_ge + 1) / (self.replicates + 1)
        return count_ge / self.replicates


class _Categorical:
    """Sampler over a finite support with an optional synthetic tail point."""

    __slots__ = ("values", "cum", "tail_index")

    def __init__(self, values, probs, tail_value=None, tail_prob=0.0):
        values = list(np.asarray(values, dtype=float))
        probs = list(np.asarray(probs, dtype=float))
        self.tail_index = -1
        if tail_prob > 1e-12:
            self.tail_index = len(values)
            values.append(float(tail_value))
            probs.append(tail_prob)
        self.values = np.asarray(values)
        cum = np.cumsum(probs)
        cum[-1] = max(cum[-1], 1.0)  # absorb rounding in the last atom
        self.cum = cum

    def draw(self, rng, size):
        idx = np.searchsorted(self.cum, rng.random(size), side="right")
        idx = np.minimum(idx, self.values.size - 1)
        return self.values[idx], idx == self.tail_index


@dataclass(frozen=True)
class ImputedTable:
    """One imputation round's pre-drawn values.

    ``x_tilde[i]`` is record i's failure time (the observed time for
    events, a pooled conditional KM draw for censored records, flagged in
    ``synthetic`` when the draw fell in the residual tail mass);
    ``c_tilde[g, i]`` is the censoring time record i would receive in
    group g (+inf for never-censoring groups).
    """

    x_tilde: np.ndarray
    synthetic: np.ndarray
    c_tilde: np.ndarray


class NullImputer:
    """Precomputed null-distribution samplers for one dataset.

    Holds, per group, the censoring-KM sampler (residual mass collapsed
    onto the largest observed censoring time) and a cache of pooled
    conditional failure KMs keyed by censored observation time.  All
    state is immutable after construction, so one imputer serves every
    replicate.
    """

    def __init__(self, ds: SurvivalDataset):
        self.ds = ds
        ev_times = ds.time[ds.event == 1]
        self._tail_value = float(ev_times.max()) + synthetic_tail_epsilon(ds.time.max())
        self._censoring = []
        for g in range(ds.n_groups):
            curve = km_censoring_fit(ds, g)
            if curve.jump_times.size == 0:
                # group never censors: imputed censoring time is +inf
                self._censoring.append(None)
                continue
            masses = curve.jump_masses.copy()
            masses[-1] += max(0.0, 1.0 - curve.total_mass)
            self._censoring.append(_Categorical(curve.jump_times, masses))
        self._conditional = {}
        for t0 in np.unique(ds.time[ds.event == 0]):
            self._conditional[float(t0)] = self._make_conditional(float(t0))

    def _make_conditional(self, t0: float) -> _Categorical:
        curve = km_conditional_fit(self.ds, t0)
        residual = 1.0 - curve.total_mass
        return _Categorical(curve.jump_times, curve.jump_masses,
                            tail_value=self._tail_value, tail_prob=residual)

    def conditional_sampler(self, t0: float) -> _Categorical:
        key = float(t0)
        if key not in self._conditional:
            self._conditional[key] = self._make_conditional(key)
        return self._conditional[key]

    def draw_table(self, rng: np.random.Generator) -> ImputedTable:
        """Draw one imputation round's complete table of imputed values.

        Draw order is fixed (conditional failure draws over sorted
        censored times, then a full censoring vector per group index), so
        a given stream always produces the same table.
        """
        ds = self.ds
        x_tilde = ds.time.astype(float).copy()
        synthetic = np.zeros(ds.n, dtype=bool)
        censored = ds.event == 0
        for t0 in np.unique(ds.time[censored]):
            idx = np.flatnonzero(censored & (ds.time == t0))
            vals, synth = self.conditional_sampler(float(t0)).draw(rng, idx.size)
            x_tilde[idx] = vals
            synthetic[idx] = synth
        c_tilde = np.full((ds.n_groups, ds.n), np.inf)
        for g in range(ds.n_groups):
            sampler = self._censoring[g]
            if sampler is not None:
                c_tilde[g], _ = sampler.draw(rng, ds.n)
        return ImputedTable(x_tilde, synthetic, c_tilde)

    def apply_table(self, table: ImputedTable, permuted_group: np.ndarray):
        """Imputed (time, event) arrays for one permuted label vector.

        Records that keep their original label keep their observed data;
        moved records look up the round's pre-drawn failure value and the
        censoring value for their destination group.
        """
        ds = self.ds
        moved = permuted_group != ds.group
        time = ds.time.copy()
        event = ds.event.copy()
        if not np.any(moved):
            return time, event
        idx = np.flatnonzero(moved)
        x = table.x_tilde[idx]
        c = table.c_tilde[permuted_group[idx], idx]
        time[idx] = np.minimum(x, c)
        event[idx] = ((x <= c) & ~table.synthetic[idx]).astype(np.int64)
        return time, event

    def impute(self, permuted_group: np.ndarray, rng: np.random.Generator):
        """One-shot convenience: draw a fresh table and apply it."""
        return self.apply_table(self.draw_table(rng), permuted_group)


def impute_replicate(ds: SurvivalDataset, permuted_group, imputer: NullImputer,
                     rng: np.random.Generator) -> SurvivalDataset:
    """One imputed replicate dataset for a permuted label assignment."""
    permuted_group = np.asarray(permuted_group, dtype=np.int64)
    orig = np.bincount(ds.group, minlength=ds.n_groups)
    perm = np.bincount(permuted_group, minlength=ds.n_groups)
    if not np.array_equal(orig, perm):
        raise ValueError("permuted labels must be a permutation of the originals")
    time, event = imputer.impute(permuted_group, rng)
    return SurvivalDataset(time, event, permuted_group, ds.group_labels)


def _replicate_stats(imputer, table, statistic_fn, m, b, master_seed):
    ds = imputer.ds
    rng = derive_rng(master_seed, m, b)
    perm = rng.permutation(ds.group)
    time, event = imputer.apply_table(table, perm)
    return statistic_fn(time, event, perm, ds.n_groups)


def permutation_pvalue(ds: SurvivalDataset, statistic_fn, plan: PermutationPlan,
                       threads: int = 1, imputer: NullImputer = None):
    """p-values from M x B imputed permutation replicates.

    ``statistic_fn(time, event, group, n_groups)`` returns a 1-d vector of
    statistics; all of them are evaluated on one shared replicate pool.
    Imputation m draws its table from the stream (seed, m) and each of
    its permutations from (seed, m, b), so the counts are identical for
    any thread count.  Returns ``(pvalues, observed, count_ge)`` arrays.
    """
    observed = np.atleast_1d(np.asarray(
        statistic_fn(ds.time, ds.event, ds.group, ds.n_groups), dtype=float))
    if imputer is None:
        imputer = NullImputer(ds)
    tables = [imputer.draw_table(derive_rng(plan.master_seed, m))
              for m in range(plan.imputations)]
    pairs = [(m, b) for m in range(plan.imputations) for b in range(plan.permutations)]

    def one(pair):
        m, b = pair
        stats = np.atleast_1d(np.asarray(
            _replicate_stats(imputer, tables[m], statistic_fn, m, b,
                             plan.master_seed), dtype=float))
        return (stats >= observed).astype(np.int64)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            count_ge = sum(pool.map(one, pairs, chunksize=64))
    else:
        count_ge = sum(one(p) for p in pairs)
    count_ge = np.asarray(count_ge)
    pvals = np.array([plan.pvalue(int(c)) for c in count_ge])
    return pvals, observed, count_ge


def cauchy_combination(pvalues, clamp: float = None) -> float:
    """Combined p-value 0.5 - arctan(mean of tan((0.5 - p) * pi)) / pi.

    ``clamp`` bounds each input away from the tan singularities at 0/1,
    e.g. the permutation resolution 1/(MB+1).
    """
    p = np.asarray(pvalues, dtype=float)
    if clamp is not None:
        p = np.clip(p, clamp, 1.0 - clamp)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("p-values must lie strictly inside (0, 1)")
    stat = np.mean(np.tan((0.5 - p) * np.pi))
    return 0.5 - np.arctan(stat) / np.pi


def run_test_suite(ds: SurvivalDataset, methods, plan: PermutationPlan,
                   threads: int = 1) -> list:
    """Run the requested tests, sharing one permutation replicate pool
    among all permutation-referenced methods."""
    from . import wlr  # local import: wlr needs nothing from here

    methods = list(methods)
    if not methods:
        raise ValueError("methods must be nonempty")
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    wanted = set(methods)
    if "cau" in wanted:
        wanted |= {"konp_p", "konp_lr", "logrank"}

    reports = {}

    perm_wanted = [m for m in PERMUTATION_METHODS if m in wanted]
    if perm_wanted:
        need_konp = "konp_p" in wanted or "konp_lr" in wanted
        need_pf = "pepe_fleming" in wanted

        def stat_vec(time, event, group, n_groups):
            out = []
            if need_konp:
                res = konp_statistic_arrays(time, event, group, n_groups)
                out.extend([res.q_pearson, res.q_lr])
            if need_pf:
                out.append(abs(wlr.pepe_fleming_statistic(time, event, group)))
            return np.array(out)

        pvals, observed, _ = permutation_pvalue(ds, stat_vec, plan, threads=threads)
        pos = 0
        if need_konp:
            obs_res = konp_statistic_arrays(ds.time, ds.event, ds.group, ds.n_groups)
            for name, val in (("konp_p", observed[0]), ("konp_lr", observed[1])):
                reports[name] = TestReport(
                    name, float(val),
                    1.0 if obs_res.degenerate else float(pvals[pos]),
                    plan.replicates, plan.master_seed, degenerate=obs_res.degenerate)
                pos += 1
        if need_pf:
            pf_obs = wlr.pepe_fleming_statistic(ds.time, ds.event, ds.group)
            reports["pepe_fleming"] = TestReport(
                "pepe_fleming", float(pf_obs), float(pvals[pos]),
                plan.replicates, plan.master_seed)

    if "logrank" in wanted:
        reports["logrank"] = wlr.k_sample_logrank(ds, weight="unit", seed=plan.master_seed)
    if "peto_peto" in wanted:
        reports["peto_peto"] = wlr.k_sample_logrank(ds, weight="pooled_km_left",
                                                    seed=plan.master_seed)
    if "lee" in wanted:
        reports["lee"] = wlr.lee_test(ds, seed=plan.master_seed)
    if "maxcombo" in wanted:
        reports["maxcombo"] = wlr.maxcombo_test(ds, seed=plan.master_seed)
    if "cau" in wanted:
        clamp = 1.0 / (plan.replicates + 1)
        inputs = [reports["konp_p"].pvalue, reports["konp_lr"].pvalue,
                  reports["logrank"].pvalue]
        p_cau = cauchy_combination(inputs, clamp=clamp)
        stat = float(np.mean(np.tan((0.5 - np.clip(inputs, clamp, 1 - clamp)) * np.pi)))
        reports["cau"] = TestReport("cau", stat, float(p_cau),
                                    plan.replicates, plan.master_seed)

    order = [m for m in ALL_METHODS if m in wanted]
    return [reports[m] for m in order if m in reports]
