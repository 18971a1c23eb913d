"""Acceptance gate: one test per release criterion, each asserting its
stated tolerance.  The Monte-Carlo criteria are desk-scale reruns of the
published size/power values; they take tens of minutes in total."""

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import kstest

from sspsurv import (PermutationPlan, SurvivalDataset, cauchy_combination,
                     k_sample_logrank, load_gastric, mvn_rectangle,
                     partition_table, run_test_suite, truncation_bounds,
                     wlr_covariance)
from sspsurv._streams import derive_rng
from sspsurv.konp import _group_curves, konp_statistic_arrays
from sspsurv.permute import permutation_pvalue
from sspsurv.simgen import generate_dataset, run_power_study, scenario

from oracles import brute_force_konp_uncensored, counting_cells


def _power(name, variant, n, reps, methods=("konp_p",), seed=0):
    plan = PermutationPlan(1, 1000, seed)
    res = run_power_study(name, [n], censoring_variant=variant,
                          methods=methods, replications=reps, alpha=0.05,
                          plan=plan, master_seed=seed)[0]
    return res.rejection_rate, res.mc_se


def test_01_uncensored_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for trial in range(200):
        k = int(rng.integers(2, 4))
        n = int(rng.integers(8, 31))
        t = np.round(rng.exponential(1.0, n), 2) + 0.01
        g = rng.integers(0, k, n)
        while len(np.unique(g)) < k:
            g = rng.integers(0, k, n)
        qp, qlr, n_tables = brute_force_konp_uncensored(t, g)
        res = konp_statistic_arrays(t, np.ones(n, dtype=np.int64), g, k)
        assert res.n_tables == n_tables, f"trial {trial}: table count"
        assert abs(res.q_pearson - qp) < 1e-10, f"trial {trial}: Q_P"
        assert abs(res.q_lr - qlr) < 1e-10, f"trial {trial}: Q_LR"
        # cell-level agreement with the counting construction; the KM
        # path reproduces the integer cells up to 64-bit rounding
        ds = SurvivalDataset(t, np.ones(n, dtype=np.int64), g)
        curves = _group_curves(ds)
        bounds = truncation_bounds(ds, curves)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                tab = partition_table(ds, curves, bounds, i, j)
                if tab is None:
                    continue
                cells = counting_cells(t, g, i, j)
                got = (tab.a11, tab.a12, tab.a21, tab.a22)
                assert np.allclose(got, cells, atol=1e-9, rtol=0.0), \
                    f"trial {trial} pair ({i},{j}): cells {got} vs {cells}"
    assert time.perf_counter() - start < 60.0


def test_02_null_size_calibration():
    rate, _ = _power("null3", "equal_25", 102, reps=500, seed=1)
    tol = 2.0 * math.sqrt(0.05 * 0.95 / 500)
    assert abs(rate["konp_p"] - 0.049) < tol, rate


def test_03_power_reproduction_scenario_d():
    rate, _ = _power("D", "equal_25", 201, reps=300,
                     methods=("konp_p", "logrank", "peto_peto"), seed=2)
    assert abs(rate["konp_p"] - 0.922) < 0.04, rate
    assert abs(rate["logrank"] - 0.178) < 0.05, rate
    assert abs(rate["peto_peto"] - 0.493) < 0.06, rate


def test_04_unequal_censoring_validity():
    rate, _ = _power("null3", "unequal_severe", 201, reps=500, seed=3)
    assert abs(rate["konp_p"] - 0.055) < 0.02, rate


def test_05_consistency_trend():
    plan = PermutationPlan(1, 1000, 4)
    results = run_power_study("D", [102, 201, 300, 402],
                              censoring_variant="equal_25",
                              methods=("konp_p",), replications=120,
                              alpha=0.05, plan=plan, master_seed=4)
    rates = [r.rejection_rate["konp_p"] for r in results]
    ses = [r.mc_se["konp_p"] for r in results]
    for lo, hi, se_lo, se_hi in zip(rates, rates[1:], ses, ses[1:]):
        slack = 2.0 * math.hypot(se_lo, se_hi)
        assert hi >= lo - slack, rates
    assert rates[-1] > 0.95, rates


def test_06_gastric_fixture_pvalues():
    ds = load_gastric()
    logrank_p = k_sample_logrank(ds, weight="unit").pvalue
    if abs(logrank_p - 0.6350) > 0.002:
        pytest.skip(
            "bundled gastric fixture could not be sourced bit-exactly: its "
            f"deterministic logrank p-value is {logrank_p:.4f}, outside "
            "0.6350 +/- 0.002, so this criterion downgrades to the property "
            "suites (criteria 1, 7 and 8) as the stated fallback")
    plan = PermutationPlan(10, 10000, master_seed=20240)
    reports = {r.method: r for r in run_test_suite(
        ds, ["konp_p", "konp_lr", "cau", "logrank", "peto_peto", "lee",
             "maxcombo"], plan)}
    assert abs(reports["peto_peto"].pvalue - 0.0465) < 0.002
    assert abs(reports["lee"].pvalue - 0.0968) < 0.003
    assert abs(reports["maxcombo"].pvalue - 0.0908) < 0.005
    assert abs(reports["konp_p"].pvalue - 0.0109) < 0.004
    assert abs(reports["konp_lr"].pvalue - 0.0108) < 0.004
    assert abs(reports["cau"].pvalue - 0.0164) < 0.005


def _random_censored(rng, max_k=3):
    k = int(rng.integers(2, max_k + 1))
    n = int(rng.integers(15, 40))
    x = rng.exponential(1.0, n)
    c = rng.exponential(2.5, n)
    t = np.minimum(x, c)
    e = (x <= c).astype(np.int64)
    g = rng.integers(0, k, n)
    while len(np.unique(g)) < k or e.sum() < 3:
        g = rng.integers(0, k, n)
    return SurvivalDataset(t, e, g)


def test_07a_determinism_across_thread_counts():
    rng = np.random.default_rng(77)
    plan = PermutationPlan(1, 100, master_seed=70)

    def stat(time, event, group, n_groups):
        res = konp_statistic_arrays(time, event, group, n_groups)
        return np.array([res.q_pearson, res.q_lr])

    for _ in range(20):
        ds = _random_censored(rng)
        single = permutation_pvalue(ds, stat, plan, threads=1)
        multi = permutation_pvalue(ds, stat, plan, threads=4)
        assert np.array_equal(single[0], multi[0])
        assert np.array_equal(single[2], multi[2])


def test_07b_pvalue_uniformity_under_null():
    scen = scenario("null3", "equal_25")
    plan = PermutationPlan(1, 200, master_seed=71, pvalue_rule="add_one")

    def stat(time, event, group, n_groups):
        return np.array([konp_statistic_arrays(time, event, group,
                                               n_groups).q_pearson])

    pvals = []
    for rep in range(200):
        rng = derive_rng(71, rep)
        ds = generate_dataset(scen, 45, rng)
        local = PermutationPlan(1, 200, int(rng.integers(2 ** 63 - 1)),
                                pvalue_rule="add_one")
        pvals.append(permutation_pvalue(ds, stat, local)[0][0])
    assert kstest(pvals, "uniform").pvalue > 0.01


def test_07c_label_invariance_exact():
    rng = np.random.default_rng(78)
    for _ in range(20):
        ds = _random_censored(rng)
        res = konp_statistic_arrays(ds.time, ds.event, ds.group, ds.n_groups)
        shifted = (ds.group + 1) % ds.n_groups
        res2 = konp_statistic_arrays(ds.time, ds.event, shifted, ds.n_groups)
        assert res.q_pearson == res2.q_pearson
        assert res.q_lr == res2.q_lr
        assert res.n_tables == res2.n_tables


def test_08_numerical_cross_checks():
    rng = np.random.default_rng(88)
    checked = 0
    while checked < 100:
        ds = _random_censored(rng, max_k=2)
        stat = wlr_covariance(ds)
        if not np.isfinite(stat.z[0]):
            continue
        report = k_sample_logrank(ds, weight="unit")
        assert abs(report.statistic - stat.z[0] ** 2) < 1e-9
        checked += 1
    for d in (2, 3, 4):
        c = 1.5
        p, se = mvn_rectangle(np.eye(d), -c * np.ones(d), c * np.ones(d),
                              seed=88)
        assert abs(p - (2 * ndtr(c) - 1) ** d) < 3 * max(se, 1e-4)
    for p in (0.01, 0.05, 0.5, 0.9):
        assert abs(cauchy_combination([p, p, p]) - p) < 1e-12


def test_09_performance_budget():
    rng = derive_rng(99)
    n = 1000
    x = rng.exponential(1.0, n)
    c = rng.exponential(3.0, n)  # roughly 25% censoring in both arms
    ds = SurvivalDataset(np.minimum(x, c), (x <= c).astype(np.int64),
                         np.repeat([0, 1], n // 2))
    for g in (0, 1):
        cens = 1.0 - ds.event[ds.group == g].mean()
        assert 0.15 < cens < 0.35, cens
    # warm the JIT so compilation is not billed to the measurement
    konp_statistic_arrays(ds.time, ds.event, ds.group, 2)

    def run(b):
        plan = PermutationPlan(1, b, master_seed=90)
        start = time.perf_counter()
        run_test_suite(ds, ["konp_p", "konp_lr"], plan, threads=1)
        return time.perf_counter() - start

    base = run(1000)
    assert base <= 204.0, f"B=1000 took {base:.1f}s"
    doubled = run(2000)
    assert doubled <= 2.2 * base, (base, doubled)
