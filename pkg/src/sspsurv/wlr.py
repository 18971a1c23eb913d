"""Weighted logrank comparators: G^{rho,gamma} family, Lee max-test,
MaxCombo, Pepe-Fleming weighted KM, and the K-sample (weighted) logrank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import chi2 as chi2_dist

from ._streams import derive_rng
from .km import km_censoring_fit, km_fit
from .report import TestReport

__all__ = [
    "WlrStatistic",
    "weighted_logrank",
    "wlr_covariance",
    "lee_test",
    "maxcombo_test",
    "mvn_rectangle",
    "pepe_fleming_statistic",
    "pepe_fleming_test",
    "k_sample_logrank",
]

RHO_GAMMA = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))


@dataclass(frozen=True)
class WlrStatistic:
    g: np.ndarray        # G^{rho_k,gamma_k}, k = 1..4
    sigma: np.ndarray    # 4x4 covariance estimate
    z: np.ndarray        # standardized statistics


def _two_sample_table(time, event, group):
    """Pooled event-time table: distinct event times with per-group event
    counts, at-risk counts, and the left-continuous pooled KM."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    group = np.asarray(group)
    u = np.unique(time[event])
    d = np.zeros((2, u.size))
    y = np.zeros((2, u.size))
    for g in (0, 1):
        sel = group == g
        tg = np.sort(time[sel])
        y[g] = tg.size - np.searchsorted(tg, u, side="left")
        te = np.sort(time[sel & event])
        d[g] = np.searchsorted(te, u, side="right") - np.searchsorted(te, u, side="left")
    y_tot = y.sum(axis=0)
    d_tot = d.sum(axis=0)
    # pooled KM just before each event time
    surv = np.cumprod(1.0 - d_tot / y_tot)
    s_minus = np.concatenate(([1.0], surv[:-1]))
    return u, d, y, d_tot, y_tot, s_minus


def _g_and_sigma(time, event, group):
    group = np.asarray(group)
    n1 = int((group == 0).sum())
    n2 = int((group == 1).sum())
    u, d, y, d_tot, y_tot, s_minus = _two_sample_table(time, event, group)
    scale = (n1 + n2) / (n1 * n2)
    weights = np.array([s_minus ** r * (1.0 - s_minus) ** g for r, g in RHO_GAMMA])
    with np.errstate(invalid="ignore", divide="ignore"):
        haz_diff = np.where(y[0] > 0, d[0] / np.maximum(y[0], 1), 0.0) - \
            np.where(y[1] > 0, d[1] / np.maximum(y[1], 1), 0.0)
    frac = y[0] * y[1] / y_tot
    g_vec = np.sqrt(scale) * weights @ (frac * haz_diff)
    finite_pop = 1.0 - (d_tot - 1.0) / y_tot
    base = frac * finite_pop * d_tot / y_tot
    sigma = scale * (weights * base) @ weights.T
    return g_vec, sigma


def wlr_covariance(ds) -> WlrStatistic:
    """All four G^{rho,gamma} statistics with their joint covariance."""
    if ds.n_groups != 2:
        raise ValueError("weighted logrank family requires exactly 2 groups")
    g_vec, sigma = _g_and_sigma(ds.time, ds.event, ds.group)
    diag = np.diag(sigma)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(diag > 0, g_vec / np.sqrt(np.maximum(diag, 1e-300)), np.nan)
    return WlrStatistic(g_vec, sigma, z)


def weighted_logrank(ds, rho: float, gamma: float):
    """Single G^{rho,gamma} statistic and its variance estimate."""
    if ds.n_groups != 2:
        raise ValueError("weighted logrank requires exactly 2 groups")
    n1 = int((ds.group == 0).sum())
    n2 = int((ds.group == 1).sum())
    u, d, y, d_tot, y_tot, s_minus = _two_sample_table(ds.time, ds.event, ds.group)
    scale = (n1 + n2) / (n1 * n2)
    w = s_minus ** rho * (1.0 - s_minus) ** gamma
    frac = y[0] * y[1] / y_tot
    haz_diff = np.where(y[0] > 0, d[0] / np.maximum(y[0], 1), 0.0) - \
        np.where(y[1] > 0, d[1] / np.maximum(y[1], 1), 0.0)
    g_stat = np.sqrt(scale) * np.sum(w * frac * haz_diff)
    var = scale * np.sum(w * w * frac * (1.0 - (d_tot - 1.0) / y_tot) * d_tot / y_tot)
    return float(g_stat), float(var)


def mvn_rectangle(correlation, lower, upper, accuracy: float = 5e-4,
                  seed: int = 0, batch: int = 20000, max_batches: int = 200):
    """Monte-Carlo rectangle probability of a zero-mean MVN.

    Sequential-conditioning sampler on the Cholesky factorization;
    deterministic for a given seed.  Returns (probability, standard
    error) with SE at or below ``accuracy`` unless the sample cap is hit.
    """
    corr = np.atleast_2d(np.asarray(correlation, dtype=float))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    d = corr.shape[0]
    if corr.shape != (d, d) or lower.size != d or upper.size != d:
        raise ValueError("dimension mismatch")
    if d > 8:
        raise ValueError("dimension too large")
    if np.any(upper < lower):
        raise ValueError("upper < lower")
    if d == 1:
        return float(ndtr(upper[0]) - ndtr(lower[0])), 0.0

    sym = 0.5 * (corr + corr.T)
    eigmin = np.linalg.eigvalsh(sym).min()
    if eigmin < -1e-8:
        raise ValueError("correlation matrix is not positive semidefinite")
    if eigmin < 1e-10:
        sym = sym + np.eye(d) * (1e-10 - min(eigmin, 0.0))
    chol = np.linalg.cholesky(sym)

    rng = derive_rng(seed, 0x6D766E)
    means = []
    for _ in range(max_batches):
        w = rng.random((batch, d - 1))
        lo = ndtr(np.divide(lower[0], chol[0, 0]))
        hi = ndtr(np.divide(upper[0], chol[0, 0]))
        f = np.full(batch, hi - lo)
        ys = np.empty((batch, d - 1))
        lo_v = np.full(batch, lo)
        hi_v = np.full(batch, hi)
        for i in range(1, d):
            q = np.clip(lo_v + w[:, i - 1] * (hi_v - lo_v), 1e-16, 1 - 1e-16)
            ys[:, i - 1] = ndtri(q)
            shift = ys[:, :i] @ chol[i, :i]
            lo_v = ndtr((lower[i] - shift) / chol[i, i])
            hi_v = ndtr((upper[i] - shift) / chol[i, i])
            f = f * np.maximum(hi_v - lo_v, 0.0)
        means.append(f.mean())
        if len(means) >= 4:
            est = float(np.mean(means))
            se = float(np.std(means, ddof=1) / np.sqrt(len(means)))
            if se <= accuracy:
                return min(max(est, 0.0), 1.0), se
    est = float(np.mean(means))
    se = float(np.std(means, ddof=1) / np.sqrt(len(means)))
    return min(max(est, 0.0), 1.0), se


def _max_abs_z_pvalue(z_values, cov, seed, accuracy=5e-4):
    """p-value of max|Z| against the MVN null with the given covariance."""
    z_values = np.asarray(z_values, dtype=float)
    cov = np.atleast_2d(cov)
    c = float(np.max(np.abs(z_values)))
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    prob, se = mvn_rectangle(corr, -c * np.ones(corr.shape[0]),
                             c * np.ones(corr.shape[0]), accuracy=accuracy, seed=seed)
    return c, 1.0 - prob, se


def lee_test(ds, seed: int = 0) -> TestReport:
    """Max of |Z_2|, |Z_3| (the (1,0) and (0,1) weighted logranks),
    referenced to its bivariate normal null."""
    stat = wlr_covariance(ds)
    z = stat.z[1:3]
    cov = stat.sigma[1:3, 1:3]
    if np.any(~np.isfinite(z)) or np.linalg.matrix_rank(cov) < 2:
        # Bonferroni bound over the two marginal two-sided p-values
        c = float(np.nanmax(np.abs(z)))
        p = min(1.0, float(np.nansum(2.0 * (1.0 - ndtr(np.abs(z))))))
        return TestReport("lee", c, p, 0, seed, degenerate=True)
    c, p, _ = _max_abs_z_pvalue(z, cov, seed)
    return TestReport("lee", c, p, 0, seed)


def maxcombo_test(ds, seed: int = 0) -> TestReport:
    """Max of all four standardized weighted logranks against the
    4-dimensional normal rectangle probability."""
    stat = wlr_covariance(ds)
    cov = stat.sigma
    flagged = False
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    if np.linalg.eigvalsh(0.5 * (corr + corr.T)).min() < 1e-8:
        cov = cov + np.eye(4) * 1e-8 * np.max(np.diag(cov))
        flagged = True
    c, p, _ = _max_abs_z_pvalue(stat.z, cov, seed)
    return TestReport("maxcombo", c, p, 0, seed, degenerate=flagged)


def pepe_fleming_statistic(time, event, group) -> float:
    """Weighted Kaplan-Meier statistic: integrated weighted difference of
    the two group survival curves, weight n*G1*G2/(n1*G1 + n2*G2) built
    from the censoring KM survival functions."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    group = np.asarray(group)
    n1 = int((group == 0).sum())
    n2 = int((group == 1).sum())
    n = n1 + n2

    s_curves = []
    g_curves = []
    for g in (0, 1):
        sel = group == g
        s_curves.append(km_fit(time[sel], event[sel]))
        g_curves.append(km_fit(time[sel], 1 - event[sel]))

    grid = np.unique(time)
    end = grid[-1]
    grid = grid[grid < end]
    if grid.size == 0:
        return 0.0
    edges = np.concatenate((grid, [end]))
    widths = np.diff(edges)
    s1 = s_curves[0].survival(grid)
    s2 = s_curves[1].survival(grid)
    g1 = g_curves[0].survival(grid)
    g2 = g_curves[1].survival(grid)
    denom = n1 * g1 + n2 * g2
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(denom > 0, n * g1 * g2 / np.maximum(denom, 1e-300), 0.0)
    return float(np.sqrt(n1 * n2 / n) * np.sum(w * (s1 - s2) * widths))


def pepe_fleming_test(ds, plan, threads: int = 1) -> TestReport:
    """Two-sided Pepe-Fleming test with a permutation reference
    distribution from the imputation engine."""
    from .permute import permutation_pvalue

    if ds.n_groups != 2:
        raise ValueError("Pepe-Fleming requires exactly 2 groups")
    obs = pepe_fleming_statistic(ds.time, ds.event, ds.group)

    def stat(time, event, group, n_groups):
        return np.array([abs(pepe_fleming_statistic(time, event, group))])

    pvals, _, _ = permutation_pvalue(ds, stat, plan, threads=threads)
    return TestReport("pepe_fleming", float(obs), float(pvals[0]),
                      plan.replicates, plan.master_seed)


def k_sample_logrank(ds, weight: str = "unit", seed: int = 0) -> TestReport:
    """K-sample (weighted) logrank chi-square test.

    ``weight='unit'`` is the logrank; ``weight='pooled_km_left'`` weighs
    each event time by the left-continuous pooled KM (the Peto-Peto
    variant).  The hypergeometric covariance uses the same
    finite-population factor as the two-sample G-family variance, so for
    K=2 with unit weight the chi-square equals Z_1^2 exactly.
    """
    k = ds.n_groups
    u = np.unique(ds.time[ds.event == 1])
    d = np.zeros((k, u.size))
    y = np.zeros((k, u.size))
    for g in range(k):
        sel = ds.group == g
        tg = np.sort(ds.time[sel])
        y[g] = tg.size - np.searchsorted(tg, u, side="left")
        te = np.sort(ds.time[sel & (ds.event == 1)])
        d[g] = np.searchsorted(te, u, side="right") - np.searchsorted(te, u, side="left")
    y_tot = y.sum(axis=0)
    d_tot = d.sum(axis=0)
    if weight == "unit":
        w = np.ones(u.size)
    elif weight == "pooled_km_left":
        surv = np.cumprod(1.0 - d_tot / y_tot)
        w = np.concatenate(([1.0], surv[:-1]))
    else:
        raise ValueError(f"unknown weight {weight!r}")

    frac = y / y_tot  # (k, times)
    u_vec = (w * (d - frac * d_tot)).sum(axis=1)
    factor = w * w * d_tot * (1.0 - (d_tot - 1.0) / y_tot)
    cov = np.einsum("t,it,jt->ij", factor, frac, -frac)
    cov[np.diag_indices(k)] += (factor * frac).sum(axis=1)

    u_red = u_vec[:-1]
    cov_red = cov[:-1, :-1]
    rank = np.linalg.matrix_rank(cov_red, tol=1e-10 * max(np.trace(cov_red), 1e-300))
    degenerate = rank < k - 1
    if degenerate:
        stat = float(u_red @ np.linalg.pinv(cov_red) @ u_red)
        df = int(rank)
    else:
        stat = float(u_red @ np.linalg.solve(cov_red, u_red))
        df = k - 1
    if df == 0 or not np.isfinite(stat):
        return TestReport("logrank" if weight == "unit" else "peto_peto",
                          0.0, 1.0, 0, seed, degenerate=True)
    p = float(chi2_dist.sf(stat, df))
    return TestReport("logrank" if weight == "unit" else "peto_peto",
                      stat, p, 0, seed, degenerate=degenerate)
