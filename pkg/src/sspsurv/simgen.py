"""Scenario-based survival data generation and size/power studies.

Scenarios are declarative: per-group failure and censoring distributions
given either as :class:`DistributionSpec` values or as compact spec
strings such as ``"min(exp(0.85),unif(0,10))"``.  A built-in registry
covers a null family (K = 3, 4, 5), two piecewise-exponential
alternatives with K = 3 (and their two-group restrictions), and six
two-sample designs, each under four censoring variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._streams import derive_rng
from .dataset import SurvivalDataset
from .permute import PermutationPlan, run_test_suite

__all__ = [
    "DistributionSpec",
    "ScenarioSpec",
    "PowerResult",
    "parse_distribution",
    "sample_distribution",
    "generate_dataset",
    "run_power_study",
    "scenario",
    "scenario_names",
    "CENSORING_VARIANTS",
]

CENSORING_VARIANTS = ("equal_25", "equal_50", "unequal_mild", "unequal_severe")

_KINDS = {
    "exponential": 1,        # (rate)
    "weibull": 2,            # (shape, scale), S(t) = exp(-(t/scale)^shape)
    "log_logistic": 2,       # (shape, scale), S(t) = 1/(1 + (t/scale)^shape)
    "log_normal": 2,         # (mu, sigma)
    "uniform": 2,            # (a, b)
    "lomax": 2,              # (shape, scale), S(t) = (1 + t/scale)^(-shape)
    "never": 0,              # point mass at +inf (no censoring)
    "min_of": 0,
    "piecewise_exponential": 0,
    "piecewise_weibull": 0,
}


@dataclass(frozen=True)
class DistributionSpec:
    """One failure- or censoring-time law.

    ``params`` holds the scalar parameters; piecewise kinds additionally
    use ``breakpoints`` (segment boundaries, strictly increasing) with
    one rate per segment (``piecewise_exponential``) or one
    (shape, scale) pair per segment flattened into ``params``
    (``piecewise_weibull``, segments glued by hazard so the survival
    function stays continuous).  ``min_of`` takes the minimum of its two
    ``parts``.
    """

    kind: str
    params: tuple = ()
    breakpoints: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "breakpoints",
                           tuple(float(b) for b in self.breakpoints))
        k, p = self.kind, self.params
        if _KINDS[k] and len(p) != _KINDS[k]:
            raise ValueError(f"{k} takes {_KINDS[k]} parameters, got {len(p)}")
        if k in ("exponential", "weibull", "log_logistic", "lomax") and min(p) <= 0:
            raise ValueError(f"{k} parameters must be positive")
        if k == "log_normal" and p[1] <= 0:
            raise ValueError("log_normal sigma must be positive")
        if k == "uniform" and not (0 <= p[0] < p[1]):
            raise ValueError("uniform requires 0 <= a < b")
        if k == "min_of":
            if len(self.parts) != 2 or not all(
                    isinstance(s, DistributionSpec) for s in self.parts):
                raise ValueError("min_of takes exactly two component specs")
        elif self.parts:
            raise ValueError(f"{k} takes no component specs")
        if k in ("piecewise_exponential", "piecewise_weibull"):
            bp = np.asarray(self.breakpoints)
            if bp.size == 0 or np.any(bp <= 0) or np.any(np.diff(bp) <= 0):
                raise ValueError("breakpoints must be positive and strictly increasing")
            n_seg = bp.size + 1
            need = n_seg if k == "piecewise_exponential" else 2 * n_seg
            if len(p) != need or min(p) <= 0:
                raise ValueError(f"{k} needs {need} positive parameters for "
                                 f"{n_seg} segments, got {len(p)}")
        elif self.breakpoints:
            raise ValueError(f"{k} takes no breakpoints")

    def __str__(self):
        fmt = ",".join(repr(v) for v in self.params)
        if self.kind == "min_of":
            return f"min({self.parts[0]},{self.parts[1]})"
        if self.kind == "piecewise_exponential":
            return "pwexp(%s|%s)" % (",".join(repr(b) for b in self.breakpoints), fmt)
        if self.kind == "piecewise_weibull":
            segs = "|".join(f"{self.params[2*i]!r},{self.params[2*i+1]!r}"
                            for i in range(len(self.params) // 2))
            return "pwweib(%s|%s)" % (",".join(repr(b) for b in self.breakpoints), segs)
        short = {"exponential": "exp", "weibull": "weibull", "log_logistic": "llogis",
                 "log_normal": "lnorm", "uniform": "unif", "lomax": "lomax",
                 "never": "never"}[self.kind]
        return f"{short}({fmt})"


_SHORT = {"exp": "exponential", "weibull": "weibull", "llogis": "log_logistic",
          "lnorm": "log_normal", "unif": "uniform", "lomax": "lomax",
          "never": "never"}


def _split_top(text: str, sep: str) -> list:
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return out


def parse_distribution(text: str) -> DistributionSpec:
    """Parse a compact spec string into a :class:`DistributionSpec`.

    Grammar: ``exp(rate)``, ``weibull(shape,scale)``,
    ``llogis(shape,scale)``, ``lnorm(mu,sigma)``, ``unif(a,b)``,
    ``lomax(shape,scale)``, ``never()``, ``min(spec,spec)``,
    ``pwexp(b1,...,bm|r1,...,r(m+1))`` and
    ``pwweib(b1,...,bm|shape1,scale1|...|shape(m+1),scale(m+1))``.
    """
    text = text.strip()
    lparen = text.find("(")
    if lparen < 0 or not text.endswith(")"):
        raise ValueError(f"malformed distribution spec {text!r}")
    name, inner = text[:lparen].strip(), text[lparen + 1:-1]
    if name == "min":
        parts = _split_top(inner, ",")
        if len(parts) != 2:
            raise ValueError(f"min() takes two specs: {text!r}")
        return DistributionSpec("min_of",
                                parts=tuple(parse_distribution(p) for p in parts))
    if name == "pwexp":
        groups = [g for g in inner.split("|")]
        if len(groups) != 2:
            raise ValueError(f"pwexp syntax is pwexp(breaks|rates): {text!r}")
        bp = [float(v) for v in groups[0].split(",")]
        rates = [float(v) for v in groups[1].split(",")]
        return DistributionSpec("piecewise_exponential", tuple(rates), tuple(bp))
    if name == "pwweib":
        groups = inner.split("|")
        if len(groups) < 3:
            raise ValueError(f"pwweib syntax is pwweib(breaks|shape,scale|...): {text!r}")
        bp = [float(v) for v in groups[0].split(",")]
        params = []
        for seg in groups[1:]:
            vals = [float(v) for v in seg.split(",")]
            if len(vals) != 2:
                raise ValueError(f"each pwweib segment needs shape,scale: {text!r}")
            params.extend(vals)
        return DistributionSpec("piecewise_weibull", tuple(params), tuple(bp))
    if name == "never":
        if inner.strip():
            raise ValueError("never() takes no parameters")
        return DistributionSpec("never")
    if name not in _SHORT:
        raise ValueError(f"unknown distribution {name!r} in {text!r}")
    params = tuple(float(v) for v in inner.split(",")) if inner.strip() else ()
    return DistributionSpec(_SHORT[name], params)


def _open_unit(rng, m):
    # uniform on (0, 1], avoiding the 0 that np.random.Generator.random allows
    return 1.0 - rng.random(m)


def _piecewise_cumhaz_breaks(spec):
    """Cumulative hazard evaluated at each breakpoint."""
    bp = np.asarray(spec.breakpoints)
    lo = np.concatenate(([0.0], bp))
    if spec.kind == "piecewise_exponential":
        rates = np.asarray(spec.params)
        seg = rates[:-1] * (bp - lo[:-1])
        return np.concatenate(([0.0], np.cumsum(seg)))
    shapes = np.asarray(spec.params[0::2])
    scales = np.asarray(spec.params[1::2])
    seg = ((bp / scales[:-1]) ** shapes[:-1]
           - (lo[:-1] / scales[:-1]) ** shapes[:-1])
    return np.concatenate(([0.0], np.cumsum(seg)))


def sample_distribution(spec: DistributionSpec, rng: np.random.Generator,
                        size: int = None):
    """Draw from ``spec``; scalar when ``size`` is None, else a 1-d array.

    Piecewise kinds sample by inverting the cumulative hazard of an
    Exp(1) draw segment by segment.
    """
    scalar = size is None
    m = 1 if scalar else int(size)
    k = spec.kind
    if k == "exponential":
        out = rng.exponential(1.0 / spec.params[0], m)
    elif k == "weibull":
        shape, scale = spec.params
        out = scale * rng.weibull(shape, m)
    elif k == "log_logistic":
        shape, scale = spec.params
        u = _open_unit(rng, m)                       # u plays the role of S(t)
        out = scale * ((1.0 - u) / u) ** (1.0 / shape)
    elif k == "log_normal":
        out = rng.lognormal(spec.params[0], spec.params[1], m)
    elif k == "uniform":
        out = rng.uniform(spec.params[0], spec.params[1], m)
    elif k == "lomax":
        shape, scale = spec.params
        u = _open_unit(rng, m)
        out = scale * (u ** (-1.0 / shape) - 1.0)
    elif k == "never":
        out = np.full(m, np.inf)
    elif k == "min_of":
        out = np.minimum(sample_distribution(spec.parts[0], rng, m),
                         sample_distribution(spec.parts[1], rng, m))
    elif k == "piecewise_exponential":
        e = rng.exponential(1.0, m)
        cum = _piecewise_cumhaz_breaks(spec)
        lo = np.concatenate(([0.0], np.asarray(spec.breakpoints)))
        rates = np.asarray(spec.params)
        seg = np.searchsorted(cum[1:], e, side="right")
        out = lo[seg] + (e - cum[seg]) / rates[seg]
    elif k == "piecewise_weibull":
        e = rng.exponential(1.0, m)
        cum = _piecewise_cumhaz_breaks(spec)
        lo = np.concatenate(([0.0], np.asarray(spec.breakpoints)))
        shapes = np.asarray(spec.params[0::2])
        scales = np.asarray(spec.params[1::2])
        seg = np.searchsorted(cum[1:], e, side="right")
        sh, sc = shapes[seg], scales[seg]
        out = sc * ((e - cum[seg]) + (lo[seg] / sc) ** sh) ** (1.0 / sh)
    else:  # pragma: no cover - guarded by the dataclass validator
        raise ValueError(f"unknown kind {k!r}")
    return float(out[0]) if scalar else out


def survival_function(spec: DistributionSpec, t):
    """Analytic S(t) for ``spec`` (used for goodness-of-fit checks)."""
    t = np.asarray(t, dtype=float)
    k = spec.kind
    if k == "exponential":
        return np.exp(-spec.params[0] * t)
    if k == "weibull":
        shape, scale = spec.params
        return np.exp(-((t / scale) ** shape))
    if k == "log_logistic":
        shape, scale = spec.params
        return 1.0 / (1.0 + (t / scale) ** shape)
    if k == "log_normal":
        from scipy.stats import lognorm
        mu, sigma = spec.params
        return lognorm.sf(t, sigma, scale=math.exp(mu))
    if k == "uniform":
        a, b = spec.params
        return np.clip((b - t) / (b - a), 0.0, 1.0)
    if k == "lomax":
        shape, scale = spec.params
        return (1.0 + t / scale) ** (-shape)
    if k == "never":
        return np.ones_like(t)
    if k == "min_of":
        return (survival_function(spec.parts[0], t)
                * survival_function(spec.parts[1], t))
    cum = _piecewise_cumhaz_breaks(spec)
    lo = np.concatenate(([0.0], np.asarray(spec.breakpoints)))
    seg = np.searchsorted(np.asarray(spec.breakpoints), t, side="right")
    if k == "piecewise_exponential":
        rates = np.asarray(spec.params)
        h = cum[seg] + rates[seg] * (t - lo[seg])
    else:
        shapes = np.asarray(spec.params[0::2])
        scales = np.asarray(spec.params[1::2])
        sh, sc = shapes[seg], scales[seg]
        h = cum[seg] + (t / sc) ** sh - (lo[seg] / sc) ** sh
    return np.exp(-h)


@dataclass(frozen=True)
class ScenarioSpec:
    """Per-group generative description for one simulation setting."""

    name: str
    k: int
    failure: tuple
    censoring: tuple
    group_fractions: tuple = ()

    def __post_init__(self):
        def coerce(specs):
            return tuple(parse_distribution(s) if isinstance(s, str) else s
                         for s in specs)
        object.__setattr__(self, "failure", coerce(self.failure))
        object.__setattr__(self, "censoring", coerce(self.censoring))
        if not self.group_fractions:
            object.__setattr__(self, "group_fractions",
                               tuple(1.0 / self.k for _ in range(self.k)))
        object.__setattr__(self, "group_fractions",
                           tuple(float(f) for f in self.group_fractions))
        if self.k < 2:
            raise ValueError("scenario needs at least two groups")
        if len(self.failure) != self.k or len(self.censoring) != self.k:
            raise ValueError("failure and censoring lists must have k entries")
        if len(self.group_fractions) != self.k:
            raise ValueError("group_fractions must have k entries")
        if abs(sum(self.group_fractions) - 1.0) > 1e-9 or min(self.group_fractions) <= 0:
            raise ValueError("group fractions must be positive and sum to 1")


def _group_sizes(fractions, n):
    """Largest-remainder apportionment of n among the groups."""
    raw = np.asarray(fractions) * n
    sizes = np.floor(raw).astype(int)
    rem = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:rem]] += 1
    if np.any(sizes == 0):
        raise ValueError(f"n={n} leaves an empty group for fractions {fractions}")
    return sizes


def generate_dataset(scen: ScenarioSpec, n: int, rng: np.random.Generator,
                     ) -> SurvivalDataset:
    """One simulated dataset: per subject X from the group's failure law,
    C from its censoring law, T = min(X, C), event = I(X <= C)."""
    sizes = _group_sizes(scen.group_fractions, n)
    time = np.empty(n)
    event = np.empty(n, dtype=np.int64)
    group = np.empty(n, dtype=np.int64)
    pos = 0
    for g in range(scen.k):
        m = int(sizes[g])
        x = sample_distribution(scen.failure[g], rng, m)
        c = sample_distribution(scen.censoring[g], rng, m)
        sl = slice(pos, pos + m)
        time[sl] = np.minimum(x, c)
        event[sl] = (x <= c).astype(np.int64)
        group[sl] = g
        pos += m
    return SurvivalDataset(time, event, group)


# ---------------------------------------------------------------------------
# Built-in scenario registry.

_E = math.e


def _registry():
    minu = lambda rate, a, b: f"min(exp({rate}),unif({a},{b}))"
    reg = {}

    for k in (3, 4, 5):
        ll = ["llogis(1,1)"] * k
        mild = [minu(0.85, 0, 10)] * 2 + ["unif(0,10)"] * (k - 2)
        severe = ([minu(0.85, 0, 10), minu(0.25, 0, 10), "unif(0,10)"]
                  + ["lnorm(1.5,0.5)"] * (k >= 4) + ["exp(1.5)"] * (k >= 5))
        reg[f"null{k}"] = {
            "failure": ll,
            "equal_25": ["lnorm(1.1,0.5)"] * k,
            "equal_50": ["lnorm(0,0.5)"] * k,
            "unequal_mild": mild,
            "unequal_severe": severe,
        }

    d1 = "pwexp(0.44,1.05,1.47|0.5,0.1,1.5,1)"
    d23 = "pwexp(0.38,1.02,1.47|1.5,0.1,0.5,1)"
    reg["D"] = {
        "failure": [d1, d23, d23],
        "equal_25": ["unif(1.1,3)"] * 3,
        "equal_50": ["unif(0.1,2.1)"] * 3,
        "unequal_mild": [minu(0.5, 0.5, 3.5)] * 2 + ["unif(0.5,3.5)"],
        "unequal_severe": [minu(0.3, 0.5, 3.5), minu(0.5, 0.5, 3.5), "unif(0.5,3.5)"],
    }

    j1 = "exp(1)"
    j23 = "pwexp(0.1,0.45|1,1.7,0.5)"
    reg["J-2"] = {
        "failure": [j1, j23, j23],
        "equal_25": ["exp(0.3)"] * 3,
        "equal_50": ["exp(1)"] * 3,
        "unequal_mild": [minu(0.9, 0, 4)] * 2 + ["unif(0,4)"],
        "unequal_severe": [minu(0.9, 0, 4), minu(0.5, 0, 4), "unif(0,4)"],
    }

    # two-group restrictions of the K=3 alternatives
    for base, name in (("D", "D-2"), ("J-2", "J-2-2")):
        reg[name] = {key: specs[:2] for key, specs in reg[base].items()}

    def two_sample(name, f1, f2, eq25, eq50, a, b, th1, th2):
        reg[name] = {
            "failure": [f1, f2],
            "equal_25": [eq25] * 2,
            "equal_50": [eq50] * 2,
            "unequal_mild": [minu(th1, a, b), minu(th2, a, b)],
            "unequal_severe": [minu(th1, a, b), f"unif({a},{b})"],
        }

    two_sample("L", "weibull(0.849,20)", "weibull(0.849,10)",
               "weibull(5,24)", "weibull(1.5,12)", 0, 40, 0.025, 0.05)
    two_sample("M", "pwweib(0.5|4,1|2,1.5)", "pwweib(0.5|2.2,1|1.5,1.5)",
               "weibull(0.9,5.5)", "weibull(0.35,3.4)", 0, 4.5, 0.25, 0.14)
    two_sample("N", DistributionSpec("lomax", (math.exp(-0.5), 1.0)), "llogis(1,1)",
               "lnorm(0.75,0.5)", "lnorm(-0.1,0.5)", 0, 12, 1.5, 0.4)
    two_sample("O", DistributionSpec("lomax", (math.exp(-1.0), 1.0)), "llogis(1,1)",
               "lnorm(-0.6,0.5)", "lnorm(-1.8,0.5)", 0, 8, 2, 0.5)
    two_sample("P", DistributionSpec("lomax", (1.0, math.exp(-1.0))), "llogis(1,1)",
               "lnorm(0.6,0.5)", "lnorm(-0.5,0.5)", 0, 8, 2, 0.5)
    two_sample("Q", DistributionSpec("lomax", (_E, _E)), "llogis(1,1)",
               "lnorm(0.7,0.5)", "lnorm(-0.15,0.5)", 0, 8, 0.9, 0.3)
    return reg


_REGISTRY = _registry()


def scenario_names():
    return sorted(_REGISTRY)


def scenario(name: str, censoring_variant: str = "equal_25") -> ScenarioSpec:
    """Look up a built-in scenario under one of the censoring variants."""
    if name not in _REGISTRY:
        raise ValueError(f"unknown scenario {name!r}; available: "
                         f"{', '.join(scenario_names())}")
    if censoring_variant not in CENSORING_VARIANTS:
        raise ValueError(f"unknown censoring variant {censoring_variant!r}; "
                         f"available: {', '.join(CENSORING_VARIANTS)}")
    entry = _REGISTRY[name]
    failure = entry["failure"]
    return ScenarioSpec(name, len(failure), tuple(failure),
                        tuple(entry[censoring_variant]))


@dataclass(frozen=True)
class PowerResult:
    """Empirical rejection rates for one (scenario, n) cell."""

    scenario: str
    censoring_variant: str
    n: int
    replications: int
    alpha: float
    rejection_rate: dict = field(default_factory=dict)
    mc_se: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rejection_rate.values():
            if not 0.0 <= r <= 1.0:
                raise ValueError("rejection rates must lie in [0, 1]")


def run_power_study(name, n_grid, censoring_variant="equal_25",
                    methods=("konp_p", "konp_lr", "logrank", "peto_peto"),
                    replications=500, alpha=0.05,
                    plan: PermutationPlan = None, master_seed: int = 0,
                    threads: int = 1):
    """Monte-Carlo rejection rates over a grid of sample sizes.

    ``name`` is a registry name or a ready :class:`ScenarioSpec`.  Each
    replication draws its dataset and its permutation seed from a stream
    derived from (master_seed, n, replication), so results are identical
    for any thread count and any order of evaluation.
    """
    if isinstance(name, ScenarioSpec):
        scen = name
    else:
        scen = scenario(name, censoring_variant)
    if plan is None:
        plan = PermutationPlan(imputations=1, permutations=1000,
                               master_seed=master_seed)
    results = []
    for n in n_grid:
        n = int(n)
        rejections = {m: 0 for m in methods}
        for rep in range(replications):
            rng = derive_rng(master_seed, n, rep)
            ds = generate_dataset(scen, n, rng)
            rep_plan = PermutationPlan(plan.imputations, plan.permutations,
                                       int(rng.integers(2 ** 63 - 1)),
                                       plan.pvalue_rule)
            for report in run_test_suite(ds, methods, rep_plan, threads=threads):
                if report.method in rejections and report.pvalue <= alpha:
                    rejections[report.method] += 1
        rate = {m: rejections[m] / replications for m in methods}
        se = {m: math.sqrt(rate[m] * (1.0 - rate[m]) / replications)
              for m in methods}
        results.append(PowerResult(scen.name, censoring_variant, n,
                                   replications, alpha, rate, se))
    return results
