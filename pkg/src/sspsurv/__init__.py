"""K-sample survival-distribution tests for right-censored data.

Sample-space-partition (KONP) statistics with an imputation-based
permutation engine valid under unequal censoring, the Cauchy combination
robust test, classical weighted-logrank comparators, and a simulation
harness for size/power studies.
"""

from importlib.resources import files as _files

from .dataset import SurvivalDataset, DatasetError, load_csv, write_csv, summarize
from .km import KMCurve, km_fit, km_censoring_fit, km_conditional_fit, km_sample
from .konp import (KonpResult, PartitionTable, TruncationBounds, konp_statistic,
                   partition_table, truncation_bounds)
from .permute import (ALL_METHODS, ImputedTable, NullImputer, PermutationPlan,
                      TestReport, cauchy_combination, impute_replicate,
                      permutation_pvalue, run_test_suite)
from .wlr import (WlrStatistic, k_sample_logrank, lee_test, maxcombo_test,
                  mvn_rectangle, pepe_fleming_test, weighted_logrank,
                  wlr_covariance)

__version__ = "0.1.0"


def load_gastric() -> SurvivalDataset:
    """Bundled 90-patient gastric-cancer trial data (chemotherapy vs
    combined chemotherapy and radiation)."""
    return load_csv(_files("sspsurv.data") / "gastric.csv")
