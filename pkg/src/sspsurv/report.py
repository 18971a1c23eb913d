"""Result record shared by all tests."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["TestReport"]


@dataclass(frozen=True)
class TestReport:
    method: str
    statistic: float
    pvalue: float
    replicates_used: int
    seed: int
    degenerate: bool = False
