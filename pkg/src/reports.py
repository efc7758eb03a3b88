# src/reports.py
"""
Machine-readable experiment reports.

Every pass/fail decision is stored with its estimate, target and standard
error. Files written without ``timing`` are byte-identical across reruns
of the same seeded configuration.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, validator

from src.config import MC_ATOL, OUTPUT_DIR, TOL_MULT
from src.rmt import NORMALIZATIONS

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"


class ExperimentConfig(BaseModel):
    scenario: str
    dims: list[list[int]] = []
    trials: int = 0
    seed: int = 0
    tol_mult: float = TOL_MULT
    out: str = OUTPUT_DIR
    threads: Optional[int] = None
    params: dict[str, Any] = {}

    @validator("dims")
    def dims_schedule_increasing(cls, v):
        if any(not dims or min(dims) < 1 for dims in v):
            raise ValueError(f"Every dims entry must be nonempty and positive, got {v}")
        smallest = [min(dims) for dims in v]
        if any(b <= a for a, b in zip(smallest, smallest[1:])):
            raise ValueError(f"Dims schedule must be strictly increasing in its smallest leg, got {v}")
        return v

    @validator("trials")
    def trials_nonnegative(cls, v):
        if v < 0:
            raise ValueError("trials must be nonnegative")
        return v

    @validator("tol_mult")
    def tol_mult_positive(cls, v):
        if v <= 0:
            raise ValueError("tol_mult must be positive")
        return v


class StatisticResult(BaseModel):
    name: str
    estimate: float
    stderr: float
    target: float
    k: float
    allowance: float = 0.0
    passed: bool

    @classmethod
    def compare(
        cls, name: str, estimate: float, stderr: float, target: float, k: float, allowance: float = 0.0
    ) -> "StatisticResult":
        """Pass iff |estimate - target| <= k·stderr + MC_ATOL + allowance."""
        estimate, stderr, target = float(estimate), float(stderr), float(target)
        passed = abs(estimate - target) <= k * stderr + MC_ATOL + allowance
        return cls(name=name, estimate=estimate, stderr=stderr, target=target, k=k, allowance=allowance, passed=passed)

    @classmethod
    def exact(cls, name: str, estimate: float, target: float, rtol: float) -> "StatisticResult":
        """Exact-path check: the allowance is rtol relative to the target."""
        return cls.compare(name, estimate, 0.0, target, k=0.0, allowance=rtol * abs(float(target)))


class DecayFit(BaseModel):
    statistic: str
    sizes: list[int]
    values: list[float]
    ratios: list[float]
    slope: float
    min_factor: float
    passed: bool

    @classmethod
    def fit(cls, statistic: str, sizes: Sequence[int], values: Sequence[float], min_factor: float) -> "DecayFit":
        """
        Two-point checks between consecutive sizes: every value[i] / value[i+1]
        must be at least min_factor. The log-log slope is reported alongside.
        """
        if len(sizes) != len(values) or len(sizes) < 2:
            raise ValueError("A decay fit needs at least two (size, value) points")
        values = [float(v) for v in values]
        ratios = [a / b if b > 0 else math.inf for a, b in zip(values, values[1:])]
        positive = [(s, v) for s, v in zip(sizes, values) if v > 0]
        if len(positive) >= 2:
            xs, ys = zip(*positive)
            slope = float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
        else:
            slope = -math.inf
        passed = all(r >= min_factor for r in ratios)
        return cls(
            statistic=statistic, sizes=list(sizes), values=values, ratios=ratios, slope=slope,
            min_factor=min_factor, passed=passed,
        )


class ExperimentReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    config: ExperimentConfig
    normalizations: dict[str, str] = dict(NORMALIZATIONS)
    statistics: list[StatisticResult] = []
    decay_fits: list[DecayFit] = []
    tables: dict[str, list[dict[str, Any]]] = {}
    notes: list[str] = []
    artifacts: list[str] = []
    wall_time: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.statistics) and all(f.passed for f in self.decay_fits)

    @property
    def failures(self) -> list[str]:
        return [s.name for s in self.statistics if not s.passed] + [f.statistic for f in self.decay_fits if not f.passed]

    def add(self, result: Union[StatisticResult, DecayFit]) -> None:
        if isinstance(result, DecayFit):
            self.decay_fits.append(result)
            logger.info("%s decay ratios %s (min %.3g)", result.statistic, result.ratios, result.min_factor)
        else:
            self.statistics.append(result)
            logger.info(
                "%s: estimate=%.6g target=%.6g stderr=%.3g -> %s",
                result.name, result.estimate, result.target, result.stderr, "pass" if result.passed else "FAIL",
            )

    def statistics_frame(self) -> pd.DataFrame:
        rows = [s.dict() for s in self.statistics]
        rows += [
            {"name": f"decay:{f.statistic}", "estimate": min(f.ratios), "stderr": None, "target": f.min_factor,
             "k": None, "allowance": None, "passed": f.passed}
            for f in self.decay_fits
        ]
        return pd.DataFrame(rows, columns=["name", "estimate", "stderr", "target", "k", "allowance", "passed"])

    def to_json(self, timing: bool = False) -> str:
        exclude = None if timing else {"wall_time"}
        return self.json(exclude=exclude, indent=2)

    def write(self, out_dir: Union[str, Path, None] = None, timing: bool = False) -> list[Path]:
        """Write <scenario>.json and <scenario>_statistics.csv; returns the paths."""
        out = Path(out_dir or self.config.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.config.scenario.replace("-", "_")
        json_path = out / f"{stem}.json"
        csv_path = out / f"{stem}_statistics.csv"
        json_path.write_text(self.to_json(timing=timing) + "\n")
        self.statistics_frame().to_csv(csv_path, index=False, float_format="%.17g")
        logger.info("Wrote %s and %s", json_path, csv_path)
        return [json_path, csv_path]
