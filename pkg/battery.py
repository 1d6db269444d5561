"""
Randomness battery: result types, configuration and the dispatcher.

Every test maps a bit sequence and its parameters to one or more P-values
and passes when each P-value is at least alpha. Tests whose applicability
gates reject the input are reported as skipped, never as failed.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

import config
from bitstream import BitSequence
from errors import BatteryError, StatsError, TooFewBits, UnknownTest

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"

# Report order
TEST_IDS = (
    "frequency",
    "block_frequency",
    "runs",
    "longest_run",
    "rank",
    "non_overlapping_template",
    "overlapping_template",
    "universal",
    "linear_complexity",
    "serial",
    "cumulative_sums",
    "count_the_ones",
    "parking_lot",
    "poker",
    "uniform_distribution",
    "max_subseries",
    "extreme_point",
)

TestParams = Dict[str, Any]


@dataclass
class TestResult:
    __test__ = False

    test_id: str
    params: TestParams
    statistics: Dict[str, float]
    p_values: List[float]
    alpha: float = config.DEFAULT_ALPHA
    skipped: bool = False
    reason: Optional[str] = None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.p_values = [min(1.0, max(0.0, float(p))) for p in self.p_values]
        self.passed = (not self.skipped) and all(p >= self.alpha for p in self.p_values)

    @property
    def verdict(self) -> str:
        if self.skipped:
            return SKIPPED
        return PASS if self.passed else FAIL

    @classmethod
    def skip(cls, test_id: str, params: TestParams, reason: str, alpha: float) -> "TestResult":
        return cls(test_id, params, {}, [], alpha=alpha, skipped=True, reason=reason)


class BatteryConfig(BaseModel):
    alpha: float = Field(default=config.DEFAULT_ALPHA, gt=0.0, lt=1.0, description="Significance level")
    tests: List[str] = Field(default_factory=lambda: list(TEST_IDS), description="Enabled test ids")
    params: Dict[str, Dict[str, Any]] = Field(default_factory=dict, description="Per-test parameter overrides")
    workers: int = Field(default=1, ge=1, description="Threads evaluating tests")

    @field_validator("tests")
    @classmethod
    def _known_tests(cls, tests: List[str]) -> List[str]:
        unknown = [t for t in tests if t not in TEST_IDS]
        if unknown:
            raise ValueError(f"Unknown test ids: {', '.join(unknown)}")
        return tests

    @field_validator("params")
    @classmethod
    def _known_params(cls, params: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        unknown = [t for t in params if t not in TEST_IDS]
        if unknown:
            raise ValueError(f"Parameters given for unknown tests: {', '.join(unknown)}")
        return params


@dataclass
class BatteryReport:
    results: List[TestResult]
    n: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def runnable(self) -> List[TestResult]:
        return [r for r in self.results if not r.skipped]

    @property
    def failures(self) -> List[TestResult]:
        return [r for r in self.runnable if not r.passed]

    @property
    def passed(self) -> bool:
        return not self.failures


# Shared helpers for the test modules

def as_bits(seq: Union[BitSequence, np.ndarray, Sequence[int]]) -> np.ndarray:
    if isinstance(seq, BitSequence):
        return seq.bits
    return np.asarray(seq, dtype=np.uint8)


def require_bits(test_id: str, n: int, needed: int) -> None:
    if n < needed:
        raise TooFewBits(test_id, needed, n)


def window_values(bits: np.ndarray, m: int) -> np.ndarray:
    """Integer value of every overlapping m-bit window along the last axis (MSB first)."""
    width = bits.shape[-1] - m + 1
    if width <= 0:
        return np.zeros(bits.shape[:-1] + (0,), dtype=np.int64)
    values = np.zeros(bits.shape[:-1] + (width,), dtype=np.int64)
    for k in range(m):
        values = (values << 1) | bits[..., k:k + width]
    return values


def block_words(bits: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping k-bit words, MSB first; trailing bits are dropped."""
    count = bits.size // k
    blocks = bits[: count * k].reshape(count, k).astype(np.int64)
    values = np.zeros(count, dtype=np.int64)
    for j in range(k):
        values = (values << 1) | blocks[:, j]
    return values


def chi_square(observed: np.ndarray, expected: np.ndarray) -> float:
    observed = np.asarray(observed, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    return float(np.sum((observed - expected) ** 2 / expected))


def _registry() -> Dict[str, Callable[..., TestResult]]:
    import diehard_tests
    import nist_tests

    return {
        "frequency": nist_tests.frequency_monobit,
        "block_frequency": nist_tests.block_frequency,
        "runs": nist_tests.runs_test,
        "longest_run": nist_tests.longest_run,
        "rank": nist_tests.rank_test,
        "non_overlapping_template": nist_tests.non_overlapping_template,
        "overlapping_template": nist_tests.overlapping_template,
        "universal": nist_tests.maurer_universal,
        "linear_complexity": nist_tests.linear_complexity,
        "serial": nist_tests.serial_test,
        "cumulative_sums": nist_tests.cumulative_sums_both,
        "count_the_ones": diehard_tests.count_the_ones,
        "parking_lot": diehard_tests.parking_lot,
        "poker": diehard_tests.poker_test,
        "uniform_distribution": diehard_tests.uniform_distribution,
        "max_subseries": diehard_tests.max_subseries,
        "extreme_point": diehard_tests.extreme_point,
    }


def run_test(test_id: str, seq: BitSequence, alpha: float = config.DEFAULT_ALPHA,
             params: Optional[TestParams] = None) -> TestResult:
    """Run one test, turning gate and domain errors into a skipped result."""
    registry = _registry()
    if test_id not in registry:
        raise UnknownTest(f"Unknown test id: {test_id}")
    params = dict(params or {})
    try:
        return registry[test_id](seq, alpha=alpha, **params)
    except (BatteryError, StatsError, ValueError) as e:
        logger.warning(f"Skipping {test_id}: {str(e)}")
        return TestResult.skip(test_id, params, str(e), alpha)


def run_battery(seq: BitSequence, cfg: BatteryConfig, metadata: Optional[Dict[str, Any]] = None) -> BatteryReport:
    enabled = [t for t in TEST_IDS if t in cfg.tests]
    jobs: List[Tuple[str, TestParams]] = [(t, cfg.params.get(t, {})) for t in enabled]

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda job: run_test(job[0], seq, cfg.alpha, job[1]), jobs))
    else:
        results = [run_test(t, seq, cfg.alpha, p) for t, p in jobs]

    report = BatteryReport(results=results, n=len(seq), metadata=dict(metadata or {}))
    logger.info(
        f"Battery on {len(seq)} bits: {len(report.runnable)} run, "
        f"{len(report.failures)} failed, {len(results) - len(report.runnable)} skipped"
    )
    return report
