"""Distance sweeps and maximum secure distance against a QBER threshold."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from scipy.optimize import bisect

from .oracle import qber_oracle
from .protocol import FIBER_LOSS_DB_PER_KM, ChannelSpec, DetectorSpec, Variant, transmittance
from .rates import Path, RateReport, approx_report, qber_paper_sums

__all__ = [
    "DEFAULT_THRESHOLD",
    "MonotonicityError",
    "SweepRow",
    "SweepSpec",
    "ThresholdUnreachableError",
    "distance_sweep",
    "max_distance",
    "rate_report",
]

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.11
# Beyond this the transmittance of a 0.2 dB/km fiber heads for underflow.
MAX_SEARCH_KM = 12_800.0
# Relative slack allowed when asserting a nondecreasing QBER along a sweep.
MONOTONE_RTOL = 1e-12


class ThresholdUnreachableError(ValueError):
    """QBER already exceeds the threshold at 0 km, or never reaches it."""


class MonotonicityError(RuntimeError):
    pass


_EVALUATORS = {
    Path.PAPER_SUMS: qber_paper_sums,
    Path.ORACLE: qber_oracle,
    Path.APPROX: approx_report,
}


def rate_report(variant: Variant, det: DetectorSpec, t: float, path: Path | str = Path.PAPER_SUMS) -> RateReport:
    path = Path(path)
    if path not in _EVALUATORS:
        raise ValueError(f"path {path.value!r} is not a deterministic evaluator")
    return _EVALUATORS[path](variant, det, t)


@dataclass(frozen=True)
class SweepSpec:
    variant: Variant
    detector: DetectorSpec
    alpha: float = FIBER_LOSS_DB_PER_KM
    start_km: float = 0.0
    stop_km: float = 1000.0
    step_km: float = 10.0
    threshold: float = DEFAULT_THRESHOLD
    path: Path = Path.PAPER_SUMS

    def __post_init__(self) -> None:
        # start == stop is an empty grid, not an error.
        if self.start_km > self.stop_km:
            raise ValueError(f"start_km={self.start_km} > stop_km={self.stop_km}")
        if self.step_km <= 0:
            raise ValueError(f"step_km={self.step_km} must be > 0")
        if not 0.0 < self.threshold < 0.5:
            raise ValueError(f"threshold={self.threshold} outside (0, 0.5)")
        object.__setattr__(self, "path", Path(self.path))

    def distances(self) -> list[float]:
        """Half-open grid ``[start, stop)``."""
        n = math.ceil((self.stop_km - self.start_km) / self.step_km - 1e-9)
        return [self.start_km + k * self.step_km for k in range(max(n, 0))]


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    transmittance: float
    qber: float
    sift_rate: float
    error_rate: float


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    skipped: int = 0


def distance_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate one row per grid distance; degenerate-sift points are skipped."""
    result = SweepResult()
    for dist in spec.distances():
        t = transmittance(ChannelSpec(spec.alpha, dist))
        if t <= 0.0:
            result.skipped += 1
            continue
        rep = rate_report(spec.variant, spec.detector, t, spec.path)
        if rep.qber is None:
            result.skipped += 1
            continue
        result.rows.append(SweepRow(dist, t, rep.qber, rep.sift_rate, rep.error_rate))
    if result.skipped:
        log.warning("%d sweep points skipped (zero sift rate)", result.skipped)
    for prev, row in zip(result.rows, result.rows[1:]):
        if row.qber < prev.qber * (1.0 - MONOTONE_RTOL):
            raise MonotonicityError(
                f"qber fell from {prev.qber!r} at {prev.distance_km} km to {row.qber!r} at {row.distance_km} km"
            )
    return result


def _qber_at(variant, det, alpha, path, dist):
    rep = rate_report(variant, det, transmittance(ChannelSpec(alpha, dist)), path)
    # Zero sift only happens where nothing is ever kept: treat as fully insecure.
    return 0.5 if rep.qber is None else rep.qber


def max_distance(
    variant: Variant,
    det: DetectorSpec,
    alpha: float = FIBER_LOSS_DB_PER_KM,
    threshold: float = DEFAULT_THRESHOLD,
    path: Path | str = Path.PAPER_SUMS,
) -> float:
    """Largest distance (0.1 km resolution) with QBER below ``threshold``.

    Brackets the crossing by doubling from 100 km, then bisects on distance.
    """
    if alpha <= 0:
        raise ThresholdUnreachableError("lossless channel never reaches the threshold")

    def excess(dist):
        return _qber_at(variant, det, alpha, path, dist) - threshold

    if excess(0.0) >= 0:
        raise ThresholdUnreachableError(f"{variant}: qber at 0 km already >= {threshold}")
    lo, hi = 0.0, 100.0
    while excess(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > MAX_SEARCH_KM:
            raise ThresholdUnreachableError(f"{variant}: qber stays below {threshold} up to {lo} km")
    root = bisect(excess, lo, hi, xtol=1e-6, rtol=1e-12, maxiter=200)
    if abs(excess(root)) > 1e-6:
        raise ThresholdUnreachableError(f"{variant}: bisection did not converge near {root} km")
    return round(root, 1)
