"""Monte Carlo sampling of detector clicks with optional branch stratification.

Every detector of every measurement is drawn independently per pulse. Trials are
cut into fixed-size chunks and chunk ``c`` of stratum ``s`` draws from its own
Philox stream keyed by ``(seed, s, c)``, so estimates do not depend on how
chunks are spread over worker threads.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .oracle import group_specs
from .protocol import DetectorSpec, Scenario, Variant, branch_weights, sift_prefactor
from .rates import Path, RateReport

__all__ = [
    "CHUNK_TRIALS",
    "Decision",
    "McConfig",
    "McEstimate",
    "mc_estimate",
    "sample_pulse",
    "sample_pulses",
]

CHUNK_TRIALS = 1 << 16


class Decision(enum.IntEnum):
    KEEP0 = 0
    KEEP1 = 1
    DISCARD = 2


@dataclass(frozen=True)
class McConfig:
    trials: int
    seed: int = 0
    stratified: bool = True
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials={self.trials} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed={self.seed} must be a 64-bit unsigned integer")


class _Layout:
    """Flattened detector table for one (variant, scenario)."""

    def __init__(self, variant: Variant, det: DetectorSpec, scenario: Scenario):
        probs, self.groups = [], []
        for spec in group_specs(variant, scenario):
            meas = []
            for k, p in enumerate(spec.photons):
                start = len(probs)
                probs.extend(spec.fire_probabilities(det)[k * len(spec.labels) : (k + 1) * len(spec.labels)])
                # Detectors carrying no bit report 2, which never counts as a vote.
                labels = np.array([2 if lab is None else lab for lab in spec.labels], dtype=np.int8)
                meas.append((start, labels))
            self.groups.append(meas)
        self.probs = np.array(probs)
        self.m = variant.m

    def decide(self, uniforms: np.ndarray) -> np.ndarray:
        clicks = uniforms < self.probs
        n = clicks.shape[0]
        count0 = np.zeros(n, dtype=np.int16)
        count1 = np.zeros(n, dtype=np.int16)
        for meas in self.groups:
            out = None
            for start, labels in meas:
                c = clicks[:, start : start + len(labels)]
                one = c.sum(axis=1) == 1
                val = np.where(one, c @ labels.astype(np.int16), -1)
                out = val if out is None else np.where(out == val, out, -1)
            count0 += out == 0
            count1 += out == 1
        decision = np.full(n, Decision.DISCARD, dtype=np.int8)
        decision[(count0 >= self.m) & (count1 < self.m)] = Decision.KEEP0
        decision[(count1 >= self.m) & (count0 < self.m)] = Decision.KEEP1
        return decision


def sample_pulses(variant: Variant, det: DetectorSpec, scenario: Scenario, rng: np.random.Generator, n: int) -> np.ndarray:
    """Decisions for ``n`` independent pulses in one scenario (Alice sent bit 0)."""
    layout = _Layout(variant, det, scenario)
    return layout.decide(rng.random((n, layout.probs.size)))


def sample_pulse(variant: Variant, det: DetectorSpec, scenario: Scenario, rng: np.random.Generator) -> Decision:
    return Decision(int(sample_pulses(variant, det, scenario, rng, 1)[0]))


@dataclass(frozen=True)
class StratumCounts:
    scenario: str
    weight: float
    trials: int
    keep0: int
    keep1: int


@dataclass(frozen=True)
class McEstimate:
    """Point estimates with delta-method standard errors.

    ``degenerate`` marks estimates whose standard errors are not usable: a
    weighted stratum with fewer than two trials, or no kept pulse at all.
    """

    report: RateReport
    se_sift: float
    se_error: float
    se_qber: float | None
    degenerate: bool
    strata: tuple[StratumCounts, ...] = field(default=())

    @property
    def trials(self) -> int:
        return sum(s.trials for s in self.strata)

    @property
    def error_events(self) -> int:
        return sum(s.keep1 for s in self.strata)

    def qber_interval(self, level: float = 0.99) -> tuple[float, float] | None:
        if self.report.qber is None or self.se_qber is None:
            return None
        z = norm.ppf(0.5 + level / 2.0)
        return self.report.qber - z * self.se_qber, self.report.qber + z * self.se_qber

    def to_dict(self) -> dict:
        return {
            "report": self.report.to_dict(),
            "se_sift": self.se_sift,
            "se_error": self.se_error,
            "se_qber": self.se_qber,
            "degenerate": self.degenerate,
            "strata": [vars(s) for s in self.strata],
        }

    @classmethod
    def from_dict(cls, data: dict) -> McEstimate:
        return cls(
            RateReport.from_dict(data["report"]),
            data["se_sift"],
            data["se_error"],
            data["se_qber"],
            data["degenerate"],
            tuple(StratumCounts(**s) for s in data["strata"]),
        )


def default_workers() -> int:
    raw = os.environ.get("QKDSIM_THREADS", "0")
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


def _chunk_rng(seed: int, stratum: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stratum, chunk))))


def _run_chunk(layouts, weights, seed, stratum, chunk, n):
    """(keep0, keep1) counts for one chunk; ``layouts`` > 1 means unstratified mixing."""
    rng = _chunk_rng(seed, stratum, chunk)
    if len(layouts) == 1:
        dec = layouts[0].decide(rng.random((n, layouts[0].probs.size)))
    else:
        branch = np.searchsorted(np.cumsum(weights)[:-1], rng.random(n), side="right")
        dec = np.empty(n, dtype=np.int8)
        for b, layout in enumerate(layouts):
            sel = branch == b
            dec[sel] = layout.decide(rng.random((int(sel.sum()), layout.probs.size)))
    return int(np.count_nonzero(dec == Decision.KEEP0)), int(np.count_nonzero(dec == Decision.KEEP1))


def mc_estimate(variant: Variant, det: DetectorSpec, t: float, cfg: McConfig) -> McEstimate:
    """Estimate sift rate, error rate and QBER by sampling ``cfg.trials`` pulses.

    Stratified mode splits the trials evenly over the scenario branches and
    recombines with the exact branch weights; raw mode draws the branch per pulse.
    """
    branches = [(sc, w) for sc, w in branch_weights(variant.kind, t) if w > 0.0]
    layouts = {sc: _Layout(variant, det, sc) for sc, _ in branches}
    if cfg.stratified:
        base, extra = divmod(cfg.trials, len(branches))
        plan = [([layouts[sc]], [1.0], sc.value, w, base + (i < extra)) for i, (sc, w) in enumerate(branches)]
    else:
        ws = [w for _, w in branches]
        total = sum(ws)
        plan = [([layouts[sc] for sc, _ in branches], [w / total for w in ws], "mixed", total, cfg.trials)]

    jobs = []
    for s, (lays, ws, _, _, n) in enumerate(plan):
        for c in range(math.ceil(n / CHUNK_TRIALS)):
            jobs.append((s, lays, ws, c, min(CHUNK_TRIALS, n - c * CHUNK_TRIALS)))
    workers = cfg.workers if cfg.workers else default_workers()
    if workers == 1 or len(jobs) <= 1:
        results = [_run_chunk(lays, ws, cfg.seed, s, c, n) for s, lays, ws, c, n in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _run_chunk(j[1], j[2], cfg.seed, j[0], j[3], j[4]), jobs))

    tallies = [[0, 0] for _ in plan]
    for (s, *_), (k0, k1) in zip(jobs, results):
        tallies[s][0] += k0
        tallies[s][1] += k1
    strata = tuple(
        StratumCounts(name, w, n, k0, k1) for (_, _, name, w, n), (k0, k1) in zip(plan, tallies)
    )
    return _combine(variant, strata)


def _combine(variant: Variant, strata: tuple[StratumCounts, ...]) -> McEstimate:
    c = sift_prefactor(variant.kind)
    sift = err = var_s = var_e = cov = 0.0
    degenerate = False
    for s in strata:
        if s.trials == 0:
            degenerate = True
            continue
        fs = (s.keep0 + s.keep1) / s.trials
        fe = s.keep1 / s.trials
        sift += c * s.weight * fs
        err += c * s.weight * fe
        scale = (c * s.weight) ** 2 / s.trials
        var_s += scale * fs * (1.0 - fs)
        var_e += scale * fe * (1.0 - fe)
        # Error events are a subset of sift events.
        cov += scale * fe * (1.0 - fs)
        if s.trials < 2:
            degenerate = True
    report = RateReport.from_rates(sift, err, Path.MONTECARLO)
    if report.qber is None:
        return McEstimate(report, math.sqrt(var_s), math.sqrt(var_e), None, True, strata)
    q = report.qber
    var_q = (var_e - 2.0 * q * cov + q * q * var_s) / (sift * sift)
    return McEstimate(report, math.sqrt(var_s), math.sqrt(var_e), math.sqrt(max(var_q, 0.0)), degenerate, strata)
