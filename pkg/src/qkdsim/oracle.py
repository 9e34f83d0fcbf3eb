"""Independent exact rates: enumerate detector click subsets, then vote by DP.

Nothing here reuses the closed-form group probabilities or the summation
formulas; group distributions come from summing Bernoulli products over every
click pattern, and the keep decision is a dynamic program over saturating vote
counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import fsum
from typing import Sequence

from .protocol import DetectorSpec, GroupDistribution, Kind, Scenario, Variant, branch_weights, sift_prefactor
from .rates import Path, RateReport

__all__ = [
    "GroupSpec",
    "group_outcome_enum",
    "group_specs",
    "protocol_decision_dp",
    "qber_oracle",
]

RULES = ("exactly-one-outcome", "pair-consistent", "tf-click")


@dataclass(frozen=True)
class GroupSpec:
    """Physical layout of one measurement group.

    ``labels`` names the bit each detector of a measurement reports (``None``
    for a detector whose outcome carries no bit, e.g. the qutrit |2> detector).
    ``photons`` gives, per measurement in the group, the detector index hit by a
    real photon, or ``None`` when only dark counts can fire.
    """

    labels: tuple[int | None, ...]
    photons: tuple[int | None, ...]
    rule: str = "exactly-one-outcome"

    def __post_init__(self) -> None:
        if self.rule not in RULES:
            raise ValueError(f"unknown effectiveness rule {self.rule!r}")
        if not self.photons:
            raise ValueError("a group needs at least one measurement")
        if self.detector_count not in (1, 2, 3, 4):
            raise ValueError(f"detector_count={self.detector_count} not in 1..4")
        for ph in self.photons:
            if ph is not None and not 0 <= ph < len(self.labels):
                raise ValueError(f"photon target {ph} is not a detector")

    @property
    def detector_count(self) -> int:
        return len(self.labels) * len(self.photons)

    def fire_probabilities(self, det: DetectorSpec) -> list[float]:
        """Per-detector click probability, measurement-major order."""
        hit = 1.0 - (1.0 - det.eta) * (1.0 - det.dark_p)
        return [hit if ph == j else det.dark_p for ph in self.photons for j in range(len(self.labels))]

    def classify(self, clicks: Sequence[bool]) -> int | None:
        """Reported bit for a full click pattern, or ``None`` if ineffective.

        Every measurement must fire exactly one detector, all on the same bit.
        """
        width = len(self.labels)
        reported = set()
        for k in range(len(self.photons)):
            fired = [j for j in range(width) if clicks[k * width + j]]
            if len(fired) != 1:
                return None
            reported.add(self.labels[fired[0]])
        if len(reported) != 1:
            return None
        return reported.pop()


def group_outcome_enum(spec: GroupSpec, det: DetectorSpec) -> GroupDistribution:
    """Exact group distribution by summing over all ``2**detector_count`` click subsets."""
    probs = spec.fire_probabilities(det)
    buckets: dict[int | None, list[float]] = {0: [], 1: [], None: []}
    for clicks in itertools.product((False, True), repeat=len(probs)):
        weight = 1.0
        for fired, q in zip(clicks, probs):
            weight *= q if fired else 1.0 - q
        buckets[spec.classify(clicks)].append(weight)
    return GroupDistribution(fsum(buckets[0]), fsum(buckets[1]), fsum(buckets[None]))


def group_specs(variant: Variant, scenario: Scenario) -> list[GroupSpec]:
    """Group layouts for one pulse, Alice having sent bit 0 (twin-field: bit 0 = right side)."""
    d = variant.d
    if variant.kind is Kind.QUTRIT:
        labels = (0, 1, None)
        if scenario is Scenario.TRANSMITTED:
            return [GroupSpec(labels, (0,))] * (d + 1)
        if scenario is Scenario.LOST:
            # Ordinary system empty; auxiliaries still hold |2>.
            return [GroupSpec(labels, (None,))] + [GroupSpec(labels, (2,))] * d
    elif variant.kind is Kind.QUBIT:
        labels = (0, 1)
        if scenario is Scenario.TRANSMITTED:
            return [GroupSpec(labels, (0,))] + [GroupSpec(labels, (0, 0), "pair-consistent")] * d
        if scenario is Scenario.LOST:
            # Auxiliary pair keeps its preparation |0>, |1>.
            return [GroupSpec(labels, (None,))] + [GroupSpec(labels, (0, 1), "pair-consistent")] * d
    else:
        if scenario is Scenario.INTERFERED:
            right = [GroupSpec((0,), (0,), "tf-click")] * (d + 1)
            wrong = [GroupSpec((1,), (None,), "tf-click")] * (d + 1)
            return right + wrong
        if scenario is Scenario.NOT_INTERFERED:
            return [GroupSpec((0,), (None,), "tf-click")] * (d + 1) + [GroupSpec((1,), (None,), "tf-click")] * (d + 1)
    raise ValueError(f"scenario {scenario.value!r} does not apply to {variant}")


def protocol_decision_dp(groups, m: int):
    """Keep-0 / keep-1 / discard probabilities after voting over ``groups``.

    ``groups`` holds ``(p_out0, p_out1, p_ineff)`` triples or GroupDistribution
    objects. Bit ``b`` is kept when at least ``m`` groups report ``b`` and fewer
    than ``m`` report the other bit. Counts saturate at ``m``, so the state space
    is ``(m+1)**2``. Pure Python arithmetic: works with floats or Fractions.
    """
    if not groups:
        raise ValueError("need at least one group")
    if m < 1:
        raise ValueError("m must be >= 1")
    zero = 0 * _triple(groups[0])[0]
    state = [[zero] * (m + 1) for _ in range(m + 1)]
    state[0][0] = zero + 1
    for g in groups:
        a, b, c = _triple(g)
        nxt = [[zero] * (m + 1) for _ in range(m + 1)]
        for i in range(m + 1):
            for j in range(m + 1):
                s = state[i][j]
                if not s:
                    continue
                nxt[i][j] += s * c
                nxt[min(i + 1, m)][j] += s * a
                nxt[i][min(j + 1, m)] += s * b
        state = nxt
    keep0 = sum(state[m][j] for j in range(m))
    keep1 = sum(state[i][m] for i in range(m))
    discard = sum(state[i][j] for i in range(m) for j in range(m)) + state[m][m]
    return keep0, keep1, discard


def _triple(g):
    if isinstance(g, GroupDistribution):
        return g.as_tuple()
    return tuple(g)


def qber_oracle(variant: Variant, det: DetectorSpec, t: float) -> RateReport:
    """Exact rates from enumerated group distributions and the vote DP."""
    if not 0.0 < t <= 1.0:
        raise ValueError(f"transmittance t={t!r} outside (0, 1]")
    sift, err = [], []
    for scenario, w in branch_weights(variant.kind, t):
        dists = [group_outcome_enum(spec, det) for spec in group_specs(variant, scenario)]
        keep0, keep1, _ = protocol_decision_dp(dists, variant.m)
        sift += [w * keep0, w * keep1]
        err.append(w * keep1)
    c = sift_prefactor(variant.kind)
    return RateReport.from_rates(c * fsum(sift), c * fsum(err), Path.ORACLE)
