"""Domain types, channel loss and exact click probabilities for the copy-group scheme.

Detector model: every basis outcome has its own SPD. A detector that receives a
photon fires with probability ``eta``; independently, any detector fires on a
dark count with probability ``dark_p`` per gate. A measurement reports an
outcome only when exactly one of its detectors fires.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "FIBER_LOSS_DB_PER_KM",
    "INGAAS",
    "SIFT_DIVISOR_TF",
    "UPCONVERSION",
    "ChannelSpec",
    "CopyConfig",
    "DetectorSpec",
    "GroupDistribution",
    "Kind",
    "Scenario",
    "ValidityReport",
    "Variant",
    "branch_weights",
    "qubit_group_probs",
    "qutrit_single_probs",
    "sift_prefactor",
    "tf_single_probs",
    "transmittance",
    "validate_config",
]

# Sifting divisor for the twin-field protocol (phase slices).
SIFT_DIVISOR_TF = 16

# "binom(n, i) * p << 1" is read as "< REGIME_LIMIT".
REGIME_LIMIT = 0.01


def _check_prob(name: str, value: float, *, open_top: bool = False) -> None:
    if not (0.0 <= value <= 1.0) or (open_top and value >= 1.0):
        bound = "[0, 1)" if open_top else "[0, 1]"
        raise ValueError(f"{name}={value!r} outside {bound}")


@dataclass(frozen=True)
class DetectorSpec:
    """Single SPD: efficiency, dark count probability per gate, measurement error."""

    eta: float
    dark_p: float
    p_opt: float = 0.0

    def __post_init__(self) -> None:
        _check_prob("eta", self.eta)
        _check_prob("dark_p", self.dark_p, open_top=True)
        _check_prob("p_opt", self.p_opt, open_top=True)


# Device parameter sets quoted for 1550 nm operation.
INGAAS = DetectorSpec(eta=0.275, dark_p=1.36e-6)
UPCONVERSION = DetectorSpec(eta=0.59, dark_p=4.6e-4)
FIBER_LOSS_DB_PER_KM = 0.2


@dataclass(frozen=True)
class ChannelSpec:
    alpha: float
    length_km: float

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha={self.alpha!r} must be >= 0")
        if self.length_km < 0:
            raise ValueError(f"length_km={self.length_km!r} must be >= 0")


def transmittance(channel: ChannelSpec) -> float:
    """Channel survival probability ``10**(-alpha * l / 10)``."""
    return 10.0 ** (-channel.alpha * channel.length_km / 10.0)


@dataclass(frozen=True)
class CopyConfig:
    """Copy depth ``d`` (qubit: number of double copies) and vote threshold ``m``."""

    d: int
    m: int

    def __post_init__(self) -> None:
        if self.d < 0:
            raise ValueError(f"d={self.d!r} must be >= 0")
        if not 1 <= self.m <= self.d + 1:
            raise ValueError(f"m={self.m!r} must satisfy 1 <= m <= d+1 = {self.d + 1}")


class Kind(str, enum.Enum):
    QUBIT = "qubit"
    QUTRIT = "qutrit"
    TWIN_FIELD = "tf"


@dataclass(frozen=True)
class Variant:
    kind: Kind
    copies: CopyConfig

    @classmethod
    def qubit(cls, d0: int, m0: int) -> Variant:
        return cls(Kind.QUBIT, CopyConfig(d0, m0))

    @classmethod
    def qutrit(cls, d: int, m: int) -> Variant:
        return cls(Kind.QUTRIT, CopyConfig(d, m))

    @classmethod
    def twin_field(cls, d: int, m: int) -> Variant:
        return cls(Kind.TWIN_FIELD, CopyConfig(d, m))

    @property
    def d(self) -> int:
        return self.copies.d

    @property
    def m(self) -> int:
        return self.copies.m

    @property
    def d_cap(self) -> int:
        return 4 if self.kind is Kind.QUBIT else 8

    @property
    def measurements(self) -> int:
        """Number of single measurements per pulse (per side for twin-field)."""
        return 2 * self.d + 1 if self.kind is Kind.QUBIT else self.d + 1

    def __str__(self) -> str:
        return f"{self.kind.value}(d={self.d}, m={self.m})"


class Scenario(str, enum.Enum):
    TRANSMITTED = "transmitted"
    LOST = "lost"
    INTERFERED = "interfered"
    NOT_INTERFERED = "not-interfered"


def sift_prefactor(kind: Kind) -> float:
    """Basis sifting factor in front of the branch-weighted keep probabilities."""
    return 2.0 / SIFT_DIVISOR_TF if kind is Kind.TWIN_FIELD else 0.5


def branch_weights(kind: Kind, t: float) -> list[tuple[Scenario, float]]:
    """Scenario branches and their probabilities for a channel of transmittance ``t``."""
    if kind is Kind.TWIN_FIELD:
        st = math.sqrt(t)
        return [
            (Scenario.INTERFERED, t + 2.0 * st * (1.0 - st)),
            (Scenario.NOT_INTERFERED, (1.0 - st) ** 2),
        ]
    return [(Scenario.TRANSMITTED, t), (Scenario.LOST, 1.0 - t)]


@dataclass(frozen=True)
class GroupDistribution:
    p_out0: float
    p_out1: float
    p_ineff: float

    def __post_init__(self) -> None:
        for name in ("p_out0", "p_out1", "p_ineff"):
            value = getattr(self, name)
            if not -1e-15 <= value <= 1.0 + 1e-15:
                raise ValueError(f"{name}={value!r} is not a probability")
        total = self.p_out0 + self.p_out1 + self.p_ineff
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"group probabilities sum to {total!r}")

    @classmethod
    def from_outcomes(cls, p_out0: float, p_out1: float) -> GroupDistribution:
        return cls(p_out0, p_out1, 1.0 - p_out0 - p_out1)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_out0, self.p_out1, self.p_ineff)


def qutrit_single_probs(det: DetectorSpec, scenario: str) -> GroupDistribution:
    """One qutrit measurement in basis {0, 1, 2}, Alice having sent |0>.

    ``scenario`` is ``"transmitted"`` (the measured system holds |0>),
    ``"lost"`` (an auxiliary system still holding |2>) or ``"empty"`` (the
    ordinary system after the photon was lost).
    """
    eta, p = det.eta, det.dark_p
    q2 = (1.0 - p) ** 2
    if scenario == "transmitted":
        return GroupDistribution.from_outcomes((eta + (1.0 - eta) * p) * q2, (1.0 - eta) * q2 * p)
    if scenario == "lost":
        dark = (1.0 - eta) * p * q2
        return GroupDistribution.from_outcomes(dark, dark)
    if scenario == "empty":
        dark = p * q2
        return GroupDistribution.from_outcomes(dark, dark)
    raise ValueError(f"unknown qutrit scenario {scenario!r}")


def qubit_single_probs(det: DetectorSpec) -> tuple[float, float]:
    """Outcome 0 / outcome 1 probabilities of one qubit measurement holding |0>."""
    eta, p = det.eta, det.dark_p
    return (eta + (1.0 - eta) * p) * (1.0 - p), (1.0 - eta) * (1.0 - p) * p


def qubit_group_probs(det: DetectorSpec, kind: str, scenario: str) -> GroupDistribution:
    """Qubit group distribution for ``kind`` in {"singleton", "pair"}.

    The singleton is the ordinary system; a pair is the two auxiliary copies of
    one copy step, effective only when both report the same single outcome.
    """
    eta, p = det.eta, det.dark_p
    if kind == "singleton":
        if scenario == "transmitted":
            return GroupDistribution.from_outcomes(*qubit_single_probs(det))
        if scenario == "lost":
            dark = p * (1.0 - p)
            return GroupDistribution.from_outcomes(dark, dark)
    elif kind == "pair":
        if scenario == "transmitted":
            p0, p1 = qubit_single_probs(det)
            return GroupDistribution.from_outcomes(p0 * p0, p1 * p1)
        if scenario == "lost":
            mixed = (eta + (1.0 - eta) * p) * (1.0 - eta) * (1.0 - p) ** 2 * p
            return GroupDistribution.from_outcomes(mixed, mixed)
    raise ValueError(f"unknown qubit group {kind!r}/{scenario!r}")


def tf_single_probs(det: DetectorSpec) -> tuple[float, float]:
    """Click probability of a twin-field detector with and without the photon."""
    return det.eta + (1.0 - det.eta) * det.dark_p, det.dark_p


@dataclass(frozen=True)
class ValidityReport:
    max_binom_p: float
    regime_ok: bool
    cap_ok: bool

    @property
    def ok(self) -> bool:
        return self.regime_ok and self.cap_ok

    def warnings(self, variant: Variant) -> list[str]:
        out = []
        if not self.cap_ok:
            out.append(f"{variant}: d={variant.d} exceeds the approximation cap d <= {variant.d_cap}")
        if not self.regime_ok:
            out.append(
                f"{variant}: max_i binom(n, i)*p = {self.max_binom_p:.3g} >= {REGIME_LIMIT}; "
                "closed-form approximations may be inaccurate"
            )
        return out


def validate_config(variant: Variant, det: DetectorSpec) -> ValidityReport:
    """Flag whether ``variant`` sits in the small-dark-count regime. Never raises."""
    n = variant.measurements
    worst = max(math.comb(n, i) for i in range(n + 1)) * det.dark_p
    return ValidityReport(max_binom_p=worst, regime_ok=worst < REGIME_LIMIT, cap_ok=variant.d <= variant.d_cap)
