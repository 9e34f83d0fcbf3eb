"""Sift rate, error rate and dark-count QBER from the explicit summation formulas.

``qber_paper_sums`` evaluates the double sums over effective-group counts with
the exact single-measurement probabilities from :mod:`qkdsim.protocol`.
``qber_approx`` evaluates the leading-order closed forms, valid when
``binom(n, i) * p`` is small for every ``i``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from math import comb, fsum

from .protocol import (
    DetectorSpec,
    Kind,
    Variant,
    branch_weights,
    qubit_group_probs,
    qubit_single_probs,
    qutrit_single_probs,
    sift_prefactor,
    tf_single_probs,
)

__all__ = [
    "Path",
    "RateReport",
    "approx_report",
    "qber_approx",
    "qber_paper_sums",
    "whole_detective_efficiency",
    "whole_measurement_error",
]


class Path(str, enum.Enum):
    PAPER_SUMS = "paper-sums"
    APPROX = "approx"
    ORACLE = "oracle"
    MONTECARLO = "montecarlo"


@dataclass(frozen=True)
class RateReport:
    """Per-pulse sift and error rates.

    ``qber`` is ``None`` when the sift rate is exactly zero (0/0 is undefined).
    The approximate path carries only the ratio, so its rates are NaN.
    """

    sift_rate: float
    error_rate: float
    qber: float | None
    path: Path

    @classmethod
    def from_rates(cls, sift_rate: float, error_rate: float, path: Path) -> RateReport:
        qber = error_rate / sift_rate if sift_rate > 0 else None
        return cls(sift_rate, error_rate, qber, Path(path))

    def to_dict(self) -> dict:
        """JSON-safe dict; NaN rates become ``None``."""
        out = asdict(self)
        out["path"] = self.path.value
        for key in ("sift_rate", "error_rate"):
            if math.isnan(out[key]):
                out[key] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> RateReport:
        rates = [math.nan if data[k] is None else data[k] for k in ("sift_rate", "error_rate")]
        return cls(*rates, data["qber"], Path(data["path"]))


def _vote(m, n, a, b, c, *, lead=None):
    """P(at least ``m`` of ``n`` groups report the target, fewer than ``m`` the other).

    ``a``, ``b``, ``c`` are the per-group target / other / ineffective
    probabilities. ``lead`` = ``(a0, b0, c0)`` adds one distinguishable extra group
    in front, as in the sums whose first factor is the ordinary system.
    """

    def inner(k_lo, i_hi):
        terms = []
        for k in range(max(k_lo, 0), n + 1):
            ak = comb(n, k) * a**k
            for i in range(0, min(i_hi, n - k) + 1):
                terms.append(ak * comb(n - k, i) * b**i * c ** (n - k - i))
        return fsum(terms)

    if lead is None:
        return inner(m, m - 1)
    a0, b0, c0 = lead
    return fsum([a0 * inner(m - 1, m - 1), b0 * inner(m, m - 2), c0 * inner(m, m - 1)])


def _upper_tail(n: int, m: int, q: float) -> float:
    return fsum(comb(n, k) * q**k * (1.0 - q) ** (n - k) for k in range(m, n + 1))


def _lower_tail(n: int, m: int, q: float) -> float:
    return fsum(comb(n, k) * q**k * (1.0 - q) ** (n - k) for k in range(0, m))


def _keep_probabilities(variant: Variant, det: DetectorSpec) -> dict:
    """(keep correct, keep wrong) per scenario branch."""
    d, m = variant.d, variant.m
    if variant.kind is Kind.QUTRIT:
        tr = qutrit_single_probs(det, "transmitted")
        ls = qutrit_single_probs(det, "lost")
        em = qutrit_single_probs(det, "empty")
        # Ordinary system first; it is empty after a loss.
        trans0 = _vote(m, d + 1, tr.p_out0, tr.p_out1, tr.p_ineff)
        trans1 = _vote(m, d + 1, tr.p_out1, tr.p_out0, tr.p_ineff)
        loss0 = _vote(m, d, ls.p_out0, ls.p_out1, ls.p_ineff, lead=em.as_tuple())
        loss1 = _vote(m, d, ls.p_out1, ls.p_out0, ls.p_ineff, lead=(em.p_out1, em.p_out0, em.p_ineff))
        return {"transmitted": (trans0, trans1), "lost": (loss0, loss1)}

    if variant.kind is Kind.QUBIT:
        s0, s1 = qubit_single_probs(det)
        single = (s0, s1, 1.0 - s0 - s1)
        pair = qubit_group_probs(det, "pair", "transmitted")
        empty = qubit_group_probs(det, "singleton", "lost")
        lost = qubit_group_probs(det, "pair", "lost")
        trans0 = _vote(m, d, pair.p_out0, pair.p_out1, pair.p_ineff, lead=single)
        trans1 = _vote(m, d, pair.p_out1, pair.p_out0, pair.p_ineff, lead=(s1, s0, single[2]))
        loss0 = _vote(m, d, lost.p_out0, lost.p_out1, lost.p_ineff, lead=empty.as_tuple())
        loss1 = _vote(m, d, lost.p_out1, lost.p_out0, lost.p_ineff, lead=(empty.p_out1, empty.p_out0, empty.p_ineff))
        return {"transmitted": (trans0, trans1), "lost": (loss0, loss1)}

    n = d + 1
    hit, dark = tf_single_probs(det)
    dark_hi = _upper_tail(n, m, dark)
    right = _upper_tail(n, m, hit) * (1.0 - dark_hi)
    wrong = _lower_tail(n, m, hit) * dark_hi
    noise = dark_hi * _lower_tail(n, m, dark)
    return {"interfered": (right, wrong), "not-interfered": (noise, noise)}


def qber_paper_sums(variant: Variant, det: DetectorSpec, t: float) -> RateReport:
    """Exact rates by the explicit summations over effective-group counts."""
    if not 0.0 < t <= 1.0:
        raise ValueError(f"transmittance t={t!r} outside (0, 1]")
    keeps = _keep_probabilities(variant, det)
    sift, err = [], []
    for scenario, w in branch_weights(variant.kind, t):
        good, bad = keeps[scenario.value]
        sift += [w * good, w * bad]
        err.append(w * bad)
    c = sift_prefactor(variant.kind)
    return RateReport.from_rates(c * fsum(sift), c * fsum(err), Path.PAPER_SUMS)


def _approx_terms(variant: Variant, eta: float, tf_power_k: bool) -> tuple[float, float, float]:
    """(signal sum S, dark numerator N, exponent e of t) with Q ~ N / ((t**e / p**m) S + 2N)."""
    d, m = variant.d, variant.m
    if variant.kind is Kind.QUBIT:
        ee = eta * (1.0 - eta)
        dark = (comb(d, m - 1) + comb(d, m) * ee) * ee ** (m - 1)
        sig = comb(d, m - 1) * eta ** (2 * m - 1) * (1.0 - eta**2) ** (d - m + 1) + fsum(
            comb(d, k) * eta ** (2 * k) * (1.0 - eta**2) ** (d - k) for k in range(m, d + 1)
        )
        return sig, dark, 1.0
    if variant.kind is Kind.QUTRIT:
        dark = (comb(d, m - 1) + comb(d, m) * (1.0 - eta)) * (1.0 - eta) ** (m - 1)
        sig = fsum(comb(d + 1, k) * eta**k * (1.0 - eta) ** (d + 1 - k) for k in range(m, d + 2))
        return sig, dark, 1.0
    # Q ~ 1 / (2 (sqrt(t)/p^m) S / binom(d+1, m) + 2). The quoted form has eta**m in
    # every term of S; eta**k is what the leading-order expansion of the sums gives.
    sig = fsum(
        comb(d + 1, k) * eta ** (k if tf_power_k else m) * (1.0 - eta) ** (d + 1 - k) for k in range(m, d + 2)
    )
    return 2.0 * sig / comb(d + 1, m), 1.0, 0.5


def qber_approx(variant: Variant, det: DetectorSpec, t: float, *, tf_power_k: bool = False) -> float | None:
    """Leading-order closed-form QBER; ``None`` where it degenerates to 0/0.

    Only meaningful far from the source (t << 1) and for small ``binom(n, i) * p``.
    The signal-to-dark ratio ``t**e / p**m`` is formed in log space so that very
    long channels (t < 1e-40) do not underflow against tiny ``p**m``.
    ``tf_power_k`` selects the eta**k twin-field sum instead of the quoted eta**m.
    """
    sig, dark, expo = _approx_terms(variant, det.eta, tf_power_k)
    if t <= 0.0:
        ratio = 0.0
    elif det.dark_p == 0.0:
        ratio = math.inf
    else:
        ratio = math.exp(min(expo * math.log(t) - variant.m * math.log(det.dark_p), 700.0))
    signal = ratio * sig if sig > 0 else 0.0
    denom = signal + 2.0 * dark
    if denom == 0.0 or math.isnan(denom):
        return None
    if math.isinf(denom):
        return 0.0
    return dark / denom


def approx_report(variant: Variant, det: DetectorSpec, t: float) -> RateReport:
    return RateReport(math.nan, math.nan, qber_approx(variant, det, t), Path.APPROX)


def _binomial_upper_tail(n: int, k_min: int, q: float) -> float:
    return fsum(comb(n, k) * q**k * (1.0 - q) ** (n - k) for k in range(max(k_min, 0), n + 1))


def whole_measurement_error(d: int, m: int, p_opt: float) -> float:
    """Probability that at least ``d+2-m`` of ``d+1`` measurements are wrong."""
    if not 1 <= m <= d + 1:
        raise ValueError(f"need 1 <= m <= d+1, got d={d}, m={m}")
    return _binomial_upper_tail(d + 1, d + 2 - m, p_opt)


def whole_detective_efficiency(d: int, m: int, eta: float) -> float:
    """Probability that at least ``m`` of ``d+1`` detectors register the photon."""
    if not 1 <= m <= d + 1:
        raise ValueError(f"need 1 <= m <= d+1, got d={d}, m={m}")
    return 1.0 - _binomial_upper_tail(d + 1, d + 2 - m, 1.0 - eta)
