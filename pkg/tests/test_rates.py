import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from qkdsim.protocol import (
    INGAAS,
    UPCONVERSION,
    DetectorSpec,
    Variant,
    qubit_group_probs,
    qubit_single_probs,
    qutrit_single_probs,
    tf_single_probs,
)
from qkdsim.rates import (
    Path,
    RateReport,
    approx_report,
    qber_approx,
    qber_paper_sums,
    whole_detective_efficiency,
    whole_measurement_error,
)

VARIANTS = [
    Variant.qubit(0, 1),
    Variant.qubit(2, 2),
    Variant.qubit(4, 3),
    Variant.qutrit(0, 1),
    Variant.qutrit(3, 2),
    Variant.qutrit(8, 5),
    Variant.twin_field(0, 1),
    Variant.twin_field(4, 3),
    Variant.twin_field(8, 5),
]


def brute_keep(groups, m):
    """Keep probabilities by enumerating every joint group outcome."""
    keep0 = keep1 = 0.0
    for combo in itertools.product(range(3), repeat=len(groups)):
        w = math.prod(g[o] for g, o in zip(groups, combo))
        c0, c1 = combo.count(0), combo.count(1)
        if c0 >= m and c1 < m:
            keep0 += w
        elif c1 >= m and c0 < m:
            keep1 += w
    return keep0, keep1


def brute_rates(variant, det, t):
    d, m = variant.d, variant.m
    if variant.kind.value == "qutrit":
        tr = qutrit_single_probs(det, "transmitted").as_tuple()
        trans = [tr] * (d + 1)
        lost = [qutrit_single_probs(det, "empty").as_tuple()] + [qutrit_single_probs(det, "lost").as_tuple()] * d
        branches = [(t, trans), (1 - t, lost)]
        c = 0.5
    elif variant.kind.value == "qubit":
        s0, s1 = qubit_single_probs(det)
        trans = [(s0, s1, 1 - s0 - s1)] + [qubit_group_probs(det, "pair", "transmitted").as_tuple()] * d
        lost = [qubit_group_probs(det, "singleton", "lost").as_tuple()] + [
            qubit_group_probs(det, "pair", "lost").as_tuple()
        ] * d
        branches = [(t, trans), (1 - t, lost)]
        c = 0.5
    else:
        hit, dark = tf_single_probs(det)
        right = [(hit, 0, 1 - hit)] * (d + 1) + [(0, dark, 1 - dark)] * (d + 1)
        noise = [(dark, 0, 1 - dark)] * (d + 1) + [(0, dark, 1 - dark)] * (d + 1)
        st_ = math.sqrt(t)
        branches = [(t + 2 * st_ * (1 - st_), right), ((1 - st_) ** 2, noise)]
        c = 2 / 16
    sift = err = 0.0
    for w, groups in branches:
        k0, k1 = brute_keep(groups, m)
        sift += c * w * (k0 + k1)
        err += c * w * k1
    return sift, err


SMALL = [Variant.qubit(0, 1), Variant.qubit(2, 2), Variant.qubit(3, 1), Variant.qutrit(2, 2), Variant.qutrit(4, 3),
         Variant.twin_field(1, 1), Variant.twin_field(2, 2)]


@pytest.mark.parametrize("variant", SMALL, ids=str)
@pytest.mark.parametrize("det", [INGAAS, UPCONVERSION, DetectorSpec(0.5, 0.05)], ids=["ingaas", "upconv", "noisy"])
@pytest.mark.parametrize("t", [1.0, 0.1, 1e-5])
def test_paper_sums_match_brute_force(variant, det, t):
    sift, err = brute_rates(variant, det, t)
    rep = qber_paper_sums(variant, det, t)
    assert rep.sift_rate == pytest.approx(sift, rel=1e-11)
    assert rep.error_rate == pytest.approx(err, rel=1e-10)


def test_perfect_device_sift_half():
    rep = qber_paper_sums(Variant.qutrit(0, 1), DetectorSpec(1, 0), 1.0)
    assert rep.sift_rate == 0.5
    assert rep.qber == 0.0
    assert rep.path is Path.PAPER_SUMS


def test_single_detector_bb84_reduction():
    t = 10**-2.1
    rep = qber_paper_sums(Variant.qubit(0, 1), UPCONVERSION, t)
    # Rational-arithmetic evaluation of the one-group BB84 model.
    eta, p, T = Fraction(59, 100), Fraction(46, 100000), Fraction(t)
    s0 = (eta + (1 - eta) * p) * (1 - p)
    s1 = (1 - eta) * (1 - p) * p
    dark = p * (1 - p)
    sift = (T * (s0 + s1) + (1 - T) * 2 * dark) / 2
    err = (T * s1 + (1 - T) * dark) / 2
    assert rep.qber == pytest.approx(float(err / sift), rel=1e-13)
    assert rep.qber == pytest.approx(0.08172542079681021, rel=1e-12)
    # Leading-order form 1 / (t eta / p + 2).
    assert qber_approx(Variant.qubit(0, 1), UPCONVERSION, t) == pytest.approx(1 / (t * 0.59 / 4.6e-4 + 2), rel=1e-14)


def test_tf_near_threshold_at_1380_km():
    t = 10 ** (-0.2 * 1380 / 10)
    assert qber_paper_sums(Variant.twin_field(8, 5), UPCONVERSION, t).qber == pytest.approx(0.0933073004748644, rel=1e-9)


def test_qutrit_300_km_pinned():
    t = 10 ** (-0.2 * 300 / 10)
    v = Variant.qutrit(8, 5)
    approx = qber_approx(v, UPCONVERSION, t)
    exact = qber_paper_sums(v, UPCONVERSION, t).qber
    assert approx == pytest.approx(7.596686982942119e-11, rel=1e-9)
    assert exact == pytest.approx(7.564762151778272e-11, rel=1e-9)
    assert abs(approx - exact) / exact <= 0.05


@pytest.mark.parametrize("variant", VARIANTS, ids=str)
def test_report_invariants(variant):
    for det in (INGAAS, UPCONVERSION):
        for t in np.geomspace(1, 1e-40, 9):
            rep = qber_paper_sums(variant, det, float(t))
            assert 0 <= rep.error_rate <= rep.sift_rate
            assert 0 <= rep.qber <= 1
            assert rep.qber * rep.sift_rate == pytest.approx(rep.error_rate, rel=1e-12)


@pytest.mark.parametrize("variant", VARIANTS, ids=str)
def test_qber_nonincreasing_in_t(variant):
    for det in (INGAAS, UPCONVERSION, DetectorSpec(0.1, 1e-2)):
        ts = np.geomspace(1e-60, 1, 50)
        q = [qber_paper_sums(variant, det, float(t)).qber for t in ts]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(q, q[1:]))


@pytest.mark.parametrize("variant", VARIANTS, ids=str)
def test_limits(variant):
    det = UPCONVERSION
    assert qber_paper_sums(variant, det, 1e-300).qber == pytest.approx(0.5, abs=1e-12)
    assert qber_approx(variant, det, 1e-300) == pytest.approx(0.5, abs=1e-12)
    clean = DetectorSpec(0.59, 0.0)
    for t in (1.0, 1e-3, 1e-30):
        assert qber_paper_sums(variant, clean, t).qber == 0.0
        assert qber_approx(variant, clean, t) == 0.0


def test_degenerate_sift_is_sentinel():
    # Nothing ever fires: 0/0.
    rep = qber_paper_sums(Variant.qutrit(2, 2), DetectorSpec(0.0, 0.0), 0.5)
    assert rep.sift_rate == 0.0 and rep.qber is None
    assert qber_approx(Variant.qutrit(2, 3), DetectorSpec(1.0, 1e-3), 0.0) is None
    with pytest.raises(ValueError):
        qber_paper_sums(Variant.qutrit(2, 2), UPCONVERSION, 0.0)


# Long-distance band: at 0.2 dB/km, t <= 1e-4 is 200 km and beyond.
BAND_T = [float(t) for t in np.geomspace(1e-4, 1e-60, 25)]


@pytest.mark.parametrize("variant", VARIANTS, ids=str)
@pytest.mark.parametrize("det", [INGAAS, UPCONVERSION], ids=["ingaas", "upconv"])
def test_approximation_band(variant, det):
    tf_power_k = variant.kind.value == "tf"
    for t in BAND_T:
        exact = qber_paper_sums(variant, det, t).qber
        approx = qber_approx(variant, det, t, tf_power_k=tf_power_k)
        assert abs(approx - exact) / exact <= 0.05, (t, approx, exact)


def test_tf_quoted_form_deviates_mid_range():
    # The eta**m sum overstates the signal for m > 1; the exact sums are authoritative.
    v, t = Variant.twin_field(8, 5), 10 ** (-0.2 * 400 / 10)
    exact = qber_paper_sums(v, INGAAS, t).qber
    assert qber_approx(v, INGAAS, t) < 0.6 * exact
    assert qber_approx(v, INGAAS, t, tf_power_k=True) == pytest.approx(exact, rel=0.01)
    # Identical without copies.
    v1 = Variant.twin_field(0, 1)
    assert qber_approx(v1, INGAAS, t) == qber_approx(v1, INGAAS, t, tf_power_k=True)


def test_approx_report_roundtrip():
    rep = approx_report(Variant.qutrit(8, 5), UPCONVERSION, 1e-10)
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["sift_rate"] is None
    back = RateReport.from_dict(data)
    assert back.qber == rep.qber and math.isnan(back.sift_rate)


def test_whole_measurement_error_examples():
    value = whole_measurement_error(8, 5, 0.015)
    assert value == pytest.approx(binom.sf(4, 9, 0.015), rel=1e-12)
    assert value == pytest.approx(9.098864694298828e-08, rel=1e-12)
    assert value < 1e-7
    assert whole_measurement_error(0, 1, 0.37) == pytest.approx(0.37, rel=1e-15)
    assert whole_measurement_error(8, 5, 0.0) == 0.0
    with pytest.raises(ValueError):
        whole_measurement_error(3, 5, 0.1)


def test_whole_detective_efficiency_examples():
    value = whole_detective_efficiency(8, 5, 0.59)
    assert value == pytest.approx(binom.sf(4, 9, 0.59), rel=1e-12)
    assert value == pytest.approx(0.7121909789723342, rel=1e-12)
    assert value > 0.71
    assert whole_detective_efficiency(0, 1, 0.42) == pytest.approx(0.42, rel=1e-15)
    assert whole_detective_efficiency(8, 5, 1.0) == 1.0


@given(st.integers(0, 12), st.data(), st.floats(0, 1))
def test_tail_identity(d, data, x):
    m = data.draw(st.integers(1, d + 1))
    assert whole_measurement_error(d, m, x) + whole_detective_efficiency(d, m, 1 - x) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10), st.data(), st.floats(0, 0.99), st.floats(0, 0.01))
def test_tails_monotone(d, data, x, dx):
    m = data.draw(st.integers(1, d + 1))
    hi = min(x + dx, 1.0)
    assert whole_measurement_error(d, m, hi) >= whole_measurement_error(d, m, x) - 1e-15
    assert whole_detective_efficiency(d, m, hi) >= whole_detective_efficiency(d, m, x) - 1e-15
    if d < 10:
        assert whole_detective_efficiency(d + 1, m, x) >= whole_detective_efficiency(d, m, x) - 1e-15
