from fractions import Fraction

import mpmath
import pytest
from mpmath import mpf
from pydantic import ValidationError

from src.models.packing import Ball, Packing
from src.models.sequences import CertifiedBounds, DeltaSequence, DiameterStream, FinitePointSet
from src.integrations.constructions import (
    band_sums,
    construct_f_theorem4a,
    construct_g_interp,
    construct_g_theorem4b,
    scan_stream,
    random_point_packings,
    shift_delta_sequence,
    shift_instance,
    validate_delta_sequence,
)
from src.integrations.dimfunc import make_builtin
from src.utils.exceptions import BadSequence, InvalidSequence, SumTooSlow

ONE_POINT = FinitePointSet(points=[["0"]])


def quartic_deltas(count: int) -> DeltaSequence:
    return DeltaSequence(values=[mpmath.ldexp(1, -4 * n) for n in range(count)])


def test_delta_sequence_valid_for_one_point(sqrt_gauge):
    report = validate_delta_sequence(sqrt_gauge, quartic_deltas(8), ONE_POINT)
    assert report.valid
    assert [r.target for r in report.rows] == [mpmath.ldexp(1, -2 * n) for n in range(8)]


def test_delta_sequence_failure_carries_index(sqrt_gauge):
    deltas = DeltaSequence(values=["1", "1/2", "2^-4", "2^-8"])
    with pytest.raises(InvalidSequence) as exc:
        validate_delta_sequence(sqrt_gauge, deltas, ONE_POINT)
    assert exc.value.details["index"] == 1

    report = validate_delta_sequence(sqrt_gauge, DeltaSequence(values=["1", "1", "2^-4"]), ONE_POINT, raise_on_failure=False)
    assert report.first_failure == 1 and report.reason == "not decreasing"


def test_delta_sequence_without_bounds(sqrt_gauge):
    report = validate_delta_sequence(sqrt_gauge, quartic_deltas(3), None, raise_on_failure=False)
    assert report.first_failure == 0 and report.reason == "no premeasure bound"


def test_certified_bounds_and_shift(sqrt_gauge):
    bounds = CertifiedBounds(bounds=["2", "1/4", "1/16", "1/64"])
    deltas = DeltaSequence(values=["1", "2^-4", "2^-8", "2^-12"])
    assert not validate_delta_sequence(sqrt_gauge, deltas, bounds, raise_on_failure=False).valid
    assert shift_instance(bounds, 1).bounds == [mpf(1) / 4, mpf(1) / 16, mpf(1) / 64]
    assert shift_instance(ONE_POINT, 3) is ONE_POINT


def test_shift_delta_sequence(sqrt_gauge):
    deltas = DeltaSequence(values=["1", "1/2", "2^-4", "2^-8", "2^-12"])
    shifted, report = shift_delta_sequence(sqrt_gauge, deltas, ONE_POINT)
    assert report.shift == 1
    assert shifted.values[0] == mpf(1) / 2
    with pytest.raises(InvalidSequence):
        shift_delta_sequence(sqrt_gauge, DeltaSequence(values=["1", "1"]), None)


def test_construct_f_checks(sqrt_gauge):
    deltas = quartic_deltas(8)
    f, report = construct_f_theorem4a(sqrt_gauge, deltas, ONE_POINT)
    assert report.passed, report.failed()
    for n, delta in enumerate(deltas.values):
        assert f.eval(delta) == mpmath.ldexp(sqrt_gauge.eval(delta), n)
    # below the last knot f is 2^K h
    t = mpmath.ldexp(1, -40)
    assert f.eval(t) == mpmath.ldexp(sqrt_gauge.eval(t), 7)


def test_construct_f_is_idempotent(sqrt_gauge):
    f, _ = construct_f_theorem4a(sqrt_gauge, quartic_deltas(6), ONE_POINT)
    again, report = construct_f_theorem4a(sqrt_gauge, DeltaSequence(values=f.spec.deltas), ONE_POINT)
    assert report.passed
    assert again.spec == f.spec


def test_band_sums_on_random_packings(sqrt_gauge):
    deltas = quartic_deltas(8)
    f, _ = construct_f_theorem4a(sqrt_gauge, deltas, ONE_POINT)
    packings = random_point_packings(ONE_POINT.points, deltas.values[0], 100, seed=7)
    assert len(packings) == 100
    for p in packings:
        sums = band_sums(f, sqrt_gauge, deltas, p)
        assert sums.passed
        assert sums.f_sum <= 4 and sums.weighted_h_sum <= 2


def test_random_point_packings_are_disjoint():
    points = [["0"], ["1/4"], ["1/2"], ["3/4"]]
    for p in random_point_packings(points, 1, 30, seed=1):
        assert 1 <= len(p) <= 4
        for i, a in enumerate(p.balls):
            assert a.diameter < 1
            for b in p.balls[i + 1:]:
                assert abs(a.center[0] - b.center[0]) >= a.radius + b.radius


def test_band_sums_ignore_balls_above_delta0(sqrt_gauge):
    deltas = quartic_deltas(3)
    f, _ = construct_f_theorem4a(sqrt_gauge, deltas, ONE_POINT)
    big = Packing(balls=[Ball(center=(Fraction(0),), radius=Fraction(1))])
    sums = band_sums(f, sqrt_gauge, deltas, big)
    assert sums.f_sum == 0 and sums.bands == {}


def test_construct_g_short_chain(sqrt_gauge):
    tseq, g, report = construct_g_theorem4b(sqrt_gauge, DiameterStream(kind="harmonic"), 3)
    assert report.passed, report.failed()
    assert tseq.stages == 3
    assert tseq.N == sorted(set(tseq.N))
    for j, s in enumerate(tseq.g_prefix_sums, start=1):
        assert s > mpmath.ldexp(1, j)
    for j, t in enumerate(tseq.t):
        assert abs(g.eval(t) - mpmath.ldexp(sqrt_gauge.eval(t), -j)) <= mpmath.ldexp(sqrt_gauge.eval(t), -j - 90)


def test_construct_g_harmonic_first_index(linear_gauge):
    tseq, _, report = construct_g_theorem4b(linear_gauge, DiameterStream(kind="harmonic"), 1)
    # 1 + 1/2 + ... + 1/31 is the first harmonic sum above 4
    assert tseq.N == [31]
    assert report.passed


@pytest.mark.slow
def test_construct_g_five_stages(sqrt_gauge):
    tseq, _, report = construct_g_theorem4b(sqrt_gauge, DiameterStream(kind="harmonic"), 5)
    assert report.passed
    assert tseq.stages == 5


def test_construct_g_sum_too_slow(linear_gauge):
    with pytest.raises(SumTooSlow) as exc:
        construct_g_theorem4b(linear_gauge, DiameterStream(kind="harmonic", budget=100), 2)
    assert exc.value.details["reached"] == 1


def test_scan_takes_the_first_index_over_each_threshold(linear_gauge):
    stream = DiameterStream(kind="explicit", values=["20", "1/2", "1/4"])
    # h(20) alone clears 4 and 16
    N, sums, minima = scan_stream(linear_gauge, stream, 2)
    assert N == [1, 1]
    assert sums == [mpf(20), mpf(20)]
    assert minima == [mpf(20), mpf(20)]
    with pytest.raises(SumTooSlow) as exc:
        scan_stream(linear_gauge, stream, 3)
    assert exc.value.details["reached"] == 2


def test_diameter_streams():
    assert DiameterStream(kind="power", exponent="1/2").prefix(4)[3] == mpf(1) / 2
    assert DiameterStream(kind="explicit", values=["1/2", "1/4"]).prefix(5) == [mpf(1) / 2, mpf(1) / 4]
    with pytest.raises(ValidationError):
        DiameterStream(kind="power")
    with pytest.raises(ValidationError):
        DiameterStream(kind="explicit", values=["1/4", "1/2"])


def test_construct_g_interp(sqrt_gauge):
    g, report = construct_g_interp(sqrt_gauge, [mpf(4) ** -n for n in range(1, 9)])
    assert report.passed, report.failed()
    knots = g.spec.scales
    assert knots[0] == 1
    for j, k in enumerate(knots):
        assert abs(g.eval(k) - mpmath.ldexp(sqrt_gauge.eval(k), -j)) <= mpmath.ldexp(sqrt_gauge.eval(k), -j - 90)


def test_construct_g_interp_constant_tail_is_not_larger(sqrt_gauge):
    g, report = construct_g_interp(sqrt_gauge, ["1/4", "1/16"], tail_ratio=None)
    assert not next(c for c in report.checks if c.name == "order_larger").passed


def test_construct_g_interp_rejects_bad_scales(sqrt_gauge):
    with pytest.raises(BadSequence):
        construct_g_interp(sqrt_gauge, ["1/4", "1/2"])
    with pytest.raises(BadSequence):
        construct_g_interp(sqrt_gauge, [])
