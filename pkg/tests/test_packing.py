from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from mpmath import mpf

from src.models.packing import Ball, Packing
from src.integrations.cantor import build_model, cube_corner
from src.integrations.dimfunc import make_builtin
from src.integrations.packing import (
    brute_force_packing,
    candidate_balls,
    certify_merged,
    divergence_certificate,
    divergence_trace,
    find_overlap,
    greedy_packing,
    lemma6_extract,
    optimize_packing_1d,
    packing_weight,
    proof_packing,
    random_candidates,
    verify_packing,
    vertex_packing,
)
from src.utils.exceptions import (
    BadSpec,
    BelowTarget,
    DepthExceeded,
    EmptyInput,
    NotDisjoint,
    StageFail,
    TooManyCandidates,
)


def test_ball_needs_positive_radius():
    with pytest.raises(BadSpec):
        Ball(center=(Fraction(0),), radius=Fraction(0))


def test_find_overlap():
    touching = [Ball((Fraction(0),), Fraction(1, 4)), Ball((Fraction(1, 2),), Fraction(1, 4))]
    assert find_overlap(touching)[0] is None
    crossing = touching + [Ball((Fraction(3, 8),), Fraction(1, 16))]
    pair, gap = find_overlap(crossing)
    assert pair is not None and gap < 0


def test_proof_packing_d1(model_d1):
    m = 3
    packing = proof_packing(model_d1, m, Fraction(1, 4 ** (m + 1)), delta=Fraction(1))
    assert len(packing) == 2 ** m
    assert packing.is_lazy
    verification = verify_packing(packing, model_d1)
    assert verification.passed and verification.method == "structural"
    assert packing.balls[1].center == (Fraction(3, 64),)


def test_proof_packing_radius_range(model_d1):
    with pytest.raises(BadSpec):
        proof_packing(model_d1, 3, Fraction(1, 4 ** 6))
    with pytest.raises(BadSpec):
        proof_packing(model_d1, 3, Fraction(1, 4 ** 3))
    with pytest.raises(DepthExceeded):
        proof_packing(model_d1, model_d1.depth - 1, Fraction(1, 4 ** model_d1.depth))


def test_vertex_packing_rejects_overlap(model_d1):
    with pytest.raises(NotDisjoint) as exc:
        vertex_packing(model_d1, 2, Fraction(1, 8))
    assert exc.value.details["pair"] == [0, 1]


def test_lazy_and_explicit_verification_agree(model_d2):
    lazy = vertex_packing(model_d2, 3, Fraction(1, 4 ** 4))
    explicit = Packing(balls=list(lazy.balls), witnesses=list(lazy.witnesses))
    assert verify_packing(lazy, model_d2).passed
    assert verify_packing(explicit, model_d2).passed
    assert packing_weight(lazy, model_d2.h) == packing_weight(explicit, model_d2.h)


def test_bad_witness_is_caught(model_d1):
    lazy = vertex_packing(model_d1, 2, Fraction(1, 64))
    witnesses = list(lazy.witnesses)
    witnesses[0], witnesses[1] = witnesses[1], witnesses[0]
    packing = Packing(balls=list(lazy.balls), witnesses=witnesses)
    assert not verify_packing(packing, model_d1).witnessed
    assert verify_packing(packing).witnessed is None


def test_divergence_weights_closed_form(deep_model_d1, cube_root_gauge):
    for m, weight in divergence_trace(deep_model_d1, cube_root_gauge):
        expected = mpmath.power(2, mpf(m - 4) / 3)
        assert abs(weight - expected) <= mpmath.ldexp(expected, -100)


@pytest.mark.parametrize("threshold, level", [(1, 5), (10, 14), (100, 24)])
def test_divergence_certificate_levels(deep_model_d1, cube_root_gauge, threshold, level):
    cert = divergence_certificate(deep_model_d1, cube_root_gauge, threshold)
    assert cert.level == level
    assert cert.weight > threshold
    assert cert.verified
    assert len(cert.packing) == 2 ** (level - 1)


def test_divergence_bounded_for_equal_gauges(sqrt_gauge):
    model = build_model(sqrt_gauge, d=1, depth=31)
    trace = divergence_trace(model, sqrt_gauge)
    assert max(w for _, w in trace) < 2
    with pytest.raises(DepthExceeded) as exc:
        divergence_certificate(model, sqrt_gauge, 2)
    assert exc.value.details["level"] is not None
    assert mpf(exc.value.details["best_weight"]) < 2


def test_divergence_respects_delta(deep_model_d1, cube_root_gauge):
    trace = divergence_trace(deep_model_d1, cube_root_gauge, delta=Fraction(1, 4 ** 6))
    assert trace[0][0] == 6


def test_lemma6_standard_instance(model_d1, cube_root_gauge):
    model = build_model(model_d1.h, d=1, depth=14)
    packing = lemma6_extract(model, cube_root_gauge, stages=2)
    verification = verify_packing(packing, model)
    assert verification.disjoint and verification.within_delta and verification.witnessed
    assert [s["ball_level"] for s in packing.meta["stages"]] == [8, 12]
    assert len(packing) == 577
    assert packing.meta["reaches_target"]
    assert packing_weight(packing, cube_root_gauge) > 3 * cube_root_gauge.eval(mpf(1))
    assert set(packing.stages) == {1, 2}


def test_lemma6_needs_depth(model_d1, cube_root_gauge):
    # the second stage needs ball level 12, one more than depth 12 allows
    with pytest.raises(StageFail) as exc:
        lemma6_extract(model_d1, cube_root_gauge, stages=2)
    assert exc.value.details["stage"] == 2


def test_lemma6_rejects_zero_stages(model_d1, cube_root_gauge):
    with pytest.raises(BadSpec):
        lemma6_extract(model_d1, cube_root_gauge, stages=0)


def test_brute_force_small(cube_root_gauge):
    candidates = candidate_balls([Fraction(0), Fraction(1, 4)], [Fraction(1, 8), Fraction(1, 4)])
    cert = brute_force_packing(candidates, cube_root_gauge)
    # the two radius-1/8 balls touch; every radius-1/4 ball overlaps the rest
    assert cert.indices == (0, 2)
    assert cert.verified


def test_brute_force_ties_take_smallest_indices(cube_root_gauge):
    candidates = candidate_balls([Fraction(0), Fraction(1, 16), Fraction(1, 2)], [Fraction(1, 16)])
    # {0, 2} and {1, 2} weigh the same
    assert brute_force_packing(candidates, cube_root_gauge).indices == (0, 2)


def test_brute_force_limits(cube_root_gauge):
    with pytest.raises(EmptyInput):
        brute_force_packing([], cube_root_gauge)
    many = candidate_balls([Fraction(i, 64) for i in range(25)], [Fraction(1, 256)])
    with pytest.raises(TooManyCandidates):
        brute_force_packing(many, cube_root_gauge)


def test_optimize_1d_errors(cube_root_gauge):
    with pytest.raises(EmptyInput):
        optimize_packing_1d([], [Fraction(1, 8)], cube_root_gauge)
    with pytest.raises(BadSpec):
        optimize_packing_1d([(Fraction(0), Fraction(0))], [Fraction(1, 8)], cube_root_gauge)
    with pytest.raises(BadSpec):
        optimize_packing_1d([Fraction(0)], [Fraction(1, 2)], cube_root_gauge, delta=Fraction(1))


def test_greedy_is_dominated(cube_root_gauge):
    centers = [Fraction(0), Fraction(3, 16), Fraction(1, 4)]
    radii = [Fraction(1, 16), Fraction(3, 16)]
    dp = optimize_packing_1d(centers, radii, cube_root_gauge)
    greedy = greedy_packing(centers, radii, cube_root_gauge)
    assert greedy.weight <= dp.weight
    assert greedy.verified and dp.verified


@given(st.integers(min_value=0, max_value=2 ** 32))
def test_interval_dp_matches_brute_force(seed):
    g = make_builtin({"kind": "power", "s": "1/3"})
    radii = [Fraction(1, 64), Fraction(1, 32), Fraction(1, 16), Fraction(1, 8)]
    centers = random_candidates(np.random.default_rng(seed), 6, radii)
    exact = brute_force_packing(candidate_balls(centers, radii), g)
    dp = optimize_packing_1d(centers, radii, g)
    assert exact.weight == dp.weight
    assert greedy_packing(centers, radii, g).weight <= dp.weight


def test_random_candidates_on_lattice():
    rng = np.random.default_rng(3)
    centers = random_candidates(rng, 10, [Fraction(1, 8)])
    assert centers == sorted(centers)
    assert all(0 <= c <= 1 and (c * 256).denominator == 1 for c in centers)
    points = random_candidates(np.random.default_rng(3), 4, [Fraction(1, 8)], d=2)
    assert all(len(p) == 2 for p in points)


def test_witness_sequence_ends(model_d1):
    lazy = vertex_packing(model_d1, 2, Fraction(1, 64))
    with pytest.raises(IndexError):
        lazy.witnesses[len(lazy)]
    assert lazy.witnesses[-1] == lazy.witnesses[len(lazy) - 1]
    assert len(list(lazy.witnesses)) == len(lazy)


def test_large_packings_sample_their_witnesses(model_d2):
    lazy = vertex_packing(model_d2, 7, Fraction(1, 4 ** 8))
    verification = verify_packing(lazy, model_d2)
    assert verification.witnessed and verification.witness_sample
    unchecked = verify_packing(lazy)
    assert unchecked.witnessed is None and not unchecked.witness_sample
    assert unchecked.passed


def test_merged_packing_overlap_is_rejected(model_d1, cube_root_gauge):
    ball = Ball((Fraction(0),), Fraction(1, 64))
    packing = Packing(balls=[ball, ball], delta=Fraction(1))
    with pytest.raises(NotDisjoint) as exc:
        certify_merged(packing, model_d1, cube_root_gauge, stages=2)
    assert exc.value.details["pair"] == [0, 1]


def test_merged_packing_delta_is_enforced(model_d1, cube_root_gauge):
    packing = Packing(
        balls=[Ball((Fraction(0),), Fraction(1, 64))],
        delta=Fraction(1, 64),
        witnesses=[(0,) * model_d1.depth],
    )
    with pytest.raises(StageFail):
        certify_merged(packing, model_d1, cube_root_gauge, stages=2)


def test_merged_packing_below_target(model_d1, cube_root_gauge):
    packing = Packing(
        balls=[Ball((Fraction(0),), Fraction(1, 64))],
        delta=Fraction(1),
        witnesses=[(0,) * model_d1.depth],
    )
    # (1/32)^(1/3) is nowhere near 3 g(1)
    with pytest.raises(BelowTarget) as exc:
        certify_merged(packing, model_d1, cube_root_gauge, stages=2)
    assert exc.value.code == "BELOW_TARGET"
    assert exc.value.details["stages"] == 2


def test_four_ball_weight(model_d1, cube_root_gauge):
    packing = proof_packing(model_d1, 2, Fraction(1, 64))
    assert [b.center for b in packing.balls] == [
        (Fraction(0),), (Fraction(3, 16),), (Fraction(3, 4),), (Fraction(15, 16),)
    ]
    weight = packing_weight(packing, cube_root_gauge)
    assert mpmath.nstr(weight, 7) == "1.259921"
    assert abs(weight - mpmath.cbrt(2)) <= mpmath.ldexp(1, -100)


def test_packing_weight_edges(sqrt_gauge):
    assert packing_weight(Packing(balls=[]), sqrt_gauge) == 0
    unit = Packing(balls=[Ball((Fraction(1, 2),), Fraction(1, 2))])
    assert packing_weight(unit, sqrt_gauge) == 1


def test_greedy_on_the_plane(model_d2, cube_root_gauge):
    corners = [cube_corner(model_d2, (i,)) for i in range(4)]
    assert sorted(corners) == [
        (Fraction(0), Fraction(0)),
        (Fraction(0), Fraction(3, 4)),
        (Fraction(3, 4), Fraction(0)),
        (Fraction(3, 4), Fraction(3, 4)),
    ]
    cert = greedy_packing(corners, [Fraction(1, 16)], cube_root_gauge)
    assert len(cert.packing) == 4
    assert cert.verified
    # four balls of diameter 1/8 under t^(1/3)
    assert abs(cert.weight - 2) <= mpmath.ldexp(1, -100)


def test_brute_force_skips_balls_at_delta(cube_root_gauge):
    candidates = candidate_balls([Fraction(0), Fraction(1)], [Fraction(1, 8), Fraction(1, 2)])
    # the two radius-1/2 balls touch and win without a bound
    assert brute_force_packing(candidates, cube_root_gauge).indices == (1, 3)
    cert = brute_force_packing(candidates, cube_root_gauge, delta=Fraction(1, 2))
    assert cert.indices == (0, 2)
    assert cert.verified
    with pytest.raises(EmptyInput):
        brute_force_packing(candidates, cube_root_gauge, delta=Fraction(1, 4))
