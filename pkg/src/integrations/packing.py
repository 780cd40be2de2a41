# /src/integrations/packing.py
import bisect
from fractions import Fraction
from math import isqrt
from typing import Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from loguru import logger
from mpmath import mpf

from src.config import get_config
from src.models.cantor import CantorModel, CubeAddress
from src.models.dimension import DimensionFunction
from src.models.packing import (
    Ball,
    Packing,
    PremeasureCertificate,
    VertexBallSequence,
    WitnessSequence,
)
from src.models.reports import PackingVerification
from src.utils.exceptions import (
    BadSpec,
    BelowTarget,
    DepthExceeded,
    EmptyInput,
    NotDisjoint,
    StageFail,
    TooManyCandidates,
)
from src.utils.numerics import fraction_to_mpf, to_fraction

cfg = get_config()

# exhaustive witness checks above this size fall back to sampling the ends
WITNESS_CHECK_LIMIT = 4096


# ---------- weights ----------
def ball_weight(ball: Ball, g: DimensionFunction) -> mpf:
    return g.eval(fraction_to_mpf(ball.diameter))


def packing_weight(p: Packing, g: DimensionFunction) -> mpf:
    if p.is_lazy:
        return len(p) * g.eval(fraction_to_mpf(2 * p.uniform_radius))
    return mpmath.fsum(ball_weight(b, g) for b in p.balls)


def _integer_weights(weights: Sequence[mpf]) -> List[int]:
    fractions = [to_fraction(w) for w in weights]
    denominator = max((f.denominator for f in fractions), default=1)
    return [int(f * denominator) for f in fractions]


# ---------- verification ----------
def _overlap(a: Ball, b: Ball) -> bool:
    dist2 = sum((x - y) ** 2 for x, y in zip(a.center, b.center))
    return dist2 < (a.radius + b.radius) ** 2


def find_overlap(balls: Sequence[Ball]) -> Tuple[Optional[Tuple[int, int]], Optional[Fraction]]:
    """
    Sweep along the first coordinate. Returns the first overlapping pair (by
    sorted position) and the smallest squared slack |c_i - c_j|^2 - (r_i + r_j)^2
    among the pairs the sweep examines.
    """
    if len(balls) < 2:
        return None, None
    order = sorted(range(len(balls)), key=lambda i: (balls[i].center[0], i))
    r_max = max(b.radius for b in balls)
    min_gap = None
    for pos, i in enumerate(order):
        a = balls[i]
        for j in order[pos + 1:]:
            b = balls[j]
            if b.center[0] - a.center[0] >= a.radius + r_max:
                break
            slack = sum((x - y) ** 2 for x, y in zip(a.center, b.center)) - (a.radius + b.radius) ** 2
            if min_gap is None or slack < min_gap:
                min_gap = slack
            if slack < 0:
                return (min(i, j), max(i, j)), min_gap
    return None, min_gap


def verify_packing(p: Packing, model: Optional[CantorModel] = None) -> PackingVerification:
    violating, min_gap = None, None
    if p.is_lazy:
        method = "structural"
        r = p.uniform_radius
        if len(p) < 2:
            disjoint = True
        else:
            disjoint = p.separation is not None and p.separation >= 2 * r
        max_diameter = 2 * r
    else:
        method = "sweep"
        violating, min_gap = find_overlap(p.balls)
        disjoint = violating is None
        max_diameter = max((b.diameter for b in p.balls), default=Fraction(0))

    within_delta = p.delta is None or max_diameter < p.delta

    sampled = False
    if model is None:
        witnessed = None
    elif p.witnesses is None or len(p.witnesses) != len(p):
        witnessed = False
    else:
        n = len(p)
        sampled = n > WITNESS_CHECK_LIMIT
        indices = [*range(64), *range(n - 64, n)] if sampled else range(n)
        witnessed = all(
            len(p.witnesses[i]) == model.depth
            and model.to_point(model.corner_fixed(tuple(p.witnesses[i]))) == p.balls[i].center
            for i in indices
        )

    return PackingVerification(
        ball_count=len(p),
        method=method,
        disjoint=disjoint,
        within_delta=within_delta,
        witnessed=witnessed,
        witness_sample=sampled,
        violating_pair=violating,
        min_gap=min_gap,
    )


# ---------- proof packings ----------
def vertex_packing(model: CantorModel, level: int, radius: Fraction, delta: Optional[Fraction] = None) -> Packing:
    if level > model.depth:
        raise DepthExceeded(f"level {level} exceeds depth {model.depth}", {"level": level})
    balls = VertexBallSequence(model, level, radius)
    separation_fixed = model.separation_fixed(level)
    separation = None
    if separation_fixed is not None:
        separation = Fraction(separation_fixed, 1 << model.scale_bits)
        if separation < 2 * radius:
            raise NotDisjoint(
                f"level-{level} vertices are {separation} apart, balls need {2 * radius}",
                {"level": level, "pair": [0, 1], "separation": str(separation)},
            )
    return Packing(
        balls=balls,
        delta=delta,
        witnesses=WitnessSequence(balls),
        separation=separation,
        meta={"level": level},
    )


def proof_packing(model: CantorModel, m: int, r, delta: Optional[Fraction] = None) -> Packing:
    if m + 2 > model.depth:
        raise DepthExceeded(f"proof packing at level {m} needs depth {m + 2}", {"m": m, "depth": model.depth})
    radius = r if isinstance(r, Fraction) else to_fraction(mpf(r))
    lo, hi = to_fraction(model.a(m + 2)), to_fraction(model.a(m + 1))
    if not lo < radius <= hi:
        raise BadSpec(f"radius must lie in (a_{m + 2}, a_{m + 1}]", {"m": m, "r": str(radius)})
    return vertex_packing(model, m, radius, delta)


# ---------- divergence ----------
def divergence_trace(
    model: CantorModel,
    g: DimensionFunction,
    delta: Fraction = Fraction(1),
    levels: Optional[int] = None,
) -> List[Tuple[int, mpf]]:
    """
    (m, weight) where weight = 2^(d(m-1)) g(2 a_(m+1)) is the mass of the vertex
    packing of the level-(m-1) cubes with radius a_(m+1); levels whose diameter
    reaches delta are skipped.
    """
    top = model.depth - 1 if levels is None else min(levels, model.depth - 1)
    trace = []
    for m in range(1, top + 1):
        a = model.a(m + 1)
        if to_fraction(2 * a) >= delta:
            continue
        weight = mpmath.ldexp(g.eval(2 * a), model.d * (m - 1))
        trace.append((m, weight))
    return trace


def divergence_certificate(
    model: CantorModel,
    g: DimensionFunction,
    threshold,
    delta: Fraction = Fraction(1),
) -> PremeasureCertificate:
    threshold = mpf(threshold)
    eps = cfg.eps_cont
    best_level, best_weight = None, mpf(0)
    for m, weight in divergence_trace(model, g, delta):
        if weight > best_weight:
            best_level, best_weight = m, weight
        if weight * (1 - eps) <= threshold:
            logger.debug(f"level {m}: weight {mpmath.nstr(weight, 10)} <= {mpmath.nstr(threshold, 6)}")
            continue

        packing = vertex_packing(model, m - 1, to_fraction(model.a(m + 1)), delta)
        recomputed = packing_weight(packing, g)
        verification = verify_packing(packing, model)
        if abs(recomputed - weight) > eps * weight:
            raise NotDisjoint(f"certificate weight mismatch at level {m}", {"level": m})
        logger.info(
            f"Certificate at level {m}: {len(packing)} balls, weight {mpmath.nstr(weight, 12)} "
            f"> {mpmath.nstr(threshold, 6)}"
        )
        return PremeasureCertificate(
            packing=packing,
            gauge=g,
            weight=recomputed,
            level=m,
            threshold=threshold,
            verified=verification.passed,
        )

    raise DepthExceeded(
        f"no level up to {model.depth - 1} certifies weight > {mpmath.nstr(threshold, 6)}",
        {"best_weight": str(best_weight), "level": best_level, "depth": model.depth},
    )


# ---------- recursive stage extraction ----------
def _stage(
    model: CantorModel,
    g: DimensionFunction,
    prefix: Tuple[int, ...],
    kept: List[Tuple[Tuple[int, ...], int]],
    delta: Fraction,
) -> Optional[Dict]:
    """
    One stage inside the cube at `prefix`: a packing of weight > 2 g(1) whose
    last ball strictly contains the all-ones child Q*. Returns None when no
    level reaches the target; raises DepthExceeded when no level is available.
    """
    d, level = model.d, len(prefix)
    A, B = model.fixed_scales, model.scale_bits
    eps = cfg.eps_cont
    target = 2 * g.eval(mpf(1))
    all_ones = (1 << d) - 1

    star = prefix + (all_ones,)
    if level + 1 > model.depth:
        raise DepthExceeded(f"stage at level {level} has no child cube", {"level": level})
    center = model.corner_fixed(star)
    # radius just above sqrt(d) a with a 64-bit mantissa; R^2 > d a^2 puts Q* strictly inside
    R = isqrt(d * A[level + 1] ** 2)
    shift = max(0, R.bit_length() - 64)
    R = ((R >> shift) + 1) << shift
    if Fraction(2 * R, 1 << B) >= delta:
        raise DepthExceeded(f"last ball at level {level} is not a delta-ball", {"level": level})
    last_weight = g.eval(mpf((2 * R, -B)))

    first_j = level + 1
    if first_j > model.depth - 1:
        raise DepthExceeded(f"no candidate level below {level} within depth {model.depth}", {"level": level})

    for j in range(first_j, model.depth):
        radius = A[j + 1]
        ball_weight_j = g.eval(mpf((2 * radius, -B)))
        span = j - 1 - level
        outside = (1 << (d * span)) - (1 << (d * (span - 1))) if span >= 1 else 1
        if (outside * ball_weight_j + last_weight) * (1 - eps) <= target:
            continue

        inner = 1 << (d * (span - 1)) if span >= 1 else 0
        corners = model.level_corners_fixed(j - 1, prefix)
        candidates = []
        for i, c in enumerate(corners):
            if span >= 1 and i >= len(corners) - inner:
                continue
            if sum((x - y) ** 2 for x, y in zip(c, center)) <= (radius + R) ** 2:
                continue
            if any(sum((x - y) ** 2 for x, y in zip(c, kc)) <= (radius + kr) ** 2 for kc, kr in kept):
                continue
            candidates.append((i, c))

        weight = len(candidates) * ball_weight_j + last_weight
        logger.debug(f"stage in level-{level} cube, j={j}: {len(candidates)} balls, weight {mpmath.nstr(weight, 10)}")
        if weight * (1 - eps) > target:
            return {
                "prefix": prefix,
                "j": j,
                "radius": radius,
                "candidates": candidates,
                "last": (center, R, star),
                "weight": weight,
            }
    return None


def lemma6_extract(
    model: CantorModel,
    g: DimensionFunction,
    stages: int,
    delta: Fraction = Fraction(1),
) -> Packing:
    """
    Merge `stages` recursive stages into one delta-packing: each stage lives in
    the all-ones child of the previous stage's cube, and the last ball of every
    non-final stage is replaced by the next stage's balls.
    """
    if stages < 1:
        raise BadSpec("at least one stage is needed", {"stages": stages})
    B = model.scale_bits
    depth = model.depth
    kept: List[Tuple[Tuple[int, ...], int]] = []
    addresses: List[Tuple[int, ...]] = []
    stage_of: List[int] = []
    records = []
    prefix: Tuple[int, ...] = ()
    last = None

    for s in range(1, stages + 1):
        found = _stage(model, g, prefix, kept, delta)
        if found is None:
            raise StageFail(
                f"stage {s} finds no packing of weight > 2 g(1) within depth {depth}",
                {"stage": s, "level": len(prefix)},
            )
        j = found["j"]
        for i, corner in found["candidates"]:
            kept.append((corner, found["radius"]))
            sub = CubeAddress.from_index(model.d, j - 1 - len(prefix), i).selectors
            addresses.append(prefix + sub)
            stage_of.append(s)
        last = found["last"]
        records.append({
            "stage": s,
            "cube_level": len(prefix),
            "ball_level": j,
            "balls": len(found["candidates"]),
            "weight": mpmath.nstr(found["weight"], cfg.DECIMAL_DIGITS),
        })
        logger.info(f"Stage {s}: level {j}, {len(found['candidates'])} balls")
        prefix = last[2]

    center, R, star = last
    kept.append((center, R))
    addresses.append(star)
    stage_of.append(stages)

    radii_all = [Fraction(r, 1 << B) for _, r in kept]
    balls = [Ball(center=model.to_point(c), radius=r) for (c, _), r in zip(kept, radii_all)]
    witnesses = [a + (0,) * (depth - len(a)) for a in addresses]
    packing = Packing(
        balls=balls,
        delta=delta,
        witnesses=witnesses,
        stages=tuple(stage_of),
        meta={"stages": records},
    )
    return certify_merged(packing, model, g, stages)


def certify_merged(packing: Packing, model: CantorModel, g: DimensionFunction, stages: int) -> Packing:
    """Re-check the merged packing and require weight > (stages + 1) g(1)."""
    verification = verify_packing(packing, model)
    if not verification.disjoint:
        raise NotDisjoint(
            f"merged packing has overlapping balls {verification.violating_pair}",
            {"pair": list(verification.violating_pair or ())},
        )
    if not verification.within_delta or verification.witnessed is False:
        raise StageFail(
            "merged packing breaks the delta bound or its witnesses",
            {"stage": stages, "within_delta": verification.within_delta, "witnessed": verification.witnessed},
        )
    weight = packing_weight(packing, g)
    target = (stages + 1) * g.eval(mpf(1))
    if weight * (1 - cfg.eps_cont) <= target:
        raise BelowTarget(
            f"merged weight {mpmath.nstr(weight, 10)} does not exceed {mpmath.nstr(target, 10)}",
            {"weight": str(weight), "target": str(target), "stages": stages},
        )
    packing.meta["weight"] = mpmath.nstr(weight, cfg.DECIMAL_DIGITS)
    packing.meta["target"] = mpmath.nstr(target, cfg.DECIMAL_DIGITS)
    packing.meta["reaches_target"] = True
    return packing


# ---------- optimizers ----------
def candidate_balls(centers: Sequence, radii: Sequence[Fraction]) -> List[Ball]:
    points = [tuple(c) if isinstance(c, (tuple, list)) else (c,) for c in centers]
    return [
        Ball(center=tuple(_fraction(v) for v in p), radius=_fraction(r))
        for p in points
        for r in radii
    ]


def _fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return to_fraction(mpf(value))


def _certificate(candidates: Sequence[Ball], chosen: Sequence[int], g: DimensionFunction, delta, method: str) -> PremeasureCertificate:
    chosen = tuple(sorted(chosen))
    packing = Packing(balls=[candidates[i] for i in chosen], delta=delta, meta={"method": method})
    verification = verify_packing(packing)
    return PremeasureCertificate(
        packing=packing,
        gauge=g,
        weight=packing_weight(packing, g),
        verified=verification.passed,
        indices=chosen,
    )


def brute_force_packing(
    candidates: Sequence[Ball],
    g: DimensionFunction,
    delta: Optional[Fraction] = None,
) -> PremeasureCertificate:
    """Exact maximum over all disjoint subsets; ties go to the lexicographically smallest index set."""
    n = len(candidates)
    if n == 0:
        raise EmptyInput("no candidate balls")
    if n > cfg.BRUTE_FORCE_MAX:
        raise TooManyCandidates(f"{n} candidates exceed the limit of {cfg.BRUTE_FORCE_MAX}", {"count": n})

    weights = _integer_weights([ball_weight(b, g) for b in candidates])
    # candidates of diameter >= delta are never admitted
    excluded = 0
    if delta is not None:
        for i, b in enumerate(candidates):
            if b.diameter >= delta:
                excluded |= 1 << i
        if excluded == (1 << n) - 1:
            raise EmptyInput("no candidate diameter is below delta", {"delta": str(delta)})
    conflicts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if _overlap(candidates[i], candidates[j]):
                conflicts[i] |= 1 << j
                conflicts[j] |= 1 << i
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + weights[i]

    best_weight, best_set = -1, ()

    def search(i: int, blocked: int, weight: int, chosen: Tuple[int, ...]) -> None:
        nonlocal best_weight, best_set
        if weight + suffix[i] <= best_weight:
            return
        if i == n:
            best_weight, best_set = weight, chosen
            return
        if not (blocked >> i) & 1:
            search(i + 1, blocked | conflicts[i], weight + weights[i], chosen + (i,))
        search(i + 1, blocked, weight, chosen)

    search(0, excluded, 0, ())
    return _certificate(candidates, best_set, g, delta, "brute_force")


def optimize_packing_1d(
    centers: Sequence,
    radii: Sequence,
    g: DimensionFunction,
    delta: Optional[Fraction] = None,
) -> PremeasureCertificate:
    if not centers or not radii:
        raise EmptyInput("optimize_packing_1d needs centers and radii")
    candidates = candidate_balls(centers, radii)
    if any(b.dimension != 1 for b in candidates):
        raise BadSpec("optimize_packing_1d works on the line only")
    if delta is not None and any(b.diameter >= delta for b in candidates):
        raise BadSpec("every candidate diameter must be below delta", {"delta": str(delta)})

    weights = _integer_weights([ball_weight(b, g) for b in candidates])
    order = sorted(range(len(candidates)), key=lambda i: (candidates[i].center[0] + candidates[i].radius, i))
    rights = [candidates[i].center[0] + candidates[i].radius for i in order]

    best = [0] * (len(order) + 1)
    take = [False] * (len(order) + 1)
    previous = [0] * (len(order) + 1)
    for pos, i in enumerate(order, start=1):
        left = candidates[i].center[0] - candidates[i].radius
        previous[pos] = bisect.bisect_right(rights, left, 0, pos - 1)
        with_i = weights[i] + best[previous[pos]]
        take[pos] = with_i > best[pos - 1]
        best[pos] = with_i if take[pos] else best[pos - 1]

    chosen, pos = [], len(order)
    while pos > 0:
        if take[pos]:
            chosen.append(order[pos - 1])
            pos = previous[pos]
        else:
            pos -= 1
    return _certificate(candidates, chosen, g, delta, "interval_dp")


def greedy_packing(
    centers: Sequence,
    radii: Sequence,
    g: DimensionFunction,
    delta: Optional[Fraction] = None,
) -> PremeasureCertificate:
    if not centers or not radii:
        raise EmptyInput("greedy_packing needs centers and radii")
    candidates = candidate_balls(centers, radii)
    if delta is not None:
        candidates = [b for b in candidates if b.diameter < delta]
        if not candidates:
            raise EmptyInput("no candidate diameter is below delta", {"delta": str(delta)})
    weights = [ball_weight(b, g) for b in candidates]
    admitted: List[int] = []
    for i in sorted(range(len(candidates)), key=lambda i: (-weights[i], i)):
        if not any(_overlap(candidates[i], candidates[j]) for j in admitted):
            admitted.append(i)
    return _certificate(candidates, admitted, g, delta, "greedy")


def random_candidates(
    rng: np.random.Generator,
    n_centers: int,
    radii: Sequence[Fraction],
    grid_bits: int = 8,
    d: int = 1,
) -> List[Tuple]:
    raw = rng.integers(0, (1 << grid_bits) + 1, size=(n_centers, d))
    centers = sorted(tuple(Fraction(int(v), 1 << grid_bits) for v in row) for row in raw)
    if d == 1:
        return [c[0] for c in centers]
    return centers
