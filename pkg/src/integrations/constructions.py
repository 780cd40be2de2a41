# /src/integrations/constructions.py
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from loguru import logger
from mpmath import mpf

from src.config import get_config
from src.models.dimension import (
    DimensionFunction,
    PiecewiseExpGSpec,
    PiecewiseExpInterpSpec,
    PiecewiseMaxFSpec,
)
from src.models.packing import Ball, Packing
from src.models.reports import (
    BandSums,
    Check,
    ConstructionReport,
    DeltaRow,
    DeltaValidationReport,
    OrderVerdict,
)
from src.models.sequences import CertifiedBounds, DeltaSequence, DiameterStream, FinitePointSet, TSequence
from src.integrations.dimfunc import compare_order, validate_dimension_function
from src.utils.exceptions import BadSequence, InvalidSequence, SumTooSlow
from src.utils.numerics import fraction_to_mpf, parse_real, to_fraction
from src.utils.parallel import progress

cfg = get_config()

# construct_g_interp falls back to the configured tail when no ratio is passed
_DEFAULT_TAIL = object()

Instance = Union[FinitePointSet, CertifiedBounds, None]


def _piece_samples(lower: mpf, upper: mpf) -> List[mpf]:
    width = upper - lower
    return [lower, lower + mpmath.ldexp(width, -10), (lower + upper) / 2, upper - mpmath.ldexp(width, -10), upper]


# ---------- delta sequences ----------
def _premeasure_bound(h: DimensionFunction, deltas: DeltaSequence, instance: Instance, n: int) -> Optional[mpf]:
    if isinstance(instance, FinitePointSet):
        return instance.size * h.eval(deltas.values[n])
    bounds = instance.bounds if isinstance(instance, CertifiedBounds) else deltas.premeasure_bounds
    if bounds is None or n >= len(bounds):
        return None
    return bounds[n]


def validate_delta_sequence(
    h: DimensionFunction,
    deltas: DeltaSequence,
    instance: Instance = None,
    raise_on_failure: bool = True,
) -> DeltaValidationReport:
    eps = cfg.eps_cont
    rows, first_failure, reason = [], None, ""
    values = deltas.values
    for n, delta in enumerate(values):
        h_delta = h.eval(delta)
        bound = _premeasure_bound(h, deltas, instance, n)
        target = mpmath.ldexp(1, -2 * n)
        row = DeltaRow(
            n=n,
            delta=delta,
            h_delta=h_delta,
            premeasure_bound=bound if bound is not None else mpmath.inf,
            target=target,
            decreasing_ok=n == 0 or delta < values[n - 1],
            bound_ok=bound is not None and bound <= target * (1 + eps),
            ratio_ok=n == 0 or 2 * h_delta < h.eval(values[n - 1]),
        )
        rows.append(row)
        if first_failure is None and not row.passed:
            first_failure = n
            if not row.decreasing_ok:
                reason = "not decreasing"
            elif not row.bound_ok:
                reason = "premeasure bound above 2^-2n" if bound is not None else "no premeasure bound"
            else:
                reason = "2 h(delta_n) >= h(delta_(n-1))"

    report = DeltaValidationReport(rows=rows, first_failure=first_failure, reason=reason)
    if raise_on_failure and not report.valid:
        raise InvalidSequence(f"delta sequence fails at n={first_failure}: {reason}", {"index": first_failure, "reason": reason})
    return report


def shift_instance(instance: Instance, s: int) -> Instance:
    if isinstance(instance, CertifiedBounds):
        return CertifiedBounds(bounds=instance.bounds[s:])
    return instance


def shift_delta_sequence(
    h: DimensionFunction,
    deltas: DeltaSequence,
    instance: Instance = None,
) -> Tuple[DeltaSequence, DeltaValidationReport]:
    for s in range(len(deltas.values)):
        shifted = deltas.shifted(s)
        report = validate_delta_sequence(h, shifted, shift_instance(instance, s), raise_on_failure=False)
        if report.valid:
            logger.info(f"delta sequence validates after shifting by {s}")
            return shifted, report.model_copy(update={"shift": s})
    raise InvalidSequence("no shift of the delta sequence validates", {"index": len(deltas.values) - 1})


# ---------- f: piecewise max ----------
def construct_f_theorem4a(
    h: DimensionFunction,
    deltas: DeltaSequence,
    instance: Instance = None,
) -> Tuple[DimensionFunction, ConstructionReport]:
    validate_delta_sequence(h, deltas, instance)
    values = deltas.values
    f = DimensionFunction(
        spec=PiecewiseMaxFSpec(h=h.spec, deltas=values),
        precision=h.precision,
        label="f",
    )
    eps = cfg.eps_cont
    invariants = validate_dimension_function(f)

    identity = all(f.eval(delta) == mpmath.ldexp(h.eval(delta), n) for n, delta in enumerate(values))
    decay = all(f.eval(delta) <= mpmath.ldexp(1 + eps, -n) for n, delta in enumerate(values))

    ratio_ok, worst = True, ""
    for n in range(len(values) - 1):
        for t in _piece_samples(values[n + 1], values[n])[:-1]:
            if h.eval(t) / f.eval(t) > mpmath.ldexp(1 + eps, -n):
                ratio_ok, worst = False, f"piece {n} at t={mpmath.nstr(t, 10)}"
                break

    report = ConstructionReport(name="construct_f", checks=[
        Check(name="delta_sequence_valid", passed=True),
        Check(name="boundary_identity", passed=identity, detail="f(delta_n) == 2^n h(delta_n)"),
        Check(name="continuity", passed=invariants.continuous, detail=mpmath.nstr(invariants.max_continuity_error, 8)),
        Check(name="monotone", passed=invariants.monotone),
        Check(name="invariants", passed=invariants.passed, detail="; ".join(invariants.violations)),
        Check(name="f_delta_decay", passed=decay, detail="f(delta_n) <= 2^-n"),
        Check(name="ratio_bound", passed=ratio_ok, detail=worst or "h/f <= 2^-n per piece"),
    ])
    logger.info(f"construct_f: {len(report.checks) - len(report.failed())}/{len(report.checks)} checks pass")
    return f, report


def band_sums(f: DimensionFunction, h: DimensionFunction, deltas: DeltaSequence, packing: Packing) -> BandSums:
    """Split a packing into bands [delta_(n+1), delta_n) and sum 2^n h(|B|) and f(|B|)."""
    spec = f.spec if isinstance(f.spec, PiecewiseMaxFSpec) else PiecewiseMaxFSpec(h=h.spec, deltas=deltas.values)
    last = len(spec.deltas) - 1
    weighted, f_values, bands = [], [], {}
    for ball in packing.balls:
        diameter = fraction_to_mpf(ball.diameter)
        n = min(spec.locate(diameter), last)
        if n < 0:
            continue
        bands[n] = bands.get(n, 0) + 1
        weighted.append(mpmath.ldexp(h.eval(diameter), n))
        f_values.append(f.eval(diameter))
    return BandSums(
        weighted_h_sum=mpmath.fsum(weighted),
        f_sum=mpmath.fsum(f_values),
        bands=bands,
    )


def random_point_packings(
    points: Sequence[Sequence],
    delta,
    count: int,
    seed: int,
    radius_bits: int = 20,
) -> List[Packing]:
    """
    Random packings of a finite point set: a random nonempty subset of the
    points, dyadic radii below delta/2, each shrunk to half the sup-norm
    distance to the other chosen centers.
    """
    rng = np.random.default_rng(seed)
    centers = [tuple(to_fraction(parse_real(v)) for v in p) for p in points]
    half = to_fraction(parse_real(delta)) / 2
    scale = 1 << radius_bits
    packings = []
    for _ in range(count):
        mask = rng.random(len(centers)) < 0.5
        if not mask.any():
            mask[int(rng.integers(0, len(centers)))] = True
        chosen = [c for c, keep in zip(centers, mask) if keep]
        draws = rng.integers(1, scale, size=len(chosen))
        balls = []
        for i, c in enumerate(chosen):
            r = half * Fraction(int(draws[i]), scale)
            for j, other in enumerate(chosen):
                if j != i:
                    r = min(r, max(abs(x - y) for x, y in zip(c, other)) / 2)
            balls.append(Ball(center=c, radius=r))
        packings.append(Packing(balls=balls, delta=2 * half))
    return packings


# ---------- g: exponential interpolation over a diameter stream ----------
def _tj_factor() -> mpf:
    return 1 - mpmath.ldexp(1, -cfg.T_RULE_BITS)


def scan_stream(
    h: DimensionFunction,
    stream: DiameterStream,
    J: int,
) -> Tuple[List[int], List[mpf], List[mpf]]:
    """N_j = min{i : sum_(k<=i) h(|B_k|) > 4^j}; one heavy term may settle several j at once."""
    N: List[int] = []
    sums: List[mpf] = []
    minima: List[mpf] = []
    running, smallest = mpf(0), mpmath.inf
    i = 0
    with mpmath.workprec(h.precision):
        for i, b in progress(enumerate(stream, start=1), total=stream.budget, desc="stream scan"):
            running = mpmath.fadd(running, h.eval(b), rounding="d")
            smallest = min(smallest, b)
            while len(N) < J and running > mpmath.ldexp(1, 2 * (len(N) + 1)):
                N.append(i)
                sums.append(running)
                minima.append(smallest)
            if len(N) == J:
                break
    if len(N) < J:
        raise SumTooSlow(
            f"partial sums reach 4^{len(N)} but not 4^{J} within {i} terms",
            {"reached": len(N), "terms": i, "sum": str(running)},
        )
    return N, sums, minima


def construct_g_theorem4b(
    h: DimensionFunction,
    stream: DiameterStream,
    J: int,
) -> Tuple[TSequence, DimensionFunction, ConstructionReport]:
    N, sums, minima = scan_stream(h, stream, J)

    factor = _tj_factor()
    ts = [minima[0] * factor]
    for m in minima[1:]:
        ts.append(min(m, ts[-1]) * factor)
    anchor = max(mpf(1), 2 * ts[0])
    g = DimensionFunction(
        spec=PiecewiseExpGSpec(h=h.spec, ts=[anchor] + ts),
        precision=h.precision,
        label="g",
    )

    g_sums = _stream_prefix_sums(g, stream, N)
    tseq = TSequence(N=N, t=[anchor] + ts, prefix_min=minima, h_prefix_sums=sums, g_prefix_sums=g_sums, stream=stream)
    report = _check_exp_interpolation("construct_g", g, h, [anchor] + ts)
    chain = all(s > mpmath.ldexp(1, k) for k, s in enumerate(g_sums, start=1))
    strict = all(t < m for t, m in zip(ts, minima))
    report = report.model_copy(update={"checks": report.checks + [
        Check(name="prefix_minimum", passed=strict, detail="t_j < min |B_i|, i <= N_j"),
        Check(name="h_sum_chain", passed=all(s > mpmath.ldexp(1, 2 * k) for k, s in enumerate(sums, start=1)), detail="> 4^j"),
        Check(name="g_sum_chain", passed=chain, detail="> 2^j"),
        Check(name="lower_bound", passed=_lower_bound_holds(g, h, ts), detail="g >= h / 2^j above t_j"),
    ]})
    logger.info(f"construct_g: N = {N}")
    return tseq, g, report


def _stream_prefix_sums(g: DimensionFunction, stream: DiameterStream, N: Sequence[int]) -> List[mpf]:
    sums, running = [], mpf(0)
    targets = iter(N)
    target = next(targets, None)
    for i, b in enumerate(stream, start=1):
        if target is None:
            break
        running = mpmath.fadd(running, g.eval(b), rounding="d")
        while target == i:
            sums.append(running)
            target = next(targets, None)
    return sums


def _lower_bound_holds(g: DimensionFunction, h: DimensionFunction, ts: Sequence[mpf]) -> bool:
    eps = cfg.eps_cont
    for j in range(1, len(ts) + 1):
        lower = ts[j - 1]
        upper = ts[j - 2] if j >= 2 else 2 * lower
        for t in _piece_samples(lower, upper)[1:]:
            if g.eval(t) < mpmath.ldexp(h.eval(t), -j) * (1 - eps):
                return False
    return True


def _check_exp_interpolation(name: str, g: DimensionFunction, h: DimensionFunction, knots: Sequence[mpf]) -> ConstructionReport:
    """Breakpoint values 2^-j h(k_j), continuity, monotonicity and g/h <= 2^(1-j) per piece."""
    eps = cfg.eps_cont
    invariants = validate_dimension_function(g)
    knot_values = all(
        abs(g.eval(k) - mpmath.ldexp(h.eval(k), -j)) <= eps * mpmath.ldexp(h.eval(k), -j)
        for j, k in enumerate(knots)
    )
    ratio_ok = True
    for j in range(1, len(knots)):
        for t in _piece_samples(knots[j], knots[j - 1])[1:]:
            if g.eval(t) / h.eval(t) > mpmath.ldexp(1 + eps, 1 - j):
                ratio_ok = False
    return ConstructionReport(name=name, checks=[
        Check(name="knot_values", passed=knot_values, detail="g(k_j) == 2^-j h(k_j)"),
        Check(name="continuity", passed=invariants.continuous, detail=mpmath.nstr(invariants.max_continuity_error, 8)),
        Check(name="monotone", passed=invariants.monotone),
        Check(name="invariants", passed=invariants.passed, detail="; ".join(invariants.violations)),
        Check(name="ratio_bound", passed=ratio_ok, detail="g/h <= 2^(1-j) per piece"),
    ])


# ---------- g: interpolation over a scale list ----------
def construct_g_interp(
    h: DimensionFunction,
    scales: Sequence,
    tail_ratio: Union[Fraction, None, object] = _DEFAULT_TAIL,
) -> Tuple[DimensionFunction, ConstructionReport]:
    """tail_ratio=None gives the constant tail 2^-J h below the last knot."""
    values = [parse_real(a) for a in scales]
    if not values or any(a <= 0 for a in values) or any(b >= a for a, b in zip(values, values[1:])):
        raise BadSequence("scales must be positive and strictly decreasing", {"count": len(values)})
    if values[0] < 1:
        values = [mpf(1)] + values

    spec_args = {"h": h.spec, "scales": values}
    if tail_ratio is not _DEFAULT_TAIL:
        spec_args["tail_ratio"] = tail_ratio
    g = DimensionFunction(spec=PiecewiseExpInterpSpec(**spec_args), precision=h.precision, label="g")

    report = _check_exp_interpolation("construct_ginterp", g, h, values)
    order = compare_order(g, h)
    report = report.model_copy(update={"checks": report.checks + [
        Check(name="order_larger", passed=order.verdict == OrderVerdict.LARGER, detail=order.verdict.value),
    ]})
    return g, report
