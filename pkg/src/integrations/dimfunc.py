# /src/integrations/dimfunc.py
# grid verdicts are numerical evidence, never proofs
from statistics import median
from typing import Any, List, Optional, Sequence, Union

import mpmath
from loguru import logger
from mpmath import mpf
from pydantic import ValidationError

from src.config import get_config
from src.models.dimension import DimensionFunction, DimensionSpec
from src.models.reports import (
    DoublingReport,
    InvariantReport,
    OrderClassification,
    OrderVerdict,
)
from src.utils.exceptions import BadSpec, EmptyGrid, NonMonotone
from src.utils.numerics import RealLike, log2, parse_real, rational_power

cfg = get_config()


def default_grid(depth: Optional[int] = None) -> List[mpf]:
    depth = cfg.GRID_DEPTH if depth is None else depth
    return [mpmath.ldexp(1, -j) for j in range(depth + 1)]


def doubly_exponential_boundaries(base: RealLike, count: int) -> List[mpf]:
    b = parse_real(base)
    return [b ** (-(1 << j)) for j in range(count)]


def make_builtin(
    spec: Union[DimensionSpec, dict],
    precision: Optional[int] = None,
    label: str = "",
    grid: Optional[Sequence[mpf]] = None,
) -> DimensionFunction:
    try:
        f = DimensionFunction.model_validate({
            "spec": spec,
            "precision": precision or cfg.PRECISION,
            "label": label,
        })
    except ValidationError as exc:
        raise BadSpec(f"Invalid dimension function spec: {exc.errors()[0]['msg']}", {"errors": _errors(exc)})

    report = validate_dimension_function(f, grid)
    if not report.monotone:
        raise NonMonotone(f"{f.kind} decreases on the validation grid", {"violations": report.violations})
    if not report.passed:
        raise BadSpec(f"{f.kind} fails the invariant suite", {"violations": report.violations})
    return f


def _errors(exc: ValidationError) -> List[dict]:
    return [{"loc": list(map(str, e["loc"])), "msg": e["msg"]} for e in exc.errors()]


def evaluate(f: DimensionFunction, t: RealLike) -> mpf:
    return f.eval(parse_real(t))


def breakpoint_values(f: DimensionFunction):
    return f.breakpoint_values()


def validation_points(f: DimensionFunction, grid: Optional[Sequence[mpf]] = None) -> List[mpf]:
    """The dyadic grid merged with the breakpoints it spans, decreasing."""
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise EmptyGrid("validation grid is empty")
    top, bottom = max(grid), min(grid)
    points = set(grid)
    if f.is_piecewise:
        points.update(t for t, _, _ in f.breakpoint_values() if bottom <= t <= top)
    return sorted(points, reverse=True)


def validate_dimension_function(
    f: DimensionFunction,
    grid: Optional[Sequence[mpf]] = None,
) -> InvariantReport:
    points = validation_points(f, grid)
    values = [f.eval(t) for t in points]
    eps = cfg.eps_cont
    violations = []

    positive = all(v > 0 for v in values)
    if not positive:
        violations.append("non-positive value on the grid")

    monotone = True
    for (t, v), (t_next, v_next) in zip(zip(points, values), zip(points[1:], values[1:])):
        if v_next > v * (1 + eps):
            monotone = False
            violations.append(f"f({mpmath.nstr(t_next, 8)}) > f({mpmath.nstr(t, 8)})")
            break

    max_error = mpf(0)
    for t, below, above in (f.breakpoint_values() if f.is_piecewise else []):
        scale = max(abs(below), abs(above))
        if scale:
            max_error = max(max_error, abs(below - above) / scale)
    continuous = max_error <= eps
    if not continuous:
        violations.append(f"jump of relative size {mpmath.nstr(max_error, 8)} at a breakpoint")

    threshold = mpmath.ldexp(values[0], -cfg.ZERO_THRESHOLD_BITS)
    decays = len(values) > 1 and values[-1] < threshold
    if not decays:
        violations.append("no decay towards 0 on the grid")

    return InvariantReport(
        grid_size=len(points),
        positive=positive,
        monotone=monotone,
        continuous=continuous,
        decays=decays,
        max_continuity_error=max_error,
        violations=violations,
    )


def _unbounded_trend(series: List[mpf]) -> bool:
    return len(series) > 2 and series[-1] > 2 * median(series)


def check_membership_Dd(
    f: DimensionFunction,
    d: int,
    grid: Optional[Sequence[mpf]] = None,
) -> DoublingReport:
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise EmptyGrid("membership grid is empty")
    if any(b >= a for a, b in zip(grid, grid[1:])) or grid[0] > 1 or grid[-1] <= 0:
        raise BadSpec("membership grid must be decreasing inside (0, 1]")

    c0_series = [rational_power(t, d) / f.eval(t) for t in grid]
    c1_series = [f.eval(2 * t) / f.eval(t) for t in grid]
    report = DoublingReport(
        d=d,
        c0_estimate=max(c0_series),
        c1_estimate=max(c1_series),
        grid=grid,
        passed=all(mpmath.isfinite(v) for v in c0_series + c1_series),
        c0_unbounded_trend=_unbounded_trend(c0_series),
        c1_unbounded_trend=_unbounded_trend(c1_series),
    )
    if not report.bounded:
        logger.warning(f"{f.kind} shows an unbounded trend for D_{d} membership")
    return report


def ratio_trace(g: DimensionFunction, h: DimensionFunction, grid: Sequence[mpf]) -> List[tuple]:
    return [(t, h.eval(t) / g.eval(t)) for t in grid]


def classify_log_ratios(rho: List[mpf]) -> OrderVerdict:
    low_bits, high_bits, witnesses = cfg.ORDER_LOW_BITS, cfg.ORDER_HIGH_BITS, cfg.ORDER_WITNESSES

    def vanishing(series: List[mpf]) -> bool:
        lows = [i for i, r in enumerate(series) if r < -low_bits]
        if len(lows) < witnesses:
            return False
        return not any(r > -high_bits for r in series[lows[0] + 1:])

    if vanishing(rho):
        return OrderVerdict.SMALLER
    if vanishing([-r for r in rho]):
        return OrderVerdict.LARGER

    lows = [i for i, r in enumerate(rho) if r < -low_bits]
    highs = [i for i, r in enumerate(rho) if r > -high_bits]
    if len(lows) >= witnesses and len(highs) >= witnesses and highs[-1] > lows[0]:
        return OrderVerdict.LIMINF_ZERO_ONLY

    deeper = rho[len(rho) // 2:]
    if deeper and all(abs(r) <= high_bits for r in deeper):
        return OrderVerdict.COMPARABLE
    return OrderVerdict.INCONCLUSIVE


def compare_order(
    g: DimensionFunction,
    h: DimensionFunction,
    grid: Optional[Sequence[mpf]] = None,
) -> OrderClassification:
    """Classify the trend of h(t)/g(t) as t -> 0; SMALLER is evidence for g < h."""
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise EmptyGrid("order grid is empty")

    trace = ratio_trace(g, h, grid)
    rho = [log2(ratio) for _, ratio in trace]
    verdict = classify_log_ratios(rho)
    logger.debug(f"compare_order({g.kind}, {h.kind}) on {len(grid)} points: {verdict.value}")
    return OrderClassification(
        verdict=verdict,
        ratio_trace=trace,
        low_count=sum(r < -cfg.ORDER_LOW_BITS for r in rho),
        high_count=sum(r > -cfg.ORDER_HIGH_BITS for r in rho),
    )


def spec_payload(f: DimensionFunction) -> Any:
    return f.model_dump(mode="json")
