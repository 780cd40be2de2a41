# /src/integrations/cantor.py
"""
Finite-depth corner Cantor sets: scale solving, cube geometry, rigorous
enclosures of the uniform measure on balls, and the density and cover checks.
"""
from fractions import Fraction
from math import lcm
from typing import Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from loguru import logger
from mpmath import mpf

from src.adapters.cache import ScaleCache, scale_key
from src.config import get_config
from src.models.cantor import CantorModel, CubeAddress, ScaleSequence
from src.models.dimension import DimensionFunction
from src.models.reports import CoverReport, DensityReport, DensitySample, MassEnclosure
from src.integrations.dimfunc import default_grid
from src.utils.exceptions import (
    BadAddress,
    DepthExceeded,
    LevelUnresolved,
    NoRoot,
    NonIncreasing,
    SeparationFail,
)
from src.utils.numerics import bisect_increasing, fraction_to_mpf, log2, to_fraction
from src.utils.parallel import parallel_map

cfg = get_config()

PointLike = Sequence[Union[Fraction, mpf, int]]


# ---------- scales ----------
def solve_scales(
    h: DimensionFunction,
    d: int,
    depth: int,
    tolerance_bits: Optional[int] = None,
    cache: Optional[ScaleCache] = None,
) -> ScaleSequence:
    tolerance_bits = tolerance_bits or cfg.SCALE_TOLERANCE_BITS
    key = scale_key(h.model_dump(mode="json"), d, depth, tolerance_bits, h.precision)
    if cache is not None:
        cached = cache.get(key)
        if cached is not None:
            logger.debug(f"Scale cache hit {key[:12]}")
            return cached

    with mpmath.workprec(h.precision):
        grid = default_grid()
        values = [h.eval(t) for t in grid]
        for t, v, v_next in zip(grid, values, values[1:]):
            if v_next >= v:
                raise NonIncreasing(f"h is not strictly increasing below {mpmath.nstr(t, 8)}", {"t": str(t)})

        one = mpf(1)
        if h.eval(one) < mpmath.ldexp(1, -d):
            raise NoRoot(f"h(1) is below 2^-{d}", {"h(1)": str(h.eval(one))})

        tolerance = mpmath.ldexp(1, -tolerance_bits)
        scales = [one]
        evaluations = 0
        max_residual = mpf(0)
        for n in range(1, depth + 1):
            target = mpmath.ldexp(1, -d * n)
            a, count = bisect_increasing(h.eval, target, scales[-1], tolerance, cfg.MAX_HALVINGS)
            evaluations += count
            max_residual = max(max_residual, abs(h.eval(a) - target) / target)
            scales.append(a)
            if 2 * a >= scales[-2]:
                raise SeparationFail(
                    f"2 a_{n} >= a_{n - 1}: the corner cubes would touch",
                    {"n": n, "a_n": str(a), "a_n_minus_1": str(scales[-2])},
                )

        dyadic_bound_ok = all(mpmath.ldexp(a, n) < 1 for n, a in enumerate(scales) if n >= 1)

    result = ScaleSequence(
        d=d,
        depth=depth,
        values=scales,
        tolerance=tolerance,
        max_residual=max_residual,
        evaluations=evaluations,
        separation_ok=True,
        dyadic_bound_ok=dyadic_bound_ok,
        h_fingerprint=key,
    )
    logger.info(f"Solved {depth} scales for {h.kind} (d={d}) in {evaluations} evaluations")
    if cache is not None:
        cache.put(key, result)
    return result


def build_model(
    h: DimensionFunction,
    d: int,
    depth: int,
    tolerance_bits: Optional[int] = None,
    cache: Optional[ScaleCache] = None,
) -> CantorModel:
    return CantorModel(h=h, scales=solve_scales(h, d, depth, tolerance_bits, cache))


# ---------- geometry ----------
def _address(model: CantorModel, address: Union[CubeAddress, Sequence[int]]) -> CubeAddress:
    try:
        if not isinstance(address, CubeAddress):
            address = CubeAddress(d=model.d, selectors=tuple(address))
    except ValueError as exc:
        raise BadAddress(str(exc))
    if address.d != model.d:
        raise BadAddress(f"address has dimension {address.d}, model has {model.d}")
    if address.level > model.depth:
        raise BadAddress(f"address level {address.level} exceeds depth {model.depth}")
    return address


def cube_corner(model: CantorModel, address: Union[CubeAddress, Sequence[int]]) -> Tuple[Fraction, ...]:
    address = _address(model, address)
    return model.to_point(model.corner_fixed(address.selectors))


def enumerate_cubes(model: CantorModel, n: int) -> List[Tuple[CubeAddress, Tuple[Fraction, ...]]]:
    if not 0 <= n <= model.depth:
        raise BadAddress(f"level {n} outside 0..{model.depth}")
    corners = model.level_corners_fixed(n)
    return [
        (CubeAddress.from_index(model.d, n, i), model.to_point(c))
        for i, c in enumerate(corners)
    ]


def vertex_set(model: CantorModel, n: int) -> List[Tuple[int, ...]]:
    """V_n on the model's fixed grid: every vertex of every level-n cube, first occurrence order."""
    offsets = model.vertex_offsets_fixed(n)
    seen = {}
    for corner in model.level_corners_fixed(n):
        for offset in offsets:
            v = tuple(c + o for c, o in zip(corner, offset))
            seen.setdefault(v, None)
    return list(seen)


def corner_symmetry(model: CantorModel, x: PointLike, mask: int) -> Tuple[Fraction, ...]:
    point = tuple(_as_fraction(v) for v in x)
    return tuple(1 - v if (mask >> j) & 1 else v for j, v in enumerate(point))


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return to_fraction(mpf(value))


# ---------- measure ----------
def _scaled(model: CantorModel, x: PointLike, r) -> Tuple[Tuple[int, ...], int, int]:
    point = [_as_fraction(v) for v in x]
    radius = _as_fraction(r)
    base = 1 << model.scale_bits
    denominator = lcm(base, radius.denominator, *(v.denominator for v in point))
    factor = denominator // base
    return (
        tuple(int(v * denominator) for v in point),
        int(radius * denominator),
        factor,
    )


def mu_ball(model: CantorModel, x: PointLike, r, level: Optional[int] = None) -> MassEnclosure:
    """
    Enclose mu(B_r(x)) by counting level-`level` cubes: cubes strictly inside the
    open ball count towards lo, cubes meeting its boundary widen hi.
    """
    level = model.depth if level is None else level
    if not 0 <= level <= model.depth:
        raise DepthExceeded(f"resolution level {level} outside 0..{model.depth}", {"level": level})
    if len(x) != model.d:
        raise BadAddress(f"point has dimension {len(x)}, model has {model.d}")

    X, R, factor = _scaled(model, x, r)
    if R <= 0:
        raise BadAddress("radius must be positive")
    R2 = R * R
    sides = [s * factor for s in model.fixed_scales]
    steps = [s * factor for s in model.fixed_steps]
    d = model.d

    inside_mass = Fraction(0)
    inside_cubes = 0
    first_inside = None
    straddling = 0
    frontier = [(0,) * d]
    for k in range(level + 1):
        side = sides[k]
        expand = []
        for corner in frontier:
            near = far = 0
            for xi, ci in zip(X, corner):
                lo_gap = xi - ci
                hi_gap = ci + side - xi
                if lo_gap < 0:
                    near += lo_gap * lo_gap
                elif hi_gap < 0:
                    near += hi_gap * hi_gap
                far += max(lo_gap * lo_gap, hi_gap * hi_gap)
            if far < R2:
                inside_cubes += 1
                inside_mass += Fraction(1, 1 << (d * k))
                if first_inside is None:
                    first_inside = k
            elif near < R2:
                expand.append(corner)
        if k == level:
            straddling = len(expand)
            break
        step = steps[k + 1]
        offsets = [tuple(step if (c >> j) & 1 else 0 for j in range(d)) for c in range(1 << d)]
        frontier = [tuple(a + b for a, b in zip(corner, o)) for corner in expand for o in offsets]
        if not frontier:
            break

    return MassEnclosure(
        lo=inside_mass,
        hi=inside_mass + Fraction(straddling, 1 << (d * level)),
        resolution_level=level,
        inside_cubes=inside_cubes,
        straddling_cubes=straddling,
        first_inside_level=first_inside,
    )


# ---------- density ----------
def sample_density_points(model: CantorModel, count: int, seed: int) -> List[Tuple[Tuple[int, ...], mpf]]:
    """Uniform depth-N addresses with log-uniform radii in [2d a_(N-2), 1)."""
    if model.depth < 2:
        raise DepthExceeded("density sampling needs depth >= 2", {"depth": model.depth})
    rng = np.random.default_rng(seed)
    selectors = rng.integers(0, 1 << model.d, size=(count, model.depth))
    uniforms = rng.random(count)
    r_min = 2 * model.d * model.a(model.depth - 2)
    return [
        (tuple(int(c) for c in row), r_min ** (1 - mpf(float(u))))
        for row, u in zip(selectors, uniforms)
    ]


def density_sample(model: CantorModel, index: int, selectors: Sequence[int], r: mpf) -> DensitySample:
    address = _address(model, selectors)
    x = cube_corner(model, address)
    mu = mu_ball(model, x, r)
    n = mu.first_inside_level
    if n is None or n > model.depth - 2:
        raise LevelUnresolved(
            f"no level <= {model.depth - 2} cube lies inside B_r(x)",
            {"index": index, "r": str(r), "level": n},
        )

    eps = cfg.eps_cont
    d = model.d
    h_an = model.h.eval(model.a(n))
    lower = h_an
    upper = mpmath.ldexp(h_an, d + 1)
    r_exact = to_fraction(r)
    a_n = to_fraction(model.a(n))
    scale_upper_ok = True
    if n > 0:
        # the level-(n-1) cube holding x is not strictly inside, so r <= sqrt(d) a_(n-1)
        a_prev = to_fraction(model.a(n - 1))
        scale_upper_ok = r_exact * r_exact <= d * a_prev * a_prev

    h_r = model.h.eval(r)
    mu_lo, mu_hi = fraction_to_mpf(mu.lo), fraction_to_mpf(mu.hi)
    return DensitySample(
        index=index,
        address=address.selectors,
        x=x,
        r=r,
        n=n,
        mu=mu,
        lower_bound=lower,
        upper_bound=upper,
        mass_lower_ok=to_fraction(lower * (1 - eps)) <= mu.lo,
        mass_upper_ok=mu.hi <= to_fraction(upper * (1 + eps)),
        scale_lower_ok=a_n <= 2 * r_exact,
        scale_upper_ok=scale_upper_ok,
        density_ratio=max(mu_hi / h_r, h_r / mu_lo),
    )


def _density_task(task) -> DensitySample:
    return density_sample(*task)


def density_report(
    model: CantorModel,
    samples: Optional[Sequence[Tuple[Sequence[int], mpf]]] = None,
    count: int = 1000,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> DensityReport:
    if samples is None:
        samples = sample_density_points(model, count, seed)
    tasks = [(model, i, selectors, r) for i, (selectors, r) in enumerate(samples)]
    results = parallel_map(_density_task, tasks, workers=workers, desc="density")

    report = DensityReport(
        d=model.d,
        depth=model.depth,
        samples=results,
        density_constant=max((s.density_ratio for s in results), default=mpf(1)),
        seed=seed,
    )
    logger.info(
        f"Density report: {len(results) - report.failures}/{len(results)} samples pass, "
        f"C ~ {mpmath.nstr(report.density_constant, 8)}"
    )
    return report


# ---------- covers ----------
def _cover_task(task) -> Fraction:
    model, vertex, radius = task
    return mu_ball(model, model.to_point(vertex), radius).hi


def gdelta_cover(model: CantorModel, k: int, n_max: int, workers: Optional[int] = None) -> CoverReport:
    """Balls B_(a_(2n+k))(v), v in V_n, n <= n_max, with exact and per-ball mass bounds."""
    if 2 * n_max + k > model.depth:
        raise DepthExceeded(
            f"cover U_{k} up to n={n_max} needs depth {2 * n_max + k}, model has {model.depth}",
            {"k": k, "n_max": n_max, "depth": model.depth},
        )
    d = model.d
    tasks, first_level = [], []
    seen: Dict[Tuple[int, ...], int] = {}
    level_sizes = []
    for n in range(n_max + 1):
        vertices = vertex_set(model, n)
        level_sizes.append(len(vertices))
        radius = model.a(2 * n + k)
        for v in vertices:
            tasks.append((model, v, radius))
            first_level.append(seen.setdefault(v, n) == n)

    masses = parallel_map(_cover_task, tasks, workers=workers, desc=f"cover k={k}")
    mass_all = sum(masses, Fraction(0))
    mass_dedup = sum((m for m, first in zip(masses, first_level) if first), Fraction(0))
    bound_sum = mpmath.fsum(
        size * mpmath.ldexp(model.h.eval(model.a(2 * n + k)), d + 1)
        for n, size in enumerate(level_sizes)
    )
    closed_form = mpmath.ldexp(mpf(1), 2 * d + 1) / (2 ** d - 1) * mpmath.ldexp(1, -d * k)

    logger.debug(f"Cover U_{k}: {len(tasks)} balls, {sum(first_level)} after dedup")
    return CoverReport(
        k=k,
        n_max=n_max,
        resolution_level=model.depth,
        ball_count=len(tasks),
        dedup_ball_count=sum(first_level),
        mass_upper_all=mass_all,
        mass_upper_dedup=mass_dedup,
        bound_sum=bound_sum,
        closed_form_bound=closed_form,
    )


def cover_sweep(model: CantorModel, ks: Sequence[int], n_max: int, workers: Optional[int] = None) -> List[CoverReport]:
    reports = []
    for k in ks:
        report = gdelta_cover(model, k, n_max, workers)
        if reports:
            ratio = report.bound_sum / reports[-1].bound_sum
            report = report.model_copy(update={"decay_ratio": ratio, "log2_decay": log2(ratio)})
        reports.append(report)
    return reports
