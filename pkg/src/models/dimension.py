# /src/models/dimension.py
"""
Dimension functions (gauges) and their closed forms.

Each variant is a frozen pydantic model tagged by ``kind`` so specs round-trip
through YAML/JSON configs. Values are computed in the surrounding mpmath
precision; ``DimensionFunction.eval`` fixes that precision.
"""
import bisect
from typing import Annotated, List, Literal, Optional, Tuple, Union

import mpmath
from mpmath import mpf
from pydantic import Field, field_validator

from src.config import get_config
from src.models.base import FrozenModel
from src.utils.exceptions import OutOfDomain
from src.utils.numerics import Exponent, Real, fraction_to_mpf, rational_power

# (t, limit from below, value from above)
Breakpoint = Tuple[mpf, mpf, mpf]


def _check_decreasing(values: List[mpf], name: str) -> List[mpf]:
    if not values:
        raise ValueError(f"{name} must not be empty")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly decreasing")
    if values[-1] <= 0:
        raise ValueError(f"{name} must be positive")
    return values


def _check_positive_exponent(s):
    if s <= 0:
        raise ValueError(f"exponent {s} must be positive")
    return s


class PowerSpec(FrozenModel):
    kind: Literal["power"] = "power"
    s: Exponent

    @field_validator("s")
    @classmethod
    def check_positive(cls, s):
        return _check_positive_exponent(s)

    def value(self, t: mpf) -> mpf:
        return rational_power(t, self.s)

    def breakpoints(self) -> List[Breakpoint]:
        return []


class PowerLogSpec(FrozenModel):
    kind: Literal["power_log"] = "power_log"
    s: Exponent
    a: Exponent

    @field_validator("s")
    @classmethod
    def check_positive(cls, s):
        return _check_positive_exponent(s)

    def value(self, t: mpf) -> mpf:
        base = rational_power(t, self.s)
        if t >= 1:
            return base
        return base * rational_power(1 - mpmath.log(t), self.a)

    def breakpoints(self) -> List[Breakpoint]:
        return []


class PiecewiseMaxFSpec(FrozenModel):
    """
    max(2^n h(t), 2^(n+1) h(delta_(n+1))) on [delta_(n+1), delta_n),
    h(t) from delta_0 on and 2^K h(t) below the last knot delta_K.
    """
    kind: Literal["piecewise_max_f"] = "piecewise_max_f"
    h: "DimensionSpec"
    deltas: List[Real]

    @field_validator("deltas")
    @classmethod
    def check_decreasing(cls, values):
        return _check_decreasing(values, "deltas")

    def piece_value(self, n: int, t: mpf) -> mpf:
        last = len(self.deltas) - 1
        if n < 0:
            return self.h.value(t)
        if n >= last:
            return mpmath.ldexp(self.h.value(t), last)
        return max(
            mpmath.ldexp(self.h.value(t), n),
            mpmath.ldexp(self.h.value(self.deltas[n + 1]), n + 1),
        )

    def locate(self, t: mpf) -> int:
        last = len(self.deltas) - 1
        below_or_at = bisect.bisect_right(self.deltas[::-1], t)
        return last - below_or_at

    def value(self, t: mpf) -> mpf:
        return self.piece_value(self.locate(t), t)

    def breakpoints(self) -> List[Breakpoint]:
        return [
            (delta, self.piece_value(n, delta), self.piece_value(n - 1, delta))
            for n, delta in enumerate(self.deltas)
        ]


class _ExponentialInterpolation(FrozenModel):
    """
    2^(u - j) h(t) on (k_j, k_(j-1)] with u = (t - k_j) / (k_(j-1) - k_j),
    h(t) above k_0. Below the last knot the knots continue geometrically by
    ``tail_ratio``; without a tail the gauge is 2^-J h(t) there.
    """
    h: "DimensionSpec"
    tail_ratio: Optional[Exponent] = Field(default_factory=lambda: get_config().tail_ratio)

    @field_validator("tail_ratio")
    @classmethod
    def check_tail_ratio(cls, q):
        if q is not None and not 0 < q < 1:
            raise ValueError("tail_ratio must lie in (0, 1)")
        return q

    @property
    def knots(self) -> List[mpf]:
        raise NotImplementedError

    def knot(self, j: int) -> mpf:
        knots = self.knots
        last = len(knots) - 1
        if j <= last:
            return knots[j]
        return knots[-1] * fraction_to_mpf(self.tail_ratio ** (j - last))

    def locate(self, t: mpf) -> Optional[int]:
        """Index j of the piece (k_j, k_(j-1)] holding t; 0 above k_0, None in a constant tail."""
        knots = self.knots
        last = len(knots) - 1
        if t > knots[0]:
            return 0
        if t > knots[-1]:
            return last - bisect.bisect_left(knots[::-1], t) + 1
        if self.tail_ratio is None:
            return None
        q = fraction_to_mpf(self.tail_ratio)
        steps = max(1, int(mpmath.ceil(mpmath.log(t / knots[-1]) / mpmath.log(q))))
        while self.knot(last + steps) >= t:
            steps += 1
        while steps > 1 and self.knot(last + steps - 1) < t:
            steps -= 1
        return last + steps

    def piece_value(self, j: Optional[int], t: mpf) -> mpf:
        if j is None:
            return mpmath.ldexp(self.h.value(t), -(len(self.knots) - 1))
        if j == 0:
            return self.h.value(t)
        upper, lower = self.knot(j - 1), self.knot(j)
        u = (t - lower) / (upper - lower)
        return mpmath.ldexp(mpmath.power(2, u), -j) * self.h.value(t)

    def value(self, t: mpf) -> mpf:
        return self.piece_value(self.locate(t), t)

    def breakpoints(self) -> List[Breakpoint]:
        last = len(self.knots) - 1
        points = []
        for j, k in enumerate(self.knots):
            below = j + 1 if (j < last or self.tail_ratio is not None) else None
            points.append((k, self.piece_value(below, k), self.piece_value(j, k)))
        return points


class PiecewiseExpGSpec(_ExponentialInterpolation):
    kind: Literal["piecewise_exp_g"] = "piecewise_exp_g"
    ts: List[Real]

    @field_validator("ts")
    @classmethod
    def check_decreasing(cls, values):
        return _check_decreasing(values, "ts")

    @property
    def knots(self) -> List[mpf]:
        return self.ts


class PiecewiseExpInterpSpec(_ExponentialInterpolation):
    kind: Literal["piecewise_exp_interp"] = "piecewise_exp_interp"
    scales: List[Real]

    @field_validator("scales")
    @classmethod
    def check_decreasing(cls, values):
        return _check_decreasing(values, "scales")

    @property
    def knots(self) -> List[mpf]:
        return self.scales


class OscillatingBlocksSpec(FrozenModel):
    """
    Touches t^hi at the even boundaries b_0, b_2, ..., decays with exponent lo on
    [b_(2i+1), b_(2i)] and climbs back log-linearly to t^hi on [b_(2i+2), b_(2i+1)].
    """
    kind: Literal["oscillating_blocks"] = "oscillating_blocks"
    lo: Exponent
    hi: Exponent
    boundaries: List[Real]

    @field_validator("lo", "hi")
    @classmethod
    def check_positive(cls, s):
        return _check_positive_exponent(s)

    @field_validator("boundaries")
    @classmethod
    def check_decreasing(cls, values):
        return _check_decreasing(values, "boundaries")

    def anchor(self, i: int) -> mpf:
        b = self.boundaries
        if i % 2 == 0:
            return rational_power(b[i], self.hi)
        return rational_power(b[i - 1], self.hi) * rational_power(b[i] / b[i - 1], self.lo)

    def segment_value(self, i: int, t: mpf) -> mpf:
        b = self.boundaries
        last = len(b) - 1
        if i < 0:
            return rational_power(t, self.hi)
        if i >= last:
            return self.anchor(last) / rational_power(b[last], self.hi) * rational_power(t, self.hi)
        if i % 2 == 0:
            return self.anchor(i) * rational_power(t / b[i], self.lo)
        top, bottom = self.anchor(i), self.anchor(i + 1)
        slope = mpmath.log(top / bottom) / mpmath.log(b[i] / b[i + 1])
        return bottom * mpmath.power(t / b[i + 1], slope)

    def value(self, t: mpf) -> mpf:
        last = len(self.boundaries) - 1
        return self.segment_value(last - bisect.bisect_right(self.boundaries[::-1], t), t)

    def breakpoints(self) -> List[Breakpoint]:
        return [
            (b, self.segment_value(i, b), self.segment_value(i - 1, b))
            for i, b in enumerate(self.boundaries)
        ]


DimensionSpec = Annotated[
    Union[
        PowerSpec,
        PowerLogSpec,
        PiecewiseMaxFSpec,
        PiecewiseExpGSpec,
        PiecewiseExpInterpSpec,
        OscillatingBlocksSpec,
    ],
    Field(discriminator="kind"),
]

PIECEWISE_KINDS = ("piecewise_max_f", "piecewise_exp_g", "piecewise_exp_interp", "oscillating_blocks")


class DimensionFunction(FrozenModel):
    spec: DimensionSpec
    precision: int = Field(default_factory=lambda: get_config().PRECISION)
    domain_hi: Optional[Real] = None
    label: str = ""

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def is_piecewise(self) -> bool:
        return self.spec.kind in PIECEWISE_KINDS

    def in_domain(self, t: mpf) -> bool:
        return t > 0 and (self.domain_hi is None or t <= self.domain_hi)

    def eval(self, t: mpf) -> mpf:
        if not self.in_domain(t):
            raise OutOfDomain(f"{t} is outside (0, {self.domain_hi or 'inf'}]", {"t": str(t)})
        with mpmath.workprec(self.precision):
            return self.spec.value(t)

    def __call__(self, t: mpf) -> mpf:
        return self.eval(t)

    def breakpoint_values(self) -> List[Breakpoint]:
        with mpmath.workprec(self.precision):
            return self.spec.breakpoints()


for _model in (PiecewiseMaxFSpec, PiecewiseExpGSpec, PiecewiseExpInterpSpec, DimensionFunction):
    _model.model_rebuild()
