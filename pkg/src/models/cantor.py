# /src/models/cantor.py
"""
Corner Cantor sets at finite depth.

Level-n cubes have side a_n and are addressed by n selectors; bit j of a
selector picks the low (0) or high (1) corner along coordinate j. Geometry is
kept on the integer grid 2^-B where B covers every solved scale, so corners and
vertices are exact.
"""
from fractions import Fraction
from functools import cached_property
from typing import List, Optional, Tuple

from mpmath import mpf
from pydantic import Field, model_validator

from src.models.base import FrozenModel
from src.models.dimension import DimensionFunction
from src.utils.numerics import Real, fixed_bits, to_fixed


class ScaleSequence(FrozenModel):
    d: int = Field(ge=1)
    depth: int = Field(ge=0)
    values: List[Real]
    tolerance: Real
    max_residual: Real
    evaluations: int = 0
    separation_ok: bool
    dyadic_bound_ok: bool
    h_fingerprint: str = ""

    @model_validator(mode="after")
    def check_length(self):
        if len(self.values) != self.depth + 1:
            raise ValueError(f"expected {self.depth + 1} scales, got {len(self.values)}")
        return self

    @property
    def certified(self) -> bool:
        return self.separation_ok and self.dyadic_bound_ok

    def a(self, n: int) -> mpf:
        return self.values[n]


class CubeAddress(FrozenModel):
    d: int = Field(ge=1)
    selectors: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def check_selectors(self):
        for c in self.selectors:
            if not 0 <= c < (1 << self.d):
                raise ValueError(f"selector {c} is not a {self.d}-bit corner choice")
        return self

    @property
    def level(self) -> int:
        return len(self.selectors)

    @property
    def index(self) -> int:
        value = 0
        for c in self.selectors:
            value = (value << self.d) | c
        return value

    @classmethod
    def from_index(cls, d: int, level: int, index: int) -> "CubeAddress":
        mask = (1 << d) - 1
        selectors = [(index >> (d * (level - 1 - k))) & mask for k in range(level)]
        return cls(d=d, selectors=tuple(selectors))

    def child(self, c: int) -> "CubeAddress":
        return CubeAddress(d=self.d, selectors=self.selectors + (c,))

    def padded(self, depth: int) -> "CubeAddress":
        return CubeAddress(d=self.d, selectors=self.selectors + (0,) * (depth - self.level))


class CantorModel(FrozenModel):
    h: DimensionFunction
    scales: ScaleSequence

    @property
    def d(self) -> int:
        return self.scales.d

    @property
    def depth(self) -> int:
        return self.scales.depth

    def a(self, n: int) -> mpf:
        return self.scales.values[n]

    def cube_count(self, n: int) -> int:
        return 1 << (self.d * n)

    def mass(self, n: int) -> Fraction:
        return Fraction(1, self.cube_count(n))

    @cached_property
    def scale_bits(self) -> int:
        return max(fixed_bits(a) for a in self.scales.values)

    @cached_property
    def fixed_scales(self) -> List[int]:
        return [to_fixed(a, self.scale_bits) for a in self.scales.values]

    @cached_property
    def fixed_steps(self) -> List[int]:
        """Offset a_(k-1) - a_k added along a coordinate whose level-k bit is set."""
        A = self.fixed_scales
        return [0] + [A[k - 1] - A[k] for k in range(1, len(A))]

    def to_point(self, fixed: Tuple[int, ...]) -> Tuple[Fraction, ...]:
        denominator = 1 << self.scale_bits
        return tuple(Fraction(v, denominator) for v in fixed)

    def corner_fixed(self, selectors: Tuple[int, ...]) -> Tuple[int, ...]:
        steps = self.fixed_steps
        coords = [0] * self.d
        for k, c in enumerate(selectors, start=1):
            for j in range(self.d):
                if (c >> j) & 1:
                    coords[j] += steps[k]
        return tuple(coords)

    def level_corners_fixed(self, n: int, prefix: Tuple[int, ...] = ()) -> List[Tuple[int, ...]]:
        corners = [self.corner_fixed(prefix)]
        steps = self.fixed_steps
        for k in range(len(prefix) + 1, n + 1):
            offsets = [
                tuple(steps[k] if (c >> j) & 1 else 0 for j in range(self.d))
                for c in range(1 << self.d)
            ]
            corners = [
                tuple(x + o for x, o in zip(corner, offset))
                for corner in corners
                for offset in offsets
            ]
        return corners

    def vertex_offsets_fixed(self, n: int) -> List[Tuple[int, ...]]:
        side = self.fixed_scales[n]
        return [
            tuple(side if (c >> j) & 1 else 0 for j in range(self.d))
            for c in range(1 << self.d)
        ]

    def separation_fixed(self, level: int) -> Optional[int]:
        """
        Exact lower bound on the distance between distinct level-`level` corners:
        corners first differing at level k are a_(k-1) - 2 a_k + a_level apart
        along that coordinate.
        """
        if level == 0:
            return None
        A = self.fixed_scales
        return min(A[k - 1] - 2 * A[k] + A[level] for k in range(1, level + 1))
