# /src/models/packing.py
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple

from mpmath import mpf

from src.models.cantor import CantorModel, CubeAddress
from src.models.dimension import DimensionFunction
from src.utils.exceptions import BadSpec

Point = Tuple[Fraction, ...]


@dataclass(frozen=True)
class Ball:
    center: Point
    radius: Fraction

    def __post_init__(self):
        if self.radius <= 0:
            raise BadSpec(f"Ball radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> Fraction:
        return 2 * self.radius

    @property
    def dimension(self) -> int:
        return len(self.center)


class VertexBallSequence(Sequence):
    """
    Balls of one radius at the down-left vertices of every level-`level` cube of
    a model, generated on demand in lexicographic cube order.
    """

    def __init__(self, model: CantorModel, level: int, radius: Fraction):
        self.model = model
        self.level = level
        self.radius = radius

    def __len__(self) -> int:
        return self.model.cube_count(self.level)

    def address(self, i: int) -> CubeAddress:
        return CubeAddress.from_index(self.model.d, self.level, i)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        corner = self.model.corner_fixed(self.address(i).selectors)
        return Ball(center=self.model.to_point(corner), radius=self.radius)


class WitnessSequence(Sequence):
    """Depth-N addresses whose corner is the matching ball center."""

    def __init__(self, balls: VertexBallSequence):
        self.balls = balls

    def __len__(self) -> int:
        return len(self.balls)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.balls.address(i).padded(self.balls.model.depth).selectors


@dataclass(frozen=True)
class Packing:
    balls: Sequence
    delta: Optional[Fraction] = None
    witnesses: Optional[Sequence] = None
    stages: Tuple[int, ...] = ()
    # exact lower bound on center distances, when known structurally
    separation: Optional[Fraction] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.balls)

    @property
    def uniform_radius(self) -> Optional[Fraction]:
        if isinstance(self.balls, VertexBallSequence):
            return self.balls.radius
        return None

    @property
    def is_lazy(self) -> bool:
        return isinstance(self.balls, VertexBallSequence)


@dataclass(frozen=True)
class PremeasureCertificate:
    packing: Packing
    gauge: DimensionFunction
    weight: mpf
    bound_kind: str = "LOWER"
    level: Optional[int] = None
    threshold: Optional[mpf] = None
    verified: bool = False
    indices: Tuple[int, ...] = ()
