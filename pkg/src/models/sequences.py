# /src/models/sequences.py
from typing import Iterator, List, Literal, Optional

from mpmath import mpf
from pydantic import Field, field_validator, model_validator

from src.config import get_config
from src.models.base import FrozenModel
from src.utils.numerics import Exponent, Real, rational_power


class DeltaSequence(FrozenModel):
    values: List[Real]
    premeasure_bounds: Optional[List[Real]] = None

    @field_validator("values")
    @classmethod
    def check_positive(cls, values):
        if not values:
            raise ValueError("a delta sequence needs at least one value")
        if any(v <= 0 for v in values):
            raise ValueError("delta values must be positive")
        return values

    def shifted(self, s: int) -> "DeltaSequence":
        bounds = self.premeasure_bounds[s:] if self.premeasure_bounds is not None else None
        return DeltaSequence(values=self.values[s:], premeasure_bounds=bounds)


class FinitePointSet(FrozenModel):
    """A finite target set; any delta-packing has at most len(points) balls."""
    kind: Literal["points"] = "points"
    points: List[List[Real]]

    @property
    def size(self) -> int:
        return len(self.points)


class CertifiedBounds(FrozenModel):
    kind: Literal["bounds"] = "bounds"
    bounds: List[Real]


class DiameterStream(FrozenModel):
    """
    Lazy nonincreasing diameters |B_1|, |B_2|, ...: 1/i (harmonic), i^-p (power)
    or an explicit finite list.
    """
    kind: Literal["harmonic", "power", "explicit"] = "harmonic"
    exponent: Optional[Exponent] = None
    values: Optional[List[Real]] = None
    budget: int = Field(default_factory=lambda: get_config().STREAM_BUDGET)

    @model_validator(mode="after")
    def check_parameters(self):
        if self.kind == "power" and (self.exponent is None or self.exponent <= 0):
            raise ValueError("a power stream needs a positive exponent")
        if self.kind == "explicit":
            if not self.values:
                raise ValueError("an explicit stream needs values")
            if any(b > a for a, b in zip(self.values, self.values[1:])):
                raise ValueError("explicit diameters must be nonincreasing")
        return self

    def __iter__(self) -> Iterator[mpf]:
        if self.kind == "explicit":
            yield from self.values[: self.budget]
            return
        for i in range(1, self.budget + 1):
            if self.kind == "harmonic":
                yield mpf(1) / i
            else:
                yield 1 / rational_power(mpf(i), self.exponent)

    def prefix(self, count: int) -> List[mpf]:
        out = []
        for i, value in enumerate(self):
            if i >= count:
                break
            out.append(value)
        return out


class TSequence(FrozenModel):
    """N_j, t_j (t_0 is the upper anchor) and the certified prefix sums."""
    N: List[int]
    t: List[Real]
    prefix_min: List[Real]
    h_prefix_sums: List[Real]
    g_prefix_sums: List[Real] = Field(default_factory=list)
    stream: DiameterStream

    @property
    def stages(self) -> int:
        return len(self.N)
