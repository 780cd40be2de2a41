# /src/models/reports.py

from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from pydantic import Field

from src.models.base import FrozenModel
from src.utils.numerics import Exponent, Real, to_fraction

Rational = Exponent


# ---------- dimension functions ----------
class InvariantReport(FrozenModel):
    grid_size: int
    positive: bool
    monotone: bool
    continuous: bool
    decays: bool
    max_continuity_error: Real
    violations: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.positive and self.monotone and self.continuous and self.decays


class DoublingReport(FrozenModel):
    d: int
    c0_estimate: Real
    c1_estimate: Real
    grid: List[Real]
    passed: bool
    c0_unbounded_trend: bool = False
    c1_unbounded_trend: bool = False

    @property
    def bounded(self) -> bool:
        return self.passed and not (self.c0_unbounded_trend or self.c1_unbounded_trend)


class OrderVerdict(str, Enum):
    SMALLER = "SMALLER"
    LARGER = "LARGER"
    COMPARABLE = "COMPARABLE"
    LIMINF_ZERO_ONLY = "LIMINF_ZERO_ONLY"
    INCONCLUSIVE = "INCONCLUSIVE"


class OrderClassification(FrozenModel):
    verdict: OrderVerdict
    ratio_trace: List[Tuple[Real, Real]]
    low_count: int = 0
    high_count: int = 0


# ---------- cantor ----------
class MassEnclosure(FrozenModel):
    lo: Rational
    hi: Rational
    resolution_level: int
    inside_cubes: int = 0
    straddling_cubes: int = 0
    first_inside_level: Optional[int] = None

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, value: Fraction) -> bool:
        return self.lo <= value <= self.hi


class DensitySample(FrozenModel):
    index: int
    address: Tuple[int, ...]
    x: Tuple[Rational, ...]
    r: Real
    n: int
    mu: MassEnclosure
    lower_bound: Real
    upper_bound: Real
    mass_lower_ok: bool
    mass_upper_ok: bool
    scale_lower_ok: bool
    scale_upper_ok: bool
    density_ratio: Real

    @property
    def passed(self) -> bool:
        return self.mass_lower_ok and self.mass_upper_ok and self.scale_lower_ok and self.scale_upper_ok


class DensityReport(FrozenModel):
    d: int
    depth: int
    samples: List[DensitySample]
    density_constant: Real
    seed: Optional[int] = None

    @property
    def failures(self) -> int:
        return sum(not s.passed for s in self.samples)

    @property
    def passed(self) -> bool:
        return self.failures == 0


class CoverReport(FrozenModel):
    k: int
    n_max: int
    resolution_level: int
    ball_count: int
    dedup_ball_count: int
    mass_upper_all: Rational
    mass_upper_dedup: Rational
    bound_sum: Real
    closed_form_bound: Real
    decay_ratio: Optional[Real] = None
    log2_decay: Optional[Real] = None

    @property
    def dedup_within_all(self) -> bool:
        return self.mass_upper_dedup <= self.mass_upper_all

    @property
    def within_bound(self) -> bool:
        return self.mass_upper_dedup <= to_fraction(self.bound_sum)

    @property
    def passed(self) -> bool:
        return self.dedup_within_all and self.within_bound


# ---------- packings ----------
class PackingVerification(FrozenModel):
    ball_count: int
    method: str
    disjoint: bool
    within_delta: bool
    # None when no model was given to check the witnesses against
    witnessed: Optional[bool]
    witness_sample: bool = False
    violating_pair: Optional[Tuple[int, int]] = None
    min_gap: Optional[Rational] = None

    @property
    def passed(self) -> bool:
        return self.disjoint and self.within_delta and self.witnessed is not False


# ---------- constructions ----------
class Check(FrozenModel):
    name: str
    passed: bool
    detail: str = ""


class DeltaRow(FrozenModel):
    n: int
    delta: Real
    h_delta: Real
    premeasure_bound: Real
    target: Real
    decreasing_ok: bool
    bound_ok: bool
    ratio_ok: bool

    @property
    def passed(self) -> bool:
        return self.decreasing_ok and self.bound_ok and self.ratio_ok


class DeltaValidationReport(FrozenModel):
    rows: List[DeltaRow]
    first_failure: Optional[int] = None
    reason: str = ""
    shift: int = 0

    @property
    def valid(self) -> bool:
        return self.first_failure is None


class BandSums(FrozenModel):
    weighted_h_sum: Real
    f_sum: Real
    bands: Dict[int, int] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.weighted_h_sum <= 2 and self.f_sum <= 4


class ConstructionReport(FrozenModel):
    name: str
    checks: List[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]
