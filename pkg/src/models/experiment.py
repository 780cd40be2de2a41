# /src/models/experiment.py

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import get_config
from src.models.dimension import DimensionSpec
from src.models.sequences import CertifiedBounds, DiameterStream, FinitePointSet
from src.utils.misc import now_s
from src.utils.numerics import Exponent, Real

cfg = get_config()

Command = Literal[
    "scales",
    "density",
    "cover",
    "diverge",
    "lemma6",
    "construct-f",
    "construct-g",
    "construct-ginterp",
    "order",
    "optimize",
]

NEEDS_H = {"scales", "density", "cover", "diverge", "lemma6", "construct-f", "construct-g", "construct-ginterp", "order"}
NEEDS_G = {"diverge", "lemma6", "order", "optimize"}
NEEDS_SEED = {"density", "construct-f", "optimize"}


class ModelParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(1, ge=1)
    depth: int = Field(12, ge=0)
    tolerance_bits: int = Field(default_factory=lambda: cfg.SCALE_TOLERANCE_BITS, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True, validate_default=True)

    command: Command
    precision: int = Field(default_factory=lambda: cfg.PRECISION, ge=53)
    seed: Optional[int] = Field(None, ge=0, lt=1 << 64)
    out: Path = Path("runs")
    workers: int = Field(default_factory=lambda: cfg.WORKERS, ge=1)

    h: Optional[DimensionSpec] = None
    g: Optional[DimensionSpec] = None
    model: ModelParams = Field(default_factory=ModelParams)

    # density
    samples: int = Field(1000, ge=1)

    # cover
    ks: List[int] = Field(default_factory=lambda: list(range(2, 9)))
    n_max: int = Field(4, ge=0)

    # diverge / lemma6
    thresholds: List[Real] = Field(default_factory=lambda: ["1", "10", "100"])
    delta: Real = "1"
    stages: int = Field(2, ge=1)

    # order / membership
    grid_depth: int = Field(default_factory=lambda: cfg.GRID_DEPTH, ge=1)
    membership_d: Optional[int] = Field(None, ge=1)

    # construct-f
    deltas: Optional[List[Real]] = None
    instance: Optional[Annotated[Union[FinitePointSet, CertifiedBounds], Field(discriminator="kind")]] = None
    packings: int = Field(100, ge=0)

    # construct-g
    stream: DiameterStream = Field(default_factory=DiameterStream)
    J: int = Field(5, ge=1)

    # construct-ginterp
    scales: Optional[List[Real]] = None
    tail_ratio: Optional[Exponent] = Field(default_factory=lambda: cfg.tail_ratio)

    # optimize
    trials: int = Field(200, ge=1)
    candidates: int = Field(24, ge=1)
    radii: List[Real] = Field(default_factory=lambda: ["1/64", "1/32", "1/16", "1/8"])

    @model_validator(mode="after")
    def check_command_inputs(self):
        missing = []
        if self.command in NEEDS_H and self.h is None:
            missing.append("h")
        if self.command in NEEDS_G and self.g is None:
            missing.append("g")
        if self.command in NEEDS_SEED and self.seed is None:
            missing.append("seed")
        if self.command == "construct-f":
            if self.deltas is None:
                missing.append("deltas")
            if self.instance is None:
                missing.append("instance")
        if self.command == "construct-ginterp" and self.scales is None:
            missing.append("scales")
        if missing:
            raise ValueError(f"command '{self.command}' requires: {', '.join(missing)}")
        if self.command == "optimize" and self.candidates > cfg.BRUTE_FORCE_MAX:
            raise ValueError(f"optimize trials are limited to {cfg.BRUTE_FORCE_MAX} candidates")
        return self


class OutputEntry(BaseModel):
    name: str
    sha256: str
    rows: Optional[int] = None


class RunRecord(BaseModel):
    command: str
    config_hash: str
    artifact_version: str = cfg.ARTIFACT_VERSION
    precision: int
    seed: Optional[int] = None
    rng: str = "numpy.random.PCG64"
    started_at: int = Field(default_factory=now_s)
    finished_at: Optional[int] = None
    outputs: List[OutputEntry] = Field(default_factory=list)
    summary: Dict[str, bool] = Field(default_factory=dict)
    values: Dict[str, str] = Field(default_factory=dict)
    # plot-ready columns, written by emit_plotdata rather than into the record
    series: Dict[str, Dict[str, List[str]]] = Field(default_factory=dict, exclude=True)

    @property
    def passed(self) -> bool:
        return all(self.summary.values())
