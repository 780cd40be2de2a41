# /src/models/__init__.py

from .base import FrozenModel

from .dimension import (
    DimensionFunction,
    OscillatingBlocksSpec,
    PiecewiseExpGSpec,
    PiecewiseExpInterpSpec,
    PiecewiseMaxFSpec,
    PowerLogSpec,
    PowerSpec,
)
from .cantor import CantorModel, CubeAddress, ScaleSequence
from .packing import Ball, Packing, PremeasureCertificate
from .sequences import CertifiedBounds, DeltaSequence, DiameterStream, FinitePointSet, TSequence

from .reports import (
    BandSums,
    Check,
    ConstructionReport,
    CoverReport,
    DeltaValidationReport,
    DensityReport,
    DensitySample,
    DoublingReport,
    InvariantReport,
    MassEnclosure,
    OrderClassification,
    OrderVerdict,
    PackingVerification,
)

from .experiment import ExperimentConfig, ModelParams, RunRecord
