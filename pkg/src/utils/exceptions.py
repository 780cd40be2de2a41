# /src/utils/exceptions.py
from typing import Any, Dict, Optional


class PackLabError(Exception):
    code: str = "PACKLAB_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


# Dimension functions
class BadSpec(PackLabError):
    code = "BAD_SPEC"

class NonMonotone(PackLabError):
    code = "NON_MONOTONE"

class OutOfDomain(PackLabError):
    code = "OUT_OF_DOMAIN"

class EmptyGrid(PackLabError):
    code = "EMPTY_GRID"


# Cantor model
class NoRoot(PackLabError):
    code = "NO_ROOT"

class SeparationFail(PackLabError):
    code = "SEPARATION_FAIL"

class NonIncreasing(PackLabError):
    code = "NON_INCREASING"

class BadAddress(PackLabError):
    code = "BAD_ADDRESS"

class LevelUnresolved(PackLabError):
    code = "LEVEL_UNRESOLVED"

class DepthExceeded(PackLabError):
    code = "DEPTH_EXCEEDED"


# Packings
class NotDisjoint(PackLabError):
    code = "NOT_DISJOINT"

class TooManyCandidates(PackLabError):
    code = "TOO_MANY_CANDIDATES"

class EmptyInput(PackLabError):
    code = "EMPTY_INPUT"

class StageFail(PackLabError):
    code = "STAGE_FAIL"

class BelowTarget(PackLabError):
    code = "BELOW_TARGET"


# Constructions
class InvalidSequence(PackLabError):
    code = "INVALID_SEQUENCE"

class SumTooSlow(PackLabError):
    code = "SUM_TOO_SLOW"

class BadSequence(PackLabError):
    code = "BAD_SEQUENCE"


# Experiments
class ConfigInvalid(PackLabError):
    code = "CONFIG_INVALID"
