# /src/config.py
import sys
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import ClassVar, Literal, Optional

import mpmath
from loguru import logger
from platformdirs import user_cache_dir
from pydantic_settings import BaseSettings, SettingsConfigDict


class PackLabConfig(BaseSettings):
    # Generic
    APP_AUTHOR: ClassVar[str] = "packlab"
    APP_NAME: ClassVar[str] = "packlab"
    ARTIFACT_VERSION: str = "1.0.0"

    # Arithmetic
    PRECISION: int = 128
    EPS_CONT_BITS: int = 96
    EPS_GEOM_BITS: int = 96
    DECIMAL_DIGITS: int = 45

    # Dimension functions
    GRID_DEPTH: int = 256
    ORDER_LOW_BITS: int = 20
    ORDER_HIGH_BITS: int = 4
    ORDER_WITNESSES: int = 3
    ZERO_THRESHOLD_BITS: int = 4
    TAIL_RATIO: str = "1/2"

    # Cantor model
    SCALE_TOLERANCE_BITS: int = 100
    MAX_HALVINGS: int = 4096

    # Packings and constructions
    BRUTE_FORCE_MAX: int = 24
    STREAM_BUDGET: int = 10_000_000
    T_RULE_BITS: int = 8

    # Runtime
    WORKERS: int = 1
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    PACKLAB_CACHE: Optional[Path] = None

    # pydantic-settings v2 main settings config
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    @property
    def cache_dir(self) -> Path:
        if self.PACKLAB_CACHE is not None:
            return self.PACKLAB_CACHE
        return Path(user_cache_dir(self.APP_NAME, self.APP_AUTHOR)) / "scales"

    @property
    def tail_ratio(self) -> Fraction:
        return Fraction(self.TAIL_RATIO)

    @property
    def eps_cont(self) -> mpmath.mpf:
        return mpmath.ldexp(1, -self.EPS_CONT_BITS)

    @property
    def eps_geom(self) -> mpmath.mpf:
        return mpmath.ldexp(1, -self.EPS_GEOM_BITS)


@lru_cache()
def get_config() -> PackLabConfig:
    return PackLabConfig()


def configure_precision(bits: int) -> None:
    """Set the working mpmath precision (significand bits) for this process."""
    mpmath.mp.prec = bits


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(
        sys.stdout,
        filter=lambda rec: rec["level"].name == "CRITICAL",
        colorize=True,
        format="<green>{time:HH:mm:ss}</green> | <red>{level: <8}</red> | <white>{message}</white>",
    )
    logger.add(
        sys.stdout,
        level=level,
        filter=lambda rec: rec["level"].name != "CRITICAL",
        colorize=True,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{message}</cyan>",
    )


configure_precision(get_config().PRECISION)
configure_logging(get_config().LOG_LEVEL)
