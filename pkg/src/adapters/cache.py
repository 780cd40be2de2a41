# /src/adapters/cache.py
import json
from pathlib import Path
from typing import Optional

from loguru import logger
from pydantic import ValidationError

from src.config import get_config
from src.models.cantor import ScaleSequence
from src.utils.misc import sha256_payload, validate_output_dir
from src.utils.numerics import to_hex

cfg = get_config()


def scale_key(h_payload: dict, d: int, depth: int, tolerance_bits: int, precision: int) -> str:
    return sha256_payload({
        "h": h_payload,
        "d": d,
        "depth": depth,
        "tolerance_bits": tolerance_bits,
        "precision": precision,
    })


class ScaleCache:
    """
    Solved scale sequences on disk, one JSON file per key. Reals are stored as
    exact hexadecimal floats so a cache hit is bit-identical to a fresh solve.
    """

    def __init__(self, root: Optional[Path] = None) -> None:
        self.root: Path = root if root is not None else cfg.cache_dir

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> Optional[ScaleSequence]:
        path = self.path(key)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return ScaleSequence.model_validate(payload)
        except (json.JSONDecodeError, ValidationError) as exc:
            logger.warning(f"Ignoring corrupt scale cache entry {path.name}: {exc}")
            return None

    def put(self, key: str, scales: ScaleSequence) -> Path:
        validate_output_dir(self.root)
        payload = {
            "d": scales.d,
            "depth": scales.depth,
            "values": [to_hex(a) for a in scales.values],
            "tolerance": to_hex(scales.tolerance),
            "max_residual": to_hex(scales.max_residual),
            "evaluations": scales.evaluations,
            "separation_ok": scales.separation_ok,
            "dyadic_bound_ok": scales.dyadic_bound_ok,
            "h_fingerprint": scales.h_fingerprint,
        }
        path = self.path(key)
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return path
