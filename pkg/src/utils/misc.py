# /src/utils/misc.py
import hashlib
import json
from pathlib import Path
from time import time_ns
from typing import Any


def now_s() -> int:
    return int(time_ns() // 1_000_000_000)

def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

def sha256_payload(payload: Any) -> str:
    return sha256_text(canonical_json(payload))

def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()

def validate_output_dir(path: Path) -> Path:
    if not isinstance(path, Path):
        raise TypeError("output directory must be a pathlib.Path")
    if path.exists() and not path.is_dir():
        raise NotADirectoryError(f"Output path is not a directory: {path}")
    path.mkdir(parents=True, exist_ok=True)
    return path
