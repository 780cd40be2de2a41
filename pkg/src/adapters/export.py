# /src/adapters/export.py
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import mpmath
from mpmath import mpf
from pandas import DataFrame

from src.models.dimension import DimensionFunction
from src.models.packing import Packing, PremeasureCertificate
from src.models.reports import PackingVerification
from src.utils.numerics import decimal_str, fixed_to_hex, fraction_to_mpf, to_hex


def fraction_hex(q: Fraction) -> str:
    """Exact hex form of a dyadic rational; other rationals stay as p/q."""
    den = q.denominator
    if den & (den - 1) == 0:
        return fixed_to_hex(q.numerator, den.bit_length() - 1)
    return str(q)


def _cell(value: Any) -> Any:
    if isinstance(value, mpf):
        return decimal_str(value)
    if isinstance(value, Fraction):
        return decimal_str(value)
    return value


def _hex(value: Any) -> Optional[str]:
    if isinstance(value, mpf):
        return to_hex(value)
    if isinstance(value, Fraction):
        return fraction_hex(value)
    return None


def expand_row(row: Dict[str, Any]) -> Dict[str, Any]:
    """Decimal strings for reals, plus a `<column>_hex` twin holding the exact value."""
    out = {}
    for key, value in row.items():
        out[key] = _cell(value)
        exact = _hex(value)
        if exact is not None:
            out[f"{key}_hex"] = exact
    return out


def rows_frame(rows: Iterable[Dict[str, Any]]) -> DataFrame:
    return DataFrame([expand_row(r) for r in rows])


def write_csv(rows: List[Dict[str, Any]], path: Path) -> int:
    df = rows_frame(rows)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return len(df)


def write_json(payload: Any, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def packing_rows(packing: Packing, g: DimensionFunction, limit: Optional[int] = None) -> List[Dict[str, Any]]:
    """One row per ball: stage, center coordinates, radius, diameter and gauge weight."""
    count = len(packing) if limit is None else min(limit, len(packing))
    rows = []
    for i in range(count):
        ball = packing.balls[i]
        row: Dict[str, Any] = {
            "index": i,
            "stage": packing.stages[i] if packing.stages else 0,
        }
        for j, x in enumerate(ball.center):
            row[f"x{j}"] = x
        row["radius"] = ball.radius
        row["diameter"] = ball.diameter
        row["weight"] = g.eval(fraction_to_mpf(ball.diameter))
        rows.append(row)
    return rows


def certificate_payload(
    cert: PremeasureCertificate,
    inputs_hash: str,
    verification: Optional[PackingVerification] = None,
) -> Dict[str, Any]:
    payload = {
        "inputs_hash": inputs_hash,
        "gauge": cert.gauge.model_dump(mode="json"),
        "bound_kind": cert.bound_kind,
        "weight": decimal_str(cert.weight),
        "weight_hex": to_hex(cert.weight),
        "log2_weight": decimal_str(mpmath.log(cert.weight, 2)) if cert.weight > 0 else None,
        "ball_count": len(cert.packing),
        "level": cert.level,
        "threshold": decimal_str(cert.threshold) if cert.threshold is not None else None,
        "indices": list(cert.indices),
        "verified": cert.verified,
    }
    if verification is not None:
        payload["verification"] = verification.model_dump(mode="json")
    return payload
