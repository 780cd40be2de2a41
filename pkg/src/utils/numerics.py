# /src/utils/numerics.py
"""
Radix-2 arbitrary precision helpers.

Reals are mpmath ``mpf`` values. Every finite ``mpf`` is a dyadic rational
man * 2**exp, which is what makes the exact conversions below possible:
``to_fraction`` and ``to_fixed`` never round.
"""
import re
from fractions import Fraction
from typing import Annotated, Callable, Iterable, Tuple, Union

import mpmath
from mpmath import mpf
from pydantic import BeforeValidator, PlainSerializer

from src.config import get_config
from src.utils.exceptions import NoRoot

RealLike = Union[mpf, Fraction, int, float, str]

_POWER_RE = re.compile(r"^\s*([+-]?\d+)\s*\^\s*\(?\s*([+-]?\d+)\s*\)?\s*$")
_HEX_RE = re.compile(r"^\s*([+-]?)0x([0-9a-fA-F]+)(?:\.([0-9a-fA-F]*))?p([+-]?\d+)\s*$")


# ---------- parsing ----------
def parse_real(value: RealLike) -> mpf:
    if isinstance(value, mpf):
        return value
    if isinstance(value, bool):
        raise ValueError("booleans are not reals")
    if isinstance(value, Fraction):
        return mpf(value.numerator) / value.denominator
    if isinstance(value, (int, float)):
        return mpf(value)
    if isinstance(value, str):
        text = value.strip()
        if "0x" in text.lower():
            return from_hex(text)
        match = _POWER_RE.match(text)
        if match:
            return mpf(int(match.group(1))) ** int(match.group(2))
        if "/" in text:
            return parse_real(Fraction(text))
        return mpf(text)
    raise ValueError(f"Cannot interpret {value!r} as a real number")


def parse_exponent(value: Union[Fraction, int, float, str]) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 20)
    return Fraction(str(value).strip())


# ---------- exact conversions ----------
def _parts(x: mpf) -> Tuple[int, int, int]:
    # the gmpy backend hands out mpz mantissas
    sign, man, exp, _ = x._mpf_
    return int(sign), int(man), int(exp)


def to_fraction(x: mpf) -> Fraction:
    if not mpmath.isfinite(x):
        raise ValueError(f"Non-finite value {x}")
    sign, man, exp = _parts(x)
    value = Fraction(man << exp) if exp >= 0 else Fraction(man, 1 << -exp)
    return -value if sign else value


def fraction_to_mpf(q: Fraction) -> mpf:
    return mpf(q.numerator) / q.denominator


def fixed_bits(x: mpf) -> int:
    """Smallest B with x * 2**B an integer."""
    _, man, exp = _parts(x)
    return max(0, -exp) if man else 0


def to_fixed(x: mpf, bits: int) -> int:
    sign, man, exp = _parts(x)
    shift = exp + bits
    if man and shift < 0:
        raise ValueError(f"{x} is not representable on the 2^-{bits} grid")
    value = man << shift if man else 0
    return -value if sign else value


def from_fixed(value: int, bits: int) -> mpf:
    return mpf((value, -bits))


# ---------- formatting ----------
def to_hex(x: mpf) -> str:
    sign, man, exp = _parts(x)
    if not man:
        return "0x0p+0"
    return f"{'-' if sign else ''}0x{man:x}p{exp:+d}"


def fixed_to_hex(value: int, bits: int) -> str:
    if value == 0:
        return "0x0p+0"
    sign = "-" if value < 0 else ""
    return f"{sign}0x{abs(value):x}p{-bits:+d}"


def from_hex(text: str) -> mpf:
    match = _HEX_RE.match(text)
    if not match:
        raise ValueError(f"Malformed hexadecimal float {text!r}")
    sign, whole, frac, exp = match.groups()
    frac = frac or ""
    man = int(whole + frac, 16)
    value = mpf((man, int(exp) - 4 * len(frac)))
    return -value if sign == "-" else value


def decimal_str(x: Union[mpf, Fraction]) -> str:
    digits = get_config().DECIMAL_DIGITS
    if isinstance(x, Fraction):
        with mpmath.workprec(max(mpmath.mp.prec, 4 * digits)):
            return mpmath.nstr(fraction_to_mpf(x), digits)
    return mpmath.nstr(x, digits)


def log2(x: Union[mpf, Fraction]) -> mpf:
    if isinstance(x, Fraction):
        x = fraction_to_mpf(x)
    return mpmath.log(x, 2)


Real = Annotated[mpf, BeforeValidator(parse_real), PlainSerializer(decimal_str, return_type=str)]
Exponent = Annotated[Fraction, BeforeValidator(parse_exponent), PlainSerializer(str, return_type=str)]


def exact_sum(values: Iterable[mpf]) -> mpf:
    """Sum with a single final rounding, independent of term order."""
    return mpmath.fsum(values)


# ---------- root finding ----------
def bisect_increasing(
    f: Callable[[mpf], mpf],
    target: mpf,
    hi: mpf,
    rel_tol: mpf,
    max_halvings: int,
) -> Tuple[mpf, int]:
    """
    Find a with f(a) <= target < f(a') for an a' within rel_tol*a above a,
    searching (0, hi] for a nondecreasing f. Returns (a, evaluations).

    The lower endpoint is returned, so f(a) <= target holds at working precision.
    """
    f_hi = f(hi)
    evaluations = 1
    if f_hi == target:
        return hi, evaluations
    if f_hi < target:
        raise NoRoot(f"f({hi}) = {f_hi} is below the target {target}", {"target": str(target)})

    lo = hi / 2
    f_lo = f(lo)
    evaluations += 1
    halvings = 1
    while f_lo > target:
        if halvings >= max_halvings:
            raise NoRoot(
                f"f stays above {target} down to {lo}",
                {"target": str(target), "halvings": halvings},
            )
        hi, lo = lo, lo / 2
        f_lo = f(lo)
        evaluations += 1
        halvings += 1
    if f_lo == target:
        return lo, evaluations

    while hi - lo > rel_tol * lo:
        mid = (lo + hi) / 2
        if mid == lo or mid == hi:
            break
        f_mid = f(mid)
        evaluations += 1
        if f_mid == target:
            return mid, evaluations
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    return lo, evaluations


def rational_power(t: mpf, s: Fraction) -> mpf:
    p, q = s.numerator, s.denominator
    if q == 1:
        base = t
    elif q == 2:
        base = mpmath.sqrt(t)
    else:
        base = mpmath.root(t, q)
    return base ** p
