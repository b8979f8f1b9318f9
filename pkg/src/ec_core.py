"""Elliptic curves y² = x³ + ax + b over Q and their reductions modulo primes."""

import logging
import math
import random
from enum import StrEnum
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator
from sympy import factorint, isprime, legendre_symbol, multiplicity, primerange, sqrt_mod

logger = logging.getLogger(__name__)

DEFAULT_POINT_COUNT_THRESHOLD = 10_000
DEFAULT_BSGS_MAX_POINTS = 16

type Point = tuple[int, int] | None
type CountMethod = Literal["auto", "exhaustive", "bsgs"]


class InputError(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class ReductionType(StrEnum):
    GOOD = "good"
    MULTIPLICATIVE_SPLIT = "multiplicative_split"
    MULTIPLICATIVE_NONSPLIT = "multiplicative_nonsplit"
    ADDITIVE = "additive"
    UNSUPPORTED = "unsupported"

    @property
    def is_multiplicative(self) -> bool:
        return self in (ReductionType.MULTIPLICATIVE_SPLIT, ReductionType.MULTIPLICATIVE_NONSPLIT)


class PointCountSettings(BaseModel):
    """Knobs for count_points; built from Config by the CLI."""

    model_config = ConfigDict(frozen=True)

    threshold: int = Field(DEFAULT_POINT_COUNT_THRESHOLD, ge=2)
    max_points: int = Field(DEFAULT_BSGS_MAX_POINTS, ge=1)
    seed: int | None = None


DEFAULT_SETTINGS = PointCountSettings()


def _require_prime(ell: int, name: str = "ell") -> None:
    if not isprime(ell):
        raise InputError(f"{name} must be prime, got {ell}")


class CurveQ(BaseModel):
    """Short Weierstrass model y² = x³ + ax + b with integer coefficients."""

    model_config = ConfigDict(frozen=True)

    a: int
    b: int

    @model_validator(mode="after")
    def check_nonsingular(self) -> Self:
        if 4 * self.a**3 + 27 * self.b**2 == 0:
            raise ValueError(f"singular model: 4a³ + 27b² = 0 for (a, b) = ({self.a}, {self.b})")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def delta(self) -> int:
        return -16 * (4 * self.a**3 + 27 * self.b**2)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def height(self) -> int:
        return max(abs(self.a) ** 3, self.b**2)

    @property
    def minimal(self) -> bool:
        return is_minimal(self)

    def bad_primes(self) -> list[int]:
        """Primes dividing the model discriminant (2 always appears)."""
        return sorted(factorint(abs(self.delta)))

    def __str__(self) -> str:
        return f"y^2 = x^3 + {self.a}x + {self.b}"


class CurveFp(BaseModel):
    """Reduction of a short model modulo an odd prime of good reduction."""

    model_config = ConfigDict(frozen=True)

    ell: int
    a_red: int
    b_red: int

    @model_validator(mode="after")
    def check_reduction(self) -> Self:
        _require_prime(self.ell)
        if not (0 <= self.a_red < self.ell and 0 <= self.b_red < self.ell):
            raise ValueError("a_red and b_red must be reduced residues")
        if (-16 * (4 * self.a_red**3 + 27 * self.b_red**2)) % self.ell == 0:
            raise ValueError(f"curve is singular modulo {self.ell}")
        return self

    @classmethod
    def from_residues(cls, ell: int, a: int, b: int) -> Self:
        return cls(ell=ell, a_red=a % ell, b_red=b % ell)

    def rhs(self, x: int) -> int:
        return (x * x * x + self.a_red * x + self.b_red) % self.ell


class BadReduction(BaseModel):
    """Marker returned by reduce_mod when ell divides the discriminant."""

    model_config = ConfigDict(frozen=True)

    ell: int
    delta_valuation: int


class OrdinaryCheck(BaseModel):
    """Outcome of is_good_ordinary; truthy exactly when the reduction is good ordinary."""

    model_config = ConfigDict(frozen=True)

    p: int
    ordinary: bool
    reason: Literal["ordinary", "supersingular", "bad_reduction"]
    a_p: int | None = None

    def __bool__(self) -> bool:
        return self.ordinary


class IrreducibilityCertificate(BaseModel):
    """A prime ell with x² - a_ell x + ell irreducible mod p, which forces E[p] irreducible."""

    model_config = ConfigDict(frozen=True)

    p: int
    ell: int
    a_ell: int
    discriminant_mod_p: int


def height(curve: CurveQ) -> int:
    return curve.height


def is_minimal(curve: CurveQ) -> bool:
    """True iff no prime q has q⁴ | a and q⁶ | b, i.e. no twelfth power divides gcd(a³, b²)."""
    g = math.gcd(curve.a, curve.b)
    for q in factorint(g):
        a_ok = curve.a == 0 or multiplicity(q, curve.a) >= 4
        b_ok = curve.b == 0 or multiplicity(q, curve.b) >= 6
        if a_ok and b_ok:
            return False
    return True


def minimal_model(curve: CurveQ) -> CurveQ:
    """Rescale (a, b) -> (a/u⁴, b/u⁶) by the largest admissible u."""
    u = 1
    for q in factorint(math.gcd(curve.a, curve.b)):
        va = multiplicity(q, curve.a) if curve.a else math.inf
        vb = multiplicity(q, curve.b) if curve.b else math.inf
        k = int(min(va // 4, vb // 6))
        u *= q**k
    if u == 1:
        return curve
    logger.debug("Scaling %s by u=%d to its minimal model", curve, u)
    return CurveQ(a=curve.a // u**4, b=curve.b // u**6)


def reduce_mod(curve: CurveQ, ell: int) -> CurveFp | BadReduction:
    _require_prime(ell)
    if curve.delta % ell == 0:
        return BadReduction(ell=ell, delta_valuation=multiplicity(ell, curve.delta))
    return CurveFp.from_residues(ell, curve.a, curve.b)


def hasse_bound_holds(ell: int, a_ell: int) -> bool:
    return a_ell * a_ell <= 4 * ell


def hasse_interval(ell: int) -> tuple[int, int]:
    width = math.isqrt(4 * ell)
    return ell + 1 - width, ell + 1 + width


# --- point counting ---------------------------------------------------------------------------


def count_points_exhaustive(curve: CurveFp) -> int:
    """Scan every x ∈ F_ell and add the number of square roots of x³ + ax + b."""
    ell = curve.ell
    xs = np.arange(ell, dtype=np.int64)
    squares = xs * xs % ell
    roots_per_value = np.bincount(squares, minlength=ell)
    rhs = (squares * xs % ell + curve.a_red * xs + curve.b_red) % ell
    return 1 + int(roots_per_value[rhs].sum())


def count_points_character_sum(ell: int, a: int, b: int) -> int:
    """N = ell + 1 + Σ_x χ(x³ + ax + b), with χ evaluated by Euler's criterion."""
    half = (ell - 1) // 2
    total = 0
    for x in range(ell):
        r = (x * x * x + a * x + b) % ell
        if r == 0:
            continue
        total += 1 if pow(r, half, ell) == 1 else -1
    return ell + 1 + total


def _add(p1: Point, p2: Point, a: int, ell: int) -> Point:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2:
        if (y1 + y2) % ell == 0:
            return None
        slope = (3 * x1 * x1 + a) * pow(2 * y1, -1, ell) % ell
    else:
        slope = (y2 - y1) * pow(x2 - x1, -1, ell) % ell
    x3 = (slope * slope - x1 - x2) % ell
    return x3, (slope * (x1 - x3) - y1) % ell


def _negate(point: Point, ell: int) -> Point:
    return None if point is None else (point[0], -point[1] % ell)


def _multiply(k: int, point: Point, a: int, ell: int) -> Point:
    if k < 0:
        return _multiply(-k, _negate(point, ell), a, ell)
    result: Point = None
    addend = point
    while k:
        if k & 1:
            result = _add(result, addend, a, ell)
        addend = _add(addend, addend, a, ell)
        k >>= 1
    return result


_POINT_SAMPLE_ATTEMPTS = 64


def _random_point(curve: CurveFp, rng: random.Random) -> tuple[int, int] | None:
    # None when no affine point turned up (over F_3 the group can be trivial)
    for _ in range(_POINT_SAMPLE_ATTEMPTS):
        x = rng.randrange(curve.ell)
        r = curve.rhs(x)
        if r == 0:
            return x, 0
        if legendre_symbol(r, curve.ell) == 1:
            y = int(sqrt_mod(r, curve.ell))
            return x, y if rng.random() < 0.5 else (-y) % curve.ell
    return None


def _point_order(point: tuple[int, int], multiple: int, a: int, ell: int) -> int:
    """Order of a point known to be killed by `multiple`."""
    order = multiple
    for q, exp in factorint(multiple).items():
        for _ in range(exp):
            if _multiply(order // q, point, a, ell) is None:
                order //= q
            else:
                break
    return order


def _annihilator_in_interval(point: tuple[int, int], lo: int, hi: int, a: int, ell: int) -> int:
    """Baby-step giant-step for some M ∈ [lo, hi] with M·P = O."""
    m = math.isqrt(hi - lo) + 1
    baby: dict[Point, int] = {}
    step: Point = None
    for j in range(m):
        baby.setdefault(_negate(step, ell), j)
        step = _add(step, point, a, ell)
    giant = _multiply(m, point, a, ell)
    current = _multiply(lo, point, a, ell)
    for i in range(m + 1):
        j = baby.get(current)
        if j is not None:
            return lo + i * m + j
        current = _add(current, giant, a, ell)
    raise ArithmeticError(f"no multiple of the point vanishes in the Hasse interval mod {ell}")


def count_points_bsgs(curve: CurveFp, max_points: int = DEFAULT_BSGS_MAX_POINTS, seed: int | None = None) -> int | None:
    """
    Group order from point orders, disambiguated inside the Hasse interval.

    Returns None when max_points sampled points still leave more than one
    candidate order; callers fall back to the exhaustive scan.
    """
    ell, a = curve.ell, curve.a_red
    lo, hi = hasse_interval(ell)
    rng = random.Random(f"{ell}:{curve.a_red}:{curve.b_red}:{seed}")
    exponent = 1
    for _ in range(max_points):
        point = _random_point(curve, rng)
        if point is None:
            return None
        multiple = _annihilator_in_interval(point, lo, hi, a, ell)
        exponent = math.lcm(exponent, _point_order(point, multiple, a, ell))
        candidates = range(-(-lo // exponent) * exponent, hi + 1, exponent)
        if len(candidates) == 1:
            return candidates[0]
    return None


def count_points(
    curve: CurveFp,
    method: CountMethod = "auto",
    settings: PointCountSettings = DEFAULT_SETTINGS,
) -> int:
    """
    Exact #E(F_ell), point at infinity included.

    "auto" scans exhaustively below settings.threshold and uses baby-step
    giant-step above it.
    """
    if method == "exhaustive" or (method == "auto" and curve.ell < settings.threshold):
        return count_points_exhaustive(curve)
    count = count_points_bsgs(curve, settings.max_points, settings.seed)
    if count is None:
        logger.warning(
            "Point orders stayed ambiguous after %d samples mod %d; falling back to exhaustive count",
            settings.max_points,
            curve.ell,
        )
        count = count_points_exhaustive(curve)
    return count


def trace_of_frobenius(curve: CurveFp, settings: PointCountSettings = DEFAULT_SETTINGS) -> int:
    return curve.ell + 1 - count_points(curve, settings=settings)


def frobenius_trace(curve: CurveQ, ell: int, settings: PointCountSettings = DEFAULT_SETTINGS) -> int:
    """a_ell of a rational curve at a prime of good reduction."""
    reduced = reduce_mod(curve, ell)
    if isinstance(reduced, BadReduction):
        raise InputError(f"{curve} has bad reduction at {ell}")
    return trace_of_frobenius(reduced, settings)


def quadratic_twist(curve: CurveFp, d: int) -> CurveFp:
    """E_d: y² = x³ + ad²x + bd³ over the same field."""
    if d % curve.ell == 0:
        raise InputError("twisting parameter must be a unit")
    return CurveFp.from_residues(curve.ell, curve.a_red * d * d, curve.b_red * d * d * d)


# --- local data --------------------------------------------------------------------------------


def is_good_ordinary(curve: CurveQ, p: int, settings: PointCountSettings = DEFAULT_SETTINGS) -> OrdinaryCheck:
    _require_prime(p, "p")
    if p == 2:
        raise InputError("p must be odd")
    if curve.delta % p == 0:
        return OrdinaryCheck(p=p, ordinary=False, reason="bad_reduction")
    a_p = frobenius_trace(curve, p, settings)
    if a_p % p == 0:
        return OrdinaryCheck(p=p, ordinary=False, reason="supersingular", a_p=a_p)
    return OrdinaryCheck(p=p, ordinary=True, reason="ordinary", a_p=a_p)


def reduction_type(curve: CurveQ, ell: int) -> ReductionType:
    """
    Reduction type at ell from the short model.

    Split versus nonsplit is read off the node: with the double root x0 of
    x³ + ax + b, the tangent slopes there are ±√(3x0).
    """
    _require_prime(ell)
    if curve.delta % ell != 0:
        return ReductionType.GOOD
    if ell in (2, 3):
        return ReductionType.UNSUPPORTED
    if curve.a % ell == 0:
        # ell | c4 = -48a
        return ReductionType.ADDITIVE
    node_x = -3 * curve.b * pow(2 * curve.a, -1, ell) % ell
    if legendre_symbol(3 * node_x % ell, ell) == 1:
        return ReductionType.MULTIPLICATIVE_SPLIT
    return ReductionType.MULTIPLICATIVE_NONSPLIT


def irreducibility_certificate(
    curve: CurveQ,
    p: int,
    search_bound: int,
    settings: PointCountSettings = DEFAULT_SETTINGS,
) -> IrreducibilityCertificate | None:
    """
    Least ell ≤ search_bound, ell ∤ pΔ, with a_ell² − 4ell a non-residue mod p.

    None means inconclusive; reducibility is never claimed.
    """
    _require_prime(p, "p")
    if p == 2:
        raise InputError("p must be odd")
    for ell in primerange(2, search_bound + 1):
        if ell == p or curve.delta % ell == 0:
            continue
        a_ell = frobenius_trace(curve, ell, settings)
        disc = (a_ell * a_ell - 4 * ell) % p
        if disc != 0 and legendre_symbol(disc, p) == -1:
            logger.debug("E[%d] irreducible via ell=%d (a_ell=%d)", p, ell, a_ell)
            return IrreducibilityCertificate(p=p, ell=ell, a_ell=a_ell, discriminant_mod_p=disc)
    logger.info("No irreducibility witness for p=%d below %d", p, search_bound)
    return None
