"""
Cyclic degree-pⁿ subfields L of Q(μ_m) as characters on (Z/mZ)^×.

A character is stored in coordinates: for each modulus ℓᵢ ≡ 1 mod pⁿ with
smallest primitive root gᵢ, χ(x) = Σ eᵢ · dlog_{gᵢ}(x mod ℓᵢ) mod pⁿ, where the
discrete log only needs to be known modulo pⁿ. The field L is the fixed field of
ker χ; a prime q ∤ m splits completely in L iff χ(q) = 0.
"""

import logging
import math
from collections.abc import Sequence
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator
from sympy import isprime, multiplicity
from sympy.ntheory import is_primitive_root, primitive_root
from sympy.ntheory.modular import crt

from ec_core import DEFAULT_SETTINGS, BadReduction, CurveQ, InputError, PointCountSettings, count_points, reduce_mod

logger = logging.getLogger(__name__)


class UndefinedFrobeniusError(InputError):
    """Raised when asking for the Frobenius of a prime that divides the conductor."""


class CyclicCharacter(BaseModel):
    """
    Character of order dividing pⁿ on (Z/mZ)^×, m = ∏ moduli.

    Serializes exactly as {p, n, moduli, generators, exponents}.
    """

    model_config = ConfigDict(frozen=True)

    p: int = Field(..., ge=3)
    n: int = Field(..., ge=1)
    moduli: tuple[int, ...]
    generators: tuple[int, ...]
    exponents: tuple[int, ...]

    @model_validator(mode="after")
    def check_coordinates(self) -> Self:
        if not isprime(self.p):
            raise ValueError(f"p must be prime, got {self.p}")
        if not (len(self.moduli) == len(self.generators) == len(self.exponents)):
            raise ValueError("moduli, generators and exponents must have the same length")
        if len(set(self.moduli)) != len(self.moduli):
            raise ValueError("moduli must be distinct")
        degree = self.p**self.n
        for ell, g, e in zip(self.moduli, self.generators, self.exponents, strict=True):
            if not isprime(ell) or ell % degree != 1:
                raise ValueError(f"modulus {ell} is not a prime ≡ 1 mod {degree}")
            if not is_primitive_root(g, ell):
                raise ValueError(f"{g} is not a primitive root mod {ell}")
            if not 0 <= e < degree:
                raise ValueError(f"exponent {e} is not reduced mod {degree}")
        return self

    @property
    def degree(self) -> int:
        return self.p**self.n

    @property
    def m(self) -> int:
        return math.prod(self.moduli)

    @property
    def order(self) -> int:
        """Order of χ; equals degree exactly when some exponent is a unit mod p."""
        units = [e for e in self.exponents if e]
        if not units:
            return 1
        return self.p ** (self.n - min(int(multiplicity(self.p, e)) for e in units))

    def ramified_primes(self) -> list[int]:
        return [ell for ell, e in zip(self.moduli, self.exponents, strict=True) if e]


class DecompositionData(BaseModel):
    """How a prime ℓ ≠ p decomposes in L_∞ = L·Q_∞."""

    model_config = ConfigDict(frozen=True)

    ell: int
    e: int = Field(..., ge=1)
    g: int = Field(..., ge=1)
    q_infinity_splits: int = Field(..., ge=1)
    degree: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_counts(self) -> Self:
        if self.degree % self.e:
            raise ValueError(f"ramification index {self.e} does not divide {self.degree}")
        if self.e * self.g != self.q_infinity_splits * self.degree:
            raise ValueError("e·g must equal the number of primes of Q_∞ above ell times the degree")
        return self


class CheckItem(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class ExtensionChecklist(BaseModel):
    items: list[CheckItem]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def item(self, name: str) -> CheckItem:
        return next(i for i in self.items if i.name == name)


# --- discrete logs -----------------------------------------------------------------------------


def p_power_dlog(x: int, ell: int, g: int, p: int, n: int) -> int:
    """
    dlog_g(x) mod pⁿ for a prime ell ≡ 1 mod pⁿ, computed in the order-pⁿ quotient.

    Both x and g are pushed into the pⁿ-torsion by raising to (ell−1)/pⁿ, then the
    base-p digits of the log are recovered one at a time (Pohlig–Hellman).
    """
    degree = p**n
    cofactor = (ell - 1) // degree
    target = pow(x, cofactor, ell)
    gamma = pow(g, cofactor, ell)
    gamma_inv = pow(gamma, -1, ell)
    digit_base = pow(gamma, p ** (n - 1), ell)
    digit_table = {pow(digit_base, d, ell): d for d in range(p)}

    log = 0
    for k in range(n):
        residual = target * pow(gamma_inv, log, ell) % ell
        projected = pow(residual, p ** (n - 1 - k), ell)
        digit = digit_table.get(projected)
        if digit is None:
            raise ArithmeticError(f"{x} has no pⁿ-quotient log base {g} mod {ell}")
        log += digit * p**k
    return log


def frobenius_image(chi: CyclicCharacter, q: int) -> int:
    """χ(Frob_q) in Z/pⁿZ; zero exactly when q splits completely in L."""
    if math.gcd(q, chi.m) != 1:
        raise UndefinedFrobeniusError(f"{q} is not a unit mod {chi.m}; use decompose_in_Linfty")
    return (
        sum(
            e * p_power_dlog(q % ell, ell, g, chi.p, chi.n)
            for ell, g, e in zip(chi.moduli, chi.generators, chi.exponents, strict=True)
        )
        % chi.degree
    )


# --- construction ------------------------------------------------------------------------------


def _kernel_vector(rows: list[list[int]], width: int, p: int, n: int) -> list[int]:
    """
    A vector c with rows·c ≡ 0 mod pⁿ and some coordinate a unit.

    Diagonalizes the matrix over Z/pⁿZ by pivoting on entries of least p-adic
    valuation while recording column operations in U. A column of U outside
    the pivot block is killed by the matrix and, U being invertible, is primitive.
    """
    modulus = p**n
    a = [[v % modulus for v in row] for row in rows]
    u = [[int(i == j) for j in range(width)] for i in range(width)]
    height = len(a)

    def valuation(v: int) -> int:
        return int(multiplicity(p, v)) if v else n

    def swap_columns(c1: int, c2: int) -> None:
        for matrix in (a, u):
            for row in matrix:
                row[c1], row[c2] = row[c2], row[c1]

    def add_column_multiple(target: int, source: int, factor: int) -> None:
        for matrix in (a, u):
            for row in matrix:
                row[target] = (row[target] - factor * row[source]) % modulus

    rank = 0
    while rank < min(height, width):
        best: tuple[int, int, int] | None = None
        for r in range(rank, height):
            for c in range(rank, width):
                v = valuation(a[r][c])
                if v < n and (best is None or v < best[0]):
                    best = (v, r, c)
        if best is None:
            break
        v, r, c = best
        a[rank], a[r] = a[r], a[rank]
        swap_columns(rank, c)

        pivot_unit_inv = pow(a[rank][rank] // p**v, -1, modulus)
        for c in range(rank + 1, width):
            if a[rank][c]:
                factor = (a[rank][c] // p**v) * pivot_unit_inv % modulus
                add_column_multiple(c, rank, factor)
        for r in range(rank + 1, height):
            if a[r][rank]:
                factor = (a[r][rank] // p**v) * pivot_unit_inv % modulus
                a[r] = [(x - factor * y) % modulus for x, y in zip(a[r], a[rank], strict=True)]
        rank += 1

    assert rank < width, "pivot block cannot fill every coordinate"
    vector = [u[i][width - 1] for i in range(width)]
    unit_index = next(i for i, v in enumerate(vector) if v % p)
    scale = pow(vector[unit_index], -1, modulus)
    return [v * scale % modulus for v in vector]


def build_split_extension(sigma: list[int], primes: list[int], p: int, n: int) -> CyclicCharacter:
    """
    Character of exact order pⁿ, conductor dividing ∏ primes, with every q ∈ sigma split.

    Args:
        sigma: Primes that must split completely in L
        primes: #sigma + 1 distinct primes ≡ 1 mod pⁿ, disjoint from sigma
        p: Odd prime
        n: Level, so [L:Q] = pⁿ

    Raises:
        InputError: If the primes do not satisfy the constraints above
    """
    degree = p**n
    if p < 3 or not isprime(p):
        raise InputError(f"p must be an odd prime, got {p}")
    if len(primes) != len(sigma) + 1:
        raise InputError(f"need exactly {len(sigma) + 1} primes for {len(sigma)} split primes, got {len(primes)}")
    if len(set(primes)) != len(primes):
        raise InputError("auxiliary primes must be distinct")
    if set(primes) & set(sigma):
        raise InputError("auxiliary primes must be disjoint from the split set")
    for ell in primes:
        if not isprime(ell) or ell % degree != 1:
            raise InputError(f"{ell} is not a prime ≡ 1 mod {degree}")
    for q in sigma:
        if not isprime(q):
            raise InputError(f"split set entry {q} is not prime")

    generators = [int(primitive_root(ell)) for ell in primes]
    rows = [[p_power_dlog(q % ell, ell, g, p, n) for ell, g in zip(primes, generators, strict=True)] for q in sigma]
    exponents = _kernel_vector(rows, len(primes), p, n)

    chi = CyclicCharacter(
        p=p, n=n, moduli=tuple(primes), generators=tuple(generators), exponents=tuple(exponents)
    )
    logger.debug("Built character on %s with exponents %s", chi.moduli, chi.exponents)
    return chi


# --- local data --------------------------------------------------------------------------------


def ramification_data(chi: CyclicCharacter, ell: int) -> int:
    """Ramification index of ell in L: the order of its exponent in Z/pⁿZ."""
    if ell not in chi.moduli:
        return 1
    e_i = chi.exponents[chi.moduli.index(ell)]
    if e_i == 0:
        return 1
    return chi.p ** (chi.n - min(int(multiplicity(chi.p, e_i)), chi.n))


def inertia_image(chi: CyclicCharacter, ell: int) -> int:
    """
    χ on a generator of the inertia group at a modulus ell.

    Inertia at ell in Gal(Q(μ_m)/Q) is the copy of (Z/ell)^× sitting at 1 modulo
    the other moduli; it is generated by the CRT lift of a primitive root of ell.
    """
    if ell not in chi.moduli:
        raise InputError(f"{ell} is not a modulus of the character")
    residues = [int(primitive_root(q)) if q == ell else 1 for q in chi.moduli]
    lift, _ = crt(list(chi.moduli), residues)
    return frobenius_image(chi, int(lift))


def q_infinity_splits(ell: int, p: int) -> int:
    """Number of primes of the cyclotomic Z_p-extension above ell ≠ p."""
    return p ** max(0, int(multiplicity(p, ell ** (p - 1) - 1)) - 1)


def decompose_in_Linfty(chi: CyclicCharacter, ell: int, p: int | None = None) -> DecompositionData:
    """
    Ramification index and prime count above ell in L_∞.

    Residue fields of Q_∞ above ell ≠ p already contain every p-power extension
    of F_ell, so above each such prime the extension L_∞/Q_∞ has residue degree 1
    and g = q_infinity_splits · pⁿ / e.
    """
    p = chi.p if p is None else p
    if ell == p:
        raise InputError("decomposition above p is not handled (p is unramified in L)")
    if ell not in chi.moduli and math.gcd(ell, chi.m) != 1:
        raise InputError(f"{ell} shares a factor with the conductor but is not a modulus")
    splits = q_infinity_splits(ell, p)
    e = ramification_data(chi, ell)
    return DecompositionData(ell=ell, e=e, g=splits * chi.degree // e, q_infinity_splits=splits, degree=chi.degree)


def verify_extension(
    chi: CyclicCharacter,
    sigma: list[int],
    curve: CurveQ,
    p: int,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    allowed_ramified: Sequence[int] | None = None,
) -> ExtensionChecklist:
    """
    Independent re-check of a character against a split set and a curve.

    Items: order_exact, ramified_in_moduli (ramification only at allowed_ramified,
    default the moduli), sigma_split, avoids_Q1_Q2.
    """
    items = [
        CheckItem(
            name="order_exact",
            passed=chi.order == chi.degree,
            detail=f"order {chi.order}, degree {chi.degree}",
        )
    ]

    # Ramification recomputed from χ on inertia, not read off the exponents
    ramified = [ell for ell in chi.moduli if inertia_image(chi, ell) % chi.degree]
    allowed = set(chi.moduli if allowed_ramified is None else allowed_ramified)
    ram_problems = [f"{ell} ramifies outside {sorted(allowed)}" for ell in ramified if ell not in allowed]
    if p in chi.moduli or chi.p != p:
        ram_problems.append(f"p = {p} divides m or differs from the character's p = {chi.p}")
    items.append(
        CheckItem(
            name="ramified_in_moduli",
            passed=not ram_problems,
            detail="; ".join(ram_problems) or f"ramified {ramified}",
        )
    )

    sigma_failures: list[str] = []
    for q in sigma:
        try:
            image = frobenius_image(chi, q)
        except UndefinedFrobeniusError:
            sigma_failures.append(f"{q} divides m")
            continue
        if image:
            sigma_failures.append(f"χ({q}) = {image}")
    items.append(CheckItem(name="sigma_split", passed=not sigma_failures, detail="; ".join(sigma_failures)))

    q_failures: list[str] = []
    for ell in ramified:
        reduced = reduce_mod(curve, ell)
        if isinstance(reduced, BadReduction):
            q_failures.append(f"{ell} ∈ Q1 (bad reduction)")
            continue
        count = count_points(reduced, settings=settings)
        if count % p == 0:
            q_failures.append(f"{ell} ∈ Q2 (#E(F_{ell}) = {count})")
    items.append(CheckItem(name="avoids_Q1_Q2", passed=not q_failures, detail="; ".join(q_failures)))

    checklist = ExtensionChecklist(items=items)
    if not checklist.passed:
        logger.info("Extension check failed: %s", [i.name for i in items if not i.passed])
    return checklist
