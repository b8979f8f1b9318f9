"""Closed-form densities, counts and bounds, and the empirical sweeps that check them."""

import csv
import logging
import math
from collections.abc import Iterable, Sequence
from fractions import Fraction
from pathlib import Path
from typing import Literal, Self, TextIO

import numpy as np
from pydantic import BaseModel, Field, model_validator
from sympy import isprime

from ec_core import (
    DEFAULT_SETTINGS,
    CurveFp,
    CurveQ,
    InputError,
    PointCountSettings,
    count_points_character_sum,
    count_points_exhaustive,
    irreducibility_certificate,
)
from prime_sweep import point_counts, prime_pi, primes_in_progression, simple_sieve
from sweep_cache import SweepCache
from sweep_runner import ParallelSweep, partition_range

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("param", "x", "hits", "total", "ratio", "reference", "rel_error")
DEFAULT_TOLERANCE = 1e-12
DEFAULT_IRREDUCIBILITY_BOUND = 1_000
ZETA_10 = 1.0009945751278180853

type SweepMode = Literal["S", "T", "PEc"]


class SweepResult(BaseModel):
    """One point of an empirical sweep: hits out of total, against a reference value."""

    param: str
    x: int
    hits: int = Field(..., ge=0)
    total: int = Field(..., ge=0)
    reference: float | None = None
    empty: bool = False
    # Galois-image preconditions the reference value rests on
    assumptions: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_counts(self) -> Self:
        if self.hits > self.total:
            raise ValueError(f"hits {self.hits} exceed total {self.total}")
        return self

    @property
    def ratio(self) -> float:
        return self.hits / self.total if self.total else 0.0

    @property
    def rel_error(self) -> float | None:
        if self.reference is None or self.reference <= 0:
            return None
        return abs(self.ratio - self.reference) / self.reference

    def as_row(self) -> dict[str, str]:
        rel_error = self.rel_error
        return {
            "param": self.param,
            "x": str(self.x),
            "hits": str(self.hits),
            "total": str(self.total),
            "ratio": f"{self.ratio:.10g}",
            "reference": "" if self.reference is None else f"{self.reference:.10g}",
            "rel_error": "" if rel_error is None else f"{rel_error:.6g}",
        }


class SeriesValue(BaseModel):
    """A truncated series or product with a rigorous bound on what was dropped."""

    value: float
    tail_bound: float = Field(..., ge=0)
    terms: int = Field(..., ge=1)


class BoundCheck(BaseModel):
    p: int
    c1: float
    count: int
    bound: float
    holds: bool
    minimal_c1: float
    small_p: bool

    def __bool__(self) -> bool:
        return self.holds


class LowerBound(BaseModel):
    """The five terms of the lower density bound, kept separate for reporting."""

    p: int
    c1: float
    base: float
    inverse_p: float
    delaunay: SeriesValue
    zeta_tail: SeriesValue
    sqrt_term: float

    @property
    def value(self) -> float:
        return self.base - self.inverse_p - self.delaunay.value - self.zeta_tail.value - self.sqrt_term


# --- exact densities ---------------------------------------------------------------------------


def _check_density_args(p: int, n: int) -> None:
    if p < 3 or not isprime(p):
        raise InputError(f"p must be an odd prime, got {p}")
    if n < 1:
        raise InputError("n must be at least 1")
    if p < 5:
        logger.warning("p = %d < 5: the mod-p image need not be surjective, density is heuristic", p)


def theoretical_S_density(p: int, n: int) -> Fraction:
    """
    Density of primes ℓ ≡ 1 mod pⁿ with p ∤ #Ẽ(F_ℓ), for a surjective mod-p image.

    The two displayed forms (p+1)(p−1)² and (p²−1)(p−1) are checked against each other.
    """
    _check_density_args(p, n)
    stated = Fraction(p * p - p - 1, p ** (n - 1) * (p + 1) * (p - 1) ** 2)
    derived = Fraction(p * p - p - 1, p ** (n - 1) * (p * p - 1) * (p - 1))
    assert stated == derived
    return stated


def theoretical_T_density(p: int, n: int) -> Fraction:
    """Density of primes ℓ ≡ 1 mod pⁿ with p | #Ẽ(F_ℓ); together with S it makes 1/φ(pⁿ)."""
    _check_density_args(p, n)
    return Fraction(p, p ** (n - 1) * (p + 1) * (p - 1) ** 2)


# --- finite-field counts -----------------------------------------------------------------------


def sl2_trace_count(p: int) -> tuple[int, int]:
    """(brute force, closed form) for #{M ∈ SL₂(F_p) : tr M ≠ 2}; closed form p³ − p² − p."""
    if p < 3 or not isprime(p):
        raise InputError(f"p must be an odd prime, got {p}")
    entries = np.arange(p, dtype=np.int64)
    a, b, c, d = np.meshgrid(entries, entries, entries, entries, indexing="ij", sparse=True)
    det_one = (a * d - b * c) % p == 1
    trace_not_two = (a + d) % p != 2
    brute = int(np.count_nonzero(det_one & trace_not_two))
    return brute, p**3 - p**2 - p


def _nonsingular_pairs(p: int) -> Iterable[tuple[int, int]]:
    for a in range(p):
        for b in range(p):
            if (4 * a**3 + 27 * b**2) % p:
                yield a, b


def tp_members(p: int, method: Literal["character_sum", "exhaustive"] = "character_sum") -> set[tuple[int, int]]:
    """Pairs (a, b) ∈ F_p² with #E_{a,b}(F_p) ∈ {p, p + 1}."""
    if p < 5 or not isprime(p):
        raise InputError(f"p must be a prime ≥ 5, got {p}")
    members = set()
    for a, b in _nonsingular_pairs(p):
        if method == "character_sum":
            count = count_points_character_sum(p, a, b)
        else:
            count = count_points_exhaustive(CurveFp(ell=p, a_red=a, b_red=b))
        if count in (p, p + 1):
            members.add((a, b))
    return members


def count_Tp(p: int) -> int:
    """
    #𝔗_p, counted twice by independent point counts.

    Raises:
        ArithmeticError: If the two counts disagree
    """
    by_character = tp_members(p, "character_sum")
    by_enumeration = tp_members(p, "exhaustive")
    if by_character != by_enumeration:
        raise ArithmeticError(f"𝔗_{p} oracles disagree on {sorted(by_character ^ by_enumeration)}")
    return len(by_character)


def twist_closure_holds(p: int, members: set[tuple[int, int]]) -> bool:
    """(a, b) ∈ 𝔗_p implies (c⁴a, c⁶b) ∈ 𝔗_p for every c ≠ 0."""
    return all(((c**4 * a) % p, (c**6 * b) % p) in members for a, b in members for c in range(1, p))


def _bound_shape(p: int) -> float:
    loglog = math.log(math.log(p))
    return p**1.5 * math.log(p) * loglog**2


def minimal_c1(p: int, count: int | None = None) -> float:
    """Smallest c₁ with #𝔗_p ≤ c₁·p^{3/2}·log p·(log log p)²."""
    count = count_Tp(p) if count is None else count
    return count / _bound_shape(p)


def lenstra_bound_check(p: int, c1: float, count: int | None = None) -> BoundCheck:
    """Compare #𝔗_p against c₁·p^{3/2}·log p·(log log p)²; p < 16 is flagged (log log p < 1)."""
    if c1 < 0:
        raise InputError("c1 must be nonnegative")
    count = count_Tp(p) if count is None else count
    bound = c1 * _bound_shape(p)
    small_p = p < 16
    if small_p:
        logger.warning("p = %d < 16: log log p < 1, the bound is not meaningful here", p)
    return BoundCheck(
        p=p,
        c1=c1,
        count=count,
        bound=bound,
        holds=count <= bound,
        minimal_c1=minimal_c1(p, count),
        small_p=small_p,
    )


# --- series ------------------------------------------------------------------------------------


def delaunay_proportion(p: int, tol: float = DEFAULT_TOLERANCE) -> SeriesValue:
    """
    ½(1 − ∏_{i≥1}(1 − p^{1−2i})), truncated once the dropped factors move the value by < tol.

    After k factors the dropped part is at most ½·P_k·p^{−(2k+1)}/(1 − p^{−2}).
    """
    if p < 3:
        raise InputError("p must be at least 3")
    if tol <= 0:
        raise InputError("tolerance must be positive")
    product = 1.0
    k = 0
    while True:
        k += 1
        product *= 1.0 - float(p) ** (1 - 2 * k)
        tail = 0.5 * product * float(p) ** (-(2 * k + 1)) / (1.0 - float(p) ** -2)
        if tail < tol:
            return SeriesValue(value=0.5 * (1.0 - product), tail_bound=tail, terms=k)


def zeta_tail(s: float, tol: float = DEFAULT_TOLERANCE, max_terms: int = 10_000_000) -> SeriesValue:
    """
    ζ(s) − 1 = Σ_{k≥2} k^{−s}, summed to K with the integral-test tail K^{1−s}/(s − 1).

    Raises:
        InputError: If s ≤ 1, or tol is out of reach within max_terms
    """
    if s <= 1:
        raise InputError(f"ζ(s) diverges at s = {s}")
    if tol <= 0:
        raise InputError("tolerance must be positive")
    k = 2
    total = 2.0**-s
    while (tail := float(k) ** (1 - s) / (s - 1)) >= tol:
        if k >= max_terms:
            raise InputError(f"tolerance {tol} not reached within {max_terms} terms at s = {s}")
        k += 1
        total += float(k) ** -s
    return SeriesValue(value=total, tail_bound=tail, terms=k - 1)


def lower_bound_density(p: int, c1: float, tol: float = DEFAULT_TOLERANCE) -> LowerBound:
    """
    1/6 − 1/p − ½(1 − ∏(1 − p^{1−2i})) − (ζ(p) − 1) − ζ(10)·c₁·log p·(log log p)²/√p.

    Lower density of rank-0 curves that are stable in every Z/pZ-extension, conditional
    on the rank distribution and Delaunay heuristics.
    """
    if p < 11 or not isprime(p):
        raise InputError(f"p must be a prime ≥ 11, got {p}")
    if c1 <= 0:
        raise InputError("c1 must be positive")
    loglog = math.log(math.log(p))
    return LowerBound(
        p=p,
        c1=c1,
        base=1 / 6,
        inverse_p=1 / p,
        delaunay=delaunay_proportion(p, tol),
        zeta_tail=zeta_tail(float(p), tol),
        sqrt_term=ZETA_10 * c1 * math.log(p) * loglog**2 / math.sqrt(p),
    )


# --- sweeps ------------------------------------------------------------------------------------


def _traces_in_progression(
    curve: CurveQ,
    modulus: int,
    x: int,
    settings: PointCountSettings,
    workers: int,
    cache: SweepCache | None,
) -> tuple[list[int], list[int]]:
    """Good primes ℓ ≤ x, ℓ ≡ 1 mod modulus, with their point counts."""
    if cache is not None:
        entry = cache.get_or_compute(curve, 2, x + 1, modulus, settings=settings, workers=workers)
        return list(entry.ells), [ell + 1 - a for ell, a in zip(entry.ells, entry.traces, strict=True)]
    ells = [int(ell) for ell in primes_in_progression(modulus, 1, x) if curve.delta % int(ell)]
    return ells, point_counts(curve, ells, settings, workers)


def _image_assumptions(curve: CurveQ, p: int, irreducibility_bound: int, settings: PointCountSettings) -> list[str]:
    certificate = irreducibility_certificate(curve, p, irreducibility_bound, settings)
    if certificate is None:
        logger.warning(
            "E[%d] of %s not certified irreducible below %d; reference assumes it", p, curve, irreducibility_bound
        )
        irreducible = f"E[{p}] irreducible: assumed (no witness below {irreducibility_bound})"
    else:
        irreducible = f"E[{p}] irreducible: certified at ell={certificate.ell}"
    return [irreducible, f"mod-{p} image surjective: assumed"]


def empirical_density_sweep(
    curve: CurveQ,
    p: int,
    n: int,
    x: int,
    mode: SweepMode,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    cache: SweepCache | None = None,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> SweepResult:
    """
    Count qualifying primes ℓ ≤ x against π(x).

    S and T only point-count ℓ ≡ 1 mod pⁿ and compare to the exact densities, which
    hold for a surjective mod-p image; the irreducibility witness (or its absence)
    is recorded in the result's assumptions. PEc counts good primes p′ ≤ x with
    p′ | #Ẽ(F_p′) against x(log log x)²/(log x)²/π(x), an envelope rather than a limit.
    """
    total = prime_pi(x)
    if mode == "PEc":
        ells, counts = _traces_in_progression(curve, 1, x, settings, workers, cache)
        hits = sum(1 for ell, count in zip(ells, counts, strict=True) if count % ell == 0)
        reference = None
        if x >= 16 and total:
            reference = x * math.log(math.log(x)) ** 2 / math.log(x) ** 2 / total
        return SweepResult(
            param=f"{curve}|PEc",
            x=x,
            hits=hits,
            total=total,
            reference=reference,
            empty=not ells,
            assumptions=["mod-p′ images surjective for all but finitely many p′: assumed"],
        )

    if mode not in ("S", "T"):
        raise InputError(f"mode must be S, T or PEc, got {mode!r}")
    density = theoretical_S_density(p, n) if mode == "S" else theoretical_T_density(p, n)
    ells, counts = _traces_in_progression(curve, p**n, x, settings, workers, cache)
    if mode == "S":
        hits = sum(1 for count in counts if count % p)
    else:
        hits = sum(1 for count in counts if count % p == 0)
    result = SweepResult(
        param=f"{curve}|p={p}|n={n}|{mode}",
        x=x,
        hits=hits,
        total=total,
        reference=float(density),
        empty=not ells,
        assumptions=_image_assumptions(curve, p, irreducibility_bound, settings),
    )
    logger.info("Sweep %s at x=%d: %d/%d (reference %.6f)", result.param, x, hits, total, density)
    return result


def _population_chunk(job: tuple[int, int, int, int]) -> tuple[int, int]:
    a_lo, a_hi, x, ell = job
    b_max = math.isqrt(x - 1) if x > 0 else -1
    a = np.arange(a_lo, a_hi, dtype=np.int64)[:, None]
    b = np.arange(-b_max, b_max + 1, dtype=np.int64)[None, :]
    disc = 4 * a**3 + 27 * b**2
    keep = (np.abs(a) ** 3 < x) & (b**2 < x) & (disc != 0)
    a_abs_max = max(abs(a_lo), abs(a_hi - 1), 1)
    for q in simple_sieve(max(int(round(a_abs_max ** 0.25)) + 1, int(round(max(b_max, 1) ** (1 / 6))) + 1)):
        q = int(q)
        keep &= ~((a % q**4 == 0) & (b % q**6 == 0))
    good = keep & (disc % ell != 0)
    return int(np.count_nonzero(good)), int(np.count_nonzero(keep))


def population_sweep(ell: int, x: int, workers: int = 1) -> SweepResult:
    """
    Fraction of minimal short models with height max(|a|³, b²) < x and good reduction at ℓ.

    Good reduction is tested as ℓ ∤ 4a³ + 27b²; the reference is 1 − 1/ℓ.
    """
    if not isprime(ell):
        raise InputError(f"ell must be prime, got {ell}")
    a_max = 0
    while (a_max + 1) ** 3 < x:
        a_max += 1
    if x <= 0:
        return SweepResult(param=f"ell={ell}", x=x, hits=0, total=0, reference=1 - 1 / ell, empty=True)
    ranges = partition_range(-a_max, a_max + 1, max(workers, 1))
    jobs = [(lo, hi, x, ell) for lo, hi in ranges if hi > lo]
    results = ParallelSweep(workers).map_chunks(_population_chunk, jobs)
    hits = sum(h for h, _ in results)
    total = sum(t for _, t in results)
    return SweepResult(param=f"ell={ell}", x=x, hits=hits, total=total, reference=1 - 1 / ell, empty=total == 0)


# --- output ------------------------------------------------------------------------------------


def write_csv(results: Sequence[SweepResult], out: Path | TextIO) -> None:
    """Write sweep results with the fixed columns param,x,hits,total,ratio,reference,rel_error."""
    if isinstance(out, Path):
        with out.open("w", newline="", encoding="utf-8") as f:
            write_csv(results, f)
        return
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for result in results:
        writer.writerow(result.as_row())


def write_svg(results: Sequence[SweepResult], path: Path, title: str = "") -> None:
    """Line chart of ratio against x with the reference drawn dashed."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r.x for r in results]
    fig, ax = plt.subplots(figsize=(7.0, 4.2), constrained_layout=True)
    ax.plot(xs, [r.ratio for r in results], marker="o", label="empirical")
    references = [r.reference for r in results]
    if all(ref is not None for ref in references):
        ax.plot(xs, references, linestyle="--", label="reference")
    ax.set_xscale("log")
    ax.set_xlabel("x")
    ax.set_ylabel("ratio")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info("Wrote %d sweep points to %s", len(results), path)
