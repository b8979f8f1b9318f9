"""Segmented numpy prime sieve and batch Frobenius-trace evaluation over prime ranges."""

import logging
import math

import numpy as np

from ec_core import DEFAULT_SETTINGS, CurveFp, CurveQ, PointCountSettings, count_points
from sweep_runner import ParallelSweep, partition

logger = logging.getLogger(__name__)

SEGMENT_SIZE = 1 << 20


def simple_sieve(limit: int) -> np.ndarray:
    """All primes ≤ limit as an int64 array."""
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def primes_in_range(lo: int, hi: int, segment_size: int = SEGMENT_SIZE) -> np.ndarray:
    """Primes in the half-open range [lo, hi), sieved segment by segment."""
    lo = max(lo, 2)
    if hi <= lo:
        return np.array([], dtype=np.int64)
    base = simple_sieve(math.isqrt(hi - 1))
    segments: list[np.ndarray] = []
    for start in range(lo, hi, segment_size):
        stop = min(start + segment_size, hi)
        mask = np.ones(stop - start, dtype=bool)
        for p in base:
            p = int(p)
            if p * p >= stop:
                break
            first = max(p * p, -(-start // p) * p)
            mask[first - start :: p] = False
        segments.append(start + np.flatnonzero(mask).astype(np.int64))
    return np.concatenate(segments)


def primes_up_to(x: int) -> np.ndarray:
    return primes_in_range(2, x + 1)


def prime_pi(x: int) -> int:
    """π(x), the number of primes ≤ x."""
    return int(primes_up_to(x).size)


def primes_in_progression(modulus: int, residue: int, x: int, lo: int = 2) -> np.ndarray:
    """Primes lo ≤ ℓ ≤ x with ℓ ≡ residue mod modulus."""
    primes = primes_in_range(lo, x + 1)
    return primes[primes % modulus == residue % modulus]


def _count_chunk(job: tuple[int, int, tuple[int, ...], PointCountSettings]) -> list[int]:
    a, b, ells, settings = job
    return [count_points(CurveFp.from_residues(ell, a, b), settings=settings) for ell in ells]


def point_counts(
    curve: CurveQ,
    ells: list[int],
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> list[int]:
    """
    #Ẽ(F_ℓ) for each ℓ (all of good reduction), fanned out over worker processes.

    Results are returned in the order of `ells` regardless of the worker count.
    """
    if not ells:
        return []
    chunks = partition(ells, workers * 4 if workers > 1 else 1)
    jobs = [(curve.a, curve.b, tuple(chunk), settings) for chunk in chunks]
    logger.debug("Counting points of %s at %d primes (%d chunks)", curve, len(ells), len(jobs))
    results = ParallelSweep(workers).map_chunks(_count_chunk, jobs)
    return [count for chunk_counts in results for count in chunk_counts]


def good_primes(curve: CurveQ, primes: np.ndarray, exclude: int | None = None) -> list[int]:
    """Drop primes dividing the discriminant (and `exclude`, usually p)."""
    delta = curve.delta
    return [int(ell) for ell in primes if delta % int(ell) != 0 and int(ell) != exclude]
