"""On-disk cache of Frobenius traces over prime ranges."""

import hashlib
import io
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from config import default_cache_dir
from ec_core import DEFAULT_SETTINGS, CurveQ, PointCountSettings, hasse_bound_holds
from prime_sweep import point_counts, primes_in_range

logger = logging.getLogger(__name__)


class CorruptCacheEntry(ValueError):
    """Raised when a cache file fails its checksum or its Hasse check."""


class SweepCacheEntry(BaseModel):
    """(ℓ, a_ℓ) for the good primes ℓ ≡ 1 mod modulus in [lo, hi) of one curve."""

    model_config = ConfigDict(frozen=True)

    a: int
    b: int
    lo: int
    hi: int
    modulus: int = 1
    ells: tuple[int, ...]
    traces: tuple[int, ...]

    @model_validator(mode="after")
    def check_hasse(self) -> Self:
        if len(self.ells) != len(self.traces):
            raise ValueError("ells and traces differ in length")
        for ell, a_ell in zip(self.ells, self.traces, strict=True):
            if not hasse_bound_holds(ell, a_ell):
                raise ValueError(f"a_{ell} = {a_ell} violates the Hasse bound")
        return self

    @property
    def key(self) -> str:
        return cache_key(CurveQ(a=self.a, b=self.b), self.lo, self.hi, self.modulus)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.ells, self.traces, strict=True))


def cache_key(curve: CurveQ, lo: int, hi: int, modulus: int) -> str:
    return f"a{curve.a}_b{curve.b}_m{modulus}_{lo}_{hi}"


def _pack(entry: SweepCacheEntry) -> bytes:
    buffer = io.BytesIO()
    np.savez(
        buffer,
        header=np.array([entry.lo, entry.hi, entry.modulus], dtype=np.int64),
        ells=np.asarray(entry.ells, dtype=np.int64),
        traces=np.asarray(entry.traces, dtype=np.int64),
    )
    return buffer.getvalue()


class SweepCache:
    """
    Directory of .npz trace tables, each beside a sha256 of its bytes.

    Writes go through a temporary file and os.replace under a lock, so a reader
    never sees a partial file.
    """

    def __init__(self, cache_dir: Path | str | None = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _paths(self, key: str) -> tuple[Path, Path]:
        return self.cache_dir / f"{key}.npz", self.cache_dir / f"{key}.sha256"

    def load(self, curve: CurveQ, lo: int, hi: int, modulus: int = 1) -> SweepCacheEntry | None:
        """
        Read an entry; None when absent.

        Raises:
            CorruptCacheEntry: If the checksum or the Hasse check fails
        """
        data_path, sum_path = self._paths(cache_key(curve, lo, hi, modulus))
        if not data_path.exists() or not sum_path.exists():
            return None
        raw = data_path.read_bytes()
        expected = sum_path.read_text(encoding="utf-8").strip()
        if hashlib.sha256(raw).hexdigest() != expected:
            raise CorruptCacheEntry(f"checksum mismatch for {data_path.name}")
        try:
            with np.load(io.BytesIO(raw)) as payload:
                header = payload["header"].tolist()
                ells = payload["ells"].tolist()
                traces = payload["traces"].tolist()
        except (OSError, KeyError, ValueError) as e:
            raise CorruptCacheEntry(f"unreadable payload {data_path.name}: {e}") from e
        if header != [lo, hi, modulus]:
            raise CorruptCacheEntry(f"header {header} does not match the requested range")
        try:
            return SweepCacheEntry(
                a=curve.a, b=curve.b, lo=lo, hi=hi, modulus=modulus, ells=tuple(ells), traces=tuple(traces)
            )
        except ValueError as e:
            raise CorruptCacheEntry(str(e)) from e

    def store(self, entry: SweepCacheEntry) -> None:
        raw = _pack(entry)
        digest = hashlib.sha256(raw).hexdigest()
        data_path, sum_path = self._paths(entry.key)
        with self._lock:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            for path, content in ((data_path, raw), (sum_path, digest.encode("utf-8"))):
                fd, tmp_name = tempfile.mkstemp(dir=self.cache_dir, prefix=".tmp-")
                try:
                    with os.fdopen(fd, "wb") as f:
                        f.write(content)
                    os.replace(tmp_name, path)
                except BaseException:
                    Path(tmp_name).unlink(missing_ok=True)
                    raise
        logger.debug("Stored %d traces under %s", len(entry.ells), data_path.name)

    def get_or_compute(
        self,
        curve: CurveQ,
        lo: int,
        hi: int,
        modulus: int = 1,
        settings: PointCountSettings = DEFAULT_SETTINGS,
        workers: int = 1,
    ) -> SweepCacheEntry:
        """Cached traces for [lo, hi); a corrupt entry is recomputed and overwritten."""
        try:
            entry = self.load(curve, lo, hi, modulus)
        except CorruptCacheEntry as e:
            logger.warning("Discarding corrupt cache entry: %s", e)
            entry = None
        if entry is not None:
            self.hits += 1
            return entry

        self.misses += 1
        ells = [
            int(ell)
            for ell in primes_in_range(lo, hi)
            if int(ell) % modulus == 1 % modulus and curve.delta % int(ell) != 0
        ]
        counts = point_counts(curve, ells, settings, workers)
        entry = SweepCacheEntry(
            a=curve.a,
            b=curve.b,
            lo=lo,
            hi=hi,
            modulus=modulus,
            ells=tuple(ells),
            traces=tuple(ell + 1 - count for ell, count in zip(ells, counts, strict=True)),
        )
        self.store(entry)
        return entry


def cache_get_or_compute(
    curve: CurveQ,
    ell_range: tuple[int, int],
    modulus: int = 1,
    cache_dir: Path | str | None = None,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> list[tuple[int, int]]:
    """(ℓ, a_ℓ) for the good primes ℓ ≡ 1 mod modulus in [lo, hi), through the cache."""
    lo, hi = ell_range
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi})")
    return SweepCache(cache_dir).get_or_compute(curve, lo, hi, modulus, settings, workers).pairs()
