"""Unit tests for sweep_cache module."""

import logging

import pytest
from pydantic import ValidationError

from ec_core import CurveQ
from sweep_cache import CorruptCacheEntry, SweepCache, SweepCacheEntry, cache_get_or_compute, cache_key

E11 = CurveQ(a=1, b=1)


class TestSweepCacheEntry:
    """Tests for the cached entry model."""

    @pytest.mark.unit
    def test_cache_key_format(self):
        """Key encodes the model, the modulus and the range."""
        assert cache_key(CurveQ(a=-16, b=16), 2, 1000, 3) == "a-16_b16_m3_2_1000"

    @pytest.mark.unit
    def test_hasse_violation_rejected(self):
        """a_7 = 6 exceeds 2√7."""
        with pytest.raises(ValidationError, match="Hasse"):
            SweepCacheEntry(a=1, b=1, lo=2, hi=10, ells=(7,), traces=(6,))

    @pytest.mark.unit
    def test_length_mismatch_rejected(self):
        """Every ℓ needs exactly one trace."""
        with pytest.raises(ValidationError, match="length"):
            SweepCacheEntry(a=1, b=1, lo=2, hi=10, ells=(5, 7), traces=(1,))


class TestSweepCache:
    """Tests for SweepCache reads, writes and recovery."""

    @pytest.mark.unit
    def test_miss_then_hit(self, tmp_path):
        """The first call computes and stores; the second reads the file."""
        cache = SweepCache(tmp_path)
        first = cache.get_or_compute(E11, 2, 50, 3)
        second = cache.get_or_compute(E11, 2, 50, 3)

        assert first == second
        assert first.ells == (7, 13, 19, 37, 43)
        assert dict(first.pairs())[7] == 3
        assert dict(first.pairs())[13] == -4
        assert (cache.misses, cache.hits) == (1, 1)
        assert (tmp_path / f"{first.key}.npz").exists()
        assert (tmp_path / f"{first.key}.sha256").exists()

    @pytest.mark.unit
    def test_absent_entry_loads_none(self, tmp_path):
        """Nothing stored means None, not an error."""
        assert SweepCache(tmp_path).load(E11, 2, 50, 3) is None

    @pytest.mark.unit
    def test_no_temporary_files_left(self, tmp_path):
        """Atomic writes leave only the data file and its checksum."""
        SweepCache(tmp_path).get_or_compute(E11, 2, 100)
        assert sorted(path.suffix for path in tmp_path.iterdir()) == [".npz", ".sha256"]

    @pytest.mark.unit
    def test_checksum_mismatch_raises(self, tmp_path):
        """Tampered bytes fail the sha256 check."""
        cache = SweepCache(tmp_path)
        entry = cache.get_or_compute(E11, 2, 50, 3)
        data_path = tmp_path / f"{entry.key}.npz"
        data_path.write_bytes(data_path.read_bytes()[:-1] + b"\x00")

        with pytest.raises(CorruptCacheEntry, match="checksum"):
            cache.load(E11, 2, 50, 3)

    @pytest.mark.unit
    def test_corrupt_entry_recomputed(self, tmp_path, caplog):
        """A corrupt file is discarded with a warning and rewritten."""
        cache = SweepCache(tmp_path)
        entry = cache.get_or_compute(E11, 2, 50, 3)
        (tmp_path / f"{entry.key}.sha256").write_text("0" * 64, encoding="utf-8")

        with caplog.at_level(logging.WARNING, logger="sweep_cache"):
            again = cache.get_or_compute(E11, 2, 50, 3)

        assert again == entry
        assert cache.misses == 2
        assert "corrupt" in caplog.text
        assert cache.load(E11, 2, 50, 3) == entry

    @pytest.mark.unit
    def test_stored_hasse_violation_is_corrupt(self, tmp_path):
        """A checksummed file whose traces break Hasse still counts as corrupt."""
        cache = SweepCache(tmp_path)
        entry = SweepCacheEntry(a=1, b=1, lo=2, hi=10, ells=(7,), traces=(3,))
        cache.store(entry)
        other = SweepCacheEntry.model_construct(a=1, b=1, lo=2, hi=10, modulus=1, ells=(7,), traces=(6,))
        cache.store(other)

        with pytest.raises(CorruptCacheEntry, match="Hasse"):
            cache.load(E11, 2, 10)

    @pytest.mark.unit
    def test_cache_dir_from_environment(self, tmp_path, monkeypatch):
        """ECSTAB_CACHE_DIR is used when no directory is given."""
        monkeypatch.setenv("ECSTAB_CACHE_DIR", str(tmp_path / "env-cache"))
        assert SweepCache().cache_dir == tmp_path / "env-cache"


class TestCacheGetOrCompute:
    """Tests for the functional wrapper."""

    @pytest.mark.unit
    def test_pairs_through_cache(self, tmp_path):
        """Pairs match the entry computed directly."""
        pairs = cache_get_or_compute(E11, (2, 50), 3, tmp_path)
        assert [ell for ell, _ in pairs] == [7, 13, 19, 37, 43]
        assert all(a_ell * a_ell <= 4 * ell for ell, a_ell in pairs)
        assert cache_get_or_compute(E11, (2, 50), 3, tmp_path) == pairs

    @pytest.mark.unit
    def test_empty_range(self, tmp_path):
        """lo == hi is an empty sweep."""
        assert cache_get_or_compute(E11, (100, 100), 1, tmp_path) == []

    @pytest.mark.unit
    def test_reversed_range_rejected(self, tmp_path):
        """hi < lo is an error."""
        with pytest.raises(ValueError, match="empty range"):
            cache_get_or_compute(E11, (50, 2), 1, tmp_path)
