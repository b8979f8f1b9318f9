"""
Integration tests: full pipeline from records file → certificate JSON → verification.

These drive run_command end to end with real point counts, the real sweep cache
on disk and real config loading. Only point_counts is spied on, to see which
sweeps reach the cache.
"""

import csv
import json
import logging
from pathlib import Path

import pytest

import logging_config
import sweep_cache
from app import EXIT_OK, EXIT_WITHHELD, run_command
from stability_engine import canonical_digest

RECORDS_PATH = Path(__file__).resolve().parent.parent / "data" / "records.jsonl"

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _certify(out: Path, *extra: str, command: str = "certify") -> int:
    return run_command(
        [command, "--records", str(RECORDS_PATH), "--curve", "14a1", "--p", "13", "--out", str(out), *extra]
    )


def _failed_items(capsys) -> list[str]:
    report = json.loads(capsys.readouterr().out)
    return [item["name"] for item in report["items"] if not item["passed"]]


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(autouse=True)
def workspace(monkeypatch, tmp_path):
    """Empty working directory; logs and cache stay under tmp_path."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CONFIG_PATH", raising=False)
    monkeypatch.setenv("ECSTAB_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setattr(logging_config, "LOG_DIR", tmp_path / "logs")
    monkeypatch.setattr(logging_config, "LOG_FILE", tmp_path / "logs" / "ec-stability.log")
    yield tmp_path
    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        handler.close()
        root_logger.removeHandler(handler)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


class TestCertificateRoundTrip:
    """certify → file → verify, untouched and tampered."""

    @pytest.mark.integration
    def test_stability_certificate_verifies(self, workspace, capsys):
        """X_0(14) at p = 13 with 2 and 7 split: every conclusion asserted and re-checkable."""
        out = workspace / "cert.json"
        assert _certify(out, "--split", "2,7") == EXIT_OK
        certificate = json.loads(out.read_text())
        assert certificate["kind"] == "stability"
        assert all(c["asserted"] for c in certificate["conclusions"])

        assert run_command(["verify", str(out)]) == EXIT_OK
        assert _failed_items(capsys) == []

    @pytest.mark.integration
    def test_resealed_tampering_is_caught(self, workspace, capsys):
        """Swapping a chosen prime and recomputing the digest still fails."""
        out = workspace / "cert.json"
        assert _certify(out, "--split", "2,7") == EXIT_OK
        payload = json.loads(out.read_text())
        payload["chosen_primes"][0] += 26
        payload["digest"] = canonical_digest(payload)
        out.write_text(json.dumps(payload))

        assert run_command(["verify", str(out)]) == EXIT_WITHHELD
        failed = _failed_items(capsys)
        assert "digest" not in failed
        assert "chosen_primes" in failed

    @pytest.mark.integration
    def test_growth_certificate_verifies(self, workspace, capsys):
        """A mode-T modulus gives a growth certificate that verifies."""
        out = workspace / "growth.json"
        assert _certify(out, "--budget", "100000", command="growth") == EXIT_OK
        certificate = json.loads(out.read_text())
        assert certificate["kind"] == "growth"
        assert certificate["kida"]["lambda_L"] > 0

        assert run_command(["verify", str(out)]) == EXIT_OK
        assert _failed_items(capsys) == []

    @pytest.mark.integration
    def test_records_path_from_config_file(self, workspace, monkeypatch):
        """records_path set through ${VAR} interpolation replaces --records."""
        (workspace / "config.yml").write_text("records_path: ${EC_RECORDS_PATH}\nworkers: 1\n")
        monkeypatch.setenv("EC_RECORDS_PATH", str(RECORDS_PATH))
        out = workspace / "cert.json"

        code = run_command(
            ["--config", "config.yml", "certify", "--curve", "14a1", "--p", "11", "--split", "2", "--out", str(out)]
        )

        assert code == EXIT_WITHHELD
        assert json.loads(out.read_text())["label"] == "14a1"


# ---------------------------------------------------------------------------
# Density sweeps
# ---------------------------------------------------------------------------


class TestDensityPipeline:
    """density → sweep cache → CSV and SVG."""

    @pytest.mark.integration
    def test_second_sweep_reads_the_cache(self, workspace, mocker):
        """The same sweep twice counts points only once."""
        spy = mocker.spy(sweep_cache, "point_counts")
        args = ["density", "--ab", "5805,-285714", "--p", "13", "--sweep", "5000"]

        assert run_command([*args, "--csv", str(workspace / "first.csv")]) == EXIT_OK
        second = [*args, "--csv", str(workspace / "second.csv"), "--svg", str(workspace / "plot.svg")]
        assert run_command(second) == EXIT_OK

        assert spy.call_count == 1
        assert (workspace / "first.csv").read_text() == (workspace / "second.csv").read_text()
        assert (workspace / "plot.svg").read_text().lstrip().startswith("<?xml")
        assert any((workspace / "cache").glob("*.npz"))

    @pytest.mark.integration
    @pytest.mark.slow
    def test_chebotarev_density_from_the_cli(self, workspace):
        """y² = x³ + x + 1 at p = 5: within 10% of 19/96 at 10⁶, no worse than at 10⁵."""
        out = workspace / "density.csv"
        args = ["density", "--ab", "1,1", "--p", "5", "--sweep", "100000,1000000", "--csv", str(out)]
        assert run_command(args) == EXIT_OK
        with out.open(newline="") as f:
            coarse, fine = csv.DictReader(f)
        assert float(fine["reference"]) == pytest.approx(19 / 96)
        assert float(fine["rel_error"]) < 0.10
        assert float(fine["rel_error"]) <= max(float(coarse["rel_error"]), 0.02)
