"""Shared fixtures: the bundled curve records."""

from pathlib import Path

import pytest

from records import CurveArithRecord, IngestReport, ingest_records

RECORDS_PATH = Path(__file__).resolve().parent.parent / "data" / "records.jsonl"


@pytest.fixture(scope="session")
def bundled_records() -> IngestReport:
    return ingest_records(RECORDS_PATH)


@pytest.fixture
def record_14a1(bundled_records: IngestReport) -> CurveArithRecord:
    """X_0(14): rank 0, torsion 6, Tamagawa 2 at 2 and 3 at 7."""
    return bundled_records.get("14a1")


@pytest.fixture
def record_37a1(bundled_records: IngestReport) -> CurveArithRecord:
    """The rank-one curve of conductor 37."""
    return bundled_records.get("37a1")
