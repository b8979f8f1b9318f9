"""Curve arithmetic records: the JSON-lines wire format and its validated domain form."""

import json
import logging
from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from sympy import factorint, isprime, multiplicity

from ec_core import CurveQ, ReductionType, is_minimal

logger = logging.getLogger(__name__)


class Provenance(StrEnum):
    INGESTED = "ingested"
    ASSUMED = "assumed"
    COMPUTED = "computed"


class IwasawaEntry(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    mu: int = Field(..., ge=0)
    lambda_: int = Field(..., ge=0, alias="lambda")


def _check_prime_keys(value: dict[int, int]) -> dict[int, int]:
    for ell in value:
        if not isprime(ell):
            raise ValueError(f"key {ell} is not prime")
    return value


class CurveArithRecord(BaseModel):
    """
    Invariants of E/Q that cannot be computed at the desk: rank, Ш, Tamagawa
    numbers, regulator valuations, and optionally Iwasawa data.

    Absent optional fields are not errors; they turn downstream verdicts conditional.
    """

    model_config = ConfigDict(frozen=True)

    label: str = Field(..., min_length=1)
    a: int
    b: int
    rank: int = Field(..., ge=0)
    torsion_order: int = Field(..., ge=1)
    conductor: int | None = Field(None, ge=1)
    sha_order: int | None = Field(None, ge=1)
    sha_p_valuation: dict[int, int] = Field(default_factory=dict)
    tamagawa: dict[int, int] = Field(default_factory=dict)
    regulator_valuation: dict[int, int] = Field(default_factory=dict)
    reduction_types: dict[int, ReductionType] = Field(default_factory=dict)
    iwasawa: dict[int, IwasawaEntry] = Field(default_factory=dict)
    nonmaximal_primes: list[int] | None = None
    provenance: dict[str, Provenance] = Field(default_factory=dict)
    source: str = ""

    @field_validator("sha_p_valuation")
    @classmethod
    def check_sha_valuations(cls, v: dict[int, int]) -> dict[int, int]:
        if any(val < 0 for val in v.values()):
            raise ValueError("Ш valuations must be nonnegative")
        return _check_prime_keys(v)

    @field_validator("tamagawa")
    @classmethod
    def check_tamagawa(cls, v: dict[int, int]) -> dict[int, int]:
        if any(c < 1 for c in v.values()):
            raise ValueError("Tamagawa numbers must be positive")
        return _check_prime_keys(v)

    @field_validator("regulator_valuation")
    @classmethod
    def check_regulator_keys(cls, v: dict[int, int]) -> dict[int, int]:
        return _check_prime_keys(v)

    @property
    def curve(self) -> CurveQ:
        return CurveQ(a=self.a, b=self.b)

    def sha_valuation(self, p: int) -> int | None:
        """v_p(#Ш(E/Q)): an explicit entry wins, else derived from sha_order, else unknown."""
        if p in self.sha_p_valuation:
            return self.sha_p_valuation[p]
        if self.sha_order is not None:
            return int(multiplicity(p, self.sha_order))
        return None

    def bad_primes(self) -> tuple[list[int], bool]:
        """
        Bad primes and whether they are exact.

        From the conductor when ingested; otherwise from the model discriminant,
        which can overcount 2 and 3.
        """
        if self.conductor is not None:
            return sorted(factorint(self.conductor)), True
        return self.curve.bad_primes(), False

    def missing_tamagawa(self) -> list[int]:
        primes, _ = self.bad_primes()
        return [ell for ell in primes if ell not in self.tamagawa]

    def lambda_base(self, p: int) -> int | None:
        entry = self.iwasawa.get(p)
        return entry.lambda_ if entry else None

    def mu_base(self, p: int) -> int | None:
        entry = self.iwasawa.get(p)
        return entry.mu if entry else None


class CurveRecordLine(BaseModel):
    """One line of a records file, as written by dataset exports."""

    model_config = ConfigDict(extra="allow")

    label: str = Field(..., min_length=1)
    a: int
    b: int
    rank: int = Field(..., ge=0)
    torsion_order: int = Field(..., ge=1)
    conductor: int | None = None
    sha_order: int | None = None
    tamagawa: dict[int, int] = Field(default_factory=dict)
    reg_valuation: dict[int, int] | None = None
    reduction_types: dict[int, ReductionType] | None = None
    iwasawa: dict[int, IwasawaEntry] | None = None
    nonmaximal_primes: list[int] | None = None
    source: str = ""

    def to_record(self) -> CurveArithRecord:
        """Validate the model and convert to the domain record, tagging what was ingested."""
        curve = CurveQ(a=self.a, b=self.b)
        if not is_minimal(curve):
            raise ValueError(f"model (a, b) = ({self.a}, {self.b}) is not minimal")

        provenance = {"rank": Provenance.INGESTED, "torsion_order": Provenance.INGESTED}
        for name in ("conductor", "sha_order", "reg_valuation", "reduction_types", "iwasawa", "nonmaximal_primes"):
            if getattr(self, name) is not None:
                provenance[name] = Provenance.INGESTED
        if self.tamagawa:
            provenance["tamagawa"] = Provenance.INGESTED

        return CurveArithRecord(
            label=self.label,
            a=self.a,
            b=self.b,
            rank=self.rank,
            torsion_order=self.torsion_order,
            conductor=self.conductor,
            sha_order=self.sha_order,
            tamagawa=self.tamagawa,
            regulator_valuation=self.reg_valuation or {},
            reduction_types=self.reduction_types or {},
            iwasawa=self.iwasawa or {},
            nonmaximal_primes=self.nonmaximal_primes,
            provenance=provenance,
            source=self.source,
        )


class LineError(BaseModel):
    line: int
    message: str


class IngestReport(BaseModel):
    records: dict[str, CurveArithRecord] = Field(default_factory=dict)
    errors: list[LineError] = Field(default_factory=list)

    def get(self, label: str) -> CurveArithRecord:
        try:
            return self.records[label]
        except KeyError:
            raise KeyError(f"no record with label '{label}'") from None


def _format_validation_error(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(x) for x in err['loc'])}: {err['msg']}" if err["loc"] else err["msg"] for err in error.errors()
    )


def parse_record_line(text: str) -> CurveArithRecord:
    """Parse one JSON line; raises ValueError with a concise message on any problem."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid JSON: {e.msg}") from None
    if not isinstance(payload, dict):
        raise ValueError("each line must be a JSON object")
    try:
        return CurveRecordLine.model_validate(payload).to_record()
    except ValidationError as e:
        raise ValueError(_format_validation_error(e)) from None


def ingest_records(path: str | Path) -> IngestReport:
    """
    Load a JSON-lines record file.

    Malformed lines are collected with their line numbers and skipped; valid
    lines are kept. A repeated label replaces the earlier record with a warning.

    Raises:
        FileNotFoundError: If the file doesn't exist
    """
    record_file = Path(path)
    if not record_file.exists():
        raise FileNotFoundError(f"Records file not found: {path}")

    report = IngestReport()
    with record_file.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = parse_record_line(line)
            except ValueError as e:
                logger.warning("Skipping %s line %d: %s", record_file.name, line_no, e)
                report.errors.append(LineError(line=line_no, message=str(e)))
                continue
            if record.label in report.records:
                logger.warning("Duplicate label '%s' on line %d replaces the earlier record", record.label, line_no)
            report.records[record.label] = record

    logger.info("Ingested %d records (%d rejected lines) from %s", len(report.records), len(report.errors), path)
    return report
