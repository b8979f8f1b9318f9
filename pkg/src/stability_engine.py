"""Stability criteria and certificates: Q1/Q2, admissible primes, P_E verdicts, certificates."""

import hashlib
import json
import logging
from collections.abc import Iterator
from enum import StrEnum
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, computed_field
from sympy import isprime, multiplicity

from ec_core import (
    DEFAULT_SETTINGS,
    BadReduction,
    CurveQ,
    InputError,
    PointCountSettings,
    ReductionType,
    count_points,
    irreducibility_certificate,
    is_good_ordinary,
    reduce_mod,
)
from extension_builder import CheckItem, CyclicCharacter, build_split_extension, verify_extension
from iwasawa_calc import (
    TamagawaVerdict,
    UnsupportedReductionError,
    kida_input_from_extension,
    kida_lambda,
    kida_multisets,
    local_torsion_over_extension,
    tamagawa_base_change_check,
)
from prime_sweep import point_counts, primes_in_progression
from records import CurveArithRecord

logger = logging.getLogger(__name__)

DEFAULT_PRIME_BUDGET = 1_000_000
DEFAULT_IRREDUCIBILITY_BOUND = 1_000
MORDELL_WEIL_MIN_P = 11
SHA_FINITE_FLAG = "Ш(E/Q) finite (standing assumption)"

type Mode = Literal["S", "T"]


class CheckStatus(StrEnum):
    PASS = "pass"
    FAIL = "fail"
    ASSUMED = "assumed"


class Condition(BaseModel):
    name: str
    status: CheckStatus
    evidence: str = ""


class SearchStats(BaseModel):
    mode: Mode
    window_lo: int
    window_hi: int
    examined: int = 0
    rejected_bad_reduction: int = 0
    rejected_count: int = 0
    skipped_sigma: int = 0


class PrimeBudgetExhausted(RuntimeError):
    """Raised when too few admissible primes exist below the prime budget."""

    def __init__(self, message: str, stats: SearchStats):
        super().__init__(message)
        self.stats = stats


class PrimeSets(BaseModel):
    """Q1 (bad primes ≠ p) and Q2 (good ℓ ≠ p with p | #Ẽ(F_ℓ), listed up to q2_bound)."""

    p: int
    Q1: list[int]
    Q2: list[int]
    q1_from_conductor: bool
    q2_bound: int
    q2_truncated: bool = True


class PEVerdict(BaseModel):
    """Per-condition evidence for p ∈ 𝒫_E; member means nothing failed."""

    p: int
    positive_rank: bool
    conditions: list[Condition]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def member(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.conditions)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def conditional(self) -> bool:
        return any(c.status is CheckStatus.ASSUMED for c in self.conditions)

    def condition(self, name: str) -> Condition:
        return next(c for c in self.conditions if c.name == name)

    def failures(self) -> list[str]:
        return [c.name for c in self.conditions if c.status is CheckStatus.FAIL]


class ScreenCondition(BaseModel):
    name: str
    holds: bool | None
    evidence: str = ""


class ExceptionalScreen(BaseModel):
    """Whether p can lie in the finite exceptional set; excluded means certified outside it."""

    p: int
    applicable: bool
    excluded: bool = False
    conditions: list[ScreenCondition] = Field(default_factory=list)
    reason: str = ""


class FamilyScreen(BaseModel):
    """Membership of a curve in the family of rank-0 curves that the density bound counts."""

    label: str
    p: int
    conditions: list[Condition]

    @property
    def in_family(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.conditions)

    @property
    def conditional(self) -> bool:
        return any(c.status is CheckStatus.ASSUMED for c in self.conditions)


class Conclusion(BaseModel):
    name: str
    statement: str
    asserted: bool
    withheld_reason: str | None = None


class KidaEvidence(BaseModel):
    P1_e: list[int] = Field(default_factory=list)
    P2_e: list[int] = Field(default_factory=list)
    lambda_base: int | None = None
    lambda_L: int | None = None
    gap: str | None = None


class _CertificateBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    a: int
    b: int
    p: int
    n: int
    sigma: list[int]
    chosen_primes: list[int]
    character: CyclicCharacter
    hypotheses: list[Condition]
    verdict: PEVerdict
    conclusions: list[Conclusion]
    assumption_flags: list[str]
    kida: KidaEvidence
    search: SearchStats
    digest: str = ""

    def conclusion(self, name: str) -> Conclusion:
        return next(c for c in self.conclusions if c.name == name)

    @property
    def all_asserted(self) -> bool:
        return all(c.asserted for c in self.conclusions)


class StabilityCertificate(_CertificateBase):
    kind: Literal["stability"] = "stability"
    local_torsion_valuation_L: int | None = None
    tamagawa_base_change: dict[int, TamagawaVerdict] = Field(default_factory=dict)


class GrowthCertificate(_CertificateBase):
    kind: Literal["growth"] = "growth"
    selmer_Q_trivial: bool


class NotApplicable(BaseModel):
    kind: Literal["not_applicable"] = "not_applicable"
    reason: str


Certificate = Annotated[StabilityCertificate | GrowthCertificate, Field(discriminator="kind")]
_CERTIFICATE_ADAPTER: TypeAdapter[StabilityCertificate | GrowthCertificate] = TypeAdapter(Certificate)


class VerificationReport(BaseModel):
    kind: str | None
    items: list[CheckItem]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)


class Assertion(StrEnum):
    CONFIRMED = "confirmed"
    REFUTED = "refuted"
    OPEN = "open"


class ExtensionRecord(BaseModel):
    """Whatever is known about E over a cyclic p-extension L."""

    degree: int = Field(..., ge=2)
    rank: int | None = Field(None, ge=0)
    regulator_valuation: int | None = None
    sha_p_valuation: int | None = Field(None, ge=0)


class TrichotomyReport(BaseModel):
    p: int
    rank_growth: Assertion
    regulator_drop: Assertion
    sha_growth: Assertion

    @computed_field  # type: ignore[prop-decorator]
    @property
    def inconsistent(self) -> bool:
        return self.rank_growth == self.regulator_drop == self.sha_growth == Assertion.REFUTED


# --- helpers -----------------------------------------------------------------------------------


def _require_odd_prime(p: int) -> None:
    if p < 3 or not isprime(p):
        raise InputError(f"p must be an odd prime, got {p}")


def canonical_digest(payload: dict[str, Any]) -> str:
    """sha256 over the canonical JSON body of a certificate, digest field excluded."""
    body = {key: value for key, value in payload.items() if key != "digest"}
    encoded = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


def _seal[C: (StabilityCertificate, GrowthCertificate)](certificate: C) -> C:
    payload = json.loads(certificate.model_dump_json())
    return certificate.model_copy(update={"digest": canonical_digest(payload)})


def _tri_state(value: bool | None) -> Assertion:
    if value is None:
        return Assertion.OPEN
    return Assertion.CONFIRMED if value else Assertion.REFUTED


# --- prime sets --------------------------------------------------------------------------------


def compute_Q1_Q2(
    curve: CurveQ,
    p: int,
    bound: int,
    record: CurveArithRecord | None = None,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> PrimeSets:
    """
    Q1 is complete; Q2 is infinite and only listed for ℓ ≤ bound.

    Bad primes come from the record's conductor when available, else from the
    model discriminant.
    """
    _require_odd_prime(p)
    if record is not None and record.conductor is not None:
        bad, exact = record.bad_primes()
    else:
        bad, exact = curve.bad_primes(), False
    Q1 = [ell for ell in bad if ell != p]

    candidates = [
        int(ell) for ell in primes_in_progression(1, 0, bound) if curve.delta % int(ell) != 0 and int(ell) != p
    ]
    counts = point_counts(curve, candidates, settings, workers)
    Q2 = [ell for ell, count in zip(candidates, counts, strict=True) if count % p == 0]
    return PrimeSets(p=p, Q1=Q1, Q2=Q2, q1_from_conductor=exact, q2_bound=bound)


def split_congruence_class(
    curve: CurveQ,
    p: int,
    n: int,
    x: int,
    lo: int = 2,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> tuple[list[int], list[int]]:
    """Primes lo ≤ ℓ ≤ x, ℓ ≡ 1 mod pⁿ, ℓ ∤ pΔ, split by p ∤ #Ẽ(F_ℓ) versus p | #Ẽ(F_ℓ)."""
    _require_odd_prime(p)
    if n < 1:
        raise InputError("n must be at least 1")
    candidates = [int(ell) for ell in primes_in_progression(p**n, 1, x, lo) if curve.delta % int(ell) != 0]
    counts = point_counts(curve, candidates, settings, workers)
    s_primes: list[int] = []
    t_primes: list[int] = []
    for ell, count in zip(candidates, counts, strict=True):
        (t_primes if count % p == 0 else s_primes).append(ell)
    return s_primes, t_primes


def enumerate_congruence_primes(
    curve: CurveQ,
    p: int,
    n: int,
    x: int,
    mode: Mode,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> list[int]:
    """Mode S: p ∤ #Ẽ(F_ℓ); mode T: p | #Ẽ(F_ℓ). Only primes ℓ ≡ 1 mod pⁿ are point-counted."""
    if mode not in ("S", "T"):
        raise InputError(f"mode must be S or T, got {mode!r}")
    s_primes, t_primes = split_congruence_class(curve, p, n, x, settings=settings, workers=workers)
    return s_primes if mode == "S" else t_primes


def _candidate_windows(modulus: int, lo: int, hi: int) -> Iterator[tuple[int, int]]:
    width = max(modulus * 64, 4_096)
    start = lo
    while start <= hi:
        stop = min(start + width, hi + 1)
        yield start, stop
        start = stop
        width *= 2


def _select_primes(
    curve: CurveQ,
    p: int,
    n: int,
    how_many: int,
    sigma: list[int],
    lo: int,
    hi: int,
    mode: Mode,
    settings: PointCountSettings,
    workers: int,
) -> tuple[list[int], SearchStats]:
    """Smallest-first admissible primes in [lo, hi]; raises PrimeBudgetExhausted when short."""
    modulus = p**n
    stats = SearchStats(mode=mode, window_lo=lo, window_hi=hi)
    chosen: list[int] = []
    excluded = set(sigma)
    for start, stop in _candidate_windows(modulus, lo, hi):
        candidates: list[int] = []
        for ell in (int(v) for v in primes_in_progression(modulus, 1, stop - 1, start)):
            stats.examined += 1
            if ell in excluded:
                stats.skipped_sigma += 1
            elif curve.delta % ell == 0:
                stats.rejected_bad_reduction += 1
            else:
                candidates.append(ell)
        counts = point_counts(curve, candidates, settings, workers)
        for ell, count in zip(candidates, counts, strict=True):
            admissible = (count % p != 0) if mode == "S" else (count % p == 0)
            if not admissible:
                stats.rejected_count += 1
                continue
            chosen.append(ell)
            if len(chosen) == how_many:
                logger.info("Selected %s from mode %s after examining %d primes", chosen, mode, stats.examined)
                return chosen, stats
    raise PrimeBudgetExhausted(
        f"only {len(chosen)} of {how_many} mode-{mode} primes ≡ 1 mod {modulus} found in [{lo}, {hi}]",
        stats,
    )


# --- verdicts ----------------------------------------------------------------------------------


def _irreducibility_condition(
    curve: CurveQ, p: int, record: CurveArithRecord, bound: int, settings: PointCountSettings
) -> Condition:
    certificate = irreducibility_certificate(curve, p, bound, settings)
    if certificate is not None:
        return Condition(
            name="e_p_irreducible",
            status=CheckStatus.PASS,
            evidence=f"x² − {certificate.a_ell}x + {certificate.ell} irreducible mod {p}",
        )
    if record.nonmaximal_primes is not None and p not in record.nonmaximal_primes:
        return Condition(name="e_p_irreducible", status=CheckStatus.PASS, evidence="ingested: mod-p image surjective")
    return Condition(name="e_p_irreducible", status=CheckStatus.ASSUMED, evidence=f"no witness below {bound}")


def check_PE_membership(
    curve: CurveQ,
    p: int,
    record: CurveArithRecord,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> PEVerdict:
    """
    Evidence for p ∈ 𝒫_E, condition by condition.

    Rank 0 uses: p odd, E[p] irreducible, good ordinary at p, p ∤ #Ш, p ∤ c_ℓ,
    p ∤ #Ẽ(F_p). Positive rank also needs the p-adic regulator to be a unit.
    Missing record fields give ASSUMED conditions, never a silent pass.
    """
    positive_rank = record.rank > 0
    names = ["p_odd", "e_p_irreducible", "good_ordinary", "sha", "tamagawa", "reduced_count"]
    if positive_rank:
        names.append("regulator")

    if p == 2 or not isprime(p):
        conditions = [Condition(name="p_odd", status=CheckStatus.FAIL, evidence=f"p = {p} is not an odd prime")]
        conditions += [
            Condition(name=name, status=CheckStatus.FAIL, evidence="not evaluated: p must be an odd prime")
            for name in names[1:]
        ]
        return PEVerdict(p=p, positive_rank=positive_rank, conditions=conditions)

    conditions = [Condition(name="p_odd", status=CheckStatus.PASS, evidence=f"p = {p}")]
    conditions.append(_irreducibility_condition(curve, p, record, irreducibility_bound, settings))

    ordinary = is_good_ordinary(curve, p, settings)
    conditions.append(
        Condition(
            name="good_ordinary",
            status=CheckStatus.PASS if ordinary else CheckStatus.FAIL,
            evidence=f"{ordinary.reason}" + (f", a_p = {ordinary.a_p}" if ordinary.a_p is not None else ""),
        )
    )

    sha = record.sha_valuation(p)
    if sha is None:
        conditions.append(Condition(name="sha", status=CheckStatus.ASSUMED, evidence="Ш order not ingested"))
    elif sha == 0:
        conditions.append(Condition(name="sha", status=CheckStatus.PASS, evidence="p ∤ #Ш"))
    else:
        conditions.append(Condition(name="sha", status=CheckStatus.FAIL, evidence=f"p | #Ш (v_p = {sha})"))

    bad, exact = record.bad_primes()
    divisible = [ell for ell, c in record.tamagawa.items() if ell != p and c % p == 0]
    missing = [ell for ell in bad if ell != p and ell not in record.tamagawa]
    source = "conductor" if exact else "discriminant"
    if divisible:
        conditions.append(Condition(name="tamagawa", status=CheckStatus.FAIL, evidence=f"p | c_ℓ at {divisible}"))
    elif missing:
        conditions.append(
            Condition(name="tamagawa", status=CheckStatus.ASSUMED, evidence=f"c_ℓ missing at {missing} ({source})")
        )
    else:
        conditions.append(Condition(name="tamagawa", status=CheckStatus.PASS, evidence=f"p ∤ c_ℓ for ℓ in {bad}"))

    if ordinary.a_p is None:
        conditions.append(Condition(name="reduced_count", status=CheckStatus.FAIL, evidence="bad reduction at p"))
    else:
        reduced = p + 1 - ordinary.a_p
        status = CheckStatus.FAIL if reduced % p == 0 else CheckStatus.PASS
        conditions.append(Condition(name="reduced_count", status=status, evidence=f"#Ẽ(F_p) = {reduced}"))

    if positive_rank:
        reg = record.regulator_valuation.get(p)
        if reg is None:
            conditions.append(Condition(name="regulator", status=CheckStatus.ASSUMED, evidence="not ingested"))
        else:
            status = CheckStatus.PASS if reg == 0 else CheckStatus.FAIL
            conditions.append(Condition(name="regulator", status=status, evidence=f"v_p(R_p) = {reg}"))

    verdict = PEVerdict(p=p, positive_rank=positive_rank, conditions=conditions)
    logger.debug(
        "P_E verdict for %s at p=%d: member=%s failures=%s", record.label, p, verdict.member, verdict.failures()
    )
    return verdict


def exceptional_set_screen(
    curve: CurveQ,
    p: int,
    record: CurveArithRecord,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> ExceptionalScreen:
    """
    p can lie in the exceptional set only if all four hold: p ≤ 5 or p | N;
    E[p] reducible; p | #Ш; #E(Q)_tors a power of p. Any one failing with
    evidence certifies p outside it.
    """
    if record.rank != 0:
        return ExceptionalScreen(p=p, applicable=False, reason="rank E(Q) ≠ 0")
    _require_odd_prime(p)

    if record.conductor is not None:
        divides_n, n_source = record.conductor % p == 0, "conductor"
    else:
        divides_n, n_source = curve.delta % p == 0, "discriminant"
    small_or_bad = ScreenCondition(
        name="p_small_or_bad", holds=p <= 5 or divides_n, evidence=f"p = {p}, p | N: {divides_n} ({n_source})"
    )

    irreducible = _irreducibility_condition(curve, p, record, irreducibility_bound, settings)
    reducible = ScreenCondition(
        name="e_p_reducible",
        holds=None if irreducible.status is CheckStatus.ASSUMED else False,
        evidence=irreducible.evidence,
    )

    sha = record.sha_valuation(p)
    sha_condition = ScreenCondition(
        name="p_divides_sha", holds=None if sha is None else sha > 0, evidence=f"v_p(#Ш) = {sha}"
    )

    torsion_p_power = record.torsion_order == p ** int(multiplicity(p, record.torsion_order))
    torsion = ScreenCondition(
        name="torsion_p_power", holds=torsion_p_power, evidence=f"#E(Q)_tors = {record.torsion_order}"
    )

    conditions = [small_or_bad, reducible, sha_condition, torsion]
    excluded = any(c.holds is False for c in conditions)
    return ExceptionalScreen(p=p, applicable=True, excluded=excluded, conditions=conditions)


def screen_for_average_stability(
    curve: CurveQ,
    p: int,
    record: CurveArithRecord,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> FamilyScreen:
    """Rank 0, E[p] irreducible, good at 2 and 3, good ordinary at p, and p ∈ 𝒫_E."""
    conditions = [
        Condition(
            name="rank_zero",
            status=CheckStatus.PASS if record.rank == 0 else CheckStatus.FAIL,
            evidence=f"rank {record.rank}",
        )
    ]
    verdict = check_PE_membership(curve, p, record, settings, irreducibility_bound)
    conditions.append(verdict.condition("e_p_irreducible"))

    if record.conductor is not None:
        bad_small = [q for q in (2, 3) if record.conductor % q == 0]
        status = CheckStatus.FAIL if bad_small else CheckStatus.PASS
        conditions.append(Condition(name="good_at_2_3", status=status, evidence=f"N = {record.conductor}"))
    else:
        known = {q: record.reduction_types.get(q) for q in (2, 3)}
        if any(kind is not None and kind is not ReductionType.GOOD for kind in known.values()):
            status = CheckStatus.FAIL
        elif all(kind is ReductionType.GOOD for kind in known.values()):
            status = CheckStatus.PASS
        else:
            status = CheckStatus.ASSUMED
        conditions.append(Condition(name="good_at_2_3", status=status, evidence="conductor not ingested"))

    conditions.append(verdict.condition("good_ordinary"))
    pe_status = CheckStatus.FAIL if not verdict.member else (
        CheckStatus.ASSUMED if verdict.conditional else CheckStatus.PASS
    )
    conditions.append(Condition(name="p_in_PE", status=pe_status, evidence=", ".join(verdict.failures())))
    return FamilyScreen(label=record.label, p=p, conditions=conditions)


# --- certificates ------------------------------------------------------------------------------


_ASSUMPTION_TEXT = {
    "e_p_irreducible": "E[p] irreducible assumed",
    "sha": "Ш[p^∞]=0 assumed",
    "tamagawa": "p ∤ c_ℓ assumed at primes without ingested Tamagawa numbers",
    "regulator": "p-adic regulator unit assumed",
}


def _assumption_flags(verdict: PEVerdict) -> list[str]:
    flags = [SHA_FINITE_FLAG]
    flags += [_ASSUMPTION_TEXT[c.name] for c in verdict.conditions if c.status is CheckStatus.ASSUMED]
    return flags


def _membership_hypothesis(verdict: PEVerdict) -> Condition:
    if not verdict.member:
        return Condition(name="pe_member", status=CheckStatus.FAIL, evidence=f"failed: {verdict.failures()}")
    status = CheckStatus.ASSUMED if verdict.conditional else CheckStatus.PASS
    return Condition(name="pe_member", status=status, evidence="p ∈ 𝒫_E")


def _kida_evidence(
    curve: CurveQ, record: CurveArithRecord, chi: CyclicCharacter, p: int, settings: PointCountSettings
) -> KidaEvidence:
    try:
        kida = kida_input_from_extension(curve, record, chi, p, settings)
    except UnsupportedReductionError as e:
        return KidaEvidence(gap=str(e))
    return KidaEvidence(
        P1_e=list(kida.P1_e), P2_e=list(kida.P2_e), lambda_base=kida.lambda_base, lambda_L=kida_lambda(kida)
    )


def _validate_request(p: int, n: int, sigma: list[int]) -> None:
    _require_odd_prime(p)
    if n < 1:
        raise InputError("n must be at least 1")
    for q in sigma:
        if not isprime(q):
            raise InputError(f"split set entry {q} is not prime")
    if len(set(sigma)) != len(sigma):
        raise InputError("split set has repeated primes")


def certify_stability(
    curve: CurveQ,
    p: int,
    n: int,
    sigma: list[int],
    record: CurveArithRecord,
    prime_budget: int = DEFAULT_PRIME_BUDGET,
    *,
    search_from: int = 2,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> StabilityCertificate:
    """
    Build a Z/pⁿZ-extension L in which sigma splits and E is stable, with evidence.

    Picks #sigma + 1 primes of mode S (smallest first, disjoint from sigma) in
    [search_from, prime_budget], builds the character, re-verifies it, and asserts
    rank E(L) = 0 and Ш(E/L)[p^∞] = 0 when every hypothesis holds; E(L) = E(Q)
    additionally needs p ≥ 11.

    Raises:
        InputError: On malformed p, n or sigma
        PrimeBudgetExhausted: If the prime budget holds too few admissible primes
    """
    _validate_request(p, n, sigma)
    verdict = check_PE_membership(curve, p, record, settings, irreducibility_bound)
    chosen, stats = _select_primes(
        curve, p, n, len(sigma) + 1, sigma, search_from, prime_budget, "S", settings, workers
    )
    chi = build_split_extension(sigma, chosen, p, n)
    checklist = verify_extension(chi, sigma, curve, p, settings, allowed_ramified=chosen)

    hypotheses = [
        Condition(name=item.name, status=CheckStatus.PASS if item.passed else CheckStatus.FAIL, evidence=item.detail)
        for item in checklist.items
    ]
    hypotheses.append(
        Condition(name="disjoint_from_Q_infinity", status=CheckStatus.PASS, evidence="p ∤ m, so p is unramified in L")
    )
    hypotheses.append(_membership_hypothesis(verdict))

    failed = [h.name for h in hypotheses if h.status is CheckStatus.FAIL]
    if failed:
        withheld: str | None = f"hypotheses failed: {failed}"
    elif record.rank != 0:
        withheld = "rank E(Q) > 0; see the positive-rank trichotomy"
    else:
        withheld = None
    mw_withheld = withheld or (None if p >= MORDELL_WEIL_MIN_P else f"p = {p} < {MORDELL_WEIL_MIN_P}")
    conclusions = [
        Conclusion(name="rank_zero", statement="rank E(L) = 0", asserted=withheld is None, withheld_reason=withheld),
        Conclusion(
            name="sha_p_trivial",
            statement="Ш(E/L)[p^∞] = 0",
            asserted=withheld is None,
            withheld_reason=withheld,
        ),
        Conclusion(
            name="mordell_weil_stable",
            statement="E(L) = E(Q)",
            asserted=mw_withheld is None,
            withheld_reason=mw_withheld,
        ),
    ]

    kida = _kida_evidence(curve, record, chi, p, settings)

    ordinary = verdict.condition("good_ordinary")
    local_valuation = None
    if ordinary.status is CheckStatus.PASS:
        a_p = p + 1 - count_points(reduce_mod(curve, p), settings=settings)  # type: ignore[arg-type]
        local_valuation = sum(int(multiplicity(p, t)) for t in local_torsion_over_extension(chi, a_p))

    base_change: dict[int, TamagawaVerdict] = {}
    if p >= 5:
        bad, _ = record.bad_primes()
        for ell in bad:
            if ell == p or ell not in record.tamagawa:
                continue
            base_change[ell] = tamagawa_base_change_check(
                int(multiplicity(p, record.tamagawa[ell])),
                ell in chi.ramified_primes(),
                record.reduction_types.get(ell, ReductionType.UNSUPPORTED),
                p,
            )

    certificate = StabilityCertificate(
        label=record.label,
        a=curve.a,
        b=curve.b,
        p=p,
        n=n,
        sigma=list(sigma),
        chosen_primes=chosen,
        character=chi,
        hypotheses=hypotheses,
        verdict=verdict,
        conclusions=conclusions,
        assumption_flags=_assumption_flags(verdict),
        kida=kida,
        search=stats,
        local_torsion_valuation_L=local_valuation,
        tamagawa_base_change=base_change,
    )
    logger.info(
        "Stability certificate for %s at p=%d n=%d: moduli=%s asserted=%s",
        record.label,
        p,
        n,
        chosen,
        [c.name for c in conclusions if c.asserted],
    )
    return _seal(certificate)


def selmer_growth_certificate(
    curve: CurveQ,
    p: int,
    n: int,
    sigma: list[int],
    record: CurveArithRecord,
    prime_budget: int = DEFAULT_PRIME_BUDGET,
    *,
    search_from: int = 2,
    settings: PointCountSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    irreducibility_bound: int = DEFAULT_IRREDUCIBILITY_BOUND,
) -> GrowthCertificate | NotApplicable:
    """
    Build L ramified only at primes ℓ ≡ 1 mod pⁿ of good reduction with p | #Ẽ(F_ℓ),
    sigma split, and conclude rank E(L) > 0 or Ш(E/L)[p^∞] ≠ 0.

    All #sigma + 1 moduli are drawn from mode T, so every ramified prime lies there.
    """
    if record.rank > 0:
        return NotApplicable(reason="rank E(Q) > 0; use positive_rank_trichotomy")
    _validate_request(p, n, sigma)
    verdict = check_PE_membership(curve, p, record, settings, irreducibility_bound)
    chosen, stats = _select_primes(
        curve, p, n, len(sigma) + 1, sigma, search_from, prime_budget, "T", settings, workers
    )
    chi = build_split_extension(sigma, chosen, p, n)
    hypotheses = _growth_hypotheses(chi, sigma, curve, p, settings, chosen)
    hypotheses.append(_membership_hypothesis(verdict))
    kida = _kida_evidence(curve, record, chi, p, settings)

    failed = [h.name for h in hypotheses if h.status is CheckStatus.FAIL]
    if failed:
        withheld: str | None = f"hypotheses failed: {failed}"
    elif not kida.lambda_L:
        withheld = "Kida λ over L is not positive"
    else:
        withheld = None

    flags = _assumption_flags(verdict)
    if n == 1 and p >= 7:
        flags.append(
            "conjectural: rank grows in only finitely many Z/pZ-extensions, so the growth is in Ш for almost all L"
        )

    certificate = GrowthCertificate(
        label=record.label,
        a=curve.a,
        b=curve.b,
        p=p,
        n=n,
        sigma=list(sigma),
        chosen_primes=chosen,
        character=chi,
        hypotheses=hypotheses,
        verdict=verdict,
        conclusions=[
            Conclusion(
                name="selmer_growth",
                statement="rank E(L) > 0 or Ш(E/L)[p^∞] ≠ 0",
                asserted=withheld is None,
                withheld_reason=withheld,
            )
        ],
        assumption_flags=flags,
        kida=kida,
        search=stats,
        selmer_Q_trivial=verdict.member,
    )
    logger.info("Growth certificate for %s at p=%d n=%d: moduli=%s", record.label, p, n, chosen)
    return _seal(certificate)


def _growth_hypotheses(
    chi: CyclicCharacter,
    sigma: list[int],
    curve: CurveQ,
    p: int,
    settings: PointCountSettings,
    chosen: list[int],
) -> list[Condition]:
    checklist = verify_extension(chi, sigma, curve, p, settings, allowed_ramified=chosen)
    hypotheses = [
        Condition(name=item.name, status=CheckStatus.PASS if item.passed else CheckStatus.FAIL, evidence=item.detail)
        for item in checklist.items
        if item.name != "avoids_Q1_Q2"
    ]
    bad = []
    in_t = []
    for ell in chi.ramified_primes():
        reduced = reduce_mod(curve, ell)
        if isinstance(reduced, BadReduction):
            bad.append(ell)
        elif count_points(reduced, settings=settings) % p == 0:
            in_t.append(ell)
    hypotheses.append(
        Condition(
            name="ramified_good",
            status=CheckStatus.FAIL if bad else CheckStatus.PASS,
            evidence=f"bad ramified primes: {bad}" if bad else "all ramified primes have good reduction",
        )
    )
    hypotheses.append(
        Condition(
            name="ramified_in_T",
            status=CheckStatus.PASS if in_t else CheckStatus.FAIL,
            evidence=f"p | #Ẽ(F_ℓ) at {in_t}",
        )
    )
    return hypotheses


def positive_rank_trichotomy(record_Q: CurveArithRecord, p: int, record_L: ExtensionRecord) -> TrichotomyReport:
    """
    For rank E(Q) > 0 and p ∈ 𝒫_E, at least one holds over any cyclic p-extension L:
    rank E(L) ≥ [L:Q]·rank E(Q); the regulator is a unit over Q but not over L;
    Ш(E/Q)[p^∞] = 0 and Ш(E/L)[p^∞] ≠ 0.
    """
    rank_growth = None if record_L.rank is None else record_L.rank >= record_L.degree * record_Q.rank

    reg_Q = record_Q.regulator_valuation.get(p)
    if reg_Q is not None and reg_Q != 0:
        regulator_drop: bool | None = False
    elif record_L.regulator_valuation is not None and record_L.regulator_valuation == 0:
        regulator_drop = False
    elif reg_Q is None or record_L.regulator_valuation is None:
        regulator_drop = None
    else:
        regulator_drop = True

    sha_Q = record_Q.sha_valuation(p)
    if sha_Q is not None and sha_Q != 0:
        sha_growth: bool | None = False
    elif record_L.sha_p_valuation is not None and record_L.sha_p_valuation == 0:
        sha_growth = False
    elif sha_Q is None or record_L.sha_p_valuation is None:
        sha_growth = None
    else:
        sha_growth = True

    report = TrichotomyReport(
        p=p,
        rank_growth=_tri_state(rank_growth),
        regulator_drop=_tri_state(regulator_drop),
        sha_growth=_tri_state(sha_growth),
    )
    if report.inconsistent:
        logger.warning("Data for %s at p=%d refutes all three growth assertions", record_Q.label, p)
    return report


# --- verification ------------------------------------------------------------------------------


def verify_certificate(
    payload: dict[str, Any] | str, settings: PointCountSettings = DEFAULT_SETTINGS
) -> VerificationReport:
    """
    Re-check a certificate from its JSON alone: digest, schema, the character
    against its split set and curve, prime conditions by fresh point counts,
    Kida multisets, and that conclusions are asserted only when allowed.
    """
    if isinstance(payload, str):
        payload = json.loads(payload)
    assert isinstance(payload, dict)

    items = [
        CheckItem(
            name="digest",
            passed=payload.get("digest") == canonical_digest(payload),
            detail="sha256 over the canonical body",
        )
    ]
    try:
        cert = _CERTIFICATE_ADAPTER.validate_python(payload)
    except ValidationError as e:
        items.append(CheckItem(name="schema", passed=False, detail=f"{e.error_count()} validation errors"))
        return VerificationReport(kind=payload.get("kind"), items=items)
    except ValueError as e:
        items.append(CheckItem(name="schema", passed=False, detail=str(e)))
        return VerificationReport(kind=payload.get("kind"), items=items)

    try:
        curve = CurveQ(a=cert.a, b=cert.b)
    except ValidationError as e:
        logger.warning("Certificate for %s carries an invalid curve (%d, %d)", cert.label, cert.a, cert.b)
        items.append(CheckItem(name="schema", passed=False, detail=f"curve: {e.errors()[0]['msg']}"))
        return VerificationReport(kind=cert.kind, items=items)
    chi = cert.character
    modulus = cert.p**cert.n
    items.append(
        CheckItem(
            name="chosen_primes",
            passed=(
                list(chi.moduli) == cert.chosen_primes
                and (chi.p, chi.n) == (cert.p, cert.n)
                and all(ell % modulus == 1 for ell in cert.chosen_primes)
                and not set(cert.chosen_primes) & set(cert.sigma)
            ),
            detail=f"moduli {list(chi.moduli)}",
        )
    )

    if isinstance(cert, StabilityCertificate):
        checks = verify_extension(chi, cert.sigma, curve, cert.p, settings, cert.chosen_primes).items
    else:
        checks = [
            CheckItem(name=h.name, passed=h.status is CheckStatus.PASS, detail=h.evidence)
            for h in _growth_hypotheses(chi, cert.sigma, curve, cert.p, settings, cert.chosen_primes)
        ]
    items.extend(checks)

    try:
        P1, P2 = kida_multisets(curve, chi, cert.p, settings=settings)
        kida_ok = sorted(P1) == sorted(cert.kida.P1_e) and sorted(P2) == sorted(cert.kida.P2_e)
        kida_detail = f"P1={list(P1)}, P2={list(P2)}"
    except UnsupportedReductionError as e:
        kida_ok, kida_detail = cert.kida.gap is not None, str(e)
    items.append(CheckItem(name="kida_multisets", passed=kida_ok, detail=kida_detail))

    recorded_failures = [h.name for h in cert.hypotheses if h.status is CheckStatus.FAIL]
    recomputed_ok = all(item.passed for item in checks)
    gating_errors = []
    for conclusion in cert.conclusions:
        if not conclusion.asserted:
            continue
        if recorded_failures or not recomputed_ok:
            gating_errors.append(conclusion.name)
        if conclusion.name == "mordell_weil_stable" and cert.p < MORDELL_WEIL_MIN_P:
            gating_errors.append(conclusion.name)
    items.append(
        CheckItem(
            name="conclusions_gated",
            passed=not gating_errors,
            detail=f"unsupported conclusions: {gating_errors}" if gating_errors else "",
        )
    )
    return VerificationReport(kind=cert.kind, items=items)
