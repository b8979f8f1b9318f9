"""Iwasawa bookkeeping: Kida's formula, Euler characteristic valuations, Tamagawa base change."""

import logging
from enum import StrEnum
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator
from sympy import multiplicity

from ec_core import (
    DEFAULT_SETTINGS,
    BadReduction,
    CurveQ,
    InputError,
    PointCountSettings,
    ReductionType,
    count_points,
    reduce_mod,
    reduction_type,
)
from extension_builder import CyclicCharacter, decompose_in_Linfty, frobenius_image
from records import CurveArithRecord

logger = logging.getLogger(__name__)


class UnsupportedReductionError(InputError):
    """Raised when a ramified prime's reduction type is needed but not known."""

    def __init__(self, primes: list[int]):
        super().__init__(f"reduction type unavailable at ramified primes {primes}; ingest reduction_types")
        self.primes = primes


class IwasawaInvariants(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    mu: int = Field(..., ge=0)
    lambda_: int = Field(..., ge=0, alias="lambda")

    @classmethod
    def from_trivial_euler_characteristic(cls, rank: int) -> Self:
        """χ_t = 1 forces μ = 0 and λ = rank."""
        return cls(mu=0, lambda_=rank)


class KidaInput(BaseModel):
    """Inputs of Kida's formula for a cyclic p-extension L of degree pⁿ."""

    model_config = ConfigDict(frozen=True)

    degree: int = Field(..., ge=1)
    lambda_base: int = Field(..., ge=0)
    P1_e: tuple[int, ...] = ()
    P2_e: tuple[int, ...] = ()

    @model_validator(mode="after")
    def check_indices(self) -> Self:
        for e in (*self.P1_e, *self.P2_e):
            if e < 1 or self.degree % e:
                raise ValueError(f"ramification index {e} must be a positive divisor of {self.degree}")
        return self

    @property
    def is_unramified_contribution(self) -> bool:
        return not self.P1_e and not self.P2_e


def kida_lambda(kida: KidaInput) -> int:
    """λ_p(E/L) = [L:Q]·λ_p(E/Q) + Σ_{P1}(e − 1) + 2·Σ_{P2}(e − 1), assuming μ_p(E/Q) = 0."""
    return (
        kida.degree * kida.lambda_base
        + sum(e - 1 for e in kida.P1_e)
        + 2 * sum(e - 1 for e in kida.P2_e)
    )


def kida_multisets(
    curve: CurveQ,
    chi: CyclicCharacter,
    p: int,
    reduction_types: dict[int, ReductionType] | None = None,
    settings: PointCountSettings = DEFAULT_SETTINGS,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """
    Sort the ramified primes of L into the two Kida sums.

    A ramified prime of split multiplicative reduction feeds P1; a ramified
    prime of good reduction with p | #Ẽ(F_ℓ) feeds P2. Each contributes g copies
    of its ramification index, g counting the primes of L_∞ above it.
    Unramified primes have e = 1 and contribute nothing.

    Raises:
        UnsupportedReductionError: If a ramified bad prime has no usable reduction type
    """
    reduction_types = reduction_types or {}
    P1: list[int] = []
    P2: list[int] = []
    gaps: list[int] = []
    for ell in chi.ramified_primes():
        decomposition = decompose_in_Linfty(chi, ell, p)
        reduced = reduce_mod(curve, ell)
        if not isinstance(reduced, BadReduction):
            if count_points(reduced, settings=settings) % p == 0:
                P2.extend([decomposition.e] * decomposition.g)
            continue
        kind = reduction_types.get(ell) or reduction_type(curve, ell)
        if kind is ReductionType.MULTIPLICATIVE_SPLIT:
            P1.extend([decomposition.e] * decomposition.g)
        elif kind in (ReductionType.UNSUPPORTED, ReductionType.ADDITIVE):
            gaps.append(ell)
    if gaps:
        raise UnsupportedReductionError(gaps)
    return tuple(P1), tuple(P2)


def kida_input_from_extension(
    curve: CurveQ,
    record: CurveArithRecord,
    chi: CyclicCharacter,
    p: int,
    settings: PointCountSettings = DEFAULT_SETTINGS,
) -> KidaInput:
    """
    Kida input for L from the curve, its record and the character.

    λ_p(E/Q) comes from ingested Iwasawa data, else from the rank (μ = 0 and
    λ = rank whenever χ_t = 1).
    """
    P1, P2 = kida_multisets(curve, chi, p, record.reduction_types, settings)
    lambda_base = record.lambda_base(p)
    if lambda_base is None:
        lambda_base = record.rank
    return KidaInput(degree=chi.degree, lambda_base=lambda_base, P1_e=P1, P2_e=P2)


# --- Euler characteristic ----------------------------------------------------------------------


class EulerCharacteristic(BaseModel):
    """v_p of the truncated Euler characteristic, split into its four summands."""

    valuation: int = Field(..., ge=0)
    regulator: int = Field(..., ge=0)
    sha: int = Field(..., ge=0)
    tamagawa: int = Field(..., ge=0)
    local_torsion: int = Field(..., ge=0)
    conditional: bool = False
    missing: list[str] = Field(default_factory=list)

    @property
    def is_trivial(self) -> bool:
        return self.valuation == 0


def chi_t_valuation(regulator: int, sha: int, tamagawa: list[int], local_torsion: list[int]) -> int:
    """Sum of valuations: regulator + Ш + Σ v_p(c_v) + 2·Σ v_p(#Ẽ(κ_v)[p^∞])."""
    return regulator + sha + sum(tamagawa) + 2 * sum(local_torsion)


def euler_characteristic_valuation(
    record: CurveArithRecord,
    p: int,
    reduced_torsion: list[int],
    rank: int | None = None,
) -> EulerCharacteristic:
    """
    v_p(χ_t(Γ, E[p^∞])) over Q from a record.

    Args:
        record: Ingested invariants (Ш, Tamagawa numbers, regulator valuation)
        p: The prime
        reduced_torsion: #Ẽ(κ_v)[p^∞] for each v | p (orders, not valuations)
        rank: Mordell–Weil rank; defaults to the record's

    Missing inputs are counted as 0 and listed; the result is then conditional.
    """
    rank = record.rank if rank is None else rank
    missing: list[str] = []

    if rank == 0:
        regulator = 0
    elif p in record.regulator_valuation:
        regulator = record.regulator_valuation[p]
    else:
        regulator = 0
        missing.append("regulator_valuation")

    sha = record.sha_valuation(p)
    if sha is None:
        sha = 0
        missing.append("sha")

    missing_c = record.missing_tamagawa()
    if missing_c:
        missing.append(f"tamagawa at {missing_c}")
    tamagawa = [int(multiplicity(p, c)) for c in record.tamagawa.values()]
    local = [int(multiplicity(p, t)) for t in reduced_torsion]

    valuation = chi_t_valuation(regulator, sha, tamagawa, local)
    if missing:
        logger.info("Euler characteristic for %s at p=%d is conditional on %s", record.label, p, missing)
    return EulerCharacteristic(
        valuation=valuation,
        regulator=regulator,
        sha=sha,
        tamagawa=sum(tamagawa),
        local_torsion=2 * sum(local),
        conditional=bool(missing),
        missing=missing,
    )


def reduced_point_count(a_p: int, p: int, k: int) -> int:
    """#Ẽ(F_{p^k}) from the trace at p via s_k = a·s_{k−1} − p·s_{k−2}."""
    if k < 1:
        raise InputError("extension degree must be positive")
    s_prev, s_curr = 2, a_p
    for _ in range(k - 1):
        s_prev, s_curr = s_curr, a_p * s_curr - p * s_prev
    return p**k + 1 - s_curr


def reduced_torsion_valuation(a_p: int, p: int, k: int) -> int:
    """v_p(#Ẽ(F_{p^k})), i.e. the exponent of the p-primary part."""
    return int(multiplicity(p, reduced_point_count(a_p, p, k)))


def local_torsion_over_extension(chi: CyclicCharacter, a_p: int) -> list[int]:
    """
    #Ẽ(κ_v)[p^∞] for each prime v | p of L.

    p is unramified in L; its residue degree f is the order of χ(p), and there
    are [L:Q]/f primes above it.
    """
    p = chi.p
    image = frobenius_image(chi, p)
    f = p ** (chi.n - int(multiplicity(p, image))) if image else 1
    count = chi.degree // f
    p_part = p ** reduced_torsion_valuation(a_p, p, f)
    return [p_part] * count


# --- validators --------------------------------------------------------------------------------


class MuLambdaVerdict(BaseModel):
    passed: bool
    detail: str


def mulambda_consistency(invariants: IwasawaInvariants, rank: int, chi_val: int) -> MuLambdaVerdict:
    """μ = 0 and λ = rank holds exactly when v_p(χ_t) = 0."""
    structural = invariants.mu == 0 and invariants.lambda_ == rank
    trivial_chi = chi_val == 0
    passed = structural == trivial_chi
    detail = f"(μ=0 ∧ λ=rank) is {structural}, χ_t=1 is {trivial_chi}"
    return MuLambdaVerdict(passed=passed, detail=detail)


class TamagawaVerdict(StrEnum):
    CERTIFIED = "certified"
    NO_CONCLUSION = "no_conclusion"


def tamagawa_base_change_check(c_val_Q: int, ramified: bool, reduction: ReductionType, p: int) -> TamagawaVerdict:
    """
    ∏_{v|ℓ} c_v^{(p)}(E/L) = 1 when c_ℓ^{(p)}(E/Q) = 1 and, if ℓ ramifies in L, E is good at ℓ.

    Raises:
        InputError: If p < 5
    """
    if p < 5:
        raise InputError("Tamagawa base change needs p ≥ 5")
    if c_val_Q != 0:
        return TamagawaVerdict.NO_CONCLUSION
    if ramified and reduction is not ReductionType.GOOD:
        return TamagawaVerdict.NO_CONCLUSION
    return TamagawaVerdict.CERTIFIED
