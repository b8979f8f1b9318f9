"""Unit tests for stability_engine module."""

import json

import pytest
from pydantic import ValidationError

from ec_core import CurveQ, InputError, ReductionType
from iwasawa_calc import TamagawaVerdict
from records import CurveArithRecord
from stability_engine import (
    SHA_FINITE_FLAG,
    Assertion,
    CheckStatus,
    ExtensionRecord,
    GrowthCertificate,
    NotApplicable,
    PrimeBudgetExhausted,
    StabilityCertificate,
    canonical_digest,
    certify_stability,
    check_PE_membership,
    compute_Q1_Q2,
    enumerate_congruence_primes,
    exceptional_set_screen,
    positive_rank_trichotomy,
    screen_for_average_stability,
    selmer_growth_certificate,
    split_congruence_class,
    verify_certificate,
)

E11 = CurveQ(a=1, b=1)


@pytest.fixture
def record_e11() -> CurveArithRecord:
    """y² = x³ + x + 1 with no conductor, so the Tamagawa number at 2 is missing."""
    return CurveArithRecord(
        label="e11",
        a=1,
        b=1,
        rank=0,
        torsion_order=1,
        sha_order=1,
        tamagawa={31: 1},
        reduction_types={31: ReductionType.MULTIPLICATIVE_NONSPLIT},
    )


@pytest.fixture(scope="module")
def stability_13(bundled_records) -> StabilityCertificate:
    record = bundled_records.get("14a1")
    return certify_stability(record.curve, 13, 1, [2, 7], record)


class TestPrimeSets:
    """Tests for Q1/Q2 and the congruence-class split."""

    @pytest.mark.unit
    def test_q1_from_discriminant(self):
        """Without a record, Q1 is read off the model and flagged inexact."""
        sets = compute_Q1_Q2(E11, 3, 50)
        assert sets.Q1 == [2, 31]
        assert not sets.q1_from_conductor
        assert {5, 13} <= set(sets.Q2)
        assert 7 not in sets.Q2
        assert all(ell <= 50 and ell not in (2, 3, 31) for ell in sets.Q2)

    @pytest.mark.unit
    def test_q1_from_conductor(self, record_14a1):
        """The conductor removes 3, which only divides the model discriminant."""
        sets = compute_Q1_Q2(record_14a1.curve, 13, 30, record_14a1)
        assert sets.Q1 == [2, 7]
        assert sets.q1_from_conductor

    @pytest.mark.unit
    def test_split_congruence_class(self):
        """#E(F_7) = 5 and #E(F_13) = 18 put 7 in S and 13 in T."""
        s_primes, t_primes = split_congruence_class(E11, 3, 1, 50)
        assert 7 in s_primes
        assert 13 in t_primes
        assert sorted(s_primes + t_primes) == [7, 13, 19, 37, 43]

    @pytest.mark.unit
    def test_enumerate_matches_split(self):
        """Mode S and mode T are the two halves of the split."""
        s_primes, t_primes = split_congruence_class(E11, 3, 1, 200)
        assert enumerate_congruence_primes(E11, 3, 1, 200, "S") == s_primes
        assert enumerate_congruence_primes(E11, 3, 1, 200, "T") == t_primes

    @pytest.mark.unit
    def test_enumerate_rejects_unknown_mode(self):
        """Only S and T are modes."""
        with pytest.raises(InputError, match="mode"):
            enumerate_congruence_primes(E11, 3, 1, 200, "U")  # type: ignore[arg-type]

    @pytest.mark.unit
    @pytest.mark.parametrize("p", [2, 9, 1])
    def test_requires_odd_prime(self, p):
        """p must be an odd prime."""
        with pytest.raises(InputError):
            compute_Q1_Q2(E11, p, 50)


class TestPEMembership:
    """Tests for check_PE_membership."""

    @pytest.mark.unit
    def test_member_at_13(self, record_14a1):
        """X_0(14) at 13: ordinary, a_13 = −4, every condition passes."""
        verdict = check_PE_membership(record_14a1.curve, 13, record_14a1)
        assert verdict.member
        assert not verdict.conditional
        assert verdict.condition("good_ordinary").evidence == "ordinary, a_p = -4"
        assert verdict.condition("reduced_count").evidence == "#Ẽ(F_p) = 18"
        assert [c.name for c in verdict.conditions] == [
            "p_odd",
            "e_p_irreducible",
            "good_ordinary",
            "sha",
            "tamagawa",
            "reduced_count",
        ]

    @pytest.mark.unit
    def test_membership_monotone_as_fields_arrive(self, record_14a1):
        """Filling in passing fields one at a time never turns a member into a non-member."""
        record = CurveArithRecord(label="14a1", a=record_14a1.a, b=record_14a1.b, rank=0, torsion_order=6)
        updates = [
            {"sha_order": 1},
            {"tamagawa": {2: 2, 7: 3}},
            {"conductor": 14},
            {"nonmaximal_primes": [2, 3]},
        ]
        verdicts = [check_PE_membership(record.curve, 13, record)]
        for update in updates:
            record = record.model_copy(update=update)
            verdicts.append(check_PE_membership(record.curve, 13, record))

        assert verdicts[0].conditional
        assert all(verdict.member for verdict in verdicts)
        assert not verdicts[-1].conditional

    @pytest.mark.unit
    def test_supersingular_at_11(self, record_14a1):
        """a_11 = 0, so 11 is not ordinary."""
        verdict = check_PE_membership(record_14a1.curve, 11, record_14a1)
        assert not verdict.member
        assert "good_ordinary" in verdict.failures()

    @pytest.mark.unit
    def test_tamagawa_and_reducible_at_3(self, record_14a1):
        """c_7 = 3 fails, and E[3] has no irreducibility witness."""
        verdict = check_PE_membership(record_14a1.curve, 3, record_14a1)
        assert {"tamagawa", "good_ordinary", "reduced_count"} <= set(verdict.failures())
        assert verdict.condition("e_p_irreducible").status is CheckStatus.ASSUMED

    @pytest.mark.unit
    @pytest.mark.parametrize("p", [2, 9])
    def test_non_odd_prime_fails_everything(self, record_14a1, p):
        """p = 2 and composite p fail every condition."""
        verdict = check_PE_membership(record_14a1.curve, p, record_14a1)
        assert not verdict.member
        assert all(c.status is CheckStatus.FAIL for c in verdict.conditions)

    @pytest.mark.unit
    def test_positive_rank_needs_regulator(self, record_37a1):
        """37a1 at 5 is a member conditional on the regulator."""
        verdict = check_PE_membership(record_37a1.curve, 5, record_37a1)
        assert verdict.positive_rank
        assert verdict.member
        assert verdict.conditional
        assert verdict.condition("regulator").status is CheckStatus.ASSUMED
        assert verdict.condition("good_ordinary").evidence == "ordinary, a_p = -2"

    @pytest.mark.unit
    def test_missing_tamagawa_is_assumed(self, record_e11):
        """A bad prime without an ingested c_ℓ is assumed, not passed."""
        verdict = check_PE_membership(E11, 5, record_e11)
        tamagawa = verdict.condition("tamagawa")
        assert tamagawa.status is CheckStatus.ASSUMED
        assert "[2]" in tamagawa.evidence
        assert verdict.member
        assert verdict.conditional


class TestScreens:
    """Tests for the exceptional-set and family screens."""

    @pytest.mark.unit
    def test_exceptional_screen_excludes_3(self, record_14a1):
        """Torsion 6 is not a power of 3 and 3 ∤ #Ш."""
        screen = exceptional_set_screen(record_14a1.curve, 3, record_14a1)
        assert screen.applicable
        assert screen.excluded
        holds = {c.name: c.holds for c in screen.conditions}
        assert holds == {
            "p_small_or_bad": True,
            "e_p_reducible": None,
            "p_divides_sha": False,
            "torsion_p_power": False,
        }

    @pytest.mark.unit
    def test_exceptional_screen_excludes_large_good_prime(self, record_14a1):
        """13 > 5 and 13 ∤ 14."""
        screen = exceptional_set_screen(record_14a1.curve, 13, record_14a1)
        assert screen.excluded
        assert screen.conditions[0].holds is False

    @pytest.mark.unit
    def test_exceptional_screen_positive_rank(self, record_37a1):
        """The screen is only defined for rank 0."""
        screen = exceptional_set_screen(record_37a1.curve, 5, record_37a1)
        assert not screen.applicable
        assert not screen.excluded

    @pytest.mark.unit
    def test_family_screen_bad_at_2(self, record_14a1):
        """Conductor 14 is even."""
        screen = screen_for_average_stability(record_14a1.curve, 13, record_14a1)
        assert not screen.in_family
        statuses = {c.name: c.status for c in screen.conditions}
        assert statuses["rank_zero"] is CheckStatus.PASS
        assert statuses["good_at_2_3"] is CheckStatus.FAIL
        assert statuses["p_in_PE"] is CheckStatus.PASS

    @pytest.mark.unit
    def test_family_screen_without_conductor(self, record_e11):
        """Unknown reduction at 2 and 3 keeps the curve in the family conditionally."""
        screen = screen_for_average_stability(E11, 5, record_e11)
        assert screen.in_family
        assert screen.conditional


class TestCertifyStability:
    """Tests for certify_stability."""

    @pytest.mark.unit
    def test_certificate_at_13(self, stability_13):
        """Splitting 2 and 7 over X_0(14) at p = 13 asserts every conclusion."""
        cert = stability_13
        assert cert.kind == "stability"
        assert len(cert.chosen_primes) == 3
        assert all(ell % 13 == 1 for ell in cert.chosen_primes)
        assert cert.chosen_primes == sorted(cert.chosen_primes)
        assert list(cert.character.moduli) == cert.chosen_primes
        assert all(h.status is CheckStatus.PASS for h in cert.hypotheses)
        assert cert.all_asserted
        assert cert.conclusion("mordell_weil_stable").statement == "E(L) = E(Q)"
        assert cert.assumption_flags == [SHA_FINITE_FLAG]
        assert (cert.kida.P1_e, cert.kida.P2_e, cert.kida.lambda_L) == ([], [], 0)
        assert cert.local_torsion_valuation_L == 0
        assert cert.tamagawa_base_change == {2: TamagawaVerdict.CERTIFIED, 7: TamagawaVerdict.CERTIFIED}

    @pytest.mark.unit
    def test_digest_seals_the_body(self, stability_13):
        """The digest is the canonical hash of everything else."""
        payload = json.loads(stability_13.model_dump_json())
        assert payload["digest"] == canonical_digest(payload)
        assert len(payload["digest"]) == 64

    @pytest.mark.unit
    def test_small_p_withholds_mordell_weil(self, record_e11):
        """p = 5 < 11 keeps E(L) = E(Q) unasserted; assumed conditions are flagged."""
        cert = certify_stability(E11, 5, 1, [2], record_e11)
        assert cert.conclusion("rank_zero").asserted
        assert cert.conclusion("sha_p_trivial").asserted
        mw = cert.conclusion("mordell_weil_stable")
        assert not mw.asserted
        assert mw.withheld_reason == "p = 5 < 11"
        assert any("Tamagawa" in flag or "c_ℓ" in flag for flag in cert.assumption_flags)
        assert cert.hypotheses[-1].status is CheckStatus.ASSUMED

    @pytest.mark.unit
    def test_failed_membership_withholds_everything(self, record_14a1):
        """A supersingular p leaves every conclusion unasserted."""
        cert = certify_stability(record_14a1.curve, 11, 1, [2], record_14a1)
        assert not any(c.asserted for c in cert.conclusions)
        assert "pe_member" in (cert.conclusion("rank_zero").withheld_reason or "")

    @pytest.mark.unit
    def test_disjoint_budgets_give_disjoint_ramification(self, record_14a1, stability_13):
        """Searching above the first certificate's primes yields a second, disjointly ramified L."""
        start = max(stability_13.chosen_primes) + 1
        second = certify_stability(record_14a1.curve, 13, 1, [2, 7], record_14a1, search_from=start)

        assert min(second.chosen_primes) >= start
        assert all(ell % 13 == 1 for ell in second.chosen_primes)
        first_ramified = set(stability_13.character.ramified_primes())
        assert first_ramified
        assert not first_ramified & set(second.character.ramified_primes())

    @pytest.mark.unit
    def test_budget_exhausted(self, record_14a1):
        """Only 53 is ≡ 1 mod 13 below 60."""
        with pytest.raises(PrimeBudgetExhausted) as exc_info:
            certify_stability(record_14a1.curve, 13, 1, [2, 7], record_14a1, prime_budget=60)
        assert exc_info.value.stats.examined == 1
        assert exc_info.value.stats.mode == "S"

    @pytest.mark.unit
    @pytest.mark.parametrize(
        ("p", "n", "sigma"),
        [(2, 1, [3]), (13, 0, [2]), (13, 1, [4]), (13, 1, [2, 2])],
    )
    def test_malformed_requests(self, record_14a1, p, n, sigma):
        """Malformed p, n or split sets raise InputError."""
        with pytest.raises(InputError):
            certify_stability(record_14a1.curve, p, n, sigma, record_14a1)


class TestVerifyCertificate:
    """Tests for verify_certificate."""

    @pytest.mark.unit
    def test_untouched_certificate_verifies(self, stability_13):
        """Every item passes on the emitted JSON."""
        report = verify_certificate(stability_13.model_dump_json())
        assert report.kind == "stability"
        assert report.passed, [i for i in report.items if not i.passed]
        assert {i.name for i in report.items} >= {
            "digest",
            "chosen_primes",
            "order_exact",
            "sigma_split",
            "avoids_Q1_Q2",
            "kida_multisets",
            "conclusions_gated",
        }

    @pytest.mark.unit
    def test_tampered_body_breaks_digest(self, stability_13):
        """Editing any field invalidates the digest."""
        payload = json.loads(stability_13.model_dump_json())
        payload["label"] = "15a1"
        report = verify_certificate(payload)
        assert not report.passed
        failed = {i.name for i in report.items if not i.passed}
        assert failed == {"digest"}

    @pytest.mark.unit
    def test_tampered_primes_are_caught(self, stability_13):
        """Chosen primes must be the character's moduli."""
        payload = json.loads(stability_13.model_dump_json())
        payload["chosen_primes"] = list(reversed(payload["chosen_primes"]))
        payload["digest"] = canonical_digest(payload)
        report = verify_certificate(payload)
        assert {i.name for i in report.items if not i.passed} == {"chosen_primes"}

    @pytest.mark.unit
    def test_unsupported_conclusion_is_caught(self, record_e11):
        """Asserting E(L) = E(Q) at p = 5 is rejected even with a fresh digest."""
        payload = json.loads(certify_stability(E11, 5, 1, [2], record_e11).model_dump_json())
        for conclusion in payload["conclusions"]:
            conclusion["asserted"] = True
        payload["digest"] = canonical_digest(payload)
        report = verify_certificate(payload)
        gated = next(i for i in report.items if i.name == "conclusions_gated")
        assert not gated.passed
        assert "mordell_weil_stable" in gated.detail

    @pytest.mark.unit
    def test_singular_curve_fails_schema(self, stability_13):
        """A resealed certificate with 4a³ + 27b² = 0 is reported, not raised."""
        payload = json.loads(stability_13.model_dump_json())
        payload["a"], payload["b"] = -3, 2
        payload["digest"] = canonical_digest(payload)
        report = verify_certificate(payload)
        assert not report.passed
        schema = next(i for i in report.items if i.name == "schema")
        assert not schema.passed
        assert "singular model" in schema.detail

    @pytest.mark.unit
    def test_unknown_kind_fails_schema(self, stability_13):
        """A payload that is not a certificate fails the schema item."""
        payload = json.loads(stability_13.model_dump_json())
        payload["kind"] = "bogus"
        report = verify_certificate(payload)
        assert not report.passed
        assert next(i for i in report.items if i.name == "schema").passed is False

    @pytest.mark.unit
    def test_canonical_digest_ignores_order_and_digest(self):
        """Key order and the digest field do not change the hash."""
        assert canonical_digest({"b": 1, "a": [2], "digest": "x"}) == canonical_digest({"a": [2], "b": 1})


class TestGrowthCertificate:
    """Tests for selmer_growth_certificate."""

    @pytest.mark.unit
    def test_positive_rank_not_applicable(self, record_37a1):
        """Rank 1 curves go through the trichotomy instead."""
        result = selmer_growth_certificate(record_37a1.curve, 5, 1, [], record_37a1)
        assert isinstance(result, NotApplicable)
        assert result.kind == "not_applicable"

    @pytest.mark.unit
    def test_growth_at_13(self, record_14a1):
        """A mode-T modulus makes Kida's λ over L positive."""
        cert = selmer_growth_certificate(record_14a1.curve, 13, 1, [], record_14a1, prime_budget=100_000)
        assert isinstance(cert, GrowthCertificate)
        assert cert.selmer_Q_trivial
        assert cert.search.mode == "T"
        statuses = {h.name: h.status for h in cert.hypotheses}
        assert statuses["ramified_good"] is CheckStatus.PASS
        assert statuses["ramified_in_T"] is CheckStatus.PASS
        assert "avoids_Q1_Q2" not in statuses
        assert cert.kida.P2_e and all(e == 13 for e in cert.kida.P2_e)
        assert cert.kida.lambda_L == 2 * 12 * len(cert.kida.P2_e)
        assert cert.conclusion("selmer_growth").asserted
        assert any(flag.startswith("conjectural") for flag in cert.assumption_flags)
        assert verify_certificate(cert.model_dump_json()).passed


class TestTrichotomy:
    """Tests for positive_rank_trichotomy."""

    @pytest.mark.unit
    def test_rank_growth_confirmed(self, record_37a1):
        """rank E(L) ≥ [L:Q]·rank E(Q) confirms the first branch; the rest stay open."""
        report = positive_rank_trichotomy(record_37a1, 5, ExtensionRecord(degree=5, rank=5))
        assert report.rank_growth is Assertion.CONFIRMED
        assert report.regulator_drop is Assertion.OPEN
        assert report.sha_growth is Assertion.OPEN
        assert not report.inconsistent

    @pytest.mark.unit
    def test_sha_growth_confirmed(self, record_37a1):
        """Ш trivial over Q and nontrivial over L."""
        report = positive_rank_trichotomy(record_37a1, 5, ExtensionRecord(degree=5, rank=1, sha_p_valuation=2))
        assert report.rank_growth is Assertion.REFUTED
        assert report.sha_growth is Assertion.CONFIRMED

    @pytest.mark.unit
    def test_all_refuted_is_inconsistent(self, record_37a1, caplog):
        """Refuting every branch flags the data as inconsistent."""
        data = ExtensionRecord(degree=5, rank=1, regulator_valuation=0, sha_p_valuation=0)
        report = positive_rank_trichotomy(record_37a1, 5, data)
        assert report.inconsistent
        assert "refutes all three" in caplog.text

    @pytest.mark.unit
    def test_extension_degree_at_least_two(self):
        """The trivial extension is rejected."""
        with pytest.raises(ValidationError):
            ExtensionRecord(degree=1)
