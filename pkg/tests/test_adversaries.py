"""Adversaries: leak detection, per-cell attack behavior, both matrices."""

import hashlib

import pytest

from noncepipe.adversaries import (
    EXPECTED_FIDO2_CELLS,
    EXPECTED_MATRIX,
    FIDO2_ADVERSARIES,
    PASSWORD_ADVERSARIES,
    AttackScenario,
    evaluate_fido2_cells,
    evaluate_matrix,
    find_leaks,
    run_fido2_scenario,
    run_reflection_attack,
    run_scenario,
)
from noncepipe.pipeline import DefenseMode
from noncepipe.sites import generate_password


# ---------------------------------------------------------------------------
# leak detection
# ---------------------------------------------------------------------------


def test_find_leaks_verbatim():
    digests, leaked = find_leaks(["hunter2"], ["password=hunter2&x=1"])
    assert leaked is True
    assert digests == (hashlib.sha256(b"hunter2").hexdigest(),)


def test_find_leaks_form_encoded_shape():
    secret = "r4-eB=0n9L_H"  # '=' encodes, so verbatim match would miss it
    body = "username=alice&password=r4-eB%3D0n9L_H"
    assert secret not in body
    digests, leaked = find_leaks([secret], [body])
    assert leaked is True
    assert digests == (hashlib.sha256(secret.encode()).hexdigest(),)


def test_find_leaks_negative():
    assert find_leaks(["hunter2"], ["nothing to see", "pass=other"]) == ((), False)


def test_find_leaks_skips_empty_secret():
    assert find_leaks([""], ["anything"]) == ((), False)


def test_find_leaks_digests_sorted_and_deduplicated():
    secrets = ["zzz-secret", "aaa-secret"]
    observations = ["zzz-secret aaa-secret", "zzz-secret again"]
    digests, _ = find_leaks(secrets, observations)
    assert list(digests) == sorted(
        hashlib.sha256(s.encode()).hexdigest() for s in secrets
    )


# ---------------------------------------------------------------------------
# password adversary cells (canonical strategies)
# ---------------------------------------------------------------------------


def outcome_for(adversary: str, mode: DefenseMode, seed=21):
    return run_scenario(
        AttackScenario(
            name=f"{mode.value}/{adversary}",
            adversary=adversary,
            defense_mode=mode,
            seed=seed,
        )
    )


@pytest.mark.parametrize("adversary", PASSWORD_ADVERSARIES)
def test_baseline_leaks_to_every_adversary(adversary):
    assert outcome_for(adversary, DefenseMode.BASELINE).secret_leaked is True


def test_dom_defense_stops_observer_only():
    assert outcome_for("dom_observer", DefenseMode.DESIGN3_DOM).secret_leaked is False
    assert outcome_for("dom_exfiltrator", DefenseMode.DESIGN3_DOM).secret_leaked is True
    assert (
        outcome_for("webrequest_exfiltrator", DefenseMode.DESIGN3_DOM).secret_leaked is True
    )


def test_early_api_defense_still_leaks_to_webrequest():
    assert outcome_for("dom_observer", DefenseMode.DESIGN4_API_EARLY).secret_leaked is False
    assert outcome_for("dom_exfiltrator", DefenseMode.DESIGN4_API_EARLY).secret_leaked is False
    assert (
        outcome_for("webrequest_exfiltrator", DefenseMode.DESIGN4_API_EARLY).secret_leaked
        is True
    )


@pytest.mark.parametrize("adversary", PASSWORD_ADVERSARIES)
@pytest.mark.parametrize("mode", [DefenseMode.DESIGN5_API_LATE, DefenseMode.MANIFEST_V3])
def test_late_defenses_stop_every_adversary(adversary, mode):
    assert outcome_for(adversary, mode).secret_leaked is False


def test_outcome_reports_digests_never_the_secret():
    outcome = outcome_for("dom_observer", DefenseMode.BASELINE, seed=33)
    password = generate_password(33, "target")
    assert outcome.leaked_digests == (hashlib.sha256(password.encode()).hexdigest(),)
    assert password not in repr(outcome)
    assert all(password not in note for note in outcome.notes)


def test_unknown_adversary_rejected():
    with pytest.raises(KeyError):
        outcome_for("quantum_eavesdropper", DefenseMode.BASELINE)


# ---------------------------------------------------------------------------
# the matrix
# ---------------------------------------------------------------------------


def test_matrix_matches_expected_verdicts():
    report = evaluate_matrix(seed=9, strategies_per_cell=3)
    assert report.verdicts() == EXPECTED_MATRIX
    assert report.mismatches() == []


def test_matrix_mismatch_reporting():
    report = evaluate_matrix(
        seed=9, strategies_per_cell=1, modes=[DefenseMode.BASELINE]
    )
    doctored = {"baseline": {"dom_observer": "protected"}}
    (problem,) = report.mismatches(doctored)
    assert problem == "baseline/dom_observer: expected protected, got unprotected"
    missing = {"design5_api_late": {"dom_observer": "protected"}}
    assert report.mismatches(missing) == ["design5_api_late/dom_observer: missing"]


def test_matrix_json_and_text_shapes():
    report = evaluate_matrix(
        seed=9,
        strategies_per_cell=2,
        modes=[DefenseMode.BASELINE, DefenseMode.DESIGN5_API_LATE],
    )
    data = report.to_json()
    assert data["kind"] == "matrix"
    assert data["strategies_per_cell"] == 2
    cell = data["cells"]["baseline"]["dom_observer"]
    assert cell["verdict"] == "unprotected"
    assert cell["strategies"] == 2
    assert cell["leaks"] >= 1

    text = report.render_text()
    assert "security matrix" in text
    for adversary in PASSWORD_ADVERSARIES:
        assert adversary in text


def test_matrix_leak_counts_agree_with_verdicts():
    # protected cells must show zero leaks across every strategy variant;
    # unprotected cells need at least one (randomized variants may miss)
    report = evaluate_matrix(seed=9, strategies_per_cell=4)
    for cell in report.cells:
        expected = EXPECTED_MATRIX[cell.defense][cell.adversary]
        if expected == "protected":
            assert cell.leaks == 0
        else:
            assert 1 <= cell.leaks <= cell.strategies


# ---------------------------------------------------------------------------
# reflection
# ---------------------------------------------------------------------------


def test_reflection_retarget_without_pinning_leaks():
    outcome = run_reflection_attack(11, pinning=False, variant="retarget")
    assert outcome.secret_leaked is True
    assert "substitution_approved" in outcome.notes
    assert "verdict=reflected" in outcome.notes


def test_reflection_retarget_with_pinning_blocked_by_check3():
    outcome = run_reflection_attack(11, pinning=True, variant="retarget")
    assert outcome.secret_leaked is False
    assert "refused_by_check=3" in outcome.notes


def test_reflection_rename_blocked_by_field_check_without_pinning():
    outcome = run_reflection_attack(11, pinning=False, variant="rename")
    assert outcome.secret_leaked is False
    assert "refused_by_check=5" in outcome.notes


def test_reflection_rename_with_pinning_blocked_first_by_check3():
    outcome = run_reflection_attack(11, pinning=True, variant="rename")
    assert outcome.secret_leaked is False
    assert "refused_by_check=3" in outcome.notes  # ordered checks: pin fires first


def test_reflection_unknown_variant():
    with pytest.raises(ValueError):
        run_reflection_attack(11, pinning=True, variant="mirror")


# ---------------------------------------------------------------------------
# FIDO2 cells
# ---------------------------------------------------------------------------


def test_fido2_cells_match_expected():
    assert evaluate_fido2_cells(seed=5) == EXPECTED_FIDO2_CELLS


def test_fido2_dom_hijack_legacy_wins_everything():
    outcome = run_fido2_scenario("fido2_dom", defense_on=False, seed=5)
    assert outcome.attacker_registered is True
    assert outcome.attacker_login is True
    assert outcome.secret_leaked is True
    assert "attacker_finish=accepted" in outcome.notes


def test_fido2_dom_hijack_defended_fails_but_victim_logs_in():
    outcome = run_fido2_scenario("fido2_dom", defense_on=True, seed=5)
    assert outcome.attacker_registered is False
    assert outcome.attacker_login is False
    assert outcome.secret_leaked is False
    # the victim's own authentication still succeeded despite the hijack
    assert "victim_finish=accepted" in outcome.notes
    assert "attacker_finish=rejected:challenge_mismatch" in outcome.notes


def test_fido2_request_interception_legacy_replays():
    outcome = run_fido2_scenario("fido2_request", defense_on=False, seed=5)
    assert outcome.attacker_login is True
    assert "attacker_finish=accepted" in outcome.notes


def test_fido2_request_interception_defended_rejected():
    outcome = run_fido2_scenario("fido2_request", defense_on=True, seed=5)
    assert outcome.attacker_login is False
    assert outcome.attacker_registered is False
    assert "attacker_finish=rejected:challenge_mismatch" in outcome.notes


def test_fido2_unknown_adversary():
    with pytest.raises(ValueError):
        run_fido2_scenario("fido2_phisher", defense_on=True, seed=5)


def test_fido2_adversary_roster():
    assert FIDO2_ADVERSARIES == ("fido2_dom", "fido2_request")
    assert set(EXPECTED_FIDO2_CELLS) == {"legacy", "header_channel"}
