"""Batch command line: attack matrix, compatibility survey, FIDO2 demo.

Exit codes are fixed for CI scripting: 0 ok, 2 assertion mismatch, 64
usage error, 65 data format error. Every command takes a required --seed
and, given the same seed and inputs, writes byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .adversaries import (
    AttackOutcome,
    AttackScenario,
    FIDO2_ADVERSARIES,
    PASSWORD_ADVERSARIES,
    evaluate_matrix,
    run_fido2_scenario,
    run_reflection_attack,
    run_scenario,
)
from .adversaries import _out_of_band_finish
from .fido2 import AUTHENTICATION, Fido2Request
from .http_model import Origin
from .pipeline import DefenseMode
from .rng import derive_seed, substream
from .session import BrowserSession
from .sites import (
    CATEGORIES,
    CorpusFormatError,
    ServerFarm,
    SiteProfile,
    build_fixture_corpus,
    build_login_page,
    compat_evaluate,
    parse_corpus,
)

__all__ = ["EXIT_DATA", "EXIT_MISMATCH", "EXIT_OK", "EXIT_USAGE", "console_main", "main"]

EXIT_OK = 0
EXIT_MISMATCH = 2
EXIT_USAGE = 64
EXIT_DATA = 65

GOLDEN_DIR_ENV = "NONCEPIPE_GOLDEN_DIR"

DEFENSE_TOKENS = {
    "baseline": DefenseMode.BASELINE,
    "design3": DefenseMode.DESIGN3_DOM,
    "design4": DefenseMode.DESIGN4_API_EARLY,
    "design5": DefenseMode.DESIGN5_API_LATE,
    "manifest-v3": DefenseMode.MANIFEST_V3,
}


class ScenarioFormatError(ValueError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"scenario line {line_number}: {message}")
        self.line_number = line_number


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the CI convention reserves 2 for
    # assertion mismatches, so usage problems surface as 64 instead
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="noncepipe", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--seed", type=int, required=True, help="master RNG seed")
        sub.add_argument("--out", type=Path, default=None, help="directory for report files")
        sub.add_argument("--format", choices=("text", "json"), default="text")

    matrix = commands.add_parser("matrix", help="run the defense x adversary matrix")
    common(matrix)
    matrix.add_argument("--defense", choices=sorted(DEFENSE_TOKENS), default=None)
    matrix.add_argument("--scenarios", type=Path, default=None, help="custom scenario file")
    matrix.add_argument(
        "--strategies", type=int, default=100, help="attack strategies per matrix cell"
    )

    compat = commands.add_parser("compat", help="dual-run site compatibility survey")
    common(compat)
    compat.add_argument("--defense", choices=sorted(DEFENSE_TOKENS), default="design5")
    compat.add_argument("--corpus", type=Path, default=None, help="corpus file (TSV)")

    demo = commands.add_parser("fido2-demo", help="FIDO2 honest flows and attack cells")
    common(demo)
    demo.add_argument("--defense", choices=("on", "off"), default="on")
    demo.add_argument(
        "--replay", action="store_true", help="include the cloned-authenticator replay"
    )
    return parser


def golden_dir() -> Path:
    override = os.environ.get(GOLDEN_DIR_ENV)
    if override:
        return Path(override)
    return Path(__file__).parent / "golden"


def _emit(
    args: argparse.Namespace, stem: str, text: str, payload: dict
) -> None:
    rendered_json = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.format == "json":
        sys.stdout.write(rendered_json)
    else:
        sys.stdout.write(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{stem}.txt").write_text(text, encoding="utf-8")
        (args.out / f"{stem}.json").write_text(rendered_json, encoding="utf-8")


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


def _parse_options(text: str, line_number: int) -> dict[str, str]:
    options: dict[str, str] = {}
    if text == "-":
        return options
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ScenarioFormatError(line_number, f"bad option {item!r} (want key=value)")
        options[key] = value
    return options


def parse_scenarios(path: Path) -> list[tuple[str, str, str, dict[str, str]]]:
    """Parse a scenario file: name <TAB> adversary <TAB> defense <TAB> options.

    The defense column takes the matrix tokens for password adversaries and
    on/off for the FIDO2 ones. Options are '-' or comma-separated key=value.
    """
    rows: list[tuple[str, str, str, dict[str, str]]] = []
    known = set(PASSWORD_ADVERSARIES) | set(FIDO2_ADVERSARIES) | {"reflection"}
    for number, raw_line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw_line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 4:
            raise ScenarioFormatError(
                number, f"expected 4 tab-separated columns, got {len(columns)}"
            )
        name, adversary, defense, options_text = columns
        if adversary not in known:
            raise ScenarioFormatError(number, f"unknown adversary {adversary!r}")
        if adversary in FIDO2_ADVERSARIES:
            if defense not in ("on", "off"):
                raise ScenarioFormatError(number, "FIDO2 scenarios take defense on|off")
        elif defense not in DEFENSE_TOKENS:
            raise ScenarioFormatError(number, f"unknown defense {defense!r}")
        options = _parse_options(options_text, number)
        category = options.get("category", "plain_post")
        if category not in CATEGORIES:
            raise ScenarioFormatError(number, f"unknown category {category!r}")
        rows.append((name, adversary, defense, options))
    return rows


def _run_scenario_row(
    row: tuple[str, str, str, dict[str, str]], master_seed: int
) -> AttackOutcome:
    name, adversary, defense, options = row
    seed = derive_seed(master_seed, "scenario", name)
    if adversary in FIDO2_ADVERSARIES:
        return run_fido2_scenario(adversary, defense_on=defense == "on", seed=seed)
    if adversary == "reflection":
        return run_reflection_attack(
            seed,
            pinning=options.get("pinning", "on") == "on",
            variant=options.get("variant", "retarget"),
        )
    return run_scenario(
        AttackScenario(
            name=name,
            adversary=adversary,
            defense_mode=DEFENSE_TOKENS[defense],
            seed=seed,
            strategy_index=int(options.get("strategy", "0")),
            site_category=options.get("category", "plain_post"),
        )
    )


def _outcome_payload(outcome: AttackOutcome) -> dict:
    return {
        "scenario": outcome.scenario,
        "adversary": outcome.adversary,
        "defense": outcome.defense,
        "secret_leaked": outcome.secret_leaked,
        "leaked_digests": list(outcome.leaked_digests),
        "attacker_login": outcome.attacker_login,
        "attacker_registered": outcome.attacker_registered,
        "notes": list(outcome.notes),
    }


def _scenario_report(outcomes: list[AttackOutcome], seed: int) -> tuple[str, dict]:
    outcomes = sorted(outcomes, key=lambda o: o.scenario)
    lines = [f"scenario run (seed={seed})", ""]
    for outcome in outcomes:
        flags = []
        if outcome.secret_leaked:
            flags.append("leaked")
        if outcome.attacker_login:
            flags.append("attacker_login")
        if outcome.attacker_registered:
            flags.append("attacker_registered")
        status = ",".join(flags) if flags else "no_compromise"
        lines.append(f"{outcome.scenario:<44}{outcome.defense:<16}{status}")
    text = "\n".join(lines) + "\n"
    payload = {
        "kind": "scenarios",
        "seed": seed,
        "outcomes": [_outcome_payload(o) for o in outcomes],
    }
    return text, payload


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_matrix(args: argparse.Namespace) -> int:
    if args.scenarios is not None:
        try:
            rows = parse_scenarios(args.scenarios)
        except (ScenarioFormatError, OSError) as exc:
            print(f"noncepipe: {exc}", file=sys.stderr)
            return EXIT_DATA
        outcomes = [_run_scenario_row(row, args.seed) for row in rows]
        text, payload = _scenario_report(outcomes, args.seed)
        _emit(args, "scenarios", text, payload)
        return EXIT_OK

    modes = (
        [DEFENSE_TOKENS[args.defense]] if args.defense else list(DefenseMode)
    )
    report = evaluate_matrix(args.seed, strategies_per_cell=args.strategies, modes=modes)
    _emit(args, "matrix", report.render_text(), report.to_json())

    golden_path = golden_dir() / "matrix.json"
    try:
        golden = json.loads(golden_path.read_text(encoding="utf-8"))["cells"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"noncepipe: unreadable golden matrix {golden_path}: {exc}", file=sys.stderr)
        return EXIT_DATA
    mismatches = []
    for defense, row in report.verdicts().items():
        for adversary, verdict in row.items():
            expected = golden.get(defense, {}).get(adversary)
            if expected != verdict:
                mismatches.append(
                    f"{defense}/{adversary}: golden {expected}, computed {verdict}"
                )
    if mismatches:
        for line in sorted(mismatches):
            print(f"noncepipe: matrix mismatch: {line}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_compat(args: argparse.Namespace) -> int:
    if args.corpus is not None:
        try:
            profiles = parse_corpus(args.corpus)
        except (CorpusFormatError, OSError) as exc:
            print(f"noncepipe: {exc}", file=sys.stderr)
            return EXIT_DATA
    else:
        profiles = build_fixture_corpus()
    report = compat_evaluate(profiles, args.seed, DEFENSE_TOKENS[args.defense])
    _emit(args, "compat", report.render_text(), report.to_json())
    if not report.plain_differential_ok():
        print("noncepipe: plain_post differential mismatch", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def _honest_fido2_flows(seed: int, defense_on: bool) -> dict[str, str]:
    """Register then authenticate with no attacker present."""
    farm = ServerFarm(seed)
    profile = SiteProfile("rp", "fido2", Origin("https", "rp.example", 443))
    farm.add_site(profile, "unused-password", fido2_defense=defense_on)
    session = BrowserSession(
        seed, DefenseMode.DESIGN5_API_LATE, [], farm.serve, name="demo"
    )
    page, _ = build_login_page(session, profile)
    register = session.fido2_register(page, profile.origin, "alice")
    authenticate = session.fido2_authenticate(page, profile.origin, "alice")
    return {
        "register": register.verdict or "cancelled",
        "authenticate": authenticate.verdict or "cancelled",
    }


def _replay_demo(seed: int, defense_on: bool) -> str:
    """A cloned authenticator reuses a stale counter; the server notices."""
    farm = ServerFarm(seed)
    profile = SiteProfile("rp", "fido2", Origin("https", "rp.example", 443))
    state = farm.add_site(profile, "unused-password", fido2_defense=defense_on)
    session = BrowserSession(seed, DefenseMode.DESIGN5_API_LATE, [], farm.serve, name="demo")
    page, _ = build_login_page(session, profile)
    session.fido2_register(page, profile.origin, "alice")
    clone = session.device.clone("cloned-device", substream(seed, "clone"))
    session.fido2_authenticate(page, profile.origin, "alice")

    rp = state.rp
    assert rp is not None
    begin = rp.begin(AUTHENTICATION, "alice", 990_100)
    header = begin.header("webauthn_request")
    request_json = header if header is not None else begin.body.decode("utf-8")
    stale = clone.get_assertion(Fido2Request.from_json(request_json))
    return _out_of_band_finish(farm, profile.origin, stale.to_json())


def cmd_fido2_demo(args: argparse.Namespace) -> int:
    defense_on = args.defense == "on"
    honest = _honest_fido2_flows(derive_seed(args.seed, "honest"), defense_on)
    cells: dict[str, dict[str, bool]] = {}
    for adversary in FIDO2_ADVERSARIES:
        outcome = run_fido2_scenario(
            adversary, defense_on=defense_on, seed=derive_seed(args.seed, "demo", adversary)
        )
        cells[adversary] = {
            "registration_hijack": outcome.attacker_registered,
            "login_hijack": outcome.attacker_login,
            "secret_leaked": outcome.secret_leaked,
        }
    replay_verdict = _replay_demo(derive_seed(args.seed, "replay"), defense_on) if args.replay else None

    label = "on" if defense_on else "off"
    lines = [f"fido2 demo (defense={label}, seed={args.seed})", ""]
    lines.append(f"honest register:      {honest['register']}")
    lines.append(f"honest authenticate:  {honest['authenticate']}")
    for adversary in FIDO2_ADVERSARIES:
        cell = cells[adversary]
        lines.append(
            f"{adversary:<16} registration_hijack={'yes' if cell['registration_hijack'] else 'no'}"
            f" login_hijack={'yes' if cell['login_hijack'] else 'no'}"
            f" secret_leaked={'yes' if cell['secret_leaked'] else 'no'}"
        )
    if replay_verdict is not None:
        lines.append(f"cloned-device replay: {replay_verdict}")
    text = "\n".join(lines) + "\n"
    payload = {
        "kind": "fido2-demo",
        "seed": args.seed,
        "defense": label,
        "honest": honest,
        "cells": cells,
    }
    if replay_verdict is not None:
        payload["replay"] = replay_verdict
    _emit(args, "fido2", text, payload)

    problems = []
    if honest["register"] != "accepted" or honest["authenticate"] != "accepted":
        problems.append("honest flow failed")
    for adversary, cell in cells.items():
        hijacked = cell["registration_hijack"] or cell["login_hijack"] or cell["secret_leaked"]
        if defense_on and hijacked:
            problems.append(f"{adversary} succeeded under defense")
        if not defense_on and not hijacked:
            problems.append(f"{adversary} failed against the legacy flow")
    if replay_verdict is not None and replay_verdict != "rejected:counter_replay":
        problems.append(f"replay verdict {replay_verdict}")
    for problem in problems:
        print(f"noncepipe: unexpected verdict: {problem}", file=sys.stderr)
    return EXIT_MISMATCH if problems else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"noncepipe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handler = {
        "matrix": cmd_matrix,
        "compat": cmd_compat,
        "fido2-demo": cmd_fido2_demo,
    }[args.command]
    return handler(args)


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
