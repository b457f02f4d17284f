"""Password manager: vault entries, nonce autofill, and the safety gate.

Instead of autofilling the password, the manager fills a random 16-character
alphanumeric nonce and asks the browser to swap it for the real password
deep in the request pipeline. Before asking, it runs five ordered checks
against the outgoing request; the first failing check wins, and a refusal
means the request simply goes out still carrying the nonce.

Check 1  the login form is not in an iframe
Check 2  the connection is well-secured HTTPS (not HTTP, not broken TLS)
Check 3  the destination origin matches the vault entry; if a submit URL is
         pinned, the destination must equal it exactly
Check 4  the nonce does not travel in GET parameters
Check 5  every field holding the nonce bears the autofilled field's name
         (and the entry's expected field name, when set)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Optional, Sequence

from .dom import FieldKind, Form, HookKind, Page, SubmitHook
from .extensions import ExtensionHost, ExtensionManifest, NonceRegistry, Permission
from .http_model import (
    ChannelSecurity,
    FormEntries,
    MalformedBody,
    Origin,
    Url,
    decode_multipart,
    decode_urlencoded,
)
from .pipeline import (
    Cancel,
    DefenseMode,
    Stage,
    StageView,
    SubstitutionRequest,
)

__all__ = [
    "CHECK_NAMES",
    "MANAGER_EXTENSION_ID",
    "NONCE_ALPHABET",
    "NONCE_LENGTH",
    "NoPasswordField",
    "NonceRecord",
    "OriginMismatch",
    "PasswordManager",
    "PendingReplacement",
    "PinConflict",
    "SafetyDecision",
    "VaultEntry",
    "VaultFormatError",
    "generate_nonce",
    "load_vault",
]

MANAGER_EXTENSION_ID = "noncepipe.manager"

NONCE_LENGTH = 16
NONCE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"

CHECK_NAMES = {
    1: "frame",
    2: "channel",
    3: "destination",
    4: "get_params",
    5: "field_name",
}


class OriginMismatch(LookupError):
    """No vault entry exists for the page origin being filled."""


class NoPasswordField(LookupError):
    """The form has no fillable password field (or the wrong name, strictly)."""


class PinConflict(ValueError):
    """An entry is already pinned to a different submit URL."""


class VaultFormatError(ValueError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"vault line {line_number}: {message}")
        self.line_number = line_number


@dataclass(eq=False, repr=False)
class VaultEntry:
    """One stored credential. The repr masks the password."""

    origin: Origin
    username: str
    password: str
    pinned_submit_url: Optional[str] = None
    expected_field_name: Optional[str] = None

    def __repr__(self) -> str:
        pin = f", pinned={self.pinned_submit_url!r}" if self.pinned_submit_url else ""
        return f"VaultEntry({self.origin}, {self.username!r}, password=***{pin})"


@dataclass(eq=False)
class NonceRecord:
    """Where one nonce was placed: which entry, page, form, and field."""

    nonce: str
    entry: VaultEntry
    page: Page
    form_id: str
    field_name: str


@dataclass(frozen=True)
class SafetyDecision:
    approved: bool
    reason: Optional[int] = None  # 1..5, first failing check
    detail: str = ""

    def __post_init__(self) -> None:
        if not self.approved and self.reason not in CHECK_NAMES:
            raise ValueError("refusals must carry a check number 1..5")


@dataclass(eq=False)
class PendingReplacement:
    request_id: int
    record: NonceRecord
    decision: SafetyDecision


def generate_nonce(rng: Random, used: Sequence[str] | frozenset[str] = frozenset()) -> str:
    """Draw a 16-char [A-Za-z0-9] nonce by rejection sampling, avoiding `used`."""
    taken = set(used)
    while True:
        chars: list[str] = []
        while len(chars) < NONCE_LENGTH:
            v = rng.getrandbits(6)
            if v < len(NONCE_ALPHABET):
                chars.append(NONCE_ALPHABET[v])
        nonce = "".join(chars)
        if nonce not in taken:
            return nonce


def load_vault(path: str | Path) -> list[VaultEntry]:
    """Parse a tab-separated vault file.

    Line format: origin <TAB> username <TAB> password [<TAB> pinned_url].
    Blank lines and lines starting with '#' are skipped.
    """
    entries: list[VaultEntry] = []
    for number, raw_line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw_line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) not in (3, 4):
            raise VaultFormatError(number, f"expected 3 or 4 tab-separated columns, got {len(columns)}")
        origin_text, username, password = columns[0], columns[1], columns[2]
        try:
            origin = Origin.parse(origin_text)
        except ValueError as exc:
            raise VaultFormatError(number, f"bad origin {origin_text!r}: {exc}") from exc
        if not password:
            raise VaultFormatError(number, "empty password")
        pinned = columns[3] if len(columns) == 4 and columns[3] else None
        entries.append(VaultEntry(origin, username, password, pinned_submit_url=pinned))
    return entries


def _pin_of(url: Url) -> str:
    # pins are query-free: scheme://host[:port]/path
    return f"{url.origin}{url.path}"


class PasswordManager:
    """The manager extension: fills nonces and gates their replacement.

    One manager serves one browsing session. It registers two pipeline
    callbacks in the API defense modes (validate early, substitute at the
    credential stage) and uses the browser nonce registry in the
    callback-free mode.
    """

    def __init__(
        self,
        vault: Sequence[VaultEntry],
        rng: Random,
        *,
        pinning_enabled: bool = True,
        strict_field_names: bool = False,
        cancel_on_get_nonce: bool = False,
        manifest: Optional[ExtensionManifest] = None,
    ) -> None:
        self.vault = list(vault)
        self.rng = rng
        self.pinning_enabled = pinning_enabled
        self.strict_field_names = strict_field_names
        self.cancel_on_get_nonce = cancel_on_get_nonce
        self.manifest = manifest or ExtensionManifest(
            MANAGER_EXTENSION_ID,
            frozenset({Permission.WEB_REQUEST, Permission.SECRETS}),
        )
        self.registry: Optional[NonceRegistry] = None
        self.decisions: list[tuple[int, SafetyDecision]] = []
        self._records: dict[str, NonceRecord] = {}
        self._pending: dict[int, PendingReplacement] = {}

    # -- vault ------------------------------------------------------------

    def entry_for(self, origin: Origin) -> Optional[VaultEntry]:
        for entry in self.vault:
            if entry.origin == origin:
                return entry
        return None

    def learn_submit_url(self, entry: VaultEntry, url: Url) -> None:
        """Pin the submit URL on first use; later URLs must match exactly."""
        pin = _pin_of(url)
        if entry.pinned_submit_url is None:
            entry.pinned_submit_url = pin
        elif entry.pinned_submit_url != pin:
            raise PinConflict(
                f"entry for {entry.origin} is pinned to {entry.pinned_submit_url!r}, got {pin!r}"
            )

    # -- autofill ----------------------------------------------------------

    def autofill(self, page: Page, form_id: str, mode: DefenseMode) -> Optional[NonceRecord]:
        """Fill username and either the password (baseline) or a fresh nonce.

        Returns the nonce record, or None in baseline mode. Raises
        OriginMismatch when the vault has nothing for the page origin and
        NoPasswordField when there is nothing safe to fill.
        """
        entry = self.entry_for(page.origin)
        if entry is None:
            raise OriginMismatch(f"no vault entry for {page.origin}")
        form = page.form(form_id)
        password_field = form.first_of_kind(FieldKind.PASSWORD)
        if password_field is None:
            raise NoPasswordField(f"form {form_id!r} has no password field")
        if (
            self.strict_field_names
            and entry.expected_field_name
            and password_field.name != entry.expected_field_name
        ):
            raise NoPasswordField(
                f"password field is named {password_field.name!r}, "
                f"entry expects {entry.expected_field_name!r}"
            )
        self._fill_username(form, entry.username)

        if mode is DefenseMode.BASELINE:
            password_field.value = entry.password
            page.audit.append(f"manager autofilled {form_id}.{password_field.name} (baseline)")
            return None

        nonce = generate_nonce(self.rng, frozenset(self._records))
        password_field.value = nonce
        record = NonceRecord(
            nonce=nonce,
            entry=entry,
            page=page,
            form_id=form_id,
            field_name=password_field.name,
        )
        self._records[nonce] = record
        page.audit.append(f"manager autofilled {form_id}.{password_field.name} ({mode.value})")

        if mode is DefenseMode.DESIGN3_DOM:
            # replacement happens in the DOM, immediately before submission
            form.submit_hooks.append(
                SubmitHook(
                    kind=HookKind.SWAP_VALUE,
                    match=nonce,
                    replacement=entry.password,
                    guard_origin=entry.origin,
                )
            )
        elif mode is DefenseMode.MANIFEST_V3:
            if self.registry is None:
                raise RuntimeError("manifest_v3 autofill needs a browser nonce registry")
            self.registry.register_nonce(
                self.manifest,
                page,
                SubstitutionRequest(
                    field_name=password_field.name,
                    nonce=nonce,
                    replacement=entry.password,
                    expected_origin=entry.origin,
                ),
            )
        return record

    def _fill_username(self, form: Form, username: str) -> None:
        named = next((f for f in form.fields if f.name == "username"), None)
        target = named or form.first_of_kind(FieldKind.TEXT)
        if target is not None:
            target.value = username

    # -- pipeline wiring ----------------------------------------------------

    def register_with(self, host: ExtensionHost, mode: DefenseMode):
        """Install the manager extension and its listeners for this mode."""
        ext = host.install(self.manifest)
        if mode in (DefenseMode.DESIGN4_API_EARLY, DefenseMode.DESIGN5_API_LATE):
            host.register_listener(
                self.manifest.extension_id,
                Stage.ON_BEFORE_REQUEST,
                self.on_before_request,
                blocking=self.cancel_on_get_nonce,
                listener_id="manager.validate",
            )
            host.register_listener(
                self.manifest.extension_id,
                Stage.ON_REQUEST_CREDENTIALS,
                self.on_request_credentials,
                listener_id="manager.substitute",
            )
        return ext

    # -- request inspection --------------------------------------------------

    def _body_entries(self, view: StageView) -> FormEntries:
        if view.body is None:
            return ()
        content_type = view.header("Content-Type") or ""
        try:
            if content_type.startswith("multipart/form-data; boundary="):
                boundary = content_type.split("boundary=", 1)[1]
                return decode_multipart(view.body, boundary)
            return decode_urlencoded(view.body)
        except MalformedBody:
            return ()  # undecodable body: treat as nonce-free, never substitute

    def _find_record(self, view: StageView, body_entries: FormEntries) -> Optional[NonceRecord]:
        for _, value in view.query + body_entries:
            record = self._records.get(value)
            if record is not None:
                return record
        return None

    # -- the five checks -------------------------------------------------------

    def safety_check(self, record: NonceRecord, view: StageView) -> SafetyDecision:
        """Run the five ordered checks; the first failure is the verdict."""
        body_entries = self._body_entries(view)
        entry = record.entry

        if record.page.is_iframe:
            return self._decide(view, False, 1, "login form is inside an iframe")

        if view.channel is not ChannelSecurity.GOOD_TLS:
            channel = view.channel.value if view.channel else "unknown"
            return self._decide(view, False, 2, f"channel is {channel}")

        destination = Url.parse(view.url)
        if destination.origin != entry.origin:
            return self._decide(
                view, False, 3, f"destination {destination.origin} != entry {entry.origin}"
            )
        if self.pinning_enabled and entry.pinned_submit_url is not None:
            pin = _pin_of(destination)
            if pin != entry.pinned_submit_url:
                return self._decide(
                    view, False, 3, f"destination {pin!r} != pinned {entry.pinned_submit_url!r}"
                )

        if view.method == "GET" and any(v == record.nonce for _, v in view.query):
            return self._decide(view, False, 4, "nonce travels in GET parameters")

        holders = [name for name, value in body_entries if value == record.nonce]
        if any(name != record.field_name for name in holders):
            bad = next(name for name in holders if name != record.field_name)
            return self._decide(
                view, False, 5, f"nonce sits in field {bad!r}, autofilled {record.field_name!r}"
            )
        if entry.expected_field_name and record.field_name != entry.expected_field_name:
            return self._decide(
                view,
                False,
                5,
                f"autofilled field {record.field_name!r} != expected {entry.expected_field_name!r}",
            )

        return self._decide(view, True, None, "all checks passed")

    def _decide(
        self, view: StageView, approved: bool, reason: Optional[int], detail: str
    ) -> SafetyDecision:
        decision = SafetyDecision(approved=approved, reason=reason, detail=detail)
        self.decisions.append((view.request_id, decision))
        return decision

    # -- pipeline callbacks -------------------------------------------------------

    def on_before_request(self, view: StageView) -> Optional[Cancel]:
        """Early validation: associate a nonce, run the checks, stash the verdict."""
        if view.request_id in self._pending:
            return None
        body_entries = self._body_entries(view)
        record = self._find_record(view, body_entries)
        if record is None:
            return None
        decision = self.safety_check(record, view)
        self._pending[view.request_id] = PendingReplacement(view.request_id, record, decision)
        if (
            self.cancel_on_get_nonce
            and not decision.approved
            and decision.reason == 4
        ):
            return Cancel("nonce in GET parameters")
        return None

    def on_request_credentials(self, view: StageView) -> Optional[SubstitutionRequest]:
        """Credential-stage provider: emit the substitution if approved.

        In the early-position mode this callback fires before validation
        had a chance to run, so it associates and checks on the spot.
        """
        pending = self._pending.get(view.request_id)
        if pending is None:
            body_entries = self._body_entries(view)
            record = self._find_record(view, body_entries)
            if record is None:
                return None
            decision = self.safety_check(record, view)
            pending = PendingReplacement(view.request_id, record, decision)
            self._pending[view.request_id] = pending
        if not pending.decision.approved:
            return None
        record = pending.record
        entry = record.entry
        if self.pinning_enabled:
            self.learn_submit_url(entry, Url.parse(view.url))
        return SubstitutionRequest(
            field_name=record.field_name,
            nonce=record.nonce,
            replacement=entry.password,
            expected_origin=entry.origin,
        )
