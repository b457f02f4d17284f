"""Minimal DOM: pages, forms, fields, scripts, and submit-time hooks.

The DOM is the attacker-visible surface. Every script read is appended to
the reading script's log so that leak analysis can later replay exactly what
each actor observed; every mutation lands in the page audit trail. Submit
hooks transform the outgoing entry list in registration order, which is how
both benign site behaviors (hash-before-submit, encode-before-submit) and
submit-time observers are modeled.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .http_model import (
    ChannelSecurity,
    FormEntries,
    Origin,
    RequestBody,
    Url,
    WebRequestRecord,
)

__all__ = [
    "AddField",
    "DomAccessError",
    "DuplicateField",
    "Field",
    "FieldKind",
    "Form",
    "HookKind",
    "Mutation",
    "NoSuchField",
    "NoSuchForm",
    "Page",
    "Provenance",
    "RegisterSubmitHook",
    "RenameField",
    "ScriptHandle",
    "SetFieldValue",
    "SetFormAction",
    "SubmitHook",
    "attach_script",
    "read_rendered_text",
    "script_mutate",
    "script_read_field",
    "submit_form",
]


class DomAccessError(PermissionError):
    """A script acted on a page its provenance gives it no access to."""


class NoSuchForm(KeyError):
    pass


class NoSuchField(KeyError):
    pass


class DuplicateField(ValueError):
    """Field names are unique per form; a second field with the same name."""


# ---------------------------------------------------------------------------
# scripts
# ---------------------------------------------------------------------------


class Provenance(Enum):
    PAGE = "page"
    LIBRARY = "library"
    EXTENSION = "injected_by_extension"
    XSS = "xss"


@dataclass(eq=False)
class ScriptHandle:
    """A script running in some page, with an append-only observation log."""

    script_id: str
    provenance: Provenance
    extension_id: Optional[str] = None
    log: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.provenance is Provenance.EXTENSION and not self.extension_id:
            raise ValueError("extension-injected scripts must name their extension")
        if self.provenance is not Provenance.EXTENSION and self.extension_id:
            raise ValueError("only extension-injected scripts carry an extension id")

    def observe(self, value: str) -> None:
        self.log.append(value)

    def __repr__(self) -> str:  # keep observed values out of reprs
        return f"ScriptHandle({self.script_id!r}, {self.provenance.value}, {len(self.log)} obs)"


# ---------------------------------------------------------------------------
# fields and forms
# ---------------------------------------------------------------------------


class FieldKind(Enum):
    TEXT = "text"
    PASSWORD = "password"
    HIDDEN = "hidden"


@dataclass
class Field:
    name: str
    kind: FieldKind = FieldKind.TEXT
    value: str = ""


class HookKind(Enum):
    IDENTITY = "identity"
    SHA256_FIELD = "sha256_field"
    BASE64_FIELD = "base64_field"
    COPY_FIELD = "copy_field"
    DROP_FIELD = "drop_field"
    CAPTURE_FIELDS = "capture_fields"
    SWAP_VALUE = "swap_value"


@dataclass(repr=False)
class SubmitHook:
    """Pure transformer over the outgoing entry list, applied at submit time.

    `capture_fields` is the one impure member: it copies named values into a
    script's log, modeling code that fires between value replacement and the
    actual submission. `swap_value` replaces values equal to `match` with
    `replacement`, but only when the form's destination origin equals
    `guard_origin` (if set); its repr never prints the replacement.
    """

    kind: HookKind
    field_name: Optional[str] = None
    target: Optional[str] = None
    match: Optional[str] = None
    replacement: Optional[str] = None
    sink: Optional[ScriptHandle] = None
    guard_origin: Optional[Origin] = None

    def apply(self, entries: FormEntries, action: Optional[Url] = None) -> FormEntries:
        kind = self.kind
        if kind is HookKind.IDENTITY:
            return entries
        if kind is HookKind.SHA256_FIELD:
            return tuple(
                (n, hashlib.sha256(v.encode("utf-8")).hexdigest() if n == self.field_name else v)
                for n, v in entries
            )
        if kind is HookKind.BASE64_FIELD:
            return tuple(
                (n, base64.b64encode(v.encode("utf-8")).decode("ascii") if n == self.field_name else v)
                for n, v in entries
            )
        if kind is HookKind.COPY_FIELD:
            source = next((v for n, v in entries if n == self.field_name), None)
            if source is None:
                return entries
            if any(n == self.target for n, _ in entries):
                return tuple((n, source if n == self.target else v) for n, v in entries)
            return entries + ((str(self.target), source),)
        if kind is HookKind.DROP_FIELD:
            return tuple((n, v) for n, v in entries if n != self.field_name)
        if kind is HookKind.CAPTURE_FIELDS:
            if self.sink is not None:
                for n, v in entries:
                    if self.field_name in (None, n):
                        self.sink.observe(v)
            return entries
        if kind is HookKind.SWAP_VALUE:
            if self.guard_origin is not None and (
                action is None or action.origin != self.guard_origin
            ):
                return entries
            return tuple((n, self.replacement if v == self.match else v) for n, v in entries)
        raise AssertionError(f"unhandled hook kind {kind}")

    def __repr__(self) -> str:
        return f"SubmitHook({self.kind.value}, field={self.field_name!r})"


@dataclass
class Form:
    """A login form: unique field names, an action URL, ordered submit hooks."""

    form_id: str
    action: Url
    method: str = "POST"
    enctype: str = "urlencoded"
    fields: list[Field] = field(default_factory=list)
    submit_hooks: list[SubmitHook] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.method not in ("GET", "POST"):
            raise ValueError(f"unsupported form method {self.method!r}")
        if self.enctype not in ("urlencoded", "multipart"):
            raise ValueError(f"unsupported enctype {self.enctype!r}")
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise DuplicateField(f"duplicate field names in form {self.form_id!r}")

    def field_named(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise NoSuchField(name)

    def first_of_kind(self, kind: FieldKind) -> Optional[Field]:
        for f in self.fields:
            if f.kind is kind:
                return f
        return None


@dataclass(eq=False)
class Page:
    """One document: origin, frame position, forms, attached scripts."""

    page_id: str
    origin: Origin
    is_iframe: bool = False
    forms: dict[str, Form] = field(default_factory=dict)
    scripts: list[ScriptHandle] = field(default_factory=list)
    audit: list[str] = field(default_factory=list)
    rendered_text: str = ""
    tls_overrides: dict[Origin, ChannelSecurity] = field(default_factory=dict)
    webauthn: Optional[object] = None

    def form(self, form_id: str) -> Form:
        try:
            return self.forms[form_id]
        except KeyError:
            raise NoSuchForm(form_id) from None

    def add_form(self, form: Form) -> None:
        if form.form_id in self.forms:
            raise ValueError(f"page already has a form {form.form_id!r}")
        self.forms[form.form_id] = form


def attach_script(page: Page, script: ScriptHandle) -> None:
    """Give a script DOM access to a page.

    Extension-injected scripts must come through the extension host, which
    checks injection permission before calling this.
    """
    if script not in page.scripts:
        page.scripts.append(script)


def _require_access(script: ScriptHandle, page: Page) -> None:
    if script not in page.scripts:
        raise DomAccessError(
            f"script {script.script_id!r} has no DOM access to page {page.page_id!r}"
        )


# ---------------------------------------------------------------------------
# script operations
# ---------------------------------------------------------------------------


def script_read_field(script: ScriptHandle, page: Page, form_id: str, field_name: str) -> str:
    """Read a field value. The value is recorded in the script's log."""
    _require_access(script, page)
    value = page.form(form_id).field_named(field_name).value
    script.observe(value)
    return value


def read_rendered_text(script: ScriptHandle, page: Page) -> str:
    """Read the text the page last rendered (e.g. a reflected error body)."""
    _require_access(script, page)
    script.observe(page.rendered_text)
    return page.rendered_text


@dataclass(frozen=True)
class SetFieldValue:
    form_id: str
    field_name: str
    value: str


@dataclass(frozen=True)
class RenameField:
    form_id: str
    old_name: str
    new_name: str


@dataclass(frozen=True)
class SetFormAction:
    form_id: str
    action: Url


@dataclass(frozen=True)
class AddField:
    form_id: str
    field_name: str
    kind: FieldKind = FieldKind.HIDDEN
    value: str = ""


@dataclass(frozen=True)
class RegisterSubmitHook:
    form_id: str
    hook: SubmitHook


Mutation = SetFieldValue | RenameField | SetFormAction | AddField | RegisterSubmitHook


def script_mutate(script: ScriptHandle, page: Page, mutation: Mutation) -> None:
    """Apply one DOM mutation; the page audit trail records who did what."""
    _require_access(script, page)
    form = page.form(mutation.form_id)
    if isinstance(mutation, SetFieldValue):
        form.field_named(mutation.field_name).value = mutation.value
        page.audit.append(f"{script.script_id} set {mutation.form_id}.{mutation.field_name}")
    elif isinstance(mutation, RenameField):
        target = form.field_named(mutation.old_name)
        if any(f.name == mutation.new_name for f in form.fields):
            raise DuplicateField(mutation.new_name)
        target.name = mutation.new_name
        page.audit.append(
            f"{script.script_id} renamed {mutation.form_id}.{mutation.old_name}"
            f" -> {mutation.new_name}"
        )
    elif isinstance(mutation, SetFormAction):
        form.action = mutation.action
        page.audit.append(f"{script.script_id} retargeted {mutation.form_id} -> {mutation.action}")
    elif isinstance(mutation, AddField):
        if any(f.name == mutation.field_name for f in form.fields):
            raise DuplicateField(mutation.field_name)
        form.fields.append(Field(mutation.field_name, mutation.kind, mutation.value))
        page.audit.append(f"{script.script_id} added {mutation.form_id}.{mutation.field_name}")
    elif isinstance(mutation, RegisterSubmitHook):
        form.submit_hooks.append(mutation.hook)
        page.audit.append(
            f"{script.script_id} hooked {mutation.form_id} ({mutation.hook.kind.value})"
        )
    else:
        raise TypeError(f"unknown mutation {mutation!r}")


# ---------------------------------------------------------------------------
# submission
# ---------------------------------------------------------------------------


def _channel_for(page: Page, action: Url) -> ChannelSecurity:
    if action.scheme == "http":
        return ChannelSecurity.PLAIN_HTTP
    return page.tls_overrides.get(action.origin, ChannelSecurity.GOOD_TLS)


def submit_form(page: Page, form_id: str, request_id: int = 0) -> WebRequestRecord:
    """Build the outgoing request for a form: run hooks, then encode.

    Hooks run in registration order over the entry list snapshot; the DOM
    fields themselves are not modified by submission.
    """
    form = page.form(form_id)
    entries: FormEntries = tuple((f.name, f.value) for f in form.fields)
    for hook in form.submit_hooks:
        entries = hook.apply(entries, action=form.action)

    headers: list[tuple[str, str]] = [("Host", form.action.host)]
    if form.method == "GET":
        url = form.action.with_query(form.action.query + entries)
        body = None
    else:
        url = form.action
        if form.enctype == "multipart":
            body = RequestBody.multipart(entries, request_id)
        else:
            body = RequestBody.urlencoded(entries)
        headers.append(("Content-Type", body.content_type))

    return WebRequestRecord(
        request_id=request_id,
        method=form.method,
        url=url,
        headers=tuple(headers),
        body=body,
        channel_security=_channel_for(page, form.action),
        source_page=page,
    )
