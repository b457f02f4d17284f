"""The webRequest lifecycle with a credential-substitution stage.

Seven stages: onBeforeRequest, onBeforeSendHeaders, onSendHeaders,
onRequestCredentials, onHeadersReceived, onResponseStarted, onCompleted.
The credential stage is where nonce-to-password replacement happens. Where
it sits, and what a listener there may see, depends on the defense mode:

* baseline        - no substitution; whatever the DOM submitted goes out.
* design3_dom     - substitution already happened in the DOM (submit hook);
                    the pipeline itself behaves like baseline.
* design4_api_early - the credential stage fires immediately before
                    onBeforeRequest, so every later listener sees the
                    substituted body.
* design5_api_late  - the credential stage fires after onSendHeaders; no
                    listener at any stage can observe the substituted body.
* manifest_v3     - substitution happens at the design5 point but is driven
                    by a browser-held nonce registry; no callback fires.

Listener views are immutable snapshots. The request body is visible (always
pre-substitution) only at the first three stages; at the credential stage it
is either stripped (implementation behavior) or a pre-substitution snapshot
(design behavior); response-side stages never expose a request body.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Union

from .http_model import (
    ChannelSecurity,
    FormEntries,
    Origin,
    Url,
    WebRequestRecord,
    WebResponseRecord,
    sha256_hex,
)

__all__ = [
    "BodyView",
    "Cancel",
    "Cancelled",
    "CredentialBodyMode",
    "DefenseMode",
    "ListenerRegistration",
    "ListenerRegistry",
    "PipelineConfig",
    "Redirect",
    "RedirectLoop",
    "Stage",
    "StageTranscript",
    "StageView",
    "SubstitutionRequest",
    "TranscriptEvent",
    "apply_substitutions",
    "dispatch",
    "process_response",
    "stage_order",
]


class Stage(Enum):
    ON_BEFORE_REQUEST = "onBeforeRequest"
    ON_BEFORE_SEND_HEADERS = "onBeforeSendHeaders"
    ON_SEND_HEADERS = "onSendHeaders"
    ON_REQUEST_CREDENTIALS = "onRequestCredentials"
    ON_HEADERS_RECEIVED = "onHeadersReceived"
    ON_RESPONSE_STARTED = "onResponseStarted"
    ON_COMPLETED = "onCompleted"


REQUEST_STAGES = (
    Stage.ON_BEFORE_REQUEST,
    Stage.ON_BEFORE_SEND_HEADERS,
    Stage.ON_SEND_HEADERS,
)
RESPONSE_STAGES = (
    Stage.ON_HEADERS_RECEIVED,
    Stage.ON_RESPONSE_STARTED,
    Stage.ON_COMPLETED,
)
BLOCKING_STAGES = (Stage.ON_BEFORE_REQUEST, Stage.ON_BEFORE_SEND_HEADERS)
BODY_VISIBLE_STAGES = REQUEST_STAGES


class DefenseMode(Enum):
    BASELINE = "baseline"
    DESIGN3_DOM = "design3_dom"
    DESIGN4_API_EARLY = "design4_api_early"
    DESIGN5_API_LATE = "design5_api_late"
    MANIFEST_V3 = "manifest_v3"


class CredentialBodyMode(Enum):
    """What a credential-stage listener may see of the body.

    IMPLEMENTATION strips the body entirely (validation happened earlier);
    DESIGN exposes a pre-substitution snapshot, never the substituted body.
    """

    IMPLEMENTATION = "implementation"
    DESIGN = "design"


class BodyView(Enum):
    FULL_PRE_SUBSTITUTION = "full_pre_substitution"
    STRIPPED = "stripped"
    ABSENT = "absent"


def stage_order(mode: DefenseMode) -> tuple[Stage, ...]:
    """Canonical stage order for a defense mode (credential stage moves)."""
    if mode is DefenseMode.DESIGN4_API_EARLY:
        return (Stage.ON_REQUEST_CREDENTIALS,) + REQUEST_STAGES + RESPONSE_STAGES
    if mode in (DefenseMode.DESIGN5_API_LATE, DefenseMode.MANIFEST_V3):
        return REQUEST_STAGES + (Stage.ON_REQUEST_CREDENTIALS,) + RESPONSE_STAGES
    return REQUEST_STAGES + RESPONSE_STAGES


# ---------------------------------------------------------------------------
# substitution requests and the browser-side guard
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SubstitutionRequest:
    """One requested nonce-to-secret replacement, checked by the browser.

    The browser applies it only when all three of these hold for a body
    entry: the entry name equals `field_name` exactly, the entry value
    equals `nonce` exactly (no additional characters), and the request's
    destination origin equals `expected_origin`.
    """

    field_name: str
    nonce: str
    replacement: str
    expected_origin: Origin

    def __post_init__(self) -> None:
        if not self.field_name:
            raise ValueError("field_name must be non-empty")
        if not self.nonce:
            raise ValueError("nonce must be non-empty")
        if self.nonce == self.replacement:
            raise ValueError("replacement must differ from the nonce")

    def __repr__(self) -> str:  # never print the replacement secret
        return (
            f"SubstitutionRequest(field={self.field_name!r}, nonce={self.nonce!r}, "
            f"origin={self.expected_origin})"
        )


def apply_substitutions(
    entries: FormEntries,
    substitutions: Sequence[SubstitutionRequest],
    destination: Url,
) -> tuple[FormEntries, tuple[SubstitutionRequest, ...]]:
    """Apply every substitution whose three checks all pass.

    Returns the new entry list and the substitutions actually applied.
    Pure and idempotent: once a value is replaced it no longer equals any
    nonce, so re-applying changes nothing. When several substitutions target
    the same field, earlier ones win (a replaced value fails the later
    value check).
    """
    current = list(entries)
    applied: list[SubstitutionRequest] = []
    for sub in substitutions:
        if destination.origin != sub.expected_origin:
            continue
        hit = False
        for i, (name, value) in enumerate(current):
            if name == sub.field_name and value == sub.nonce:
                current[i] = (name, sub.replacement)
                hit = True
        if hit:
            applied.append(sub)
    return tuple(current), tuple(applied)


# ---------------------------------------------------------------------------
# listeners
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StageView:
    """Read-only snapshot handed to one listener at one stage."""

    request_id: int
    stage: Stage
    method: str
    url: str
    query: FormEntries
    headers: tuple[tuple[str, str], ...]
    body_view: BodyView
    body: Optional[bytes]
    channel: Optional[ChannelSecurity] = None
    status: Optional[int] = None

    def header(self, name: str) -> Optional[str]:
        wanted = name.lower()
        for key, value in self.headers:
            if key.lower() == wanted:
                return value
        return None

    def visible_strings(self) -> tuple[str, ...]:
        """Everything a listener could copy out of this view, as strings."""
        out = [self.url]
        out.extend(v for _, v in self.query)
        out.extend(f"{k}: {v}" for k, v in self.headers)
        if self.body is not None:
            out.append(self.body.decode("utf-8", errors="replace"))
        return tuple(out)


@dataclass(frozen=True)
class Cancel:
    reason: str = "cancelled by listener"


@dataclass(frozen=True)
class Redirect:
    url: Url


BlockingAction = Union[Cancel, Redirect]
ListenerResult = Union[
    None, Cancel, Redirect, SubstitutionRequest, Sequence[SubstitutionRequest]
]
ListenerCallback = Callable[[StageView], ListenerResult]


class Cancelled(RuntimeError):
    def __init__(self, request_id: int, listener_id: str, reason: str) -> None:
        super().__init__(f"request {request_id} cancelled by {listener_id}: {reason}")
        self.request_id = request_id
        self.listener_id = listener_id


class RedirectLoop(RuntimeError):
    pass


@dataclass(eq=False)
class ListenerRegistration:
    """One listener of one extension at one stage.

    `sink` is the owning extension's observation log; the pipeline itself
    appends everything the listener was shown, so leak analysis never has
    to trust listener code to self-report.
    """

    listener_id: str
    extension_id: str
    stage: Stage
    blocking: bool
    callback: ListenerCallback
    sink: Optional[list[str]] = None


class ListenerRegistry:
    """Listeners in registration order (registration order settles conflicts)."""

    def __init__(self) -> None:
        self._listeners: list[ListenerRegistration] = []

    def add(self, registration: ListenerRegistration) -> None:
        self._listeners.append(registration)

    def at(self, stage: Stage) -> tuple[ListenerRegistration, ...]:
        return tuple(reg for reg in self._listeners if reg.stage is stage)

    def __iter__(self):
        return iter(self._listeners)

    def __len__(self) -> int:
        return len(self._listeners)


# ---------------------------------------------------------------------------
# transcripts
# ---------------------------------------------------------------------------

EVENT_LISTENER = "!browser"
EVENT_SUBSTITUTION = "substitution"
EVENT_SUBSTITUTION_CONFLICT = "substitutionConflict"
EVENT_FIDO2_STRIP = "fido2Strip"
EVENT_FIDO2_INJECT = "fido2Inject"
EVENT_CANCEL = "cancel"
EVENT_REDIRECT = "redirect"


@dataclass(frozen=True)
class TranscriptEvent:
    """One transcript line; listener deliveries also keep their view."""

    request_id: int
    label: str  # stage name for deliveries, event name for browser events
    listener_id: str
    body_view: str
    digest: str
    view: Optional[StageView] = None

    def to_line(self) -> str:
        return f"{self.request_id} {self.label} {self.listener_id} {self.body_view} {self.digest}"


class StageTranscript:
    """Ordered record of every delivery and browser event for one flow."""

    def __init__(self) -> None:
        self.events: list[TranscriptEvent] = []

    def record_delivery(self, view: StageView, listener_id: str) -> None:
        digest = sha256_hex(view.body) if view.body is not None else "-"
        self.events.append(
            TranscriptEvent(
                request_id=view.request_id,
                label=view.stage.value,
                listener_id=listener_id,
                body_view=view.body_view.value,
                digest=digest,
                view=view,
            )
        )

    def record_event(self, request_id: int, label: str, detail: str = "-") -> None:
        self.events.append(
            TranscriptEvent(
                request_id=request_id,
                label=label,
                listener_id=EVENT_LISTENER,
                body_view="-",
                digest=detail,
            )
        )

    def to_text(self) -> str:
        return "".join(event.to_line() + "\n" for event in self.events)

    def deliveries(self) -> tuple[TranscriptEvent, ...]:
        return tuple(e for e in self.events if e.listener_id != EVENT_LISTENER)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Per-browser pipeline behavior.

    `credential_stage_enabled=False` compiles the substitution machinery out
    entirely, which is the baseline for overhead comparisons: with no nonce
    in flight the wire bytes must be identical either way.
    """

    defense_mode: DefenseMode = DefenseMode.DESIGN5_API_LATE
    credential_body: CredentialBodyMode = CredentialBodyMode.IMPLEMENTATION
    credential_stage_enabled: bool = True
    max_redirect_hops: int = 8
    nonce_registry: Optional[object] = None  # duck-typed .for_page(page_id)


def _has_credential_stage(config: PipelineConfig) -> bool:
    return config.credential_stage_enabled and config.defense_mode in (
        DefenseMode.DESIGN4_API_EARLY,
        DefenseMode.DESIGN5_API_LATE,
        DefenseMode.MANIFEST_V3,
    )


# ---------------------------------------------------------------------------
# views
# ---------------------------------------------------------------------------


def _request_view(
    request: WebRequestRecord,
    stage: Stage,
    pre_substitution_body: Optional[bytes],
    config: PipelineConfig,
) -> StageView:
    if stage in BODY_VISIBLE_STAGES:
        body = request.body_bytes()
        body_view = BodyView.FULL_PRE_SUBSTITUTION if body is not None else BodyView.ABSENT
    elif stage is Stage.ON_REQUEST_CREDENTIALS:
        if (
            config.defense_mode is DefenseMode.DESIGN4_API_EARLY
            or config.credential_body is CredentialBodyMode.DESIGN
        ):
            body = pre_substitution_body
            body_view = (
                BodyView.FULL_PRE_SUBSTITUTION if body is not None else BodyView.ABSENT
            )
        else:
            body = None
            body_view = BodyView.STRIPPED
    else:
        raise AssertionError(f"{stage} is not a request-side stage")
    return StageView(
        request_id=request.request_id,
        stage=stage,
        method=request.method,
        url=request.url.to_string(),
        query=request.url.query,
        headers=request.headers,
        body_view=body_view,
        body=body,
        channel=request.channel_security,
    )


def _response_view(
    request_id: int, url: Url, stage: Stage, response: WebResponseRecord
) -> StageView:
    return StageView(
        request_id=request_id,
        stage=stage,
        method="-",
        url=url.to_string(),
        query=(),
        headers=response.headers,
        body_view=BodyView.ABSENT,
        body=None,
        status=response.status,
    )


def _observe(reg: ListenerRegistration, view: StageView) -> None:
    if reg.sink is not None:
        reg.sink.extend(view.visible_strings())


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _collect_substitutions(
    request: WebRequestRecord,
    listeners: ListenerRegistry,
    config: PipelineConfig,
    transcript: StageTranscript,
    pre_substitution_body: Optional[bytes],
) -> list[SubstitutionRequest]:
    """Run the credential stage: callbacks for API modes, registry otherwise."""
    collected: list[SubstitutionRequest] = []
    if config.defense_mode is DefenseMode.MANIFEST_V3:
        registry = config.nonce_registry
        if registry is not None and request.source_page is not None:
            page_id = getattr(request.source_page, "page_id", None)
            collected.extend(registry.for_page(page_id))
        return collected
    for reg in listeners.at(Stage.ON_REQUEST_CREDENTIALS):
        view = _request_view(request, Stage.ON_REQUEST_CREDENTIALS, pre_substitution_body, config)
        transcript.record_delivery(view, reg.listener_id)
        _observe(reg, view)
        result = reg.callback(view)
        if result is None:
            continue
        if isinstance(result, SubstitutionRequest):
            collected.append(result)
        elif isinstance(result, (Cancel, Redirect)):
            continue  # credential stage is not a blocking stage
        else:
            collected.extend(result)
    return collected


def _run_credential_phase(
    request: WebRequestRecord,
    listeners: ListenerRegistry,
    config: PipelineConfig,
    transcript: StageTranscript,
    pre_substitution_body: Optional[bytes],
) -> WebRequestRecord:
    subs = _collect_substitutions(request, listeners, config, transcript, pre_substitution_body)
    if not subs:
        return request
    targeted = [s.field_name for s in subs]
    if len(targeted) != len(set(targeted)):
        transcript.record_event(request.request_id, EVENT_SUBSTITUTION_CONFLICT)
    if request.body is None:
        return request
    new_entries, applied = apply_substitutions(request.body.entries, subs, request.url)
    if applied:
        transcript.record_event(
            request.request_id, EVENT_SUBSTITUTION, detail=f"applied={len(applied)}"
        )
        return replace(request, body=request.body.with_entries(new_entries))
    return request


def _reissue(request: WebRequestRecord, url: Url, new_id: int) -> WebRequestRecord:
    if url.scheme == "http":
        channel = ChannelSecurity.PLAIN_HTTP
    else:
        overrides = getattr(request.source_page, "tls_overrides", None) or {}
        channel = overrides.get(url.origin, ChannelSecurity.GOOD_TLS)
    return replace(
        request,
        request_id=new_id,
        url=url,
        channel_security=channel,
        parent_request_id=request.request_id,
    )


def dispatch(
    request: WebRequestRecord,
    listeners: ListenerRegistry,
    config: PipelineConfig,
    *,
    transcript: Optional[StageTranscript] = None,
    fido2_store: Optional[object] = None,  # duck-typed .inject(request) hook
    id_allocator: Optional[Callable[[], int]] = None,
) -> tuple[WebRequestRecord, StageTranscript]:
    """Run the request-side stages and return what actually hits the wire.

    Substitution state never survives a redirect: each hop restarts the
    stage walk as a fresh request with a new id, and validation listeners
    see the new destination.
    """
    transcript = transcript if transcript is not None else StageTranscript()
    hops = 0
    current = request

    while True:
        pre_substitution_body = current.body_bytes()
        redirected_to: Optional[Url] = None

        if config.defense_mode is DefenseMode.DESIGN4_API_EARLY and _has_credential_stage(config):
            current = _run_credential_phase(
                current, listeners, config, transcript, pre_substitution_body
            )

        for stage in REQUEST_STAGES:
            for reg in listeners.at(stage):
                view = _request_view(current, stage, pre_substitution_body, config)
                transcript.record_delivery(view, reg.listener_id)
                _observe(reg, view)
                result = reg.callback(view)
                if not reg.blocking:
                    continue
                if isinstance(result, Cancel):
                    transcript.record_event(current.request_id, EVENT_CANCEL, reg.listener_id)
                    raise Cancelled(current.request_id, reg.listener_id, result.reason)
                if isinstance(result, Redirect):
                    transcript.record_event(
                        current.request_id, EVENT_REDIRECT, reg.listener_id
                    )
                    redirected_to = result.url
                    break
            if redirected_to is not None:
                break

        if redirected_to is not None:
            hops += 1
            if hops > config.max_redirect_hops:
                raise RedirectLoop(f"more than {config.max_redirect_hops} redirect hops")
            new_id = id_allocator() if id_allocator else current.request_id * 1000 + hops
            current = _reissue(current, redirected_to, new_id)
            continue

        if (
            config.defense_mode is not DefenseMode.DESIGN4_API_EARLY
            and _has_credential_stage(config)
        ):
            current = _run_credential_phase(
                current, listeners, config, transcript, pre_substitution_body
            )

        if fido2_store is not None:
            injected = fido2_store.inject(current)
            if injected is not None:
                current = injected
                transcript.record_event(current.request_id, EVENT_FIDO2_INJECT)
        return current, transcript


def process_response(
    response: WebResponseRecord,
    listeners: ListenerRegistry,
    fido2_hook: Optional[Callable[[WebResponseRecord], tuple[WebResponseRecord, bool]]] = None,
    *,
    request_url: Url,
    transcript: Optional[StageTranscript] = None,
) -> tuple[WebResponseRecord, StageTranscript]:
    """Run the response-side stages and return what the page receives.

    The FIDO2 strip hook runs strictly before any onHeadersReceived
    delivery, so stripped header values never reach a listener view.
    """
    transcript = transcript if transcript is not None else StageTranscript()
    if fido2_hook is not None:
        response, stripped = fido2_hook(response)
        if stripped:
            transcript.record_event(response.request_id, EVENT_FIDO2_STRIP)
    for stage in RESPONSE_STAGES:
        for reg in listeners.at(stage):
            view = _response_view(response.request_id, request_url, stage, response)
            transcript.record_delivery(view, reg.listener_id)
            _observe(reg, view)
            reg.callback(view)
    return response, transcript
