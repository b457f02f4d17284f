"""HTTP value objects shared by every layer of the simulator.

Models just enough of HTTP for credential-flow analysis: URLs and origins,
ordered form entry lists, request bodies that re-encode bit-exactly, and
immutable request/response records. Nothing here knows about extensions,
password managers, or the pipeline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

__all__ = [
    "ChannelSecurity",
    "FormEntries",
    "InvalidUrl",
    "MalformedBody",
    "Origin",
    "RequestBody",
    "Url",
    "WebRequestRecord",
    "WebResponseRecord",
    "decode_multipart",
    "decode_urlencoded",
    "encode_multipart",
    "multipart_boundary",
    "origin_of",
    "sha256_hex",
    "urlencode_entries",
]

# Ordered (name, value) pairs; duplicates allowed, order significant.
FormEntries = tuple[tuple[str, str], ...]

DEFAULT_PORTS = {"http": 80, "https": 443}

URLENCODED = "application/x-www-form-urlencoded"
MULTIPART_PREFIX = "multipart/form-data; boundary="


class MalformedBody(ValueError):
    """A body or query string cannot be decoded back into entries."""


class InvalidUrl(ValueError):
    """A URL string violates the simulator's structural constraints."""


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# form-urlencoding
#
# Byte-exact rules: space encodes as '+'; bytes outside [A-Za-z0-9*-._] are
# percent-encoded as uppercase hex over the UTF-8 encoding. Note '~' is
# escaped here, unlike urllib.parse.quote_plus.
# ---------------------------------------------------------------------------

_FORM_SAFE = frozenset(
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789*-._"
)
_HEX_DIGITS = "0123456789abcdefABCDEF"


def _quote_form(text: str, *, plus_for_space: bool) -> str:
    out: list[str] = []
    for byte in text.encode("utf-8"):
        if byte in _FORM_SAFE:
            out.append(chr(byte))
        elif byte == 0x20 and plus_for_space:
            out.append("+")
        else:
            out.append(f"%{byte:02X}")
    return "".join(out)


def _unquote_form(text: str, *, plus_for_space: bool) -> str:
    raw = bytearray()
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "%":
            if i + 3 > len(text) or text[i + 1] not in _HEX_DIGITS or text[i + 2] not in _HEX_DIGITS:
                raise MalformedBody(f"truncated or invalid percent escape at offset {i}")
            raw.append(int(text[i + 1 : i + 3], 16))
            i += 3
        elif ch == "+" and plus_for_space:
            raw.append(0x20)
            i += 1
        else:
            raw.extend(ch.encode("utf-8"))
            i += 1
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedBody(f"percent-decoded bytes are not valid UTF-8: {exc}") from exc


def urlencode_entries(entries: Sequence[tuple[str, str]]) -> str:
    """Encode ordered (name, value) pairs as application/x-www-form-urlencoded."""
    return "&".join(
        f"{_quote_form(name, plus_for_space=True)}={_quote_form(value, plus_for_space=True)}"
        for name, value in entries
    )


def decode_urlencoded(text: str | bytes) -> FormEntries:
    """Inverse of urlencode_entries. Raises MalformedBody on bad escapes."""
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedBody("urlencoded body contains non-ASCII bytes") from exc
    if text == "":
        return ()
    pairs: list[tuple[str, str]] = []
    for chunk in text.split("&"):
        name, sep, value = chunk.partition("=")
        pairs.append(
            (
                _unquote_form(name, plus_for_space=True),
                _unquote_form(value, plus_for_space=True) if sep else "",
            )
        )
    return tuple(pairs)


# ---------------------------------------------------------------------------
# multipart/form-data
# ---------------------------------------------------------------------------


def multipart_boundary(request_id: int) -> str:
    return f"----noncepipe-{request_id}"


def encode_multipart(entries: Sequence[tuple[str, str]], boundary: str) -> bytes:
    """Encode entries as multipart/form-data with the given boundary.

    Field names are percent-escaped inside the disposition header so that
    arbitrary names round-trip. Values are raw UTF-8; a value that contains
    the boundary delimiter itself cannot be framed and is rejected.
    """
    delim = ("--" + boundary).encode("ascii")
    parts: list[bytes] = []
    for name, value in entries:
        value_bytes = value.encode("utf-8")
        if delim in value_bytes or delim in name.encode("utf-8"):
            raise MalformedBody("entry contains the multipart boundary delimiter")
        parts.append(delim)
        parts.append(b"\r\n")
        disposition = f'Content-Disposition: form-data; name="{_quote_form(name, plus_for_space=False)}"'
        parts.append(disposition.encode("ascii"))
        parts.append(b"\r\n\r\n")
        parts.append(value_bytes)
        parts.append(b"\r\n")
    parts.append(delim)
    parts.append(b"--\r\n")
    return b"".join(parts)


def decode_multipart(raw: bytes, boundary: str) -> FormEntries:
    """Inverse of encode_multipart for the same boundary."""
    delim = ("--" + boundary).encode("ascii")
    segments = raw.split(delim)
    if len(segments) < 2 or segments[0] != b"" or segments[-1] != b"--\r\n":
        raise MalformedBody("multipart body is not framed by the expected boundary")
    entries: list[tuple[str, str]] = []
    for segment in segments[1:-1]:
        if not segment.startswith(b"\r\n") or not segment.endswith(b"\r\n"):
            raise MalformedBody("multipart part is not CRLF framed")
        head, sep, payload = segment[2:-2].partition(b"\r\n\r\n")
        if not sep:
            raise MalformedBody("multipart part lacks a blank line after headers")
        header = head.decode("ascii", errors="strict")
        marker = 'Content-Disposition: form-data; name="'
        if not header.startswith(marker) or not header.endswith('"'):
            raise MalformedBody("multipart part lacks a form-data disposition")
        name = _unquote_form(header[len(marker) : -1], plus_for_space=False)
        try:
            value = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedBody(f"multipart value is not valid UTF-8: {exc}") from exc
        entries.append((name, value))
    return tuple(entries)


# ---------------------------------------------------------------------------
# URLs and origins
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Origin:
    """Security origin: the (scheme, host, port) triple, all significant."""

    scheme: str
    host: str
    port: int

    def __post_init__(self) -> None:
        if self.scheme not in DEFAULT_PORTS:
            raise InvalidUrl(f"unsupported scheme {self.scheme!r}")
        if not self.host or any(c.isspace() for c in self.host):
            raise InvalidUrl(f"bad host {self.host!r}")
        if not 1 <= self.port <= 65535:
            raise InvalidUrl(f"port out of range: {self.port}")
        object.__setattr__(self, "host", self.host.lower())

    def __str__(self) -> str:
        if self.port == DEFAULT_PORTS[self.scheme]:
            return f"{self.scheme}://{self.host}"
        return f"{self.scheme}://{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Origin":
        url = Url.parse(text if "://" in text else f"https://{text}")
        return url.origin


@dataclass(frozen=True, slots=True)
class Url:
    """Absolute http(s) URL with an ordered, already-decoded query."""

    scheme: str
    host: str
    port: int
    path: str = "/"
    query: FormEntries = ()

    def __post_init__(self) -> None:
        Origin(self.scheme, self.host, self.port)  # reuse validation
        object.__setattr__(self, "host", self.host.lower())
        if not self.path.startswith("/"):
            raise InvalidUrl(f"path must be absolute, got {self.path!r}")
        object.__setattr__(self, "query", tuple((str(n), str(v)) for n, v in self.query))

    @property
    def origin(self) -> Origin:
        return Origin(self.scheme, self.host, self.port)

    @classmethod
    def parse(cls, text: str) -> "Url":
        scheme, sep, rest = text.partition("://")
        if not sep:
            raise InvalidUrl(f"missing scheme in {text!r}")
        if scheme not in DEFAULT_PORTS:
            raise InvalidUrl(f"unsupported scheme {scheme!r}")
        netloc, slash, tail = rest.partition("/")
        path_and_query = slash + tail if slash else "/"
        path, qmark, query_text = path_and_query.partition("?")
        host, colon, port_text = netloc.partition(":")
        if colon:
            try:
                port = int(port_text)
            except ValueError as exc:
                raise InvalidUrl(f"bad port in {text!r}") from exc
        else:
            port = DEFAULT_PORTS[scheme]
        query = decode_urlencoded(query_text) if qmark else ()
        return cls(scheme=scheme, host=host, port=port, path=path or "/", query=query)

    def to_string(self) -> str:
        base = f"{str(self.origin)}{self.path}"
        if self.query:
            return f"{base}?{urlencode_entries(self.query)}"
        return base

    def with_query(self, entries: Sequence[tuple[str, str]]) -> "Url":
        return replace(self, query=tuple(entries))

    def __str__(self) -> str:
        return self.to_string()


def origin_of(url: Url | str) -> Origin:
    """Origin (scheme, host, port) of a URL; string inputs are parsed first."""
    if isinstance(url, str):
        url = Url.parse(url)
    return url.origin


# ---------------------------------------------------------------------------
# bodies and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RequestBody:
    """Entry list plus its exact wire bytes.

    `raw` is always derivable from `entries` and `content_type`; the pair is
    kept together so substitution can edit entries and re-encode without
    drifting from what a byte-level observer would have seen.
    """

    content_type: str
    entries: FormEntries
    raw: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple((str(n), str(v)) for n, v in self.entries))
        if self.raw != _encode_for(self.content_type, self.entries):
            raise MalformedBody("raw bytes do not match the encoded entry list")

    @classmethod
    def urlencoded(cls, entries: Sequence[tuple[str, str]]) -> "RequestBody":
        entries = tuple(entries)
        return cls(URLENCODED, entries, urlencode_entries(entries).encode("ascii"))

    @classmethod
    def multipart(cls, entries: Sequence[tuple[str, str]], request_id: int) -> "RequestBody":
        entries = tuple(entries)
        content_type = MULTIPART_PREFIX + multipart_boundary(request_id)
        return cls(content_type, entries, _encode_for(content_type, entries))

    def with_entries(self, entries: Sequence[tuple[str, str]]) -> "RequestBody":
        entries = tuple(entries)
        return RequestBody(self.content_type, entries, _encode_for(self.content_type, entries))


def _encode_for(content_type: str, entries: FormEntries) -> bytes:
    if content_type == URLENCODED:
        return urlencode_entries(entries).encode("ascii")
    if content_type.startswith(MULTIPART_PREFIX):
        return encode_multipart(entries, content_type[len(MULTIPART_PREFIX) :])
    raise MalformedBody(f"unsupported content type {content_type!r}")


class ChannelSecurity(Enum):
    """Transport quality of the connection carrying a request."""

    PLAIN_HTTP = "plain_http"
    GOOD_TLS = "good_tls"
    BAD_TLS = "bad_tls"


@dataclass(frozen=True, slots=True)
class WebRequestRecord:
    """One outgoing request as the network layer sees it.

    Immutable; pipeline stages that change a request (substitution, header
    injection, redirects) produce a new record. `parent_request_id` links
    redirect hops back to the request that spawned them.
    """

    request_id: int
    method: str
    url: Url
    headers: tuple[tuple[str, str], ...] = ()
    body: Optional[RequestBody] = None
    channel_security: ChannelSecurity = ChannelSecurity.GOOD_TLS
    source_page: object = None
    parent_request_id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.method not in ("GET", "POST"):
            raise ValueError(f"unsupported method {self.method!r}")
        if self.method == "GET" and self.body is not None:
            raise ValueError("GET requests carry entries in the query, not a body")
        object.__setattr__(self, "headers", tuple((str(n), str(v)) for n, v in self.headers))

    def header(self, name: str) -> Optional[str]:
        wanted = name.lower()
        for key, value in self.headers:
            if key.lower() == wanted:
                return value
        return None

    def body_bytes(self) -> Optional[bytes]:
        return self.body.raw if self.body is not None else None


@dataclass(frozen=True, slots=True)
class WebResponseRecord:
    """Server response heading back through the pipeline to the page."""

    request_id: int
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "headers", tuple((str(n), str(v)) for n, v in self.headers))

    def header(self, name: str) -> Optional[str]:
        wanted = name.lower()
        for key, value in self.headers:
            if key.lower() == wanted:
                return value
        return None

    def without_headers(self, names: Iterable[str]) -> "WebResponseRecord":
        drop = {n.lower() for n in names}
        kept = tuple((k, v) for k, v in self.headers if k.lower() not in drop)
        return replace(self, headers=kept)
