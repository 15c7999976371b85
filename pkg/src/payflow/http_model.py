"""Minimal HTTP/1.1-shaped message model.

Covers exactly the subset the tampering surface needs: request line, ordered
headers (case-insensitive lookup, duplicates preserved), query parameters,
opaque body with an optional form-encoded view, and cookies as a projection
of Cookie headers. No chunked encoding, no continuation lines.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional
from urllib.parse import quote, unquote

CRLF = b"\r\n"
VERSION = "HTTP/1.1"
ALLOWED_METHODS = ("GET", "POST")
ALLOWED_STATUSES = frozenset({200, 302, 400, 401, 403, 404, 409})


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _encode_query(pairs) -> str:
    return "&".join(
        f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in pairs
    )


def _decode_query(raw: str) -> tuple[tuple[str, str], ...]:
    if not raw:
        return ()
    out = []
    for part in raw.split("&"):
        k, _, v = part.partition("=")
        out.append((unquote(k), unquote(v)))
    return tuple(out)


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    query: tuple[tuple[str, str], ...] = ()
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    def header(self, name: str) -> Optional[str]:
        """First value for `name`, case-insensitive."""
        low = name.lower()
        for n, v in self.headers:
            if n.lower() == low:
                return v
        return None

    def header_values(self, name: str) -> list[str]:
        low = name.lower()
        return [v for n, v in self.headers if n.lower() == low]

    def query_get(self, name: str) -> Optional[str]:
        for k, v in self.query:
            if k == name:
                return v
        return None

    def cookies(self) -> dict[str, str]:
        """Cookie-header projection: later pairs win on duplicate names."""
        jar: dict[str, str] = {}
        for raw in self.header_values("Cookie"):
            for piece in raw.split(";"):
                piece = piece.strip()
                if not piece:
                    continue
                k, _, v = piece.partition("=")
                jar[k.strip()] = v.strip()
        return jar

    def form(self) -> tuple[tuple[str, str], ...]:
        """Body decoded as application/x-www-form-urlencoded pairs."""
        return _decode_query(self.body.decode("utf-8", errors="replace"))


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    def __post_init__(self):
        if self.status not in ALLOWED_STATUSES:
            raise ValueError(f"unsupported status {self.status}")

    def header(self, name: str) -> Optional[str]:
        low = name.lower()
        for n, v in self.headers:
            if n.lower() == low:
                return v
        return None

    def header_values(self, name: str) -> list[str]:
        low = name.lower()
        return [v for n, v in self.headers if n.lower() == low]


@dataclass
class Session:
    """Client-side session: opaque id plus the browser's cookie jar."""

    session_id: str
    cookies: dict[str, str] = field(default_factory=dict)
    owner_user_id: Optional[str] = None

    def absorb(self, resp: HttpResponse) -> None:
        """Store Set-Cookie pairs like a browser would."""
        for raw in resp.header_values("Set-Cookie"):
            k, _, v = raw.partition("=")
            self.cookies[k.strip()] = v.strip()


def serialize_request(req: HttpRequest) -> bytes:
    target = req.path
    if req.query:
        target += "?" + _encode_query(req.query)
    lines = [f"{req.method} {target} {VERSION}".encode("ascii")]
    for n, v in req.headers:
        lines.append(f"{n}: {v}".encode("utf-8"))
    return CRLF.join(lines) + CRLF + CRLF + req.body


def serialize_response(resp: HttpResponse) -> bytes:
    lines = [f"{VERSION} {resp.status}".encode("ascii")]
    for n, v in resp.headers:
        lines.append(f"{n}: {v}".encode("utf-8"))
    return CRLF.join(lines) + CRLF + CRLF + resp.body


def parse_request(data: bytes) -> HttpRequest:
    head, sep, body = data.partition(CRLF + CRLF)
    if not sep:
        raise ParseError(1, "missing header terminator")
    lines = head.split(CRLF)
    parts = lines[0].split(b" ")
    if len(parts) != 3 or parts[2] != VERSION.encode("ascii"):
        raise ParseError(1, f"malformed request line {lines[0]!r}")
    method = parts[0].decode("ascii", errors="replace")
    if method not in ALLOWED_METHODS:
        raise ParseError(1, f"unsupported method {method!r}")
    target = parts[1].decode("ascii", errors="replace")
    path, _, raw_query = target.partition("?")
    headers = []
    for i, line in enumerate(lines[1:], start=2):
        name_raw, colon, value_raw = line.partition(b":")
        if not colon:
            raise ParseError(i, f"header line without colon: {line!r}")
        try:
            name = name_raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError(i, f"non-UTF8 header name: {name_raw!r}") from None
        headers.append((name, value_raw.decode("utf-8").strip()))
    return HttpRequest(
        method=method,
        path=path,
        query=_decode_query(raw_query),
        headers=tuple(headers),
        body=body,
    )


class MutationKind(enum.Enum):
    SET_HEADER = "SetHeader"
    REMOVE_HEADER = "RemoveHeader"
    SET_COOKIE = "SetCookie"
    SET_QUERY_PARAM = "SetQueryParam"
    SET_BODY_FIELD = "SetBodyField"
    REORDER = "Reorder"
    DUPLICATE = "Duplicate"


@dataclass(frozen=True)
class Mutation:
    kind: MutationKind
    name: str = ""
    value: str = ""


def _set_pair(pairs, name, value, casefold=False):
    key = name.lower() if casefold else name
    out, done = [], False
    for n, v in pairs:
        if (n.lower() if casefold else n) == key and not done:
            out.append((name, value))
            done = True
        else:
            out.append((n, v))
    if not done:
        out.append((name, value))
    return tuple(out)


def apply_mutation(req: HttpRequest, m: Mutation) -> list[HttpRequest]:
    """Return the request sequence the mutation emits; originals untouched.

    Every kind but Duplicate yields one request; Duplicate yields the same
    request twice (the replay primitive).
    """
    if m.kind is MutationKind.SET_HEADER:
        return [replace(req, headers=_set_pair(req.headers, m.name, m.value,
                                               casefold=True))]
    if m.kind is MutationKind.REMOVE_HEADER:
        low = m.name.lower()
        return [replace(req, headers=tuple(
            (n, v) for n, v in req.headers if n.lower() != low))]
    if m.kind is MutationKind.SET_COOKIE:
        jar = req.cookies()
        jar[m.name] = m.value
        cookie = "; ".join(f"{k}={v}" for k, v in jar.items())
        headers = tuple(
            (n, v) for n, v in req.headers if n.lower() != "cookie"
        ) + (("Cookie", cookie),)
        return [replace(req, headers=headers)]
    if m.kind is MutationKind.SET_QUERY_PARAM:
        return [replace(req, query=_set_pair(req.query, m.name, m.value))]
    if m.kind is MutationKind.SET_BODY_FIELD:
        pairs = _set_pair(req.form(), m.name, m.value)
        return [replace(req, body=_encode_query(pairs).encode("ascii"))]
    if m.kind is MutationKind.REORDER:
        return [replace(req, headers=tuple(reversed(req.headers)))]
    if m.kind is MutationKind.DUPLICATE:
        return [req, req]
    raise ValueError(f"unknown mutation kind {m.kind}")
