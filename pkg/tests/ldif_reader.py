"""Strict RFC 2849 reader used to verify emitted LDIF.

Independent of the writer: parses from scratch, validating line grammar,
folding, base64 payloads and changetype structure, and raises ValueError
on the first deviation.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field

_ATTR_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9-]*(;[A-Za-z0-9-]+)*$")
_CHANGETYPES = {"add", "delete", "modify", "modrdn", "moddn"}
_MOD_OPS = {"add", "delete", "replace"}


@dataclass
class LdifEntry:
    dn: str
    changetype: str
    attributes: list[tuple[str, str]] = field(default_factory=list)
    # for changetype: modify -- list of (op, attribute, values)
    modifications: list[tuple[str, str, list[str]]] = field(default_factory=list)


def _unfold(raw_lines: list[str]) -> list[str]:
    lines: list[str] = []
    for lineno, line in enumerate(raw_lines, 1):
        if line.startswith(" "):
            if not lines:
                raise ValueError(f"line {lineno}: continuation with nothing to continue")
            lines[-1] += line[1:]
        else:
            lines.append(line)
    return lines


def _parse_attr_line(line: str) -> tuple[str, str]:
    if ":" not in line:
        raise ValueError(f"not an attribute line: {line!r}")
    name, _, rest = line.partition(":")
    if not _ATTR_NAME.match(name):
        raise ValueError(f"bad attribute name {name!r}")
    if rest.startswith(":"):
        payload = rest[1:]
        if payload.startswith(" "):
            payload = payload[1:]
        if payload.strip() != payload or " " in payload:
            raise ValueError(f"malformed base64 payload in {line!r}")
        try:
            value = base64.b64decode(payload, validate=True).decode("utf-8")
        except Exception as exc:
            raise ValueError(f"invalid base64 in {line!r}: {exc}") from exc
        return name, value
    if rest.startswith("<"):
        raise ValueError(f"URL values are not accepted: {line!r}")
    if rest.startswith(" "):
        return name, rest[1:]
    if rest == "":
        return name, ""
    raise ValueError(f"missing space after colon in {line!r}")


def parse_ldif(text: str) -> list[LdifEntry]:
    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    lines = _unfold(raw)

    # Split into paragraphs on blank lines, dropping comments.
    paragraphs: list[list[str]] = []
    current: list[str] = []
    for line in lines:
        if line == "":
            if current:
                paragraphs.append(current)
                current = []
            continue
        if line.startswith("#"):
            continue
        current.append(line)
    if current:
        paragraphs.append(current)
    if not paragraphs:
        raise ValueError("empty LDIF document")

    first = paragraphs[0]
    if first and first[0].lower().startswith("version:"):
        name, version = _parse_attr_line(first[0])
        if version.strip() != "1":
            raise ValueError(f"unsupported LDIF version {version!r}")
        first.pop(0)
        if not first:
            paragraphs.pop(0)

    entries: list[LdifEntry] = []
    for para in paragraphs:
        entries.append(_parse_entry(para))
    return entries


def _parse_entry(lines: list[str]) -> LdifEntry:
    name, dn = _parse_attr_line(lines[0])
    if name.lower() != "dn":
        raise ValueError(f"entry must start with dn:, got {lines[0]!r}")
    if len(lines) < 2:
        raise ValueError(f"entry {dn!r} has no content")
    name, changetype = _parse_attr_line(lines[1])
    if name.lower() != "changetype":
        raise ValueError(f"entry {dn!r}: expected changetype, got {lines[1]!r}")
    changetype = changetype.lower()
    if changetype not in _CHANGETYPES:
        raise ValueError(f"unknown changetype {changetype!r}")
    entry = LdifEntry(dn=dn, changetype=changetype)

    body = lines[2:]
    if changetype == "modify":
        i = 0
        while i < len(body):
            op_name, op_attr = _parse_attr_line(body[i])
            if op_name.lower() not in _MOD_OPS:
                raise ValueError(f"entry {dn!r}: expected mod-spec, got {body[i]!r}")
            i += 1
            values: list[str] = []
            while i < len(body) and body[i] != "-":
                attr, value = _parse_attr_line(body[i])
                if attr.lower() != op_attr.lower():
                    raise ValueError(
                        f"entry {dn!r}: value line for {attr!r} inside {op_attr!r} block"
                    )
                values.append(value)
                i += 1
            if i >= len(body):
                raise ValueError(f"entry {dn!r}: mod-spec not terminated by '-'")
            i += 1  # consume "-"
            entry.modifications.append((op_name.lower(), op_attr, values))
        if not entry.modifications:
            raise ValueError(f"entry {dn!r}: modify entry without mod-specs")
    else:
        for line in body:
            if line == "-":
                raise ValueError(f"entry {dn!r}: stray '-' outside modify")
            entry.attributes.append(_parse_attr_line(line))
    return entry
