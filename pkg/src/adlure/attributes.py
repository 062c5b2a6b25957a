"""Honeyuser attribute synthesis and deployment artifact emission.

Distinguished names are position-dependent: they are rebuilt from the
node's container path in the graph (OU chain up to the Domain root, or the
default Users container when an account hangs straight off the domain or
only off groups). Position-independent attributes (names, descriptions)
are sampled from the bundled corpus. Deployment artifacts are an RFC 2849
LDIF document and a PowerShell provisioning script; actually applying them
to a directory is the operator's job.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusExhaustedError, UnreachableNodeError
from .graph import ADGraph
from .namebank import DEFAULT_CORPUS, NameCorpus
from .schema import NodeType

SAM_MAX_LEN = 20
_SAM_ALLOWED = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-")
# RFC 4514 characters that need escaping inside a DN value.
_DN_SPECIALS = set(',+"\\<>;=')


@dataclass(frozen=True)
class HoneyuserRecord:
    node_id: str
    cn: str
    sam_account_name: str
    distinguished_name: str
    display_name: str
    description: str
    member_of: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "cn": self.cn,
            "sam_account_name": self.sam_account_name,
            "distinguished_name": self.distinguished_name,
            "display_name": self.display_name,
            "description": self.description,
            "member_of": list(self.member_of),
        }


def _display(graph: ADGraph, node_id: str) -> str:
    return graph.node(node_id).attributes.get("name", node_id)


def escape_dn_value(value: str) -> str:
    out = []
    for i, ch in enumerate(value):
        if ch in _DN_SPECIALS or (ch == " " and i in (0, len(value) - 1)) or (ch == "#" and i == 0):
            out.append("\\" + ch)
        else:
            out.append(ch)
    return "".join(out)


def domain_components(graph: ADGraph) -> str:
    """``DC=...`` suffix from the Domain node's dotted name."""
    domains = graph.nodes_of_type(NodeType.DOMAIN)
    if not domains:
        raise UnreachableNodeError("graph has no Domain node to anchor DNs")
    name = _display(graph, domains[0].node_id)
    return ",".join(f"DC={escape_dn_value(part)}" for part in name.split(".") if part)


class DnResolver:
    """Builds distinguished names for one graph, memoizing container paths."""

    def __init__(self, graph: ADGraph):
        self.graph = graph
        self._dc = domain_components(graph)
        self._memo: dict[str, str] = {}

    def dn(self, node_id: str) -> str:
        node = self.graph.node(node_id)
        if node.node_type is NodeType.DOMAIN:
            return self._dc
        rdn_attr = "OU" if node.node_type is NodeType.ORGANIZATIONAL_UNIT else "CN"
        rdn = f"{rdn_attr}={escape_dn_value(_display(self.graph, node_id))}"
        return f"{rdn},{self.container_path(node_id)}"

    def container_path(self, node_id: str) -> str:
        if node_id in self._memo:
            return self._memo[node_id]
        graph = self.graph
        node = graph.node(node_id)
        ou_parents = [
            p for p in graph.predecessors(node_id)
            if graph.node(p).node_type is NodeType.ORGANIZATIONAL_UNIT
        ]
        domain_parent = any(
            graph.node(p).node_type is NodeType.DOMAIN for p in graph.predecessors(node_id)
        )
        if ou_parents:
            result = min(
                f"OU={escape_dn_value(_display(graph, p))},{self.container_path(p)}"
                for p in ou_parents
            )
        elif node.node_type is NodeType.ORGANIZATIONAL_UNIT:
            if not domain_parent:
                raise UnreachableNodeError(
                    f"OU {node_id!r} has no container path to the Domain root"
                )
            result = self._dc
        else:
            # Straight off the domain, or membership edges only: default container.
            result = f"CN=Users,{self._dc}"
        self._memo[node_id] = result
        return result


def build_dn(graph: ADGraph, node_id: str) -> str:
    """Distinguished name of ``node_id`` from its container path.

    OU parents are followed recursively (nearest first); objects hanging
    straight off the Domain, or only off groups, land in the default
    ``CN=Users`` container. With several OU parents the lexicographically
    smallest full path wins.
    """
    return DnResolver(graph).dn(node_id)


def _sanitize_sam(first: str, last: str) -> str:
    base = (first[:1] + last).lower()
    cleaned = "".join(ch for ch in base if ch in _SAM_ALLOWED)
    return cleaned[:SAM_MAX_LEN]


def generate_attributes(
    graph: ADGraph,
    new_nodes: Iterable[str],
    rng: np.random.Generator,
    name_corpus: NameCorpus = DEFAULT_CORPUS,
) -> list[HoneyuserRecord]:
    """Synthesize one HoneyuserRecord per new node.

    Account names are first-initial plus surname, de-duplicated with a
    numeric suffix against every sAMAccountName already present in the
    graph. Group memberships come from incoming Group edges.
    """
    ids = sorted(new_nodes)
    resolver = DnResolver(graph)
    taken_sams: set[str] = set()
    for n in graph.nodes:
        for key, value in n.attributes.items():
            if key.lower() == "samaccountname" and value:
                taken_sams.add(value.lower())
    taken_dns: set[str] = set()
    records: list[HoneyuserRecord] = []
    for nid in ids:
        node = graph.node(nid)
        if node.node_type is not NodeType.USER:
            raise ValueError(f"honeyuser node {nid!r} has type {node.node_type.value}")
        first = name_corpus.first_names[rng.integers(len(name_corpus.first_names))]
        last = name_corpus.last_names[rng.integers(len(name_corpus.last_names))]
        sam = _unique_sam(_sanitize_sam(first, last), taken_sams)
        taken_sams.add(sam.lower())

        cn, dn = _unique_cn_dn(resolver, nid, f"{first} {last}", taken_dns)
        taken_dns.add(dn.lower())

        member_of = tuple(
            sorted(
                resolver.dn(p)
                for p in graph.predecessors(nid)
                if graph.node(p).node_type is NodeType.GROUP
            )
        )
        records.append(
            HoneyuserRecord(
                node_id=nid,
                cn=cn,
                sam_account_name=sam,
                distinguished_name=dn,
                display_name=f"{first} {last}",
                description=name_corpus.descriptions[rng.integers(len(name_corpus.descriptions))],
                member_of=member_of,
            )
        )
    _validate_records(records)
    return records


def _unique_sam(base: str, taken: set[str]) -> str:
    if not base:
        raise CorpusExhaustedError("cannot derive an account name from empty name parts")
    if base.lower() not in taken:
        return base
    for i in range(1, 10_000):
        suffix = str(i)
        candidate = base[: SAM_MAX_LEN - len(suffix)] + suffix
        if candidate.lower() not in taken:
            return candidate
    raise CorpusExhaustedError(f"could not find a unique account name for {base!r}")


def _unique_cn_dn(
    resolver: DnResolver, node_id: str, cn_base: str, taken_dns: set[str]
) -> tuple[str, str]:
    container = resolver.container_path(node_id)
    for i in range(0, 10_000):
        cn = cn_base if i == 0 else f"{cn_base} {i + 1}"
        dn = f"CN={escape_dn_value(cn)},{container}"
        if dn.lower() not in taken_dns:
            return cn, dn
    raise CorpusExhaustedError(f"could not find a unique DN for {cn_base!r}")


def _validate_records(records: Sequence[HoneyuserRecord]) -> None:
    sams = [r.sam_account_name for r in records]
    if len(set(s.lower() for s in sams)) != len(sams):
        raise ValueError("duplicate sAMAccountName across records")
    dns = [r.distinguished_name for r in records]
    if len(set(d.lower() for d in dns)) != len(dns):
        raise ValueError("duplicate distinguished name across records")
    for r in records:
        if len(r.sam_account_name) > SAM_MAX_LEN:
            raise ValueError(f"sAMAccountName too long: {r.sam_account_name!r}")
        if not set(r.sam_account_name) <= _SAM_ALLOWED:
            raise ValueError(f"illegal characters in {r.sam_account_name!r}")


# -- LDIF ----------------------------------------------------------------------

_SAFE_INIT = set(range(0x01, 0x7F)) - {0x00, 0x0A, 0x0D, 0x20, 0x3A, 0x3C}
_SAFE_ANY = set(range(0x01, 0x7F)) - {0x00, 0x0A, 0x0D}


def _ldif_attr(name: str, value: str) -> str:
    """One attribute line, base64-encoded when the value is not a SAFE-STRING."""
    data = value.encode("utf-8")
    safe = (
        len(data) > 0
        and data[0] in _SAFE_INIT
        and all(b in _SAFE_ANY for b in data)
        and not value.endswith(" ")
    ) or len(data) == 0
    if safe:
        return f"{name}: {value}"
    return f"{name}:: {base64.b64encode(data).decode('ascii')}"


def _fold(line: str, width: int = 76) -> list[str]:
    """RFC 2849 line folding: continuations start with one space."""
    if len(line) <= width:
        return [line]
    out = [line[:width]]
    rest = line[width:]
    step = width - 1
    for i in range(0, len(rest), step):
        out.append(" " + rest[i : i + step])
    return out


def export_ldif(records: Sequence[HoneyuserRecord], graph: ADGraph) -> str:
    """RFC 2849 document: one add entry per honeyuser, one modify per membership."""
    domains = graph.nodes_of_type(NodeType.DOMAIN)
    upn_suffix = _display(graph, domains[0].node_id) if domains else "example.local"

    lines: list[str] = ["version: 1"]
    for record in records:
        lines.append("")
        lines.extend(_fold(_ldif_attr("dn", record.distinguished_name)))
        lines.append("changetype: add")
        for oc in ("top", "person", "organizationalPerson", "user"):
            lines.append(f"objectClass: {oc}")
        lines.extend(_fold(_ldif_attr("cn", record.cn)))
        lines.extend(_fold(_ldif_attr("sAMAccountName", record.sam_account_name)))
        lines.extend(_fold(_ldif_attr("displayName", record.display_name)))
        lines.extend(_fold(_ldif_attr("description", record.description)))
        lines.extend(
            _fold(_ldif_attr("userPrincipalName", f"{record.sam_account_name}@{upn_suffix}"))
        )
    for record in records:
        for group_dn in record.member_of:
            lines.append("")
            lines.extend(_fold(_ldif_attr("dn", group_dn)))
            lines.append("changetype: modify")
            lines.append("add: member")
            lines.extend(_fold(_ldif_attr("member", record.distinguished_name)))
            lines.append("-")
    return "\n".join(lines) + "\n"


# -- provisioning script ---------------------------------------------------------

def _ps_quote(value: str) -> str:
    return '"' + value.replace("`", "``").replace('"', '`"').replace("$", "`$") + '"'


def export_provisioning_script(records: Sequence[HoneyuserRecord], graph: ADGraph) -> str:
    """PowerShell script with one New-ADUser per record and Add-ADGroupMember per membership.

    Passwords are never emitted; the script asks the operator for one
    shared secure string at run time.
    """
    lines = [
        "# Honeyuser provisioning script (generated). Review before running.",
        "$HoneyuserPassword = Read-Host -AsSecureString -Prompt 'Password for honeyuser accounts'",
        "",
    ]
    for record in records:
        # Path is the parent container: strip the leading CN=<cn> component.
        parent = record.distinguished_name.split(",", 1)[1]
        lines.append(
            "New-ADUser"
            f" -Name {_ps_quote(record.cn)}"
            f" -SamAccountName {_ps_quote(record.sam_account_name)}"
            f" -Path {_ps_quote(parent)}"
            f" -DisplayName {_ps_quote(record.display_name)}"
            f" -Description {_ps_quote(record.description)}"
            " -AccountPassword $HoneyuserPassword"
            " -Enabled $true"
        )
    for record in records:
        for group_dn in record.member_of:
            lines.append(
                "Add-ADGroupMember"
                f" -Identity {_ps_quote(group_dn)}"
                f" -Members {_ps_quote(record.sam_account_name)}"
            )
    return "\n".join(lines) + "\n"


def records_to_json(records: Sequence[HoneyuserRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2) + "\n"
