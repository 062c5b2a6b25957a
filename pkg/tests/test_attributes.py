from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from adlure.attributes import (
    build_dn,
    escape_dn_value,
    export_ldif,
    export_provisioning_script,
    generate_attributes,
    records_to_json,
)
from adlure.errors import UnreachableNodeError
from adlure.graph import ADGraph, Node
from adlure.namebank import DEFAULT_CORPUS, NameCorpus
from adlure.schema import NodeType

DATA_DIR = Path(__file__).parent / "data"


def _corp_graph() -> ADGraph:
    """corp.local with OU Staff containing Jane, a user straight under the
    domain-by-membership, nested OUs A > B, and two groups."""
    nodes = [
        Node("dom", NodeType.DOMAIN, {"name": "corp.local"}),
        Node("staff", NodeType.ORGANIZATIONAL_UNIT, {"name": "Staff"}),
        Node("oua", NodeType.ORGANIZATIONAL_UNIT, {"name": "A"}),
        Node("oub", NodeType.ORGANIZATIONAL_UNIT, {"name": "B"}),
        Node("g1", NodeType.GROUP, {"name": "G1"}),
        Node("g2", NodeType.GROUP, {"name": "G2"}),
        Node("jane", NodeType.USER, {"name": "Jane Doe"}),
        Node("bob", NodeType.USER, {"name": "Bob"}),
        Node("nested", NodeType.USER, {"name": "Nested"}),
    ]
    edges = [
        ("dom", "staff"),
        ("dom", "oua"),
        ("oua", "oub"),
        ("dom", "g1"),
        ("staff", "g2"),
        ("staff", "jane"),
        ("g1", "bob"),
        ("g2", "jane"),
        ("oub", "nested"),
    ]
    return ADGraph(nodes, edges)


class TestBuildDn:
    def test_user_in_ou_under_domain(self):
        g = _corp_graph()
        assert build_dn(g, "jane") == "CN=Jane Doe,OU=Staff,DC=corp,DC=local"

    def test_user_without_container_gets_default_users(self):
        g = _corp_graph()
        assert build_dn(g, "bob") == "CN=Bob,CN=Users,DC=corp,DC=local"

    def test_nested_ou_ordering_nearest_first(self):
        g = _corp_graph()
        assert build_dn(g, "nested") == "CN=Nested,OU=B,OU=A,DC=corp,DC=local"
        # oracle: walk container parents by hand
        path = []
        nid = "nested"
        while True:
            parents = [
                p for p in g.predecessors(nid)
                if g.node(p).node_type is NodeType.ORGANIZATIONAL_UNIT
            ]
            if not parents:
                break
            nid = parents[0]
            path.append(g.node(nid).attributes["name"])
        assert path == ["B", "A"]

    def test_group_dns(self):
        g = _corp_graph()
        assert build_dn(g, "g1") == "CN=G1,CN=Users,DC=corp,DC=local"
        assert build_dn(g, "g2") == "CN=G2,OU=Staff,DC=corp,DC=local"

    def test_domain_and_ou_rdn(self):
        g = _corp_graph()
        assert build_dn(g, "dom") == "DC=corp,DC=local"
        assert build_dn(g, "oub") == "OU=B,OU=A,DC=corp,DC=local"

    def test_multiple_ou_parents_take_lexicographically_smallest(self):
        nodes = [
            Node("dom", NodeType.DOMAIN, {"name": "x.io"}),
            Node("ou_z", NodeType.ORGANIZATIONAL_UNIT, {"name": "Zebra"}),
            Node("ou_a", NodeType.ORGANIZATIONAL_UNIT, {"name": "Alpha"}),
            Node("u", NodeType.USER, {"name": "U"}),
        ]
        edges = [("dom", "ou_z"), ("dom", "ou_a"), ("ou_z", "u"), ("ou_a", "u")]
        g = ADGraph(nodes, edges)
        assert build_dn(g, "u") == "CN=U,OU=Alpha,DC=x,DC=io"

    def test_no_domain_raises(self):
        g = ADGraph([Node("u", NodeType.USER)], [])
        with pytest.raises(UnreachableNodeError):
            build_dn(g, "u")

    def test_unreachable_ou_raises(self):
        nodes = [Node("dom", NodeType.DOMAIN, {"name": "x.io"}),
                 Node("ou", NodeType.ORGANIZATIONAL_UNIT)]
        g = ADGraph(nodes, [])
        with pytest.raises(UnreachableNodeError):
            build_dn(g, "ou")

    def test_escaping(self):
        assert escape_dn_value("Doe, Jane") == "Doe\\, Jane"
        assert escape_dn_value(" padded ") == "\\ padded\\ "


def _extended_graph(n_users: int = 2) -> tuple[ADGraph, list[str]]:
    g = _corp_graph()
    nodes = list(g.nodes)
    edges = list(g.edges)
    new_ids = []
    for i in range(n_users):
        nid = f"honeyuser_{i:03d}"
        nodes.append(Node(nid, NodeType.USER))
        edges.append(("g2", nid))
        if i % 2 == 0:
            edges.append(("g1", nid))
        edges.append(("staff", nid))
        new_ids.append(nid)
    return ADGraph(nodes, edges), new_ids


class TestGenerateAttributes:
    def test_dedup_with_numeric_suffix(self):
        graph, new_ids = _extended_graph(2)
        corpus = NameCorpus(first_names=("Jane",), last_names=("Doe",))
        records = generate_attributes(graph, new_ids, np.random.default_rng(0), corpus)
        assert [r.sam_account_name for r in records] == ["jdoe", "jdoe1"]
        assert records[0].cn == "Jane Doe" and records[1].cn == "Jane Doe 2"

    def test_existing_sam_attributes_block_collisions(self):
        graph, new_ids = _extended_graph(1)
        nodes = [
            Node(n.node_id, n.node_type, {**n.attributes, "sAMAccountName": "jdoe"})
            if n.node_id == "jane"
            else n
            for n in graph.nodes
        ]
        graph2 = ADGraph(nodes, graph.edges)
        corpus = NameCorpus(first_names=("Jane",), last_names=("Doe",))
        records = generate_attributes(graph2, new_ids, np.random.default_rng(0), corpus)
        assert records[0].sam_account_name == "jdoe1"

    def test_member_of_lists_group_dns(self):
        graph, new_ids = _extended_graph(1)
        records = generate_attributes(graph, new_ids, np.random.default_rng(1))
        assert records[0].member_of == (
            "CN=G1,CN=Users,DC=corp,DC=local",
            "CN=G2,OU=Staff,DC=corp,DC=local",
        )

    def test_deterministic_given_seed(self):
        graph, new_ids = _extended_graph(3)
        a = generate_attributes(graph, new_ids, np.random.default_rng(5))
        b = generate_attributes(graph, new_ids, np.random.default_rng(5))
        assert a == b

    def test_dn_consistent_with_graph_position(self):
        graph, new_ids = _extended_graph(2)
        records = generate_attributes(graph, new_ids, np.random.default_rng(2))
        for r in records:
            # all honeyusers hang off OU Staff in this fixture
            assert r.distinguished_name.endswith("OU=Staff,DC=corp,DC=local")
            assert r.distinguished_name.startswith("CN=")

    def test_sam_charset_and_length(self):
        graph, new_ids = _extended_graph(4)
        corpus = NameCorpus(
            first_names=("Zoë",), last_names=("O'Connor-Smythe Extraordinaire",)
        )
        records = generate_attributes(graph, new_ids, np.random.default_rng(3), corpus)
        import re

        for r in records:
            assert len(r.sam_account_name) <= 20
            assert re.fullmatch(r"[a-zA-Z0-9._-]+", r.sam_account_name)


class TestLdif:
    def test_structure_one_user_one_group(self):
        from .ldif_reader import parse_ldif

        graph, new_ids = _extended_graph(1)
        records = generate_attributes(graph, new_ids, np.random.default_rng(0))
        entries = parse_ldif(export_ldif(records, graph))
        adds = [e for e in entries if e.changetype == "add"]
        mods = [e for e in entries if e.changetype == "modify"]
        assert len(adds) == 1
        assert len(mods) == len(records[0].member_of)
        attrs = dict(adds[0].attributes)
        assert attrs["sAMAccountName"] == records[0].sam_account_name
        assert adds[0].dn == records[0].distinguished_name
        oc = [v for k, v in adds[0].attributes if k == "objectClass"]
        assert oc == ["top", "person", "organizationalPerson", "user"]

    def test_non_ascii_value_base64(self):
        from .ldif_reader import parse_ldif

        graph, new_ids = _extended_graph(1)
        corpus = NameCorpus(first_names=("Renée",), last_names=("Müller",))
        records = generate_attributes(graph, new_ids, np.random.default_rng(0), corpus)
        text = export_ldif(records, graph)
        assert "displayName:: " in text
        entries = parse_ldif(text)
        attrs = dict(entries[0].attributes)
        assert attrs["displayName"] == "Renée Müller"

    def test_long_lines_are_folded(self):
        from .ldif_reader import parse_ldif

        nodes = [
            Node("dom", NodeType.DOMAIN, {"name": "a-very-long-domain-name-for-testing.example.internal"}),
            Node("ou", NodeType.ORGANIZATIONAL_UNIT, {"name": "An Organizational Unit With A Remarkably Verbose Name"}),
            Node("hu", NodeType.USER),
        ]
        g = ADGraph(nodes, [("dom", "ou"), ("ou", "hu")])
        records = generate_attributes(g, ["hu"], np.random.default_rng(0))
        text = export_ldif(records, g)
        assert all(len(line) <= 76 for line in text.splitlines())
        entries = parse_ldif(text)
        assert entries[0].dn == records[0].distinguished_name

    def test_round_trip_recovers_all_records(self):
        from .ldif_reader import parse_ldif

        graph, new_ids = _extended_graph(6)
        records = generate_attributes(graph, new_ids, np.random.default_rng(4))
        entries = parse_ldif(export_ldif(records, graph))
        adds = {e.dn: dict(e.attributes) for e in entries if e.changetype == "add"}
        assert set(adds) == {r.distinguished_name for r in records}
        for r in records:
            attrs = adds[r.distinguished_name]
            assert attrs["cn"] == r.cn
            assert attrs["sAMAccountName"] == r.sam_account_name
            assert attrs["displayName"] == r.display_name
            assert attrs["description"] == r.description
        memberships = {
            (entry.dn, value)
            for entry in entries
            if entry.changetype == "modify"
            for op, attr, values in entry.modifications
            for value in values
            if (op, attr) == ("add", "member")
        }
        expected = {
            (group_dn, r.distinguished_name) for r in records for group_dn in r.member_of
        }
        assert memberships == expected


class TestProvisioningScript:
    def test_counts(self):
        import dataclasses

        graph, new_ids = _extended_graph(1)
        records = generate_attributes(graph, new_ids, np.random.default_rng(0))

        solo = [dataclasses.replace(records[0], member_of=())]
        text = export_provisioning_script(solo, graph)
        assert text.count("New-ADUser") == 1
        assert "Add-ADGroupMember" not in text

        three = [dataclasses.replace(records[0], member_of=("CN=a,DC=x", "CN=b,DC=x", "CN=c,DC=x"))]
        text3 = export_provisioning_script(three, graph)
        assert text3.count("New-ADUser") == 1
        assert text3.count("Add-ADGroupMember") == 3

    def test_no_password_literals(self):
        graph, new_ids = _extended_graph(2)
        records = generate_attributes(graph, new_ids, np.random.default_rng(0))
        text = export_provisioning_script(records, graph)
        assert "$HoneyuserPassword" in text
        assert "Read-Host" in text

    def test_golden_file(self):
        graph, new_ids = _extended_graph(5)
        records = generate_attributes(graph, new_ids, np.random.default_rng(12))
        text = export_provisioning_script(records, graph)
        golden = (DATA_DIR / "provision_golden.ps1").read_text(encoding="utf-8")
        assert text == golden


def test_records_json_round_trip():
    import json

    graph, new_ids = _extended_graph(2)
    records = generate_attributes(graph, new_ids, np.random.default_rng(0))
    docs = json.loads(records_to_json(records))
    assert [d["sam_account_name"] for d in docs] == [r.sam_account_name for r in records]
