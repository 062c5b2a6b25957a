"""Active Directory object schema: node types and the containment/membership rules.

The five retained object classes and the relation saying which directed
edges may exist between them. Edges point from the containing or
privilege-granting object to the contained one (Group -> User for
membership, OU -> Computer for containment), so leaf accounts are sinks.
"""

from __future__ import annotations

from enum import Enum


class NodeType(str, Enum):
    """The five AD object classes kept in every graph."""

    USER = "User"
    COMPUTER = "Computer"
    DOMAIN = "Domain"
    ORGANIZATIONAL_UNIT = "OrganizationalUnit"
    GROUP = "Group"


# Fixed index used for one-hot / embedding lookups; width == len(NodeType).
NODE_TYPE_INDEX: dict[NodeType, int] = {t: i for i, t in enumerate(NodeType)}
NODE_TYPES: tuple[NodeType, ...] = tuple(NodeType)
NUM_NODE_TYPES = len(NODE_TYPES)

# Directed type pairs that can occur in a real AD. Everything else is invalid.
VALID_EDGE_PAIRS: frozenset[tuple[NodeType, NodeType]] = frozenset(
    {
        (NodeType.DOMAIN, NodeType.ORGANIZATIONAL_UNIT),
        (NodeType.DOMAIN, NodeType.GROUP),
        (NodeType.ORGANIZATIONAL_UNIT, NodeType.ORGANIZATIONAL_UNIT),
        (NodeType.ORGANIZATIONAL_UNIT, NodeType.USER),
        (NodeType.ORGANIZATIONAL_UNIT, NodeType.COMPUTER),
        (NodeType.ORGANIZATIONAL_UNIT, NodeType.GROUP),
        (NodeType.GROUP, NodeType.USER),
        (NodeType.GROUP, NodeType.COMPUTER),
        (NodeType.GROUP, NodeType.GROUP),
    }
)

# Containment proper (determines an object's place in the directory tree,
# hence its distinguished name). Membership edges are not containment.
CONTAINER_TYPES: frozenset[NodeType] = frozenset(
    {NodeType.DOMAIN, NodeType.ORGANIZATIONAL_UNIT}
)


def is_valid_edge(src: NodeType, dst: NodeType) -> bool:
    """True iff an edge from ``src`` type to ``dst`` type is legal in AD."""
    return (src, dst) in VALID_EDGE_PAIRS


def coerce_node_type(label: str) -> NodeType | None:
    """Map a free-form type label onto one of the five NodeType members.

    Returns None for anything outside the retained alphabet (GPOs,
    containers, trust objects, ...), which callers treat as "filter out".
    """
    normalized = label.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
    aliases = {
        "user": NodeType.USER,
        "computer": NodeType.COMPUTER,
        "domain": NodeType.DOMAIN,
        "ou": NodeType.ORGANIZATIONAL_UNIT,
        "organizationalunit": NodeType.ORGANIZATIONAL_UNIT,
        "group": NodeType.GROUP,
    }
    return aliases.get(normalized)
