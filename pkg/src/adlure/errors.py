"""Exception types shared across the package."""


class AdlureError(Exception):
    """Base class for all errors raised by this package."""


class GraphValidationError(AdlureError, ValueError):
    """A graph violates a structural invariant (endpoints, loops, duplicates)."""


class CycleError(GraphValidationError):
    """The edge relation contains a cycle where a DAG is required."""


class EmptyGraphError(GraphValidationError):
    """A graph with zero nodes was constructed or parsed."""


class MalformedInputError(AdlureError, ValueError):
    """An external document (JSON export, checkpoint) could not be parsed."""


class CapacityError(AdlureError, ValueError):
    """A padded size is smaller than the number of real nodes."""


class InfeasibleSpecError(AdlureError, ValueError):
    """A dataset spec cannot produce a connected, schema-valid DAG."""


class TrainingDivergedError(AdlureError, RuntimeError):
    """Training loss became non-finite."""


class CorpusExhaustedError(AdlureError, RuntimeError):
    """Unique attribute values could not be derived from the name corpus."""


class UnreachableNodeError(AdlureError, ValueError):
    """A node has no container path from the Domain root."""
