"""Exception types shared across the solver and harness."""


class LesbenchError(Exception):
    """Base class for all package errors."""


class ConfigError(LesbenchError):
    """Invalid or inconsistent run configuration."""


class NonDivisible(LesbenchError):
    """A global grid dimension is not divisible by its topology count."""


class GhostTooWide(LesbenchError):
    """Requested ghost width does not fit inside the local subdomain."""


class SchemeStencilOverflow(LesbenchError):
    """The selected scheme needs a wider ghost layer than the decomposition has."""


class TransportFailure(LesbenchError):
    """A peer is unreachable, timed out, or sent a malformed frame."""


class DimensionNotEven(LesbenchError):
    """Grid coarsening requested on an odd-sized dimension."""


class NoConvergence(LesbenchError):
    """Iterative solve exhausted its cycle budget; usually a setup error."""


class NonPositiveTime(LesbenchError):
    """Scaling formulas need strictly positive timings."""


class UnknownBoundaryKind(LesbenchError):
    """Boundary label not recognised by the boundary-condition dispatcher."""


class UnknownCase(LesbenchError):
    """Benchmark case id is not one of the built-in cases."""


class ReportIncomplete(LesbenchError):
    """A benchmark run aborted before producing a full timing report."""
