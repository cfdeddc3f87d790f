"""Exception types shared across the package.

Every error that a caller is expected to catch has its own class; the names
describe the contract violation, not the call site.
"""

from __future__ import annotations


class QdoptError(Exception):
    """Base class for all package errors."""


# graph construction / analysis

class InvalidIndex(QdoptError):
    """Edge endpoint out of range, negative, or a self-loop."""


class DuplicateEdge(QdoptError):
    """Same vertex pair listed twice with conflicting weights."""


class DisconnectedGraph(QdoptError):
    """Graph has no path between some pair of vertices."""


class ConnectivityRetryExhausted(QdoptError):
    """Random graph sampling never produced a connected graph."""


class EigensolverFailure(QdoptError):
    """Symmetric eigensolver did not converge or returned an inconsistent
    decomposition (checked against the required matrix identities)."""


# quantization / coding

class NonFiniteInput(QdoptError):
    """NaN or infinity fed to the quantizer or codec; the simulation that
    produced it has diverged and must not be silently clamped."""


class ScaleIndexMismatch(QdoptError):
    """Decoder step counter disagrees with the incoming message's counter."""


# optimizer state machines

class DimensionMismatch(QdoptError):
    """State, problem, and graph shapes are inconsistent."""


class IntegralSumNonzero(QdoptError):
    """Integral states must start with a zero network sum."""


class SaturationDetected(QdoptError):
    """Quantizer input left its admissible range while strict mode is on."""


class NonFiniteState(QdoptError):
    """A state coordinate became non-finite or implausibly large (> 1e12)."""


# parameter certification

class InfeasibleParameters(QdoptError):
    """Parameter set fails at least one certification inequality.

    ``violations`` holds ``(name, lhs, rhs)`` triples, in evaluation order;
    the message names the first one with both numeric sides.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        name, lhs, rhs = self.violations[0]
        super().__init__(
            f"infeasible: {name} (lhs={lhs!r}, rhs={rhs!r})"
            + (f" and {len(self.violations) - 1} more" if len(self.violations) > 1 else "")
        )


class FeasibilityNotFound(QdoptError):
    """Feasibility search exhausted its budget without a certifiable point."""


# problems

class IndivisibleCount(QdoptError):
    """Benchmark suite needs the agent count to split evenly across families."""


class UnsupportedDimension(QdoptError):
    """Grid oracle only handles one-dimensional problems without an analytic
    minimizer."""


# harness

class ConfigError(QdoptError):
    """Run configuration file is malformed or inconsistent."""
