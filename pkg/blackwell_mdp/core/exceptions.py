"""Error types raised by the services; each carries the CLI exit code it maps to."""

from typing import Optional, Tuple


EXIT_VALIDATION = 1
EXIT_BUDGET = 2


class BlackwellMdpError(Exception):
    """Base class for every error raised by blackwell-mdp."""

    exit_code = EXIT_VALIDATION

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class MdpParseError(BlackwellMdpError):
    """The MDP document is not well-formed."""


class MdpValidationError(BlackwellMdpError):
    """The MDP document parsed but violates a model invariant."""

    def __init__(self, detail: str, field_path: str = ""):
        super().__init__(f"{field_path}: {detail}" if field_path else detail)
        self.field_path = field_path


class InvalidPolicyError(BlackwellMdpError):
    """A policy is not total over the states or uses an undefined action."""


class DiscountRangeError(BlackwellMdpError):
    """A discount factor lies outside its admissible range."""


class InvalidParameterError(BlackwellMdpError):
    """Generator or construction parameters admit no consistent instance."""


class NoAlternativeActionError(BlackwellMdpError):
    """A gap was requested at a state with a single defined action."""


class HypothesisViolationError(BlackwellMdpError):
    """A check was requested outside the hypothesis it is stated under."""


class UnreachablePairError(BlackwellMdpError):
    """Some target state cannot be reached from some source state."""

    def __init__(self, source: str, target: str):
        super().__init__(f"state {target!r} is unreachable from {source!r} under every policy")
        self.pair: Tuple[str, str] = (source, target)


class SolverError(BlackwellMdpError):
    """A linear system is numerically singular."""

    def __init__(self, detail: str, condition_number: Optional[float] = None):
        if condition_number is not None:
            detail = f"{detail} (condition number {condition_number:.3e})"
        super().__init__(detail)
        self.condition_number = condition_number


class ProbeNonStationaryError(BlackwellMdpError):
    """The probe-selected policy failed certification even after refinement."""


class PolicyCapExceededError(BlackwellMdpError):
    """Policy enumeration would exceed the configured cap."""

    exit_code = EXIT_BUDGET

    def __init__(self, count: int, cap: int):
        super().__init__(f"MDP has {count} deterministic policies, above the enumeration cap of {cap}")
        self.count = count
        self.cap = cap
