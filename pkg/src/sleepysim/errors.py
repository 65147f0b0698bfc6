"""Exception types shared across the simulator."""


class InvalidConfig(ValueError):
    """A scenario config violates an invariant. Carries the offending field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ScheduleEmpty(InvalidConfig):
    """Some timeslot has zero awake nodes (the model requires 0 < n_t)."""

    def __init__(self, slot: int):
        self.slot = slot
        super().__init__("schedule", f"no node awake at slot {slot}")


class PolicyViolation(PermissionError):
    """Key-access policy denied an oracle query (caller may not use that key)."""


class AsleepCaller(RuntimeError):
    """An asleep node attempted an oracle query."""


class BudgetExceeded(RuntimeError):
    """Per-node per-slot oracle query budget exhausted."""


class RateLimited(RuntimeError):
    """Second delay-oracle call by the same node within one timeslot."""


class AsleepSender(RuntimeError):
    """An asleep node attempted to send a message."""


class AsleepRecipient(RuntimeError):
    """Delivery requested for a node that is asleep at this slot."""


class DelayOutOfRange(ValueError):
    """Requested message delay outside [1, delta]."""


class UnresolvableParent(KeyError):
    """Block parent hash does not resolve to a known block."""


class Unsatisfiable(ValueError):
    """Schedule generator cannot satisfy the requested pattern constraints."""


class UnknownAttack(ValueError):
    """Attack demo name not in the canned library."""


class ConfigError(ValueError):
    """Compiler-level parameter error (e.g. epoch shorter than a view)."""


class CorruptTrace(ValueError):
    """Persisted trace failed structural or integrity checks."""
