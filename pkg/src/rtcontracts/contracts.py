"""Design-by-Contract primitives evaluated at fixed points of a cycle.

Functional contracts (pre/post/class-invariant plus loop variant/invariant
guards) are named closures registered on a block; the executor evaluates
them at the matching phase and turns false results into violation records.
A failed contract is data: it is logged and execution continues.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional


class ContractKind(Enum):
    PRECONDITION = "Precondition"
    POSTCONDITION = "Postcondition"
    CLASS_INVARIANT = "ClassInvariant"
    LOOP_INVARIANT = "LoopInvariant"
    LOOP_VARIANT = "LoopVariant"
    EXEC_TIME = "ExecTime"
    CYCLE_TIME = "CycleTime"
    JITTER = "Jitter"
    COMPLETION = "Completion"


FUNCTIONAL_KINDS = frozenset({
    ContractKind.PRECONDITION,
    ContractKind.POSTCONDITION,
    ContractKind.CLASS_INVARIANT,
    ContractKind.LOOP_INVARIANT,
    ContractKind.LOOP_VARIANT,
})

REALTIME_KINDS = frozenset(ContractKind) - FUNCTIONAL_KINDS


@dataclass(frozen=True)
class ContractViolation:
    kind: ContractKind
    block: str
    cycle: int
    label: str
    message: str
    measured_ns: Optional[float] = None
    bound_ns: Optional[float] = None
    timestamp_ns: int = 0

    def to_record(self) -> dict:
        """JSON-lines object shape for the violation sink."""
        return {
            "cycle": self.cycle,
            "block": self.block,
            "kind": self.kind.value,
            "message": self.message,
            "measured_ns": self.measured_ns,
            "bound_ns": self.bound_ns,
        }

    def to_text(self) -> str:
        line = (f"cycle {self.cycle} block {self.block} "
                f"{self.kind.value}[{self.label}]: {self.message}")
        if self.measured_ns is not None:
            line += f" (measured={self.measured_ns} bound={self.bound_ns})"
        return line


@dataclass
class Contract:
    """A named check attached to a block, evaluated by the executor."""

    kind: ContractKind
    label: str
    predicate: Optional[Callable[[], bool]] = None


class DuplicateLabel(KeyError):
    pass


class UnknownLabel(KeyError):
    pass


class OldStore:
    """Cycle-scoped deep copies of values captured before mutation."""

    def __init__(self):
        self._saved = {}

    def capture(self, label: str, value) -> None:
        if label in self._saved:
            raise DuplicateLabel(f"{label!r} already captured this cycle")
        self._saved[label] = copy.deepcopy(value)

    def get(self, label: str):
        try:
            return self._saved[label]
        except KeyError:
            raise UnknownLabel(f"{label!r} not captured this cycle") from None

    def clear(self) -> None:
        self._saved.clear()

    def __contains__(self, label: str) -> bool:
        return label in self._saved


class NullOldStore:
    """Drop-in no-op store used while contracts are disabled."""

    def capture(self, label, value):
        pass

    def get(self, label):
        raise UnknownLabel(f"{label!r}: contracts disabled, nothing captured")

    def clear(self):
        pass

    def __contains__(self, label):
        return False


NULL_OLD_STORE = NullOldStore()


def check(kind: ContractKind, label: str, ok: bool, ctx,
          message: str = "", measured=None, bound=None) -> Optional[ContractViolation]:
    """Turn a predicate result into a violation record and forward it.

    Returns None when the check holds; otherwise builds the record, hands
    it to the run context's log and returns it.  Never raises: execution
    always continues past a failed contract.
    """
    if ok:
        return None
    violation = ContractViolation(
        kind=kind,
        block=ctx.block,
        cycle=ctx.cycle,
        label=label,
        message=message or f"{kind.value} {label!r} failed",
        measured_ns=measured,
        bound_ns=bound,
        timestamp_ns=ctx.now(),
    )
    ctx.emit(violation)
    return violation


def loop_check(invariant_ok: bool, variant: int, prev_variant, ctx, label: str = "loop"):
    """One loop-iteration check: invariant truth plus variant progress.

    The variant must stay nonnegative and strictly decrease between
    iterations; the previous value is updated only when it does.  Returns
    (violations, new_prev_variant).
    """
    violations = []
    if not invariant_ok:
        violations.append(check(
            ContractKind.LOOP_INVARIANT, label, False, ctx,
            message=f"loop invariant {label!r} false at variant {variant}",
        ))
    if variant < 0:
        violations.append(check(
            ContractKind.LOOP_VARIANT, label, False, ctx,
            message=f"loop variant {label!r} negative: {variant}",
        ))
    elif prev_variant is not None and variant >= prev_variant:
        violations.append(check(
            ContractKind.LOOP_VARIANT, label, False, ctx,
            message=f"loop variant {label!r} did not decrease: {prev_variant} -> {variant}",
        ))
    else:
        prev_variant = variant
    return violations, prev_variant


class LoopGuard:
    """Per-loop helper owned by a block; reset at loop (or cycle) entry."""

    def __init__(self, block, label: str):
        self._block = block
        self.label = label
        self._prev = None

    def reset(self) -> None:
        self._prev = None

    def check(self, invariant_ok: bool, variant: int) -> None:
        ctx = self._block._ctx
        if ctx is None:
            return
        _, self._prev = loop_check(invariant_ok, variant, self._prev, ctx, self.label)
