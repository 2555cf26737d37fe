"""Real-time contract checks.

Two layers: per-block execution-time bounds (against the trained model's
tau), and application-level cycle checks (period jitter, cycle-budget
overrun) plus cross-block completion deadlines.  All bounds are inclusive:
a measurement equal to its bound never violates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .contracts import ContractKind, ContractViolation, check
from .stochastic import ExecTimeModel, UntrainedModel


class ClockDomainMismatch(ValueError):
    pass


@dataclass
class CycleTimer:
    """Application-level timing parameters plus last measured period."""

    cycle_time_ns: int
    jitter_margin_ns: int
    last_start_ns: Optional[int] = None
    last_period_ns: Optional[int] = None


@dataclass
class CompletionContract:
    """Deadline from one block's step start to another block's step end.

    anchor_source, when set, supplies the anchor timestamp out-of-band
    (e.g. carried in a datagram from the sending application); it may
    return None to skip the cycle.  Without it the executor uses the
    anchor block's step start recorded in the current cycle.
    """

    anchor: str
    target: str
    deadline_ns: int
    label: str = "completion"
    anchor_source: Optional[Callable[[], Optional[int]]] = None

    def __post_init__(self):
        if self.deadline_ns <= 0:
            raise ValueError("completion deadline must be positive")


def check_exec_time(model: ExecTimeModel, measured_ns: int, ctx,
                    label: str = "exec-time") -> Optional[ContractViolation]:
    """Check one measured execution time against the block's bound.

    The sample is checked against the bound in force when it was taken,
    then fed to the model's pending window batch (violating samples
    included; the update rule is unconditional).
    """
    if not model.trained:
        raise UntrainedModel("execution-time contract checked before training end")
    bound = model.tau
    violation = check(
        ContractKind.EXEC_TIME, label, measured_ns <= bound, ctx,
        message=f"execution time {measured_ns}ns exceeds bound {bound:.1f}ns",
        measured=measured_ns, bound=bound,
    )
    model.observe(measured_ns)
    return violation


def check_cycle(timer: CycleTimer, measured_period_ns: int, ctx,
                label: str = "cycle-jitter") -> Optional[ContractViolation]:
    """Two-sided jitter check: |period - nominal| must stay within margin."""
    timer.last_period_ns = measured_period_ns
    deviation = abs(measured_period_ns - timer.cycle_time_ns)
    return check(
        ContractKind.JITTER, label, deviation <= timer.jitter_margin_ns, ctx,
        message=(f"cycle period {measured_period_ns}ns deviates "
                 f"{deviation}ns from nominal {timer.cycle_time_ns}ns"),
        measured=deviation, bound=timer.jitter_margin_ns,
    )


def check_cycle_budget(timer: CycleTimer, work_ns: int, ctx,
                       label: str = "cycle-budget") -> Optional[ContractViolation]:
    """The cycle's busy time must fit inside the nominal cycle time."""
    return check(
        ContractKind.CYCLE_TIME, label, work_ns <= timer.cycle_time_ns, ctx,
        message=(f"cycle work {work_ns}ns overran the "
                 f"{timer.cycle_time_ns}ns cycle time"),
        measured=work_ns, bound=timer.cycle_time_ns,
    )


def check_completion(contract: CompletionContract, anchor_start_ns: int,
                     target_end_ns: int, ctx) -> Optional[ContractViolation]:
    """Elapsed anchor-start to target-end must not exceed the deadline."""
    if target_end_ns < anchor_start_ns:
        raise ClockDomainMismatch(
            f"{contract.label}: target end precedes anchor start; "
            "timestamps are not from one monotonic domain"
        )
    elapsed = target_end_ns - anchor_start_ns
    return check(
        ContractKind.COMPLETION, contract.label, elapsed <= contract.deadline_ns, ctx,
        message=(f"{contract.target} finished {elapsed}ns after "
                 f"{contract.anchor} started (deadline {contract.deadline_ns}ns)"),
        measured=elapsed, bound=contract.deadline_ns,
    )
