"""Minimal cyclic execution kernel.

An application is an ordered set of function blocks wired through
single-slot ports and unidirectional channels.  One executor thread runs
every block once per cycle in a deterministic topological order, measures
each block's execution time with a monotonic clock, evaluates registered
contracts at fixed phases, and paces cycles against absolute deadlines
(start + k * cycle_time) so timing error never accumulates.  Time left
before the next deadline is slack, spent flushing the deferred violation
log; messages that do not fit carry over and are emitted before the next
cycle's own.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .clock import MonotonicClock
from .contracts import (
    NULL_OLD_STORE,
    Contract,
    ContractKind,
    ContractViolation,
    FUNCTIONAL_KINDS,
    LoopGuard,
    OldStore,
    check,
)
from .rtmon import (
    CompletionContract,
    CycleTimer,
    check_completion,
    check_cycle,
    check_cycle_budget,
    check_exec_time,
)
from .stochastic import ExecTimeModel

INPUT = "input"
OUTPUT = "output"


class DirectionMismatch(ValueError):
    pass


class SinkOccupied(ValueError):
    pass


class PortTypeMismatch(TypeError):
    pass


class CyclicDependency(ValueError):
    pass


class InvalidConfig(ValueError):
    pass


class Port:
    """Single-slot, latest-value data endpoint owned by one block."""

    def __init__(self, block, name, direction, dtype=None, default=None):
        self.block = block
        self.name = name
        self.direction = direction
        self.dtype = dtype
        self.default = default
        self._value = default
        self._written = False
        self.channels = []          # outgoing (output ports)
        self.source_channel = None  # incoming (input ports)

    @property
    def qualname(self) -> str:
        return f"{self.block.name}.{self.name}"

    @property
    def was_written(self) -> bool:
        return self._written

    @property
    def connected(self) -> bool:
        if self.direction == OUTPUT:
            return bool(self.channels)
        return self.source_channel is not None

    def read(self):
        """Latest value; the typed default while still unset."""
        return self._value

    def write(self, value) -> None:
        if self.direction != OUTPUT:
            raise DirectionMismatch(f"cannot write input port {self.qualname}")
        self._value = value
        self._written = True
        for channel in self.channels:
            if channel.delayed:
                channel.hold(value)
            else:
                channel.sink._deliver(value)

    def _deliver(self, value) -> None:
        self._value = value
        self._written = True

    def __repr__(self):
        return f"<Port {self.qualname} {self.direction}>"


class Channel:
    """Unidirectional output-to-input link.

    A delayed channel buffers the written value and the kernel delivers it
    at the start of the next cycle; feedback edges must be marked delayed
    to keep the schedule acyclic.
    """

    def __init__(self, source: Port, sink: Port, delayed: bool = False):
        self.source = source
        self.sink = sink
        self.delayed = delayed
        self._pending = None
        self._has_pending = False

    def hold(self, value) -> None:
        self._pending = value
        self._has_pending = True

    def release(self) -> None:
        if self._has_pending:
            self.sink._deliver(self._pending)
            self._pending = None
            self._has_pending = False


class FunctionBlock:
    """A schedulable component; subclasses implement step().

    Contracts are registered as named closures over the block and are
    evaluated by the executor: preconditions before step, postconditions
    after, class invariants after every step and additionally before steps
    from the second cycle onward.
    """

    def __init__(self, name: str):
        self.name = name
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.contracts: list = []
        self._pre: list = []
        self._post: list = []
        self._inv: list = []
        self._loop_guards: list = []
        self._old = OldStore()
        self.old = self._old
        self.contracts_active = False
        self.cycle = -1
        self.steps_run = 0
        self._ctx = None

    # -- ports ---------------------------------------------------------

    def input_port(self, name, dtype=None, default=None) -> Port:
        if name in self.inputs or name in self.outputs:
            raise InvalidConfig(f"duplicate port {self.name}.{name}")
        port = Port(self, name, INPUT, dtype, default)
        self.inputs[name] = port
        return port

    def output_port(self, name, dtype=None, default=None) -> Port:
        if name in self.inputs or name in self.outputs:
            raise InvalidConfig(f"duplicate port {self.name}.{name}")
        port = Port(self, name, OUTPUT, dtype, default)
        self.outputs[name] = port
        return port

    def port(self, name) -> Port:
        if name in self.inputs:
            return self.inputs[name]
        if name in self.outputs:
            return self.outputs[name]
        raise KeyError(f"{self.name} has no port {name!r}")

    # -- contract registration ------------------------------------------

    def require(self, label: str, predicate) -> None:
        contract = Contract(ContractKind.PRECONDITION, label, predicate)
        self.contracts.append(contract)
        self._pre.append(contract)

    def ensure(self, label: str, predicate) -> None:
        contract = Contract(ContractKind.POSTCONDITION, label, predicate)
        self.contracts.append(contract)
        self._post.append(contract)

    def invariant(self, label: str, predicate) -> None:
        contract = Contract(ContractKind.CLASS_INVARIANT, label, predicate)
        self.contracts.append(contract)
        self._inv.append(contract)

    def loop_contract(self, label: str) -> LoopGuard:
        """Declare a loop's invariant/variant pair; returns the guard the
        step body calls once per iteration."""
        self.contracts.append(Contract(ContractKind.LOOP_INVARIANT, label, None))
        self.contracts.append(Contract(ContractKind.LOOP_VARIANT, label, None))
        guard = LoopGuard(self, label)
        self._loop_guards.append(guard)
        return guard

    def contract_count(self) -> int:
        return len(self.contracts)

    # -- cycle lifecycle -------------------------------------------------

    def begin_cycle(self, cycle: int, contracts_on: bool, ctx) -> None:
        self.cycle = cycle
        self.contracts_active = contracts_on
        self._ctx = ctx
        if contracts_on:
            self._old.clear()
            self.old = self._old
        else:
            self.old = NULL_OLD_STORE
        for guard in self._loop_guards:
            guard.reset()

    def fault_active(self, kind: ContractKind) -> bool:
        return self._ctx is not None and self._ctx.fault_active(kind)

    def step(self):
        raise NotImplementedError

    def close(self):
        """Release external resources (sockets etc.); default no-op."""

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


@dataclass
class FaultPlan:
    """Deterministic injection switches, one targeted contract kind at a time.

    Functional kinds are acted on inside the blocks (they query
    fault_active and corrupt their own observables); the executor itself
    injects the scheduler-level kinds: extra busy time after the last
    block (CycleTime), early wakeup from the boundary sleep (Jitter), a
    delay in the gap after a named block (Completion).
    """

    kind: Optional[ContractKind] = None
    start_cycle: int = 0
    every: int = 1
    step_advance_ns: int = 50_000        # ExecTime: burned inside the step
    work_advance_ns: int = 0             # CycleTime: after the last block
    wake_early_ns: int = 0               # Jitter: boundary undershoot
    gap_advance_ns: int = 0              # Completion: before the target block
    gap_after: Optional[str] = None

    def active(self, kind: ContractKind, cycle: int) -> bool:
        if self.kind is not kind or cycle < self.start_cycle:
            return False
        return (cycle - self.start_cycle) % self.every == 0


@dataclass
class App:
    """Application wiring plus run parameters.

    pi/window apply to every block's execution-time model unless
    per_block overrides them; training_cycles is the shared buffer length.
    """

    name: str
    cycle_time_ms: float = 10.0
    jitter_ms: float = 0.1
    training_cycles: int = 1000
    contracts_enabled: bool = True
    pi: float = 0.95
    window: int = 1
    blocks: list = field(default_factory=list)
    channels: list = field(default_factory=list)
    completions: list = field(default_factory=list)
    per_block: dict = field(default_factory=dict)
    exec_time_contracts: bool = True
    fault: Optional[FaultPlan] = None
    seed: int = 0

    @property
    def cycle_time_ns(self) -> int:
        return int(round(self.cycle_time_ms * 1e6))

    @property
    def jitter_ns(self) -> int:
        return int(round(self.jitter_ms * 1e6))

    def add_block(self, block: FunctionBlock) -> FunctionBlock:
        if any(b.name == block.name for b in self.blocks):
            raise InvalidConfig(f"duplicate block name {block.name!r}")
        self.blocks.append(block)
        return block

    def connect(self, source: Port, sink: Port, delayed: bool = False) -> Channel:
        return connect(self, source, sink, delayed=delayed)

    def block(self, name: str) -> FunctionBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(f"no block named {name!r}")

    def block_params(self, name: str):
        """(pi, window) for one block, honoring per-block overrides."""
        if name in self.per_block:
            return self.per_block[name]
        return self.pi, self.window

    def contract_count(self) -> int:
        """Functional contracts plus one execution-time contract per block,
        one cycle-time and one jitter contract per app, and completions."""
        count = sum(b.contract_count() for b in self.blocks)
        if self.exec_time_contracts:
            count += len(self.blocks)
        count += 2  # cycle-time + jitter
        count += len(self.completions)
        return count

    def validate(self) -> None:
        if self.cycle_time_ms <= 0:
            raise InvalidConfig("cycle_time must be positive")
        if self.jitter_ms < 0:
            raise InvalidConfig("jitter margin must be nonnegative")
        if self.training_cycles < 2:
            raise InvalidConfig("training length must be at least 2")
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise InvalidConfig("block names must be unique")
        for name in list(self.per_block) + [None]:
            pi, h = (self.pi, self.window) if name is None else self.per_block[name]
            if not 0.0 <= pi <= 1.0:
                raise InvalidConfig(f"pi out of range for {name or 'app'}")
            if not 1 <= h <= self.training_cycles:
                raise InvalidConfig(f"window out of range for {name or 'app'}")
        for completion in self.completions:
            known = {b.name for b in self.blocks}
            if completion.target not in known:
                raise InvalidConfig(f"completion target {completion.target!r} unknown")

    def close(self) -> None:
        for b in self.blocks:
            b.close()


def connect(app: App, source: Port, sink: Port, delayed: bool = False) -> Channel:
    """Wire an output port to an input port with a unidirectional channel."""
    if source.direction != OUTPUT or sink.direction != INPUT:
        raise DirectionMismatch(
            f"channel must run output -> input, got "
            f"{source.direction} {source.qualname} -> {sink.direction} {sink.qualname}"
        )
    if sink.source_channel is not None:
        raise SinkOccupied(f"input {sink.qualname} is already fed")
    if source.dtype is not None and sink.dtype is not None:
        if not issubclass(source.dtype, sink.dtype):
            raise PortTypeMismatch(
                f"{source.qualname}:{source.dtype.__name__} -> "
                f"{sink.qualname}:{sink.dtype.__name__}"
            )
    channel = Channel(source, sink, delayed=delayed)
    source.channels.append(channel)
    sink.source_channel = channel
    app.channels.append(channel)
    return channel


def schedule_order(app: App) -> list:
    """Topological order over non-delayed channels, declaration order as
    tie-break; identical across calls on an unchanged app."""
    blocks = list(app.blocks)
    index = {b.name: i for i, b in enumerate(blocks)}
    indegree = {b.name: 0 for b in blocks}
    successors = {b.name: [] for b in blocks}
    for channel in app.channels:
        if channel.delayed:
            continue
        src = channel.source.block.name
        dst = channel.sink.block.name
        if src == dst:
            raise CyclicDependency(f"self-loop on {src} must be marked delayed")
        successors[src].append(dst)
        indegree[dst] += 1
    order = []
    ready = [b.name for b in blocks if indegree[b.name] == 0]
    while ready:
        ready.sort(key=index.__getitem__)
        name = ready.pop(0)
        order.append(name)
        for nxt in successors[name]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    if len(order) != len(blocks):
        stuck = sorted(n for n, d in indegree.items() if d > 0)
        raise CyclicDependency(
            f"non-delayed channel cycle involving {', '.join(stuck)}"
        )
    by_name = {b.name: b for b in blocks}
    return [by_name[n] for n in order]


# --- violation sinks and the deferred log -----------------------------------

class NullSink:
    def write(self, violation: ContractViolation) -> None:
        pass


class ListSink:
    def __init__(self):
        self.records = []

    def write(self, violation: ContractViolation) -> None:
        self.records.append(violation)


class JsonlSink:
    """One JSON object per line: {cycle, block, kind, message, measured_ns, bound_ns}."""

    def __init__(self, stream):
        self.stream = stream

    def write(self, violation: ContractViolation) -> None:
        self.stream.write(json.dumps(violation.to_record()) + "\n")


class TextSink:
    def __init__(self, stream):
        self.stream = stream

    def write(self, violation: ContractViolation) -> None:
        self.stream.write(violation.to_text() + "\n")


class ViolationLog:
    """FIFO buffer of violations emitted to a sink during slack time.

    Emission is budgeted: at most floor(slack / per-record cost) records go
    out per flush; the rest carry over to the next cycle and are emitted
    before that cycle's own messages.  The per-record cost is measured at
    startup by writing 100 records to a null sink, unless given.
    """

    def __init__(self, sink=None, emit_budget_ns: Optional[int] = None):
        self.sink = sink if sink is not None else NullSink()
        self.pending = deque()
        self.emitted = 0
        self.write_failures = 0
        if emit_budget_ns is None:
            emit_budget_ns = self._measure_budget()
        self.emit_budget_ns = max(1, emit_budget_ns)

    @staticmethod
    def _measure_budget() -> int:
        probe = ContractViolation(
            kind=ContractKind.POSTCONDITION, block="probe", cycle=0,
            label="probe", message="emission cost probe",
        )
        sink = NullSink()
        start = time.perf_counter_ns()
        for _ in range(100):
            sink.write(probe)
        elapsed = time.perf_counter_ns() - start
        return max(1, elapsed // 100)

    def log(self, violation: ContractViolation) -> None:
        self.pending.append(violation)

    def flush(self, slack_ns: int) -> int:
        """Emit pending records oldest-first within the slack estimate."""
        if slack_ns <= 0:
            return 0
        allowed = int(slack_ns // self.emit_budget_ns)
        emitted = 0
        while self.pending and emitted < allowed:
            record = self.pending[0]
            try:
                self.sink.write(record)
            except Exception:
                self.write_failures += 1
                break
            self.pending.popleft()
            emitted += 1
        self.emitted += emitted
        return emitted

    def drain(self) -> int:
        """End-of-run flush of everything still pending, budget ignored."""
        emitted = 0
        while self.pending:
            record = self.pending[0]
            try:
                self.sink.write(record)
            except Exception:
                self.write_failures += 1
                break
            self.pending.popleft()
            emitted += 1
        self.emitted += emitted
        return emitted


# --- run context, report, executor -------------------------------------------

class RunContext:
    """Per-run state shared with contract evaluation."""

    def __init__(self, clock, log, collector, fault=None):
        self.clock = clock
        self._log = log
        self._collector = collector
        self._fault = fault
        self.cycle = 0
        self.block = ""
        self.contracts_enabled = True
        self.step_starts = {}

    def now(self) -> int:
        return self.clock.now()

    def emit(self, violation: ContractViolation) -> None:
        self._collector.append(violation)
        self._log.log(violation)

    def fault_active(self, kind: ContractKind) -> bool:
        return self._fault is not None and self._fault.active(kind, self.cycle)


@dataclass(frozen=True)
class BlockSample:
    cycle: int
    block: str
    start_ns: int
    step_start_ns: int
    step_end_ns: int
    end_ns: int

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


@dataclass(frozen=True)
class RunReport:
    """Immutable per-run record: timing samples, periods, violations.

    work_ns[k] is cycle k's busy time (first block start to last block
    end, contract evaluation included when enabled); periods_ns[k] is the
    start-to-start measured period.
    """

    app: str
    cycles: int
    contracts_enabled: bool
    samples: tuple
    periods_ns: tuple
    work_ns: tuple
    violations: tuple
    models: dict
    emitted: int

    def violations_by_kind(self) -> dict:
        counts = {}
        for v in self.violations:
            counts[v.kind] = counts.get(v.kind, 0) + 1
        return counts

    def functional_violations(self) -> list:
        return [v for v in self.violations if v.kind in FUNCTIONAL_KINDS]

    def mean_work_ms(self) -> float:
        return statistics.fmean(self.work_ns) / 1e6 if self.work_ns else 0.0

    def median_work_ms(self) -> float:
        return statistics.median(self.work_ns) / 1e6 if self.work_ns else 0.0

    def to_csv(self, target) -> None:
        """Write cycle, block, duration_ns, cycle_period_ns rows."""
        own = isinstance(target, (str, bytes))
        stream = open(target, "w", newline="") if own else target
        try:
            writer = csv.writer(stream)
            writer.writerow(["cycle", "block", "duration_ns", "cycle_period_ns"])
            for s in self.samples:
                writer.writerow([s.cycle, s.block, s.duration_ns,
                                 self.periods_ns[s.cycle]])
        finally:
            if own:
                stream.close()


class Executor:
    """Single-threaded cycle executor for one application."""

    def __init__(self, app: App, clock=None, sink=None,
                 emit_budget_ns: Optional[int] = None,
                 observer: Optional[Callable] = None):
        app.validate()
        self.app = app
        self.order = schedule_order(app)
        self.clock = clock if clock is not None else MonotonicClock()
        self.log = ViolationLog(sink, emit_budget_ns)
        self.observer = observer
        self.timer = CycleTimer(app.cycle_time_ns, app.jitter_ns)
        self.models = {}
        if app.contracts_enabled and app.exec_time_contracts:
            for block in app.blocks:
                pi, h = app.block_params(block.name)
                self.models[block.name] = ExecTimeModel(
                    capacity=app.training_cycles, pi=pi, h=h)
        self._completions_by_target = {}
        for completion in app.completions:
            self._completions_by_target.setdefault(completion.target, []).append(completion)

    def run(self, cycles: int) -> RunReport:
        app = self.app
        clock = self.clock
        contracts_on = app.contracts_enabled
        violations: list = []
        samples: list = []
        periods: list = []
        work: list = []
        ctx = RunContext(clock, self.log, violations, fault=app.fault)
        ctx.contracts_enabled = contracts_on

        if cycles <= 0:
            return self._report(0, samples, periods, work, violations)

        ct = app.cycle_time_ns
        delayed_channels = [c for c in app.channels if c.delayed]
        fault = app.fault

        start = clock.now()
        deadline = start + ct
        for k in range(cycles):
            ctx.cycle = k
            ctx.step_starts = {}
            for channel in delayed_channels:
                channel.release()

            for block in self.order:
                ctx.block = block.name
                block.begin_cycle(k, contracts_on, ctx)
                t0 = clock.now()
                if contracts_on:
                    for contract in block._pre:
                        check(contract.kind, contract.label,
                              bool(contract.predicate()), ctx)
                    if k >= 1:
                        for contract in block._inv:
                            check(contract.kind, contract.label,
                                  bool(contract.predicate()), ctx)
                step_start = clock.now()
                ctx.step_starts[block.name] = step_start
                block.step()
                block.steps_run += 1
                step_end = clock.now()
                if contracts_on:
                    for contract in block._post:
                        check(contract.kind, contract.label,
                              bool(contract.predicate()), ctx)
                    for contract in block._inv:
                        check(contract.kind, contract.label,
                              bool(contract.predicate()), ctx)
                t1 = clock.now()
                samples.append(BlockSample(k, block.name, t0, step_start, step_end, t1))

                model = self.models.get(block.name)
                if model is not None:
                    if model.trained:
                        check_exec_time(model, t1 - t0, ctx)
                    else:
                        model.observe(t1 - t0)

                if fault is not None and fault.gap_after == block.name and \
                        fault.active(ContractKind.COMPLETION, k):
                    clock.advance(fault.gap_advance_ns)

                for completion in self._completions_by_target.get(block.name, ()):
                    anchor_start = self._resolve_anchor(completion, ctx)
                    if anchor_start is not None:
                        check_completion(completion, anchor_start, step_end, ctx)

            ctx.block = app.name  # cycle-level checks belong to the application
            if fault is not None and fault.active(ContractKind.CYCLE_TIME, k):
                clock.advance(fault.work_advance_ns)
            work_end = clock.now()
            cycle_work = work_end - start
            work.append(cycle_work)
            if contracts_on:
                check_cycle_budget(self.timer, cycle_work, ctx)

            if self.observer is not None:
                self.observer(k, app)

            slack = deadline - clock.now()
            if slack > 0:
                self.log.flush(slack)
                wake = deadline
                if fault is not None and fault.active(ContractKind.JITTER, k):
                    wake = max(clock.now(), deadline - fault.wake_early_ns)
                clock.sleep_until(wake)
            boundary = clock.now()
            periods.append(boundary - start)
            if contracts_on:
                check_cycle(self.timer, boundary - start, ctx)
            deadline += ct
            while deadline <= boundary:  # overrun: skip missed grid points
                deadline += ct
            start = boundary

        self.log.drain()
        return self._report(cycles, samples, periods, work, violations)

    def _resolve_anchor(self, completion: CompletionContract, ctx) -> Optional[int]:
        if completion.anchor_source is not None:
            return completion.anchor_source()
        return ctx.step_starts.get(completion.anchor)

    def _report(self, cycles, samples, periods, work, violations) -> RunReport:
        snapshots = {
            name: model.snapshot(name)
            for name, model in self.models.items() if model.trained
        }
        return RunReport(
            app=self.app.name,
            cycles=cycles,
            contracts_enabled=self.app.contracts_enabled,
            samples=tuple(samples),
            periods_ns=tuple(periods),
            work_ns=tuple(work),
            violations=tuple(violations),
            models=snapshots,
            emitted=self.log.emitted,
        )


def run_cycles(app: App, cycles: int, clock=None, sink=None,
               emit_budget_ns: Optional[int] = None,
               observer: Optional[Callable] = None) -> RunReport:
    """Build an executor for the app and run it for the given cycle count."""
    return Executor(app, clock=clock, sink=sink,
                    emit_budget_ns=emit_budget_ns, observer=observer).run(cycles)
