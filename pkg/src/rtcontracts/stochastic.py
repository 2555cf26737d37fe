"""Execution-time bound estimation from empirical distributions.

Each function block records its per-cycle execution times (ns) in a
fixed-size buffer.  When the buffer first fills, the block's bound is
estimated from the empirical cdf: the samples are sorted and binned
(sqrt-of-count bins), and the first bin edge covering at least a fraction
``pi`` of the samples becomes the bound ``tau``.  The dimensionless
distance ``gamma = (tau - mu) / s`` is computed once and held constant;
afterwards only ``mu`` and ``s`` are refreshed, by replacing the oldest
``h`` samples with the newest ``h`` and recomputing over the full buffer,
so the bound tracks slow drift at a fixed per-update cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EmptyBuffer(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class WrongBatchSize(ValueError):
    pass


class UntrainedModel(RuntimeError):
    pass


def mean(samples) -> float:
    """Arithmetic mean, sum(e_i)/n."""
    n = len(samples)
    if n == 0:
        raise EmptyBuffer("mean of empty sample set")
    return sum(samples) / n


def std_dev(samples) -> float:
    """Sample standard deviation with the n-1 denominator."""
    n = len(samples)
    if n < 2:
        raise InsufficientSamples("need at least 2 samples")
    mu = mean(samples)
    return math.sqrt(sum((x - mu) ** 2 for x in samples) / (n - 1))


@dataclass(frozen=True)
class CdfEstimate:
    gamma: float
    tau: float
    mu: float
    sd: float


def empirical_cdf(samples, pi: float) -> CdfEstimate:
    """Estimate the pi-coverage execution-time bound from a sample set.

    Sorts a working copy (the caller's ordering is never touched), bins the
    range into floor(sqrt(n)) bins and walks bin edges upward from
    ``sorted[0] + width`` until the cumulative sample fraction reaches pi.
    The last candidate edge is clamped up to the maximum sample so the walk
    always terminates with full coverage.  Constant data short-circuits to
    gamma = 0 with tau = mu, which also guards the gamma division.
    """
    n = len(samples)
    if n < 2:
        raise InsufficientSamples("need at least 2 samples")
    if not 0.0 <= pi <= 1.0:
        raise ValueError(f"pi must be within [0, 1], got {pi}")
    ordered = sorted(samples)
    lo, hi = ordered[0], ordered[-1]
    mu = mean(ordered)
    sd = std_dev(ordered)
    if hi == lo:
        return CdfEstimate(gamma=0.0, tau=float(mu), mu=mu, sd=sd)
    bins = max(1, math.isqrt(n))
    width = (hi - lo) / bins
    limit = ordered[0] + width
    tau = None
    for k in range(1, bins + 1):
        if k == bins and limit < hi:
            limit = float(hi)
        covered = 0
        for x in ordered:
            if x <= limit:
                covered += 1
            else:
                break
        if covered / n >= pi:
            tau = limit
            break
        limit = limit + width
    # the clamped final edge covers everything, so pi <= 1 always lands
    gamma = (tau - mu) / sd
    return CdfEstimate(gamma=gamma, tau=float(tau), mu=mu, sd=sd)


def estimate_bound(mu: float, sd: float, gamma: float) -> float:
    """The bound as a function of the running estimates: mu + gamma * s."""
    return mu + gamma * sd


class SampleBuffer:
    """Fixed-capacity ring of execution-time samples (integer ns).

    Fills once via push(); afterwards replace_oldest() overwrites entries
    in arrival order so each batch evicts the stalest data.
    """

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.capacity = capacity
        self._data = np.zeros(capacity, dtype=np.int64)
        self._count = 0
        self._next = 0  # index of the oldest entry once full

    def __len__(self) -> int:
        return self._count

    @property
    def full(self) -> bool:
        return self._count == self.capacity

    def push(self, sample: int) -> None:
        if self.full:
            raise RuntimeError("buffer full; use replace_oldest")
        self._data[self._count] = sample
        self._count += 1

    def replace_oldest(self, batch) -> None:
        if not self.full:
            raise InsufficientSamples("buffer not yet full")
        for v in batch:
            self._data[self._next] = v
            self._next = (self._next + 1) % self.capacity

    def values(self) -> list:
        """Samples in storage order, as plain ints."""
        return [int(v) for v in self._data[: self._count]]

    def as_array(self) -> np.ndarray:
        return self._data[: self._count]


@dataclass
class ExecTimeModel:
    """Per-block execution-time model: buffer, pi, gamma, bound, window.

    Arithmetic stays in integer ns until it enters the estimators.  gamma
    is fixed at training time; window updates refresh mu/s/tau only.
    """

    capacity: int
    pi: float
    h: int
    buffer: SampleBuffer = field(init=False)
    trained: bool = False
    gamma: float = 0.0
    mu: float = 0.0
    sd: float = 0.0
    tau: float = 0.0
    cycles_since_update: int = 0
    _pending: list = field(init=False, default_factory=list)

    def __post_init__(self):
        if self.capacity < 2:
            raise ValueError("training length must be at least 2")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError("pi must be within [0, 1]")
        if not 1 <= self.h <= self.capacity:
            raise ValueError("window size must satisfy 1 <= h <= n")
        self.buffer = SampleBuffer(self.capacity)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def observe(self, sample: int) -> None:
        """Feed one measured execution time.

        While untrained this fills the buffer and trains on the sample that
        completes it; afterwards samples accumulate into the pending window
        and every h-th observation triggers a window update.
        """
        if not self.trained:
            self.buffer.push(sample)
            if self.buffer.full:
                self.train()
            return
        self._pending.append(sample)
        self.cycles_since_update += 1
        if len(self._pending) == self.h:
            batch = self._pending
            self._pending = []
            self.window_update(batch)

    def train(self) -> None:
        if self.trained:
            raise RuntimeError("gamma is fixed once; model already trained")
        if not self.buffer.full:
            raise InsufficientSamples(
                f"{len(self.buffer)}/{self.capacity} training samples"
            )
        est = empirical_cdf(self.buffer.values(), self.pi)
        self.mu, self.sd, self.gamma = est.mu, est.sd, est.gamma
        self.tau = est.tau
        self.trained = True
        self.cycles_since_update = 0

    def window_update(self, new_samples) -> None:
        """Replace the oldest h samples and re-estimate mu, s and tau."""
        if not self.trained:
            raise UntrainedModel("train before window updates")
        if len(new_samples) != self.h:
            raise WrongBatchSize(f"expected {self.h} samples, got {len(new_samples)}")
        self.buffer.replace_oldest(new_samples)
        arr = self.buffer.as_array().astype(np.float64)
        self.mu = float(arr.mean())
        self.sd = float(arr.std(ddof=1))
        self.tau = estimate_bound(self.mu, self.sd, self.gamma)
        self.cycles_since_update = 0

    def values_snapshot(self) -> list:
        return self.buffer.values()

    def snapshot(self, block: str) -> dict:
        if not self.trained:
            raise UntrainedModel(f"model for {block} not trained")
        return {
            "block": block,
            "n": self.capacity,
            "pi": self.pi,
            "gamma": self.gamma,
            "mu_ns": self.mu,
            "s_ns": self.sd,
            "tau_ns": self.tau,
            "h": self.h,
        }
