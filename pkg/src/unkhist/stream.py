"""Running per-label counters over an event stream, released above a threshold.

Each label's prefix count is assembled from dyadic partial sums: the count
through round r sums the popcount(r) interval nodes given by r's binary
representation.  Every node carries one Gaussian draw for its whole life, so
an event touches at most ceil(log2(L+1)) noised values and the lifetime
budget stays logarithmic in the horizon.  Labels are released only once
their noisy prefix count clears the threshold, which keeps never-seen labels
unobservable (event-level privacy over an unknown label universe).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from .accountant import CdpBudget
from .core import (
    ParameterError,
    RandomSource,
    normal_inverse_cdf,
    sample_gaussian,
    validate_label,
)

__all__ = [
    "StreamEvent",
    "CounterConfig",
    "Counter",
    "new_counter",
    "active_node_count",
    "dyadic_nodes",
]

MECHANISM_TAG = "continual-counter"


def active_node_count(round: int) -> int:
    """How many partial sums make up the round's prefix count: popcount(round)."""
    if isinstance(round, bool) or not isinstance(round, int) or round < 1:
        raise ParameterError(f"round must be an integer >= 1, got {round!r}")
    return round.bit_count()


@lru_cache(maxsize=None)
def dyadic_nodes(round: int) -> tuple[tuple[int, int], ...]:
    """The (level, index) interval nodes tiling rounds 1..round, leftmost first.

    Node (b, m) covers rounds m*2^b + 1 through (m+1)*2^b.
    """
    if isinstance(round, bool) or not isinstance(round, int) or round < 1:
        raise ParameterError(f"round must be an integer >= 1, got {round!r}")
    nodes = []
    start = 0
    for level in reversed(range(round.bit_length())):
        if round >> level & 1:
            nodes.append((level, start >> level))
            start += 1 << level
    return tuple(nodes)


@dataclass(frozen=True)
class StreamEvent:
    """One round's arrivals: a set of labels, at most l0 of them per the config."""

    round: int
    items: frozenset[str]

    def __init__(self, round: int, items: Iterable[str]):
        if isinstance(round, bool) or not isinstance(round, int) or round < 1:
            raise ParameterError(f"round must be an integer >= 1, got {round!r}")
        labels = frozenset(items)
        for label in labels:
            validate_label(label)
        object.__setattr__(self, "round", round)
        object.__setattr__(self, "items", labels)


@dataclass(frozen=True)
class CounterConfig:
    """Horizon, sensitivity, noise scale, threshold, seed, and lifetime budget.

    ``from_privacy`` derives sigma = 1/epsilon and
    T = 1 + sigma * sqrt(depth + 1) * PhiInv(1 - delta/(l0*L)) where
    depth = ceil(log2(L+1)); direct construction is open for test hooks
    (e.g. sigma = 0 or a sunken threshold).
    """

    horizon: int
    l0: int
    sigma: float
    threshold: float
    seed: int
    budget: CdpBudget

    def __post_init__(self) -> None:
        if isinstance(self.horizon, bool) or not isinstance(self.horizon, int) or self.horizon < 1:
            raise ParameterError(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if isinstance(self.l0, bool) or not isinstance(self.l0, int) or self.l0 < 1:
            raise ParameterError(f"l0 must be an integer >= 1, got {self.l0!r}")
        if not isinstance(self.sigma, (int, float)) or self.sigma < 0 or math.isnan(self.sigma):
            raise ParameterError(f"sigma must be >= 0, got {self.sigma!r}")
        if not isinstance(self.budget, CdpBudget):
            raise ParameterError(f"budget must be a CdpBudget, got {self.budget!r}")

    @property
    def depth(self) -> int:
        """ceil(log2(horizon + 1)): the most partial sums any round can touch."""
        return self.horizon.bit_length()

    @classmethod
    def from_privacy(
        cls, horizon: int, l0: int, epsilon: float, delta: float, seed: int
    ) -> "CounterConfig":
        if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
            raise ParameterError(f"horizon must be an integer >= 1, got {horizon!r}")
        if isinstance(l0, bool) or not isinstance(l0, int) or l0 < 1:
            raise ParameterError(f"l0 must be an integer >= 1, got {l0!r}")
        if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool):
            raise ParameterError(f"epsilon must be a positive real, got {epsilon!r}")
        if not math.isfinite(epsilon) or epsilon <= 0:
            raise ParameterError(f"epsilon must be positive and finite, got {epsilon!r}")
        if not isinstance(delta, (int, float)) or isinstance(delta, bool):
            raise ParameterError(f"delta must be a real in (0, 1), got {delta!r}")
        ratio = delta / (l0 * horizon)
        if not 0.0 < ratio < 1.0:
            raise ParameterError(f"delta/(l0*horizon) = {ratio} must lie in (0, 1)")
        if not 0.0 < delta < 1.0:
            raise ParameterError(f"delta must lie strictly between 0 and 1, got {delta!r}")
        depth = horizon.bit_length()
        sigma = 1.0 / epsilon
        threshold = 1.0 + sigma * math.sqrt(depth + 1.0) * normal_inverse_cdf(1.0 - ratio)
        budget = CdpBudget(delta=float(delta), rho=l0 * depth * epsilon * epsilon / 2.0)
        return cls(
            horizon=horizon,
            l0=l0,
            sigma=sigma,
            threshold=threshold,
            seed=seed,
            budget=budget,
        )


@dataclass
class _LabelState:
    rng: RandomSource
    sums: dict[tuple[int, int], int] = field(default_factory=dict)
    noises: dict[tuple[int, int], float] = field(default_factory=dict)


class Counter:
    """Single-writer state machine: feed events in round order, read snapshots back.

    A label's node noises come from a child stream keyed by the label, drawn
    the first time each node is needed (leftmost node first), so late-arriving
    labels get fresh noise on every partial sum that predates them and reruns
    with the same seed and events reproduce bit-identical snapshots.
    """

    def __init__(self, config: CounterConfig, rng: RandomSource | None = None):
        if not isinstance(config, CounterConfig):
            raise ParameterError(f"expected a CounterConfig, got {config!r}")
        if rng is not None and not isinstance(rng, RandomSource):
            raise ParameterError(f"rng must be a RandomSource, got {rng!r}")
        self.config = config
        self.round = 0
        # rng is a harness hook for derived per-trial substreams; normal use
        # seeds from the config.
        self._master = rng if rng is not None else RandomSource(config.seed)
        self._labels: dict[str, _LabelState] = {}
        self._ordered: list[str] = []

    @property
    def budget(self) -> CdpBudget:
        return self.config.budget

    def labels_seen(self) -> list[str]:
        return sorted(self._labels)

    def node_noises(self, label: str) -> dict[tuple[int, int], float]:
        """Test hook: the noise fixed on each materialized node for the label."""
        state = self._labels.get(label)
        return dict(state.noises) if state is not None else {}

    def state_dict(self) -> dict:
        """Full JSON-able state: round plus per-label partial sums and noises.

        This is an operator dump, not a release: it exposes the raw noise
        values and must be handled like the input data.
        """
        labels = {}
        for label in self._ordered:
            state = self._labels[label]
            labels[label] = {
                "sums": {f"{b}:{i}": c for (b, i), c in sorted(state.sums.items())},
                "noises": {f"{b}:{i}": z for (b, i), z in sorted(state.noises.items())},
            }
        return {
            "round": self.round,
            "horizon": self.config.horizon,
            "l0": self.config.l0,
            "sigma": self.config.sigma,
            "threshold": self.config.threshold,
            "seed": self.config.seed,
            "budget": self.config.budget.to_json_dict(),
            "labels": labels,
        }

    def observe(self, event: StreamEvent) -> dict[str, float]:
        """Ingest the next round and return labels whose noisy prefix count exceeds T.

        Rejected events (wrong round, horizon exceeded, too many items) leave
        the counter untouched.
        """
        if not isinstance(event, StreamEvent):
            raise ParameterError(f"expected a StreamEvent, got {event!r}")
        config = self.config
        r = event.round
        if r != self.round + 1:
            raise ParameterError(f"expected round {self.round + 1}, got {r}")
        if r > config.horizon:
            raise ParameterError(f"round {r} exceeds the horizon {config.horizon}")
        if len(event.items) > config.l0:
            raise ParameterError(
                f"event carries {len(event.items)} items, more than l0 = {config.l0}"
            )

        self.round = r
        depth = config.depth
        for label in sorted(event.items):
            state = self._labels.get(label)
            if state is None:
                state = _LabelState(rng=self._master.child(label))
                self._labels[label] = state
                self._ordered = sorted(self._labels)
            sums = state.sums
            for level in range(depth):
                node = (level, (r - 1) >> level)
                sums[node] = sums.get(node, 0) + 1

        nodes = dyadic_nodes(r)
        sigma = config.sigma
        threshold = config.threshold
        released: dict[str, float] = {}
        for label in self._ordered:
            state = self._labels[label]
            sums = state.sums
            noises = state.noises
            total = 0.0
            for node in nodes:
                noise = noises.get(node)
                if noise is None:
                    noise = sample_gaussian(sigma, state.rng) if sigma > 0.0 else 0.0
                    noises[node] = noise
                total += sums.get(node, 0) + noise
            if total > threshold:
                released[label] = total
        return released


def new_counter(config: CounterConfig, rng: RandomSource | None = None) -> Counter:
    """Fresh counter at round zero; the lifetime budget is config.budget."""
    return Counter(config, rng)
