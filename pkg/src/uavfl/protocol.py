"""Round protocol: latency accounting, user selection, transmission budgets.

Implements the per-round deadline bookkeeping (training, uplink, downlink
components), the latency-screened uniform user selection, the opportunistic
intermediate-transmission budget earned by relaxing the uplink deadline by a
factor b, and the server inbox with its overwrite semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .learning import ModelParams

__all__ = [
    "LatencyProfile",
    "TransmissionBudget",
    "InboxEntry",
    "ServerInbox",
    "SelectionResult",
    "StaleUpdate",
    "model_size_bits",
    "activation_bits",
    "uplink_latency",
    "one_round_latency",
    "select_users",
    "scheduled_epochs",
    "compute_budget",
    "try_opportunistic_transmit",
    "final_upload",
    "collect_for_aggregation",
]

BUDGET_SLACK_S = 1e-9  # tolerance when comparing a transmission to its budget


@dataclass
class LatencyProfile:
    """Per-round latency decomposition for one user."""

    train_s: float
    uplink_s: float
    downlink_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.train_s + self.uplink_s + self.downlink_s


def model_size_bits(model: ModelParams, bytes_per_param: int = 4) -> int:
    """Serialized size of a parameter vector at a fixed bytes-per-parameter."""
    if bytes_per_param < 1:
        raise ValueError("bytes_per_param must be positive")
    return int(model.values.size) * bytes_per_param * 8


def activation_bits(partition_size: int, cut_width: int, bytes_per_value: int = 4) -> int:
    """Bits shipped upstream per round for cut-layer activations."""
    if partition_size < 0 or cut_width < 1 or bytes_per_value < 1:
        raise ValueError("activation size inputs out of range")
    return partition_size * cut_width * bytes_per_value * 8


def uplink_latency(
    mode: str,
    b: int,
    model_bits: int,
    act_bits: int,
    rate_bps: float,
) -> float:
    """Deadline-relaxed uplink time: b model uploads, plus activations for
    split users. Zero rate yields an infinite sentinel."""
    if mode not in ("fl", "sl"):
        raise ValueError(f"unknown mode {mode!r}")
    if b < 1:
        raise ValueError("b must be at least 1")
    total_bits = b * model_bits + (act_bits if mode == "sl" else 0)
    if rate_bps <= 0.0:
        return math.inf
    return total_bits / rate_bps


def one_round_latency(
    mode: str,
    local_epochs: int,
    partition_size: int,
    compute_s_per_sample: float,
    b: int,
    full_model_bits: int,
    ue_model_bits: int,
    act_bits: int,
    uplink_rate_bps: float,
    downlink_rate_bps: float,
    sl_compute_fraction: float = 0.5,
) -> LatencyProfile:
    """Full round latency for eligibility screening.

    Full-model users: local training plus b model uploads. Split users: the
    user-side compute fraction, b user-side model uploads plus activations,
    and a downlink of the user-side model plus the gradient feedback (same
    size as the activations).
    """
    if mode == "fl":
        train = local_epochs * partition_size * compute_s_per_sample
        up = uplink_latency("fl", b, full_model_bits, 0, uplink_rate_bps)
        down = 0.0
    elif mode == "sl":
        train = local_epochs * partition_size * compute_s_per_sample * sl_compute_fraction
        up = uplink_latency("sl", b, ue_model_bits, act_bits, uplink_rate_bps)
        feedback_bits = ue_model_bits + act_bits
        down = feedback_bits / downlink_rate_bps if downlink_rate_bps > 0.0 else math.inf
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return LatencyProfile(train_s=train, uplink_s=up, downlink_s=down)


@dataclass
class SelectionResult:
    """Users picked for one round, split by training mode."""

    selected: tuple[int, ...]
    fl_users: tuple[int, ...]
    sl_users: tuple[int, ...]


def select_users(
    uavs,
    total_latency_s: dict[int, float],
    tau_max_s: float,
    select_k: int,
    rng: np.random.Generator,
) -> SelectionResult:
    """Uniformly choose up to select_k users whose round fits the deadline."""
    if select_k < 1:
        raise ValueError("select_k must be at least 1")
    eligible = sorted(u.uav_id for u in uavs if total_latency_s[u.uav_id] <= tau_max_s)
    take = min(select_k, len(eligible))
    if take == 0:
        chosen: tuple[int, ...] = ()
    else:
        chosen = tuple(sorted(int(i) for i in rng.choice(eligible, size=take, replace=False)))
    by_id = {u.uav_id: u for u in uavs}
    fl = tuple(i for i in chosen if not by_id[i].sl_required)
    sl = tuple(i for i in chosen if by_id[i].sl_required)
    return SelectionResult(selected=chosen, fl_users=fl, sl_users=sl)


def scheduled_epochs(local_epochs: int, b: int) -> tuple[int, ...]:
    """Epochs at which the b-th fractions of local training complete.

    ceil(k*e/b) for k = 1..b; reduces to multiples of e/b when b divides e.
    """
    if local_epochs < 1:
        raise ValueError("local_epochs must be at least 1")
    if not 1 <= b <= local_epochs:
        raise ValueError("b must lie in 1..local_epochs")
    return tuple(sorted({-(-k * local_epochs // b) for k in range(1, b + 1)}))


@dataclass
class TransmissionBudget:
    """Remaining opportunistic-transmission time bought by relaxing the deadline."""

    b: int
    extra_s: float
    scheduled: tuple[int, ...]
    model_bits: int
    baseline_rate_bps: float

    def __post_init__(self):
        if self.extra_s < 0.0:
            raise ValueError("budget must be non-negative")


def compute_budget(
    b: int,
    model_bits: int,
    baseline_rate_bps: float,
    local_epochs: int,
) -> TransmissionBudget:
    """Budget (b-1) * model_bits / baseline_rate plus the attempt schedule."""
    if baseline_rate_bps <= 0.0:
        raise ValueError("baseline rate must be positive")
    if model_bits < 1:
        raise ValueError("model_bits must be positive")
    sched = scheduled_epochs(local_epochs, b)
    extra = (b - 1) * model_bits / baseline_rate_bps
    return TransmissionBudget(
        b=b,
        extra_s=extra,
        scheduled=sched,
        model_bits=model_bits,
        baseline_rate_bps=baseline_rate_bps,
    )


@dataclass
class InboxEntry:
    """One candidate update sitting in the server inbox."""

    user_id: int
    params: ModelParams
    kind: str  # "intermediate" | "final" | "stale_final"
    epoch_tag: int
    round_tag: int


@dataclass
class StaleUpdate:
    """A final update queued for delivery in a later round (async scheme)."""

    user_id: int
    params: ModelParams
    round_tag: int
    bits: int


class ServerInbox:
    """At most one pending update per user; later deposits overwrite."""

    def __init__(self):
        self._entries: dict[int, InboxEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def deposit(self, entry: InboxEntry) -> None:
        self._entries[entry.user_id] = entry

    def remove(self, user_id: int) -> None:
        self._entries.pop(user_id, None)

    def get(self, user_id: int) -> InboxEntry | None:
        return self._entries.get(user_id)

    def entries(self) -> list[InboxEntry]:
        """Pending entries in ascending user order."""
        return [self._entries[k] for k in sorted(self._entries)]

    def clear(self) -> None:
        self._entries.clear()


def try_opportunistic_transmit(
    budget: TransmissionBudget,
    params: ModelParams,
    rate_bps: float,
    inbox: ServerInbox,
    user_id: int,
    epoch: int,
    round_index: int,
) -> bool:
    """Attempt one intermediate upload at the current real-time rate.

    Deducts the transmission time from the budget and deposits a snapshot
    when it fits; otherwise the attempt is cancelled and nothing changes.
    """
    tau = budget.model_bits / rate_bps if rate_bps > 0.0 else math.inf
    if tau <= budget.extra_s + BUDGET_SLACK_S:
        budget.extra_s = max(0.0, budget.extra_s - tau)
        inbox.deposit(
            InboxEntry(
                user_id=user_id,
                params=params.copy(),
                kind="intermediate",
                epoch_tag=epoch,
                round_tag=round_index,
            )
        )
        return True
    return False


def final_upload(
    scheme: str,
    user_id: int,
    params: ModelParams,
    interrupted: bool,
    inbox: ServerInbox,
    stale_queue: list[StaleUpdate],
    round_index: int,
    model_bits: int,
    epoch_tag: int,
) -> int:
    """End-of-round upload; returns the bits actually delivered now.

    Delivered finals overwrite any intermediate. On interruption: opt keeps
    the latest intermediate, discard wipes the user's entry, async queues
    the final for stale delivery next round.
    """
    if scheme not in ("opt", "discard", "async"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if not interrupted:
        inbox.deposit(
            InboxEntry(
                user_id=user_id,
                params=params.copy(),
                kind="final",
                epoch_tag=epoch_tag,
                round_tag=round_index,
            )
        )
        return model_bits
    if scheme == "discard":
        inbox.remove(user_id)
    elif scheme == "async":
        inbox.remove(user_id)
        stale_queue.append(
            StaleUpdate(
                user_id=user_id,
                params=params.copy(),
                round_tag=round_index,
                bits=model_bits,
            )
        )
    # opt: leave any delivered intermediate in place
    return 0


def collect_for_aggregation(
    inbox: ServerInbox,
    stale_queue: list[StaleUpdate],
    scheme: str,
    round_index: int,
) -> tuple[list[InboxEntry], list[tuple[StaleUpdate, int]]]:
    """Drain the inbox (and, for async, due stale updates with their delays).

    Stale updates queued in earlier rounds are delivered now; the inbox is
    cleared for the next round either way.
    """
    timely = inbox.entries()
    inbox.clear()
    stale: list[tuple[StaleUpdate, int]] = []
    if scheme == "async":
        remaining = []
        for item in stale_queue:
            delay = round_index - item.round_tag
            if delay >= 1:
                stale.append((item, delay))
            else:
                remaining.append(item)
        stale_queue[:] = remaining
    return timely, stale
