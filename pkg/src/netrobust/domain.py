"""Shared state/action/performance types and the normalization contract.

Every other module builds on the value types defined here.  The
normalization ranges are frozen constants and are serialized into every
dataset file header so stored records are self-describing.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

# Floor on resource usage; prevents division blowup for the all-zero action.
A_MIN = 0.05

STATE_FIELDS = (
    "ul_avg_size",
    "dl_avg_size",
    "mcs_max_ul",
    "mcs_max_dl",
    "avg_distance",
)

# (low, high) per state component, in raw units (bytes, MCS index, meters).
STATE_RANGES = (
    (10_000.0, 20_000.0),
    (10_000.0, 20_000.0),
    (4.0, 20.0),
    (4.0, 28.0),
    (100.0, 200.0),
)

ACTION_FIELDS = ("bandwidth_ul", "bandwidth_dl", "cpu_ratio")
PRB_MAX = 50.0
ACTION_RANGES = ((0.0, PRB_MAX), (0.0, PRB_MAX), (0.0, 1.0))

STATE_DIM = 5
ACTION_DIM = 3


class ValidationError(ValueError):
    """An input value violates a declared range or type contract."""


class InvariantError(ValueError):
    """A derived value violates an internal invariant."""


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        raise ValidationError(f"{name}={value!r} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class NetworkState:
    """Observed network conditions for one configuration interval.

    Components, in order: average uplink payload size (bytes), average
    downlink payload size (bytes), maximum uplink MCS index, maximum
    downlink MCS index, average user-to-base-station distance (meters).
    MCS components may be fractional: perturbed states denormalize to
    non-integer indices and the rate model interpolates.
    """

    ul_avg_size: float
    dl_avg_size: float
    mcs_max_ul: float
    mcs_max_dl: float
    avg_distance: float

    def __post_init__(self) -> None:
        for name, (lo, hi) in zip(STATE_FIELDS, STATE_RANGES):
            value = getattr(self, name)
            if not isinstance(value, (int, float)):
                raise ValidationError(f"{name} must be numeric, got {type(value).__name__}")
            _check_range(name, float(value), lo, hi)

    def as_tuple(self) -> tuple[float, ...]:
        return (
            float(self.ul_avg_size),
            float(self.dl_avg_size),
            float(self.mcs_max_ul),
            float(self.mcs_max_dl),
            float(self.avg_distance),
        )

    def hash_key(self) -> int:
        """Stable 64-bit hash of the raw component values."""
        return _hash_floats(self.as_tuple())


@dataclass(frozen=True)
class NormalizedState:
    """The 5-dim state mapped componentwise into [0, 1].

    Component order matches ``STATE_FIELDS``.  Values may leave [0, 1]
    transiently while a perturbation is applied; clipping happens at the
    point of use (see ``attacker.apply_attack``).
    """

    v: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.v) != STATE_DIM:
            raise ValidationError(f"normalized state needs {STATE_DIM} components, got {len(self.v)}")


@dataclass(frozen=True)
class ConfigAction:
    """One configuration: uplink PRBs, downlink PRBs, edge CPU share."""

    bandwidth_ul: float
    bandwidth_dl: float
    cpu_ratio: float

    def __post_init__(self) -> None:
        for name, (lo, hi) in zip(ACTION_FIELDS, ACTION_RANGES):
            value = getattr(self, name)
            if not isinstance(value, (int, float)):
                raise ValidationError(f"{name} must be numeric, got {type(value).__name__}")
            _check_range(name, float(value), lo, hi)

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.bandwidth_ul), float(self.bandwidth_dl), float(self.cpu_ratio))

    def normalized(self) -> tuple[float, float, float]:
        """PRB components divided by the 50-PRB cap; cpu_ratio unchanged."""
        return (
            float(self.bandwidth_ul) / PRB_MAX,
            float(self.bandwidth_dl) / PRB_MAX,
            float(self.cpu_ratio),
        )

    def hash_key(self) -> int:
        return _hash_floats(self.as_tuple())


@dataclass(frozen=True)
class PerfRecord:
    """One (state, action) transition with its measured outcome.

    ``latencies`` may be empty only for the zero-rate sentinel, in which
    case ``prob`` is 0 by definition.
    """

    state: NetworkState
    action: ConfigAction
    latencies: tuple[float, ...]
    prob: float
    usage: float
    pe: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.prob <= 1.0):
            raise InvariantError(f"prob={self.prob} outside [0, 1]")
        if not self.latencies and self.prob != 0.0:
            raise InvariantError("empty latency list requires prob == 0 (zero-rate sentinel)")
        if self.usage < A_MIN - 1e-12:
            raise InvariantError(f"usage={self.usage} below floor {A_MIN}")
        expected = performance_efficiency(self.prob, self.usage)
        if abs(self.pe - expected) > 1e-12:
            raise InvariantError(f"pe={self.pe} != prob/usage={expected}")


def _hash_floats(values: tuple[float, ...]) -> int:
    packed = struct.pack(f"<{len(values)}d", *values)
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8).digest(), "little")


def normalize_state(s: NetworkState) -> NormalizedState:
    """Map each component affinely from its frozen range to [0, 1]."""
    raw = s.as_tuple()
    v = tuple((x - lo) / (hi - lo) for x, (lo, hi) in zip(raw, STATE_RANGES))
    return NormalizedState(v=v)  # type: ignore[arg-type]


def denormalize_state(n: NormalizedState) -> NetworkState:
    """Inverse of ``normalize_state``; requires components in [0, 1]."""
    for name, x in zip(STATE_FIELDS, n.v):
        if not (-1e-12 <= x <= 1.0 + 1e-12):
            raise ValidationError(f"normalized {name}={x} outside [0, 1]")
    raw = [lo + min(max(x, 0.0), 1.0) * (hi - lo) for x, (lo, hi) in zip(n.v, STATE_RANGES)]
    return NetworkState(*raw)


def resource_usage(a: ConfigAction) -> float:
    """Mean of the normalized action components, floored at A_MIN."""
    norm = a.normalized()
    return max(sum(norm) / len(norm), A_MIN)


def performance_efficiency(prob: float, usage: float) -> float:
    """Fraction of latencies under threshold divided by resource usage."""
    if not (0.0 <= prob <= 1.0):
        raise ValidationError(f"prob={prob} outside [0, 1]")
    if usage < A_MIN - 1e-12:
        raise InvariantError(f"usage={usage} below floor {A_MIN}")
    return prob / usage


def perf_record(state: NetworkState, action: ConfigAction,
                latencies: tuple[float, ...], threshold_ms: float) -> PerfRecord:
    """Build a PerfRecord from raw latencies; empty list is the zero-rate sentinel."""
    if latencies:
        prob = sum(1 for l in latencies if l < threshold_ms) / len(latencies)
    else:
        prob = 0.0
    usage = resource_usage(action)
    return PerfRecord(
        state=state,
        action=action,
        latencies=tuple(latencies),
        prob=prob,
        usage=usage,
        pe=performance_efficiency(prob, usage),
    )
