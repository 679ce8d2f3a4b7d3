"""Discrete-event ground-truth simulator.

One run models a population of users issuing request/response packets:
uplink radio serialization (one FIFO server), a fixed-delay transport hop,
a queue-based edge compute server, the transport hop back, and downlink
radio serialization.  The returned round-trip latency distribution is the
ground truth every policy and attacker is scored against.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    ConfigAction,
    NetworkState,
    PerfRecord,
    ValidationError,
    perf_record,
)

# Spectral efficiency (bit/s/Hz) per MCS index 0..28.  Even indices carry
# the published LTE CQI efficiency anchors (CQI 1..15); odd indices are the
# linear midpoints.  Monotone nondecreasing by construction.
SPECTRAL_EFFICIENCY = (
    0.1523, 0.19335, 0.2344, 0.3057, 0.3770, 0.4893, 0.6016, 0.7393,
    0.8770, 1.0264, 1.1758, 1.3262, 1.4766, 1.69535, 1.9141, 2.1602,
    2.4063, 2.5684, 2.7305, 3.0264, 3.3223, 3.6123, 3.9023, 4.21285,
    4.5234, 4.8193, 5.1152, 5.33495, 5.5547,
)

MCS_GLOBAL_MAX = {"ul": 20.0, "dl": 28.0}
MCS_CAP_FLOOR = 4.0
MCS_CAP_AT_FAR_EDGE = 8.0  # achievable index at 200 m

PRB_BANDWIDTH_HZ = 180e3

# Event kinds in processing order for simultaneous timestamps.
EV_REQUEST_GENERATED = 0
EV_UL_TX_DONE = 1
EV_EDGE_ARRIVAL = 2
EV_EDGE_SERVICE_DONE = 3
EV_DL_ARRIVAL = 4
EV_DL_TX_DONE = 5


@dataclass(frozen=True)
class SimConfig:
    """Knobs of one simulation run.  Durations in seconds, delays in ms."""

    n_users: int = 6
    sim_duration: float = 30.0
    warmup: float = 2.0
    request_rate_per_user: float = 1.0
    tn_delay_one_way: float = 2.0          # ms
    tn_capacity: float = 1e9               # bit/s
    compute_mean: float = 81.0             # ms at cpu_ratio 1.0
    compute_std: float = 35.0              # ms
    prb_bandwidth: float = PRB_BANDWIDTH_HZ
    latency_threshold_h: float = 200.0     # ms
    payload_jitter: float = 0.25           # +/- fraction around the mean size
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_users < 1:
            raise ValidationError(f"n_users={self.n_users} must be >= 1")
        if not (0 < self.warmup < self.sim_duration):
            raise ValidationError(
                f"warmup={self.warmup} must be in (0, sim_duration={self.sim_duration})")
        if self.request_rate_per_user <= 0:
            raise ValidationError("request_rate_per_user must be positive")
        if not (0.0 <= self.payload_jitter < 1.0):
            raise ValidationError(f"payload_jitter={self.payload_jitter} outside [0, 1)")
        if self.tn_capacity <= 0 or self.prb_bandwidth <= 0:
            raise ValidationError("tn_capacity and prb_bandwidth must be positive")
        if self.compute_mean <= 0 or self.compute_std < 0:
            raise ValidationError("compute_mean must be > 0 and compute_std >= 0")


@dataclass
class SimResult:
    """Round-trip times plus the conservation counters of one run."""

    rtts: list[float]
    generated: int
    completed: int       # completions at or before the horizon
    in_flight: int       # generated but not completed by the horizon
    dropped: int         # all requests, when either radio rate is zero

    def conservation_holds(self) -> bool:
        return self.completed + self.in_flight + self.dropped == self.generated


def effective_mcs(mcs_max: float, distance: float, direction: str) -> float:
    """Distance-capped MCS: the cap falls linearly from the direction's
    global maximum at 100 m to index 8 at 200 m (floored at 4, rounded
    down); the state's mcs_max binds from below."""
    if direction not in MCS_GLOBAL_MAX:
        raise ValidationError(f"direction must be 'ul' or 'dl', got {direction!r}")
    gmax = MCS_GLOBAL_MAX[direction]
    frac = (distance - 100.0) / 100.0
    cap = np.floor(gmax - (gmax - MCS_CAP_AT_FAR_EDGE) * frac)
    cap = max(cap, MCS_CAP_FLOOR)
    return float(min(mcs_max, cap))


def spectral_efficiency(mcs: float) -> float:
    """Table lookup with linear interpolation at fractional indices."""
    if not (0.0 <= mcs <= 28.0):
        raise ValidationError(f"mcs={mcs} outside [0, 28]")
    return float(np.interp(mcs, np.arange(29), SPECTRAL_EFFICIENCY))


def link_rate(prbs: float, mcs: float, prb_bandwidth: float = PRB_BANDWIDTH_HZ) -> float:
    """Radio throughput in bit/s; zero PRBs means a dead link."""
    if not (0.0 <= prbs <= 50.0):
        raise ValidationError(f"prbs={prbs} outside [0, 50]")
    if prbs == 0.0:
        return 0.0
    return prbs * prb_bandwidth * spectral_efficiency(mcs)


class _FifoStation:
    """Single-server FIFO queue; service time fixed per request at arrival."""

    def __init__(self) -> None:
        self.queue: list[int] = []
        self.busy = False

    def arrive(self, req: int) -> int | None:
        """Returns the request to start serving now, if the server is idle."""
        if self.busy:
            self.queue.append(req)
            return None
        self.busy = True
        return req

    def depart(self) -> int | None:
        """Returns the next request to serve, if any."""
        if self.queue:
            return self.queue.pop(0)
        self.busy = False
        return None


def _run_seed(cfg: SimConfig, s: NetworkState, a: ConfigAction) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, s.hash_key(), a.hash_key()])


def run_sim(s: NetworkState, a: ConfigAction, cfg: SimConfig) -> SimResult:
    """Event-driven run with full conservation accounting."""
    rng = _run_seed(cfg, s, a)
    duration_ms = cfg.sim_duration * 1e3
    warmup_ms = cfg.warmup * 1e3

    ul_rate = link_rate(a.bandwidth_ul,
                        effective_mcs(s.mcs_max_ul, s.avg_distance, "ul"),
                        cfg.prb_bandwidth)
    dl_rate = link_rate(a.bandwidth_dl,
                        effective_mcs(s.mcs_max_dl, s.avg_distance, "dl"),
                        cfg.prb_bandwidth)

    # Poisson arrivals per user, merged; all per-request randomness is drawn
    # at generation time so results are independent of event interleaving.
    arrivals: list[tuple[float, int]] = []
    for user in range(cfg.n_users):
        t = 0.0
        mean_gap_ms = 1e3 / cfg.request_rate_per_user
        while True:
            t += rng.exponential(mean_gap_ms)
            if t >= duration_ms:
                break
            arrivals.append((t, user))
    arrivals.sort()
    n = len(arrivals)

    if n == 0:
        return SimResult(rtts=[], generated=0, completed=0, in_flight=0, dropped=0)

    if ul_rate == 0.0 or dl_rate == 0.0:
        # No request can traverse a dead radio link.
        return SimResult(rtts=[], generated=n, completed=0, in_flight=0, dropped=n)

    jitter = cfg.payload_jitter
    ul_bytes = rng.uniform(1.0 - jitter, 1.0 + jitter, n) * s.ul_avg_size
    dl_bytes = rng.uniform(1.0 - jitter, 1.0 + jitter, n) * s.dl_avg_size
    cpu = max(float(a.cpu_ratio), 0.01)
    compute_ms = np.maximum(rng.normal(cfg.compute_mean, cfg.compute_std, n)
                            if cfg.compute_std > 0 else np.full(n, cfg.compute_mean),
                            1.0) / cpu

    ul_tx_ms = ul_bytes * 8.0 / ul_rate * 1e3
    dl_tx_ms = dl_bytes * 8.0 / dl_rate * 1e3
    tn_fwd_ms = ul_bytes * 8.0 / cfg.tn_capacity * 1e3 + cfg.tn_delay_one_way
    tn_back_ms = dl_bytes * 8.0 / cfg.tn_capacity * 1e3 + cfg.tn_delay_one_way

    gen_time = np.array([t for t, _ in arrivals])
    done_time = np.full(n, np.nan)

    ul = _FifoStation()
    edge = _FifoStation()
    dl = _FifoStation()

    events: list[tuple[float, int, int]] = [
        (t, EV_REQUEST_GENERATED, i) for i, (t, _) in enumerate(arrivals)
    ]
    heapq.heapify(events)

    def push(t: float, kind: int, req: int) -> None:
        heapq.heappush(events, (t, kind, req))

    while events:
        now, kind, req = heapq.heappop(events)
        if kind == EV_REQUEST_GENERATED:
            start = ul.arrive(req)
            if start is not None:
                push(now + ul_tx_ms[start], EV_UL_TX_DONE, start)
        elif kind == EV_UL_TX_DONE:
            push(now + tn_fwd_ms[req], EV_EDGE_ARRIVAL, req)
            nxt = ul.depart()
            if nxt is not None:
                push(now + ul_tx_ms[nxt], EV_UL_TX_DONE, nxt)
        elif kind == EV_EDGE_ARRIVAL:
            start = edge.arrive(req)
            if start is not None:
                push(now + compute_ms[start], EV_EDGE_SERVICE_DONE, start)
        elif kind == EV_EDGE_SERVICE_DONE:
            push(now + tn_back_ms[req], EV_DL_ARRIVAL, req)
            nxt = edge.depart()
            if nxt is not None:
                push(now + compute_ms[nxt], EV_EDGE_SERVICE_DONE, nxt)
        elif kind == EV_DL_ARRIVAL:
            start = dl.arrive(req)
            if start is not None:
                push(now + dl_tx_ms[start], EV_DL_TX_DONE, start)
        else:  # EV_DL_TX_DONE
            done_time[req] = now
            nxt = dl.depart()
            if nxt is not None:
                push(now + dl_tx_ms[nxt], EV_DL_TX_DONE, nxt)

    finished = done_time <= duration_ms
    completed = int(np.count_nonzero(finished))
    counted = finished & (done_time > warmup_ms)
    rtts = list(np.asarray(done_time - gen_time)[counted])
    return SimResult(
        rtts=rtts,
        generated=n,
        completed=completed,
        in_flight=n - completed,
        dropped=0,
    )


def simulate(s: NetworkState, a: ConfigAction, cfg: SimConfig) -> list[float]:
    """Round-trip latencies (ms) of requests completing in (warmup, horizon]."""
    return run_sim(s, a, cfg).rtts


def pe_of(s: NetworkState, a: ConfigAction, cfg: SimConfig) -> PerfRecord:
    """Run the simulator and score the outcome; empty completions score 0."""
    latencies = tuple(simulate(s, a, cfg))
    return perf_record(s, a, latencies, cfg.latency_threshold_h)


def rescore(record: PerfRecord, threshold_ms: float) -> PerfRecord:
    """Recompute prob/pe of an existing latency sample under a new threshold."""
    if not record.latencies:
        return record
    return perf_record(record.state, record.action, record.latencies, threshold_ms)


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)
