"""Grid-based transition collection and durable JSONL storage.

Records are stored one JSON object per line behind a header line carrying
the schema version, the frozen normalization ranges, and the simulator
configuration snapshot.  Latency lists are reduced to nine deciles plus a
count; ``prob`` and ``pe`` are authoritative, the deciles advisory.
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import netsim
from .domain import (
    ACTION_RANGES,
    ConfigAction,
    NetworkState,
    STATE_RANGES,
    ValidationError,
)

SCHEMA_VERSION = 1
SPLIT_SALT = b"netrobust-split-v1"

DEFAULT_BW_LEVELS = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
DEFAULT_CPU_LEVELS = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class Transition:
    """One collected (state, action) outcome in storage form."""

    state: tuple[float, ...]
    action: tuple[float, ...]
    prob: float
    usage: float
    pe: float
    n_latencies: int
    deciles: tuple[float, ...]

    def network_state(self) -> NetworkState:
        return NetworkState(*self.state)

    def config_action(self) -> ConfigAction:
        return ConfigAction(*self.action)


@dataclass
class TransitionSet:
    """Header plus canonically ordered (state-major) transition records."""

    header: dict
    records: list[Transition]

    def __post_init__(self) -> None:
        seen = set()
        for r in self.records:
            key = (r.state, r.action)
            if key in seen:
                raise ValidationError(f"duplicate (state, action) pair: {key}")
            seen.add(key)

    def states(self) -> list[NetworkState]:
        out, seen = [], set()
        for r in self.records:
            if r.state not in seen:
                seen.add(r.state)
                out.append(r.network_state())
        return out


class DatasetError(ValueError):
    """Malformed, truncated, or incompatible dataset file."""


def _levels(lo: float, hi: float, n: int) -> list[float]:
    if n == 1:
        return [(lo + hi) / 2.0]
    return list(np.linspace(lo, hi, n))


def grid_states(levels_per_dim: int | tuple[int, ...] = 3) -> list[NetworkState]:
    """Cartesian product of evenly spaced levels over the state ranges.

    ``levels_per_dim`` may be one count for all five dimensions or a
    per-dimension tuple; a single level selects the range midpoint.
    """
    if isinstance(levels_per_dim, int):
        counts = (levels_per_dim,) * 5
        if levels_per_dim < 2:
            raise ValidationError("levels_per_dim must be >= 2")
    else:
        counts = tuple(levels_per_dim)
        if len(counts) != 5 or any(c < 1 for c in counts):
            raise ValidationError("need 5 per-dimension level counts >= 1")
    axes = [_levels(lo, hi, n) for (lo, hi), n in zip(STATE_RANGES, counts)]
    return [NetworkState(*combo) for combo in itertools.product(*axes)]


def grid_actions(bw_levels: tuple[float, ...] = DEFAULT_BW_LEVELS,
                 cpu_levels: tuple[float, ...] = DEFAULT_CPU_LEVELS) -> list[ConfigAction]:
    """6 x 6 x 3 = 108 actions at the defaults."""
    return [ConfigAction(b_ul, b_dl, cpu)
            for b_ul in bw_levels for b_dl in bw_levels for cpu in cpu_levels]


def _to_transition(record) -> Transition:
    lats = np.asarray(record.latencies, dtype=float)
    if lats.size:
        deciles = tuple(float(q) for q in np.percentile(lats, np.arange(10, 100, 10)))
    else:
        deciles = tuple()
    return Transition(
        state=record.state.as_tuple(),
        action=record.action.as_tuple(),
        prob=record.prob,
        usage=record.usage,
        pe=record.pe,
        n_latencies=lats.size,
        deciles=deciles,
    )


def _collect_chunk(args) -> list[Transition]:
    states, actions, cfg = args
    return [_to_transition(netsim.pe_of(s, a, cfg)) for s in states for a in actions]


def collect(states: list[NetworkState], actions: list[ConfigAction],
            cfg: netsim.SimConfig, n_workers: int = 1) -> TransitionSet:
    """One record per (state, action) pair, state-major canonical order.

    Per-run RNGs are seeded from (cfg.seed, state, action), so the output
    is identical for any worker count.
    """
    if not states or not actions:
        raise ValidationError("states and actions must be nonempty")
    if n_workers <= 1:
        records = _collect_chunk((states, actions, cfg))
    else:
        chunks = [([s], actions, cfg) for s in states]
        records = []
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for part in pool.map(_collect_chunk, chunks):
                records.extend(part)
    header = make_header(cfg)
    return TransitionSet(header=header, records=records)


def make_header(cfg: netsim.SimConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "state_ranges": [list(r) for r in STATE_RANGES],
        "action_ranges": [list(r) for r in ACTION_RANGES],
        "sim_config": dataclasses.asdict(cfg),
        "n_records": None,  # filled by save()
    }


def save(ts: TransitionSet, path: str) -> None:
    header = dict(ts.header)
    header["n_records"] = len(ts.records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in ts.records:
            fh.write(json.dumps({
                "state": list(r.state),
                "action": list(r.action),
                "prob": r.prob,
                "usage": r.usage,
                "pe": r.pe,
                "n": r.n_latencies,
                "deciles": list(r.deciles),
            }) + "\n")


def load(path: str) -> TransitionSet:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: malformed header line 1: {exc}") from exc
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(
            f"{path}: schema version {header.get('schema_version')} != {SCHEMA_VERSION}")
    if header.get("state_ranges") != [list(r) for r in STATE_RANGES]:
        raise DatasetError(f"{path}: header state ranges differ from compiled constants")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            records.append(Transition(
                state=tuple(obj["state"]),
                action=tuple(obj["action"]),
                prob=obj["prob"],
                usage=obj["usage"],
                pe=obj["pe"],
                n_latencies=obj["n"],
                deciles=tuple(obj["deciles"]),
            ))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}: malformed record at line {lineno}: {exc}") from exc
    expected = header.get("n_records")
    if expected is not None and expected != len(records):
        raise DatasetError(
            f"{path}: header promises {expected} records, found {len(records)} "
            f"(file truncated at line {len(lines)}?)")
    return TransitionSet(header=header, records=records)


def _pair_hash(state: tuple[float, ...], action: tuple[float, ...]) -> int:
    payload = SPLIT_SALT + repr((state, action)).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def split(ts: TransitionSet, train_fraction: float = 0.8
          ) -> tuple[list[Transition], list[Transition]]:
    """Deterministic train/validation split by salted (state, action) hash."""
    train, val = [], []
    cut = int(train_fraction * 2**64)
    for r in ts.records:
        (train if _pair_hash(r.state, r.action) < cut else val).append(r)
    return train, val


def split_states(states: list[NetworkState], train_fraction: float = 0.8
                 ) -> tuple[list[NetworkState], list[NetworkState]]:
    """Deterministic state-level holdout (used for policy evaluation)."""
    train, held = [], []
    cut = int(train_fraction * 2**64)
    for s in states:
        payload = SPLIT_SALT + b"state" + repr(s.as_tuple()).encode()
        h = int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
        (train if h < cut else held).append(s)
    return train, held
