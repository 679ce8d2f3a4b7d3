"""Black-box state-perturbation attacks via Bayesian optimization.

Per state: the policy picks its action from the unperturbed observation,
nature realizes the perturbed state, and the simulator scores the pair.
A GP surrogate over perturbation vectors (targets are negated PE) is
maximized with a GP-UCB candidate scan to choose each next query.  The
random-search attacker provides the query-fair baseline.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import gpr, netsim
from .domain import (
    ConfigAction,
    NetworkState,
    STATE_DIM,
    ValidationError,
    denormalize_state,
    normalize_state,
    NormalizedState,
)

DEFAULT_DELTA = 0.1
DEFAULT_ETA1 = 1.0
DEFAULT_ETA2 = 1.0
DEFAULT_R = 1.0
DEFAULT_CANDIDATES = 2000
TRACE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AttackVector:
    """An l-infinity bounded perturbation in normalized state units."""

    v: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.v) != STATE_DIM:
            raise ValidationError(f"attack needs {STATE_DIM} components, got {len(self.v)}")

    def inf_norm(self) -> float:
        return max(abs(x) for x in self.v)


@dataclass
class AttackTrace:
    """All queries of one per-state attack run, plus the best found."""

    state: NetworkState
    queries: list[tuple[AttackVector, float]]
    budget: int

    def __post_init__(self) -> None:
        if len(self.queries) > self.budget:
            raise ValidationError("more queries than budget")

    @property
    def best(self) -> tuple[AttackVector, float]:
        """The first query achieving the minimum PE."""
        return min(self.queries, key=lambda q: q[1])

    def best_so_far(self) -> list[float]:
        out, cur = [], math.inf
        for _, pe in self.queries:
            cur = min(cur, pe)
            out.append(cur)
        return out


def apply_attack(s: NetworkState, attack: AttackVector) -> NetworkState:
    """Perturb the normalized state, clip to [0, 1], and map back."""
    base = normalize_state(s).v
    clipped = tuple(min(max(b + d, 0.0), 1.0) for b, d in zip(base, attack.v))
    return denormalize_state(NormalizedState(v=clipped))


def ucb_beta(t: int, d: int = STATE_DIM, delta: float = DEFAULT_DELTA,
             eta1: float = DEFAULT_ETA1, eta2: float = DEFAULT_ETA2,
             r: float = DEFAULT_R) -> float:
    """Exploration weight giving sub-linear regret with probability 1 - delta."""
    if t < 1:
        raise ValidationError(f"t={t} must be >= 1")
    if not (0.0 < delta < 1.0):
        raise ValidationError(f"delta={delta} outside (0, 1)")
    if min(eta1, eta2, r) <= 0.0:
        raise ValidationError("eta1, eta2, r must be positive")
    inner = math.log(4.0 * d * eta1 / delta)
    if inner <= 0.0:
        raise ValidationError("log(4 d eta1 / delta) non-positive; increase eta1 or shrink delta")
    arg = t * t * d * eta2 * r * math.sqrt(inner)
    if arg <= 0.0:
        raise ValidationError("second log argument non-positive")
    return (2.0 * math.log(t * t * math.pi**2 / (3.0 * delta))
            + 2.0 * d * math.log(arg))


def next_attack(m: gpr.GprModel, candidates: np.ndarray, beta: float) -> int:
    """Index of the UCB-maximizing candidate (first one on ties).

    The surrogate models negated PE, so maximizing mean + sqrt(beta) * std
    drives queries toward low-PE perturbations.
    """
    candidates = np.atleast_2d(candidates)
    if candidates.shape[0] == 0:
        raise ValidationError("empty candidate set")
    mean, var = gpr.posterior_batch(m, candidates)
    scores = mean + math.sqrt(max(beta, 0.0)) * np.sqrt(var)
    return int(np.argmax(scores))


def _draw_candidates(rng: np.random.Generator, count: int, eps: float) -> np.ndarray:
    # Unit draws scaled by eps, so candidate directions are shared across
    # attack-scale sweeps run from the same seed.
    return rng.uniform(-1.0, 1.0, (count, STATE_DIM)) * eps


def bo_attack(s: NetworkState, policy, cfg: netsim.SimConfig, eps: float,
              budget: int = 30, candidate_count: int = DEFAULT_CANDIDATES,
              seed: int = 0, noise_var: float = gpr.DEFAULT_NOISE_VAR) -> AttackTrace:
    """GP-UCB attack loop against one state."""
    if budget < 1:
        raise ValidationError(f"budget={budget} must be >= 1")
    if eps < 0:
        raise ValidationError(f"eps={eps} must be >= 0")
    rng = np.random.default_rng([seed, s.hash_key(), 0xB0])
    action = policy.select(s, seed=[seed, s.hash_key()])

    model = gpr.fit([], [], noise_var=noise_var)
    queries: list[tuple[AttackVector, float]] = []
    for t in range(1, budget + 1):
        candidates = _draw_candidates(rng, candidate_count, eps)
        idx = next_attack(model, candidates, ucb_beta(t))
        vec = AttackVector(v=tuple(candidates[idx]))
        pe = netsim.pe_of(apply_attack(s, vec), action, cfg).pe
        queries.append((vec, pe))
        model = gpr.refit_with(model, candidates[idx], -pe)
    return AttackTrace(state=s, queries=queries, budget=budget)


def rn_attack(s: NetworkState, policy, cfg: netsim.SimConfig, eps: float,
              budget: int = 30, seed: int = 0) -> AttackTrace:
    """Uniform random attacks with the same query accounting as bo_attack."""
    if budget < 1:
        raise ValidationError(f"budget={budget} must be >= 1")
    rng = np.random.default_rng([seed, s.hash_key(), 0xA1])
    action = policy.select(s, seed=[seed, s.hash_key()])
    queries = []
    for _ in range(budget):
        vec = AttackVector(v=tuple(_draw_candidates(rng, 1, eps)[0]))
        pe = netsim.pe_of(apply_attack(s, vec), action, cfg).pe
        queries.append((vec, pe))
    return AttackTrace(state=s, queries=queries, budget=budget)


def save_traces(traces: list[AttackTrace], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": TRACE_SCHEMA_VERSION,
                             "n_traces": len(traces)}) + "\n")
        for tr in traces:
            fh.write(json.dumps({
                "state": list(tr.state.as_tuple()),
                "budget": tr.budget,
                "queries": [[list(v.v), pe] for v, pe in tr.queries],
            }) + "\n")


def load_traces(path: str) -> list[AttackTrace]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    header = json.loads(lines[0])
    if header.get("schema_version") != TRACE_SCHEMA_VERSION:
        raise ValidationError(f"trace schema {header.get('schema_version')} unsupported")
    traces = []
    for line in lines[1:]:
        obj = json.loads(line)
        traces.append(AttackTrace(
            state=NetworkState(*obj["state"]),
            queries=[(AttackVector(v=tuple(v)), pe) for v, pe in obj["queries"]],
            budget=obj["budget"],
        ))
    if len(traces) != header["n_traces"]:
        raise ValidationError(f"{path}: expected {header['n_traces']} traces, got {len(traces)}")
    return traces
