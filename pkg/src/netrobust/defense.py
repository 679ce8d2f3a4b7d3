"""Robust defense: rebuild predictor targets from attacked outcomes and
retrain stage-by-stage over hash-partitioned state subgroups.

The retrained predictor still sees only pre-attack (state, action)
features; the targets are the PE values realized at the attacked states,
so the policy learns which actions survive the perturbation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mlp, netsim
from .attacker import AttackTrace, AttackVector, apply_attack
from .domain import (
    ConfigAction,
    NetworkState,
    ValidationError,
    normalize_state,
)
from .policy import sample_actions

SUBGROUP_SALT = b"netrobust-subgroup-v1"


@dataclass(frozen=True)
class AttackedEntry:
    """One retraining sample: pre-attack features, attacked-PE target."""

    state: NetworkState
    action: ConfigAction
    target_pe: float
    group_hash: int


@dataclass
class AttackedDataset:
    entries: list[AttackedEntry]

    def features(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.array([list(normalize_state(e.state).v) + list(e.action.normalized())
                      for e in self.entries])
        y = np.array([e.target_pe for e in self.entries])
        return X, y


def _group_hash(s: NetworkState) -> int:
    payload = SUBGROUP_SALT + repr(s.as_tuple()).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def build_attacked_dataset(traces: list[AttackTrace], policy,
                           cfg: netsim.SimConfig,
                           actions_per_state: int = 16,
                           seed: int = 0) -> AttackedDataset:
    """Attacked-PE targets for each state under the policy's chosen action
    plus sampled auxiliary actions (actions_per_state total per state)."""
    if actions_per_state < 1:
        raise ValidationError("actions_per_state must be >= 1")
    entries = []
    for tr in traces:
        s = tr.state
        best_attack, _ = tr.best
        attacked = apply_attack(s, best_attack)
        gh = _group_hash(s)
        actions = [policy.select(s, seed=[seed, s.hash_key()])]
        if actions_per_state > 1:
            actions += sample_actions(actions_per_state - 1,
                                      [seed, s.hash_key(), 0xDE])
        for a in actions:
            pe = netsim.pe_of(attacked, a, cfg).pe
            entries.append(AttackedEntry(state=s, action=a, target_pe=pe, group_hash=gh))
    return AttackedDataset(entries=entries)


def retrain(model: mlp.MlpModel, ds: AttackedDataset, subgroups: int = 8,
            epochs_per_group: int = 20,
            evaluate: Callable[[mlp.MlpModel], float] | None = None,
            lr: float = 1e-3, batch_size: int = 64, seed: int = 0
            ) -> tuple[mlp.MlpModel, list[float]]:
    """Cumulative staged retraining.

    Stage k fine-tunes on the entries of subgroups 0..k; after each stage
    the model is scored with ``evaluate`` (attacked-PE evaluation in the
    pipeline) and the score appended to the recovery curve.  Without an
    evaluator the curve holds the per-stage training MSE on the full
    attacked dataset instead.
    """
    if subgroups < 1:
        raise ValidationError("subgroups must be >= 1")
    current = model
    curve: list[float] = []
    X_all, y_all = ds.features()
    groups = np.array([e.group_hash % subgroups for e in ds.entries])
    for stage in range(subgroups):
        mask = groups <= stage
        if np.any(mask):
            current = mlp.train(current, X_all[mask], y_all[mask],
                                epochs=epochs_per_group, lr=lr,
                                batch_size=batch_size, seed=[seed, stage])
        if evaluate is not None:
            curve.append(float(evaluate(current)))
        else:
            preds = np.asarray(mlp.forward(current, X_all))
            curve.append(float(np.mean((preds - y_all) ** 2)))
    return current, curve


def evaluate_policy(policy, states: list[NetworkState],
                    attacker_lookup: dict[tuple, AttackVector] | None,
                    cfg: netsim.SimConfig, seed: int = 0) -> float:
    """Mean achieved PE over states.

    The policy observes the pre-attack state; when the lookup supplies an
    attack for a state, the ground truth is scored at the attacked state.
    Attack-aware policies (the oracle) additionally see the attack itself.
    """
    if not states:
        raise ValidationError("states must be nonempty")
    total = 0.0
    for s in states:
        attack = attacker_lookup.get(s.as_tuple()) if attacker_lookup else None
        if getattr(policy, "attack_aware", False):
            action = policy.select(s, seed=[seed, s.hash_key()], attack=attack)
        else:
            action = policy.select(s, seed=[seed, s.hash_key()])
        realized = apply_attack(s, attack) if attack is not None else s
        total += netsim.pe_of(realized, action, cfg).pe
    return total / len(states)


def attack_lookup_from_traces(traces: list[AttackTrace]) -> dict[tuple, AttackVector]:
    return {tr.state.as_tuple(): tr.best[0] for tr in traces}
