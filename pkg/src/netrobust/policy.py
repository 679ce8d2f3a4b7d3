"""Configuration policies.

The neural policy samples the action space uniformly, predicts PE for each
(state, action) pair, and takes the argmax; the probabilistic variant keeps
the top prediction quantile and draws uniformly from it.  Linear- and
GP-regression baselines share the same sampling scheme, and the oracle
policy scans the ground-truth grid exhaustively.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gpr, mlp
from .dataset import Transition, TransitionSet
from .domain import (
    ACTION_RANGES,
    ConfigAction,
    NetworkState,
    ValidationError,
    normalize_state,
    resource_usage,
)

DEFAULT_N_SAMPLES = 1000


def sample_actions(n: int, seed) -> list[ConfigAction]:
    """Uniform independent draws per component over the action ranges."""
    if n < 1:
        raise ValidationError(f"n={n} must be >= 1")
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(lo, hi, n) for lo, hi in ACTION_RANGES]
    return [ConfigAction(*vals) for vals in zip(*cols)]


def _features(s: NetworkState, actions: list[ConfigAction]) -> np.ndarray:
    sv = normalize_state(s).v
    return np.array([sv + a.normalized() for a in actions])


def _tie_key(a: ConfigAction) -> tuple:
    return (resource_usage(a), a.as_tuple())


def _ranked_order(preds: np.ndarray, actions: list[ConfigAction]) -> list[int]:
    """Indices sorted by prediction descending; ties by lowest resource
    usage, then lexicographic components."""
    return sorted(range(len(actions)),
                  key=lambda i: (-preds[i],) + _tie_key(actions[i]))


def _argmax_action(preds: np.ndarray, actions: list[ConfigAction]) -> ConfigAction:
    best = preds.max()
    tied = [i for i in range(len(actions)) if preds[i] == best]
    return actions[min(tied, key=lambda i: _tie_key(actions[i]))]


def nano_select(s: NetworkState, m: mlp.MlpModel,
                n_samples: int = DEFAULT_N_SAMPLES, seed=0) -> ConfigAction:
    """Argmax of predicted PE over a freshly sampled action batch."""
    actions = sample_actions(n_samples, seed)
    preds = np.asarray(mlp.forward(m, _features(s, actions)))
    return _argmax_action(preds, actions)


def kept_set_size(n_samples: int, kappa: float) -> int:
    """Ceiling rule: at kappa = 0.99 and 1000 samples, keep the top 10."""
    return max(1, int(np.ceil((1.0 - kappa) * n_samples)))


def probabilistic_select(s: NetworkState, m: mlp.MlpModel,
                         n_samples: int = DEFAULT_N_SAMPLES,
                         kappa: float = 0.99, seed=0) -> ConfigAction:
    """Keep predictions at or above the kappa-quantile, draw uniformly.

    kappa = 1 keeps a single top-ranked action and so degenerates to
    nano_select exactly (same samples, same tie-breaks).
    """
    if not (0.0 < kappa <= 1.0):
        raise ValidationError(f"kappa={kappa} outside (0, 1]")
    actions = sample_actions(n_samples, seed)
    preds = np.asarray(mlp.forward(m, _features(s, actions)))
    keep = kept_set_size(n_samples, kappa)
    if keep == 1:
        return _argmax_action(preds, actions)
    order = _ranked_order(preds, actions)
    kept = order[:keep]
    # Separate substream so the draw does not perturb action sampling.
    choice_rng = np.random.default_rng(_substream(seed, 1))
    return actions[kept[choice_rng.integers(len(kept))]]


def _substream(seed, tag: int):
    if isinstance(seed, (list, tuple)):
        return list(seed) + [tag]
    return [seed, tag]


def lreg_fit(transitions: list[Transition]) -> np.ndarray:
    """Ordinary least squares of PE on [normalized s, normalized a, 1]."""
    if len(transitions) < 9:
        raise ValidationError(f"need >= 9 transitions, got {len(transitions)}")
    X = np.array([
        list(normalize_state(t.network_state()).v)
        + list(t.config_action().normalized()) + [1.0]
        for t in transitions])
    y = np.array([t.pe for t in transitions])
    gram = X.T @ X + 1e-8 * np.eye(X.shape[1])
    weights = np.linalg.solve(gram, X.T @ y)
    if not np.all(np.isfinite(weights)):
        raise ValidationError("rank-deficient design matrix beyond ridge jitter")
    return weights


def lreg_predict(weights: np.ndarray, s: NetworkState, a: ConfigAction) -> float:
    x = np.array(list(normalize_state(s).v) + list(a.normalized()) + [1.0])
    return float(x @ weights)


def rreg_fit(transitions: list[Transition], max_points: int = 2000,
             noise_var: float = 1e-4) -> gpr.GprModel:
    """GP regression over (normalized s, normalized a) -> PE.

    Exact GPs are cubic in the training size, so large sets are thinned by
    an even stride to max_points.
    """
    picked = transitions
    if len(transitions) > max_points:
        idx = np.linspace(0, len(transitions) - 1, max_points).astype(int)
        picked = [transitions[i] for i in idx]
    X = np.array([
        list(normalize_state(t.network_state()).v)
        + list(t.config_action().normalized())
        for t in picked])
    y = np.array([t.pe for t in picked])
    return gpr.fit(X, y, noise_var=noise_var)


class NeuralPolicy:
    """Predicted-PE argmax over sampled actions."""

    name = "neural"
    attack_aware = False

    def __init__(self, model: mlp.MlpModel, n_samples: int = DEFAULT_N_SAMPLES):
        self.model = model
        self.n_samples = n_samples

    def select(self, s: NetworkState, seed=0) -> ConfigAction:
        return nano_select(s, self.model, self.n_samples, seed)


class TopQuantilePolicy:
    """Probabilistic selection from the top prediction quantile."""

    name = "neural_probabilistic"
    attack_aware = False

    def __init__(self, model: mlp.MlpModel, n_samples: int = DEFAULT_N_SAMPLES,
                 kappa: float = 0.99):
        self.model = model
        self.n_samples = n_samples
        self.kappa = kappa

    def select(self, s: NetworkState, seed=0) -> ConfigAction:
        return probabilistic_select(s, self.model, self.n_samples, self.kappa, seed)


class LinearPolicy:
    name = "linear"
    attack_aware = False

    def __init__(self, weights: np.ndarray, n_samples: int = DEFAULT_N_SAMPLES):
        self.weights = weights
        self.n_samples = n_samples

    def select(self, s: NetworkState, seed=0) -> ConfigAction:
        actions = sample_actions(self.n_samples, seed)
        X = np.hstack([_features(s, actions), np.ones((len(actions), 1))])
        preds = X @ self.weights
        return _argmax_action(preds, actions)


class GpPolicy:
    name = "gp"
    attack_aware = False

    def __init__(self, model: gpr.GprModel, n_samples: int = DEFAULT_N_SAMPLES):
        self.model = model
        self.n_samples = n_samples

    def select(self, s: NetworkState, seed=0) -> ConfigAction:
        actions = sample_actions(self.n_samples, seed)
        preds, _ = gpr.posterior_batch(self.model, _features(s, actions))
        return _argmax_action(preds, actions)


def optimal_select(s: NetworkState, oracle: TransitionSet,
                   attack=None) -> ConfigAction:
    """Ground-truth argmax over the oracle grid.

    With a known attack, the perturbed state is snapped to the nearest
    grid state (the oracle exists only on the grid); a query farther than
    half a grid cell from every grid point is an error.
    """
    from .attacker import apply_attack  # local import to avoid a cycle

    query = apply_attack(s, attack) if attack is not None else s
    qv = np.array(normalize_state(query).v)

    grid = oracle.states()
    grid_norm = np.array([normalize_state(g).v for g in grid])
    dists = np.max(np.abs(grid_norm - qv), axis=1)
    nearest = int(np.argmin(dists))

    # Half-cell radius per dimension from the distinct grid levels.
    half_cells = []
    for dim in range(grid_norm.shape[1]):
        levels = np.unique(grid_norm[:, dim])
        half_cells.append(np.min(np.diff(levels)) / 2.0 if len(levels) > 1 else 1.0)
    per_dim = np.abs(grid_norm[nearest] - qv)
    if np.any(per_dim > np.array(half_cells) + 1e-9):
        raise ValidationError(
            f"state {query.as_tuple()} farther than half a grid cell from the oracle grid")

    target = grid[nearest].as_tuple()
    best_pe, best_action = -np.inf, None
    for r in oracle.records:
        if r.state != target:
            continue
        a = r.config_action()
        if r.pe > best_pe or (r.pe == best_pe and _tie_key(a) < _tie_key(best_action)):
            best_pe, best_action = r.pe, a
    if best_action is None:
        raise ValidationError("oracle has no records for the snapped state")
    return best_action


class OptimalPolicy:
    """Grid-exhaustive oracle policy; sees the attack when one is given."""

    name = "optimal"
    attack_aware = True

    def __init__(self, oracle: TransitionSet):
        self.oracle = oracle

    def select(self, s: NetworkState, seed=0, attack=None) -> ConfigAction:
        return optimal_select(s, self.oracle, attack)
