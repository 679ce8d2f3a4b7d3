"""Pipeline orchestration and the command-line interface.

Each stage writes machine-readable CSV artifacts plus the resolved
configuration into the run directory; `run-all` chains the full
collect -> train -> attack -> defend -> sweep -> report pipeline.
"""
from __future__ import annotations

import csv
import dataclasses
import os
import time

import click
import numpy as np

from . import attacker, dataset, defense, gpr, mlp, netsim, policy
from .config import RunConfig, load_config, write_resolved
from .domain import NetworkState, normalize_state

METHODS = ("optimal", "neural", "gp", "linear")


def _ensure_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_resolved(cfg, os.path.join(cfg.out_dir, "resolved_config.json"))
    return cfg.out_dir


def _grid(cfg: RunConfig) -> tuple[list, list]:
    levels = cfg.grid.state_levels
    states = dataset.grid_states(tuple(levels) if isinstance(levels, list) else levels)
    actions = dataset.grid_actions(tuple(cfg.grid.bw_levels), tuple(cfg.grid.cpu_levels))
    return states, actions


def _transition_features(records) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([
        list(normalize_state(t.network_state()).v) + list(t.config_action().normalized())
        for t in records])
    y = np.array([t.pe for t in records])
    return X, y


def _eval_states(cfg: RunConfig, states: list[NetworkState]) -> list[NetworkState]:
    _, held = dataset.split_states(states, cfg.train.holdout_fraction)
    return held if held else states


def _attack_states(cfg: RunConfig, states: list[NetworkState]) -> list[NetworkState]:
    ordered = sorted(states, key=defense._group_hash)
    return ordered[:min(cfg.attack.n_states, len(ordered))]


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_collect(cfg: RunConfig) -> str:
    out = _ensure_out(cfg)
    states, actions = _grid(cfg)
    t0 = time.time()
    ts = dataset.collect(states, actions, cfg.sim, n_workers=cfg.n_workers)
    path = os.path.join(out, "transitions.jsonl")
    dataset.save(ts, path)
    click.echo(f"collected {len(ts.records)} transitions "
               f"({len(states)} states x {len(actions)} actions) "
               f"in {time.time() - t0:.1f}s -> {path}")
    return path


def run_train(cfg: RunConfig, transitions_path: str) -> str:
    out = _ensure_out(cfg)
    ts = dataset.load(transitions_path)
    all_states = ts.states()
    eval_states = _eval_states(cfg, all_states)
    eval_keys = {s.as_tuple() for s in eval_states}
    train_records = [r for r in ts.records if r.state not in eval_keys]
    if not train_records:
        train_records = ts.records
    X, y = _transition_features(train_records)

    weights = policy.lreg_fit(train_records)
    gp_model = policy.rreg_fit(train_records, max_points=cfg.train.rreg_max_points)
    oracle_policy = policy.OptimalPolicy(ts)

    def mean_pe(pol) -> float:
        return defense.evaluate_policy(pol, eval_states, None, cfg.sim, seed=cfg.seed)

    pe_linear = mean_pe(policy.LinearPolicy(weights, cfg.train.n_samples))
    pe_gp = mean_pe(policy.GpPolicy(gp_model, cfg.train.n_samples))
    pe_optimal = mean_pe(oracle_policy)

    model = mlp.init_model(tuple(cfg.train.layer_dims), seed=cfg.seed)
    rows = []
    epochs_done = 0
    t0 = time.time()
    while epochs_done < cfg.train.epochs:
        chunk = min(cfg.train.eval_every, cfg.train.epochs - epochs_done)
        model = mlp.train(model, X, y, epochs=chunk, lr=cfg.train.lr,
                          batch_size=cfg.train.batch_size,
                          seed=[cfg.seed, epochs_done],
                          momentum=cfg.train.momentum)
        epochs_done += chunk
        pe_neural = mean_pe(policy.NeuralPolicy(model, cfg.train.n_samples))
        rows.append([epochs_done, model.train_meta["final_loss"],
                     pe_neural, pe_linear, pe_gp, pe_optimal])
    _write_csv(os.path.join(out, "normal_training.csv"),
               ["epoch", "loss", "pe_neural", "pe_linear", "pe_gp", "pe_optimal"],
               rows)
    model_path = os.path.join(out, "model.npz")
    mlp.save_model(model, model_path)
    click.echo(f"trained {cfg.train.epochs} epochs in {time.time() - t0:.1f}s; "
               f"final pe_neural={rows[-1][2]:.3f} pe_linear={pe_linear:.3f} "
               f"pe_gp={pe_gp:.3f} pe_optimal={pe_optimal:.3f} -> {model_path}")
    return model_path


def run_attack(cfg: RunConfig, model_path: str) -> str:
    out = _ensure_out(cfg)
    model = mlp.load_model(model_path)
    pol = policy.NeuralPolicy(model, cfg.train.n_samples)
    states, _ = _grid(cfg)
    targets = _attack_states(cfg, states)
    t0 = time.time()
    bo_traces, rn_traces = [], []
    for s in targets:
        bo_traces.append(attacker.bo_attack(
            s, pol, cfg.sim, cfg.attack.epsilon, cfg.attack.budget,
            cfg.attack.candidate_count, seed=cfg.seed))
        rn_traces.append(attacker.rn_attack(
            s, pol, cfg.sim, cfg.attack.epsilon, cfg.attack.budget, seed=cfg.seed))
    traces_path = os.path.join(out, "traces_bo.jsonl")
    attacker.save_traces(bo_traces, traces_path)
    attacker.save_traces(rn_traces, os.path.join(out, "traces_rn.jsonl"))

    bo_curves = np.array([tr.best_so_far() for tr in bo_traces])
    rn_curves = np.array([tr.best_so_far() for tr in rn_traces])
    rows = [[t + 1, float(bo_curves[:, t].mean()), float(rn_curves[:, t].mean())]
            for t in range(cfg.attack.budget)]
    _write_csv(os.path.join(out, "attack_degradation.csv"),
               ["iteration", "pe_bo", "pe_rn"], rows)

    best = np.array([tr.best[0].v for tr in bo_traces])
    stats_rows = [[name, float(best[:, i].mean()), float(best[:, i].std())]
                  for i, name in enumerate(
                      ("ul_avg_size", "dl_avg_size", "mcs_max_ul", "mcs_max_dl", "avg_distance"))]
    _write_csv(os.path.join(out, "attack_stats.csv"),
               ["dimension", "mean", "std"], stats_rows)
    click.echo(f"attacked {len(targets)} states (budget {cfg.attack.budget}, "
               f"eps {cfg.attack.epsilon}) in {time.time() - t0:.1f}s; "
               f"final pe_bo={rows[-1][1]:.3f} pe_rn={rows[-1][2]:.3f} -> {traces_path}")
    return traces_path


def run_defend(cfg: RunConfig, model_path: str, traces_path: str,
               transitions_path: str) -> str:
    out = _ensure_out(cfg)
    model = mlp.load_model(model_path)
    traces = attacker.load_traces(traces_path)
    ts = dataset.load(transitions_path)
    states = [tr.state for tr in traces]
    lookup = defense.attack_lookup_from_traces(traces)

    def attacked_pe(m: mlp.MlpModel) -> float:
        pol = policy.TopQuantilePolicy(m, cfg.train.n_samples, cfg.defense.kappa)
        return defense.evaluate_policy(pol, states, lookup, cfg.sim, seed=cfg.seed)

    pre_pe = attacked_pe(model)
    pe_optimal = defense.evaluate_policy(
        policy.OptimalPolicy(ts), states, lookup, cfg.sim, seed=cfg.seed)

    t0 = time.time()
    current = model
    rows = [[0, pre_pe, pe_optimal]]
    for cycle in range(cfg.defense.cycles):
        ds = defense.build_attacked_dataset(
            traces, policy.NeuralPolicy(current, cfg.train.n_samples),
            cfg.sim, cfg.defense.actions_per_state, seed=[cfg.seed, cycle])
        current, curve = defense.retrain(
            current, ds, cfg.defense.subgroups, cfg.defense.epochs_per_group,
            evaluate=attacked_pe, lr=cfg.train.lr,
            batch_size=cfg.train.batch_size, seed=[cfg.seed, cycle])
        offset = cycle * cfg.defense.subgroups
        rows += [[offset + i + 1, v, pe_optimal] for i, v in enumerate(curve)]
    _write_csv(os.path.join(out, "recovery.csv"),
               ["stage", "pe_defended", "pe_optimal_attacked"], rows)
    defended_path = os.path.join(out, "defended_model.npz")
    mlp.save_model(current, defended_path)
    click.echo(f"defense in {time.time() - t0:.1f}s: attacked PE "
               f"{pre_pe:.3f} -> {rows[-1][1]:.3f} (optimal {pe_optimal:.3f}) "
               f"-> {defended_path}")
    return defended_path


def run_sweep(cfg: RunConfig, axis: str, model_path: str,
              defended_path: str | None = None,
              traces_path: str | None = None) -> str:
    out = _ensure_out(cfg)
    model = mlp.load_model(model_path)
    states, _ = _grid(cfg)
    targets = _attack_states(cfg, states)
    path = os.path.join(out, f"sweep_{axis}.csv")

    if axis == "epsilon":
        pol = policy.NeuralPolicy(model, cfg.train.n_samples)
        rows = []
        for eps in cfg.sweep.epsilon_values:
            best = [attacker.bo_attack(s, pol, cfg.sim, eps, cfg.attack.budget,
                                       cfg.attack.candidate_count, seed=cfg.seed).best[1]
                    for s in targets]
            rows.append([eps, float(np.mean(best))])
        _write_csv(path, ["epsilon", "pe_attacked"], rows)
    elif axis == "kappa":
        if defended_path is None or traces_path is None:
            raise click.ClickException("kappa sweep needs --defended-model and --traces")
        defended = mlp.load_model(defended_path)
        traces = attacker.load_traces(traces_path)
        lookup = defense.attack_lookup_from_traces(traces)
        trace_states = [tr.state for tr in traces]
        rows = []
        for kappa in cfg.sweep.kappa_values:
            pol = policy.TopQuantilePolicy(defended, cfg.train.n_samples, kappa)
            rows.append([kappa, defense.evaluate_policy(
                pol, trace_states, lookup, cfg.sim, seed=cfg.seed)])
        _write_csv(path, ["kappa", "pe_attacked"], rows)
    elif axis == "h":
        # Fixed actions, one simulation per state; re-score the same latency
        # sample under each threshold so the H response is exact.
        pol = policy.NeuralPolicy(model, cfg.train.n_samples)
        records = []
        for s in targets:
            action = pol.select(s, seed=[cfg.seed, s.hash_key()])
            records.append(netsim.pe_of(s, action, cfg.sim))
        rows = []
        for h in cfg.sweep.h_values:
            pes = [netsim.rescore(r, h).pe for r in records]
            rows.append([h, float(np.mean(pes))])
        _write_csv(path, ["h_ms", "pe"], rows)
    else:
        raise click.ClickException(f"unknown sweep axis {axis!r}")
    click.echo(f"sweep {axis} -> {path}")
    return path


def _read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def run_report(out_dir: str) -> str:
    """Summary table: normal and final attacked PE per method.

    Missing artifacts yield an explicit NA marker, never a zero.
    """
    gap = "NA"
    normal = dict.fromkeys(METHODS, gap)
    attacked = dict.fromkeys(METHODS, gap)
    training_csv = os.path.join(out_dir, "normal_training.csv")
    if os.path.exists(training_csv):
        header, rows = _read_csv(training_csv)
        last = rows[-1]
        for method in METHODS:
            col = f"pe_{method}"
            if col in header:
                normal[method] = f"{float(last[header.index(col)]):.3f}"
    recovery_csv = os.path.join(out_dir, "recovery.csv")
    if os.path.exists(recovery_csv):
        header, rows = _read_csv(recovery_csv)
        last = rows[-1]
        attacked["neural"] = f"{float(last[header.index('pe_defended')]):.3f}"
        attacked["optimal"] = f"{float(last[header.index('pe_optimal_attacked')]):.3f}"

    path = os.path.join(out_dir, "summary.csv")
    _write_csv(path, ["method", "normal_pe", "final_attacked_pe"],
               [[m, normal[m], attacked[m]] for m in METHODS])
    lines = [f"{'method':<10} {'normal':>8} {'attacked':>9}"]
    lines += [f"{m:<10} {normal[m]:>8} {attacked[m]:>9}" for m in METHODS]
    text = "\n".join(lines)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    click.echo(text)
    return path


def _load_cfg(config_path: str | None, seed: int | None, out: str | None) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if out is not None:
        cfg = dataclasses.replace(cfg, out_dir=out)
    return cfg


@click.group()
def main() -> None:
    """Robustness workbench for neural-assisted network configuration."""


_config_opt = click.option("--config", "config_path", type=click.Path(exists=True),
                           default=None, help="JSON run configuration.")
_seed_opt = click.option("--seed", type=int, default=None)
_out_opt = click.option("--out", type=click.Path(), default=None)


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@click.option("--levels", type=int, default=None, help="State grid levels per dimension.")
def collect(config_path, seed, out, levels):
    """Collect ground-truth transitions over the state/action grid."""
    cfg = _load_cfg(config_path, seed, out)
    if levels is not None:
        cfg.grid.state_levels = levels
    run_collect(cfg)


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@click.option("--transitions", type=click.Path(exists=True), required=True)
def train(config_path, seed, out, transitions):
    """Train the PE predictor and baselines; emit the training-curve CSV."""
    cfg = _load_cfg(config_path, seed, out)
    run_train(cfg, transitions)


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--budget", type=int, default=None)
def attack(config_path, seed, out, model_path, epsilon, budget):
    """Run the BO and random attackers against the trained policy."""
    cfg = _load_cfg(config_path, seed, out)
    if epsilon is not None:
        cfg.attack.epsilon = epsilon
    if budget is not None:
        cfg.attack.budget = budget
    run_attack(cfg, model_path)


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--traces", "traces_path", type=click.Path(exists=True), required=True)
@click.option("--transitions", type=click.Path(exists=True), required=True)
@click.option("--kappa", type=float, default=None)
@click.option("--cycles", type=int, default=None)
def defend(config_path, seed, out, model_path, traces_path, transitions, kappa, cycles):
    """Retrain on attacked outcomes and emit the recovery curve."""
    cfg = _load_cfg(config_path, seed, out)
    if kappa is not None:
        cfg.defense.kappa = kappa
    if cycles is not None:
        cfg.defense.cycles = cycles
    run_defend(cfg, model_path, traces_path, transitions)


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@click.option("--axis", type=click.Choice(["epsilon", "kappa", "h"]), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--defended-model", "defended_path", type=click.Path(exists=True), default=None)
@click.option("--traces", "traces_path", type=click.Path(exists=True), default=None)
def sweep(config_path, seed, out, axis, model_path, defended_path, traces_path):
    """Sweep attack scale, selection quantile, or latency threshold."""
    cfg = _load_cfg(config_path, seed, out)
    run_sweep(cfg, axis, model_path, defended_path, traces_path)


@main.command()
@click.option("--out", type=click.Path(exists=True), required=True)
def report(out):
    """Summarize run artifacts into the per-method performance table."""
    run_report(out)


@main.command("run-all")
@_config_opt
@_seed_opt
@_out_opt
def run_all(config_path, seed, out):
    """Full pipeline: collect, train, attack, defend, sweeps, report."""
    cfg = _load_cfg(config_path, seed, out)
    transitions = run_collect(cfg)
    model = run_train(cfg, transitions)
    traces = run_attack(cfg, model)
    defended = run_defend(cfg, model, traces, transitions)
    run_sweep(cfg, "epsilon", model)
    run_sweep(cfg, "kappa", model, defended, traces)
    run_sweep(cfg, "h", model)
    run_report(cfg.out_dir)


if __name__ == "__main__":
    main()
