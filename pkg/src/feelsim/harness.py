"""Reproducible experiment runner: configs, presets, seeded runs, CSV outputs.

Every output CSV starts with a provenance comment `# feelsim <version>
config=<hash> seed=<seed>`; rerunning with the same triple reproduces the
file byte for byte. Wall-clock timestamps live only in `meta.json`.

One master seed drives everything. Component streams (fleet sampling,
per-episode dynamics, network init, exploration noise, replay sampling) are
derived from it with :func:`feelsim.rng.substream` keyed by stable labels,
so each component is independently reproducible.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import multiprocessing
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .baselines import rollout, static_policy
from .ddpg import AgentConfig, AgentPolicy, DdpgAgent, NoiseSchedule
from .environment import FeelEnv, FleetSpec, sample_fleet, trace_columns, trace_row
from .fedavg import make_synthetic_clients, run_fedavg
from .rng import child_seed, substream
from .simcore import SystemConfig

SWEEP_AXES = ("static_factor", "num_users", "total_bandwidth")
DEFAULT_FACTOR_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_SWEEP_VALUES = {
    "static_factor": list(DEFAULT_FACTOR_GRID),
    "num_users": [5, 10, 15, 20, 25],
    "total_bandwidth": [1e6, 3e6, 5e6, 7e6, 9e6],
}
TRAINING_LOG_COLUMNS = ["episode", "return", "rounds_completed",
                        "critic_loss", "actor_objective", "noise_sigma"]
SWEEP_COLUMNS = ["axis", "value", "strategy", "factor", "repeat",
                 "rounds_completed", "mean_latency", "mean_energy",
                 "mean_cost", "episode_return"]
EVAL_COLUMNS = ["episode", "return", "rounds_completed",
                "mean_latency", "mean_energy", "mean_cost"]
FEDAVG_COLUMNS = ["round", "global_loss"]


@dataclass
class FedavgDemoConfig:
    clients: int = 20
    dim: int = 5
    rounds: int = 100
    epochs: int = 5
    alpha: float = 0.05
    samples_min: int = 20
    samples_max: int = 50
    noise_std: float = 0.0


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    fleet: FleetSpec = field(default_factory=FleetSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    fedavg: FedavgDemoConfig = field(default_factory=FedavgDemoConfig)
    episodes: int = 800
    eval_episodes: int = 20
    repeats: int = 5
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)
    strategies: list = field(default_factory=lambda: ["static"])
    static_factors: list = field(default_factory=lambda: list(DEFAULT_FACTOR_GRID))
    sweep_train_episodes: int | None = None
    sweep_eval_only: bool = False
    ddpg_checkpoint: str | None = None
    eddpg_checkpoint: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.repeats < 1 or self.episodes < 1 or self.eval_episodes < 1:
            raise ValueError("episodes, eval_episodes and repeats must be >= 1")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                self.sweep_values = list(DEFAULT_SWEEP_VALUES[self.sweep_axis])


def paper_config() -> ExperimentConfig:
    """Full-scale defaults: 20 devices, 1000 rounds, 800 training episodes."""
    return ExperimentConfig()


def desk_config() -> ExperimentConfig:
    """Laptop-scale defaults: 5 devices, 200 rounds, 300 training episodes.

    The actor learning rate is raised to 1e-3; at the full-scale default of
    1e-6 the policy cannot move measurably within this update budget."""
    return ExperimentConfig(
        system=SystemConfig(num_devices=5, max_rounds=200),
        agent=AgentConfig(actor_lr=1e-3),
        episodes=300,
    )


PRESETS = {"paper": paper_config, "desk": desk_config}


def _merge_section(instance, overrides: dict):
    kwargs = {}
    for key, value in overrides.items():
        if not hasattr(instance, key):
            raise ValueError(f"unknown {type(instance).__name__} field {key!r}")
        current = getattr(instance, key)
        if isinstance(current, tuple) and isinstance(value, (list, tuple)):
            value = tuple(value)
        if isinstance(current, NoiseSchedule) and isinstance(value, dict):
            value = dataclasses.replace(current, **value)
        kwargs[key] = value
    merged = dataclasses.replace(instance, **kwargs)
    return merged


def apply_overrides(cfg: ExperimentConfig, data: dict) -> ExperimentConfig:
    """Overlay a (possibly partial) JSON document onto a config."""
    data = dict(data)
    sections = {}
    for name in ("system", "fleet", "agent", "fedavg"):
        part = data.pop(name, None)
        if part is not None:
            sections[name] = _merge_section(getattr(cfg, name), part)
    run_part = data.pop("run", {})
    unknown = set(data)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    cfg = dataclasses.replace(cfg, **sections)
    if run_part:
        cfg = _merge_section(cfg, run_part)
    return cfg


def load_config(preset: str = "paper", config_path=None, seed: int | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset]()
    if config_path is not None:
        cfg = apply_overrides(cfg, json.loads(Path(config_path).read_text()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of every scientific parameter; the seed is reported separately."""
    doc = config_to_dict(cfg)
    doc.pop("seed", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunRecord:
    kind: str
    config_hash: str
    seed: int
    columns: list
    rows: list
    aggregates: dict
    outputs: dict


def write_csv(path, columns, rows, chash: str, seed: int):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# feelsim {__version__} config={chash} seed={seed}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def _write_meta(out_dir, record: RunRecord, cfg: ExperimentConfig, started, finished):
    meta = {
        "tool_version": __version__,
        "kind": record.kind,
        "config_hash": record.config_hash,
        "seed": record.seed,
        "started_at": started,
        "finished_at": finished,
        "config": config_to_dict(cfg),
        "aggregates": record.aggregates,
        "outputs": {k: str(v) for k, v in record.outputs.items()},
    }
    path = Path(out_dir) / "meta.json"
    path.write_text(json.dumps(meta, indent=1, default=str) + "\n")
    return path


def _now():
    return datetime.now(timezone.utc).isoformat()


def _mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else 0.0


def _std(xs):
    xs = list(xs)
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return (sum((x - m) ** 2 for x in xs) / len(xs)) ** 0.5


def fixed_fleet(cfg: ExperimentConfig, extra_label=None):
    """The run's fleet: sampled once from the master seed's fleet stream."""
    labels = ("fleet",) if extra_label is None else ("fleet", extra_label)
    return sample_fleet(cfg.fleet, cfg.system.num_devices, substream(cfg.seed, *labels))


def evaluate_policy(policy, system: SystemConfig, profiles, eval_seeds):
    """Noise-free rollouts over the given episode seeds; one summary each."""
    env = FeelEnv(system, profiles=profiles, seed=eval_seeds[0])
    summaries = []
    for s in eval_seeds:
        env.reset(s)
        summaries.append(rollout(policy, env))
    return summaries


def best_static_factor(system: SystemConfig, profiles, eval_seeds, factors):
    """The factor from the grid whose mean per-round cost is lowest."""
    best = None
    for f in factors:
        summaries = evaluate_policy(static_policy(f, system), system, profiles, eval_seeds)
        cost = _mean(s["mean_cost"] for s in summaries)
        if best is None or cost < best[1]:
            best = (f, cost, summaries)
    return best


def trace_rollout(policy, env, episode_label):
    """Roll one episode recording the full per-round trace."""
    obs = env.observe()
    rows = []
    attempt = 1
    while not env.done:
        action = policy.act(obs)
        res = env.step(action)
        batteries = [s.battery_remaining for s in env.states]
        rows.append(trace_row(episode_label, attempt, action, res.outcome,
                              res.reward, batteries))
        obs = res.observation
        attempt += 1
    return rows


# ---- commands ----

def run_train(cfg: ExperimentConfig, out_dir, progress=False) -> RunRecord:
    """Train a DDPG agent (or the even-bandwidth ablation) on a fixed fleet."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    profiles = fixed_fleet(cfg)
    env = FeelEnv(cfg.system, profiles=profiles, seed=child_seed(cfg.seed, "episode", 0))
    agent = DdpgAgent(cfg.system, cfg.agent, seed=child_seed(cfg.seed, "agent"))

    rows = []
    for ep in range(cfg.episodes):
        agent.sigma = cfg.agent.noise.sigma(ep, cfg.episodes)
        env.reset(child_seed(cfg.seed, "episode", ep))
        s = agent.run_episode(env, train=True, explore=True)
        rows.append([ep, s["episode_return"], s["rounds_completed"],
                     s["critic_loss"], s["actor_objective"], s["noise_sigma"]])
        if progress and (ep + 1) % 50 == 0:
            print(f"episode {ep + 1}/{cfg.episodes} return={s['episode_return']:.1f} "
                  f"rounds={s['rounds_completed']}")

    log_path = write_csv(out / "training_log.csv", TRAINING_LOG_COLUMNS, rows,
                         chash, cfg.seed)
    ckpt_dir = out / "checkpoint"
    agent.save(ckpt_dir)

    # noise-free trace of the trained policy, labelled as the next episode
    env.reset(child_seed(cfg.seed, "episode", cfg.episodes))
    trows = trace_rollout(AgentPolicy(agent), env, cfg.episodes)
    trace_path = write_csv(out / f"trace_{cfg.episodes}.csv",
                           trace_columns(cfg.system.num_devices), trows, chash, cfg.seed)

    tail = rows[-min(50, len(rows)):]
    aggregates = {
        "final_50_mean_return": _mean(r[1] for r in tail),
        "final_50_mean_rounds": _mean(r[2] for r in tail),
        "episodes": cfg.episodes,
    }
    record = RunRecord(kind="train", config_hash=chash, seed=cfg.seed,
                       columns=TRAINING_LOG_COLUMNS, rows=rows, aggregates=aggregates,
                       outputs={"training_log": log_path, "checkpoint": ckpt_dir,
                                "trace": trace_path})
    record.outputs["meta"] = _write_meta(out, record, cfg, started, _now())
    return record


def run_evaluate(cfg: ExperimentConfig, out_dir, checkpoint) -> RunRecord:
    """Noise-free rollouts of a checkpointed agent on the config's fleet."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    agent = DdpgAgent.load(checkpoint, cfg.system, cfg.agent,
                           seed=child_seed(cfg.seed, "agent"))
    profiles = fixed_fleet(cfg)
    eval_seeds = [child_seed(cfg.seed, "eval", i) for i in range(cfg.eval_episodes)]
    summaries = evaluate_policy(AgentPolicy(agent), cfg.system, profiles, eval_seeds)
    rows = [[i, s["episode_return"], s["rounds_completed"], s["mean_latency"],
             s["mean_energy"], s["mean_cost"]] for i, s in enumerate(summaries)]
    log_path = write_csv(out / "evaluation_log.csv", EVAL_COLUMNS, rows, chash, cfg.seed)

    env = FeelEnv(cfg.system, profiles=profiles, seed=eval_seeds[0])
    trows = trace_rollout(AgentPolicy(agent), env, 0)
    trace_path = write_csv(out / "trace_0.csv", trace_columns(cfg.system.num_devices),
                           trows, chash, cfg.seed)

    aggregates = {
        "mean_return": _mean(r[1] for r in rows),
        "std_return": _std(r[1] for r in rows),
        "mean_rounds": _mean(r[2] for r in rows),
        "mean_cost": _mean(r[5] for r in rows),
    }
    record = RunRecord(kind="evaluate", config_hash=chash, seed=cfg.seed,
                       columns=EVAL_COLUMNS, rows=rows, aggregates=aggregates,
                       outputs={"evaluation_log": log_path, "trace": trace_path})
    record.outputs["meta"] = _write_meta(out, record, cfg, started, _now())
    return record


def _train_for_point(cfg: ExperimentConfig, system: SystemConfig, profiles,
                     strategy: str, label) -> DdpgAgent:
    agent_cfg = dataclasses.replace(cfg.agent, even_bandwidth=(strategy == "eddpg"))
    episodes = cfg.sweep_train_episodes or cfg.episodes
    agent = DdpgAgent(system, agent_cfg,
                      seed=child_seed(cfg.seed, "train", strategy, label))
    env = FeelEnv(system, profiles=profiles,
                  seed=child_seed(cfg.seed, "train-ep", strategy, label, 0))
    for ep in range(episodes):
        agent.sigma = agent_cfg.noise.sigma(ep, episodes)
        env.reset(child_seed(cfg.seed, "train-ep", strategy, label, ep))
        agent.run_episode(env, train=True, explore=True)
    return agent


def _sweep_point(cfg: ExperimentConfig, value) -> list:
    """All CSV rows of one sweep point. Evaluation seeds, and the fleet where
    the axis allows it, are shared across points so strategies and points are
    compared on common random numbers."""
    axis = cfg.sweep_axis
    system = cfg.system
    if axis == "num_users":
        system = dataclasses.replace(system, num_devices=int(value))
        profiles = sample_fleet(cfg.fleet, system.num_devices,
                                substream(cfg.seed, "fleet", int(value)))
    elif axis == "total_bandwidth":
        system = dataclasses.replace(system, total_bandwidth=float(value),
                                     bandwidth_floor=None)
        profiles = fixed_fleet(cfg)
    else:
        profiles = fixed_fleet(cfg)
    eval_seeds = [child_seed(cfg.seed, "eval", r) for r in range(cfg.repeats)]

    rows = []

    def add(strategy, factor, summaries):
        for r, s in enumerate(summaries):
            rows.append([axis, value, strategy, factor, r,
                         s["rounds_completed"], s["mean_latency"],
                         s["mean_energy"], s["mean_cost"], s["episode_return"]])

    if "static" in cfg.strategies:
        if axis == "static_factor":
            policy = static_policy(float(value), system)
            add("static", float(value), evaluate_policy(policy, system, profiles, eval_seeds))
        else:
            factor, _, summaries = best_static_factor(system, profiles, eval_seeds,
                                                      cfg.static_factors)
            add("static_best", factor, summaries)

    for strategy, checkpoint in (("ddpg", cfg.ddpg_checkpoint),
                                 ("eddpg", cfg.eddpg_checkpoint)):
        if strategy not in cfg.strategies:
            continue
        if axis == "static_factor" and value != cfg.sweep_values[0]:
            continue  # learned policies do not depend on the factor; see below
        if checkpoint is not None:
            agent_cfg = dataclasses.replace(cfg.agent, even_bandwidth=(strategy == "eddpg"))
            agent = DdpgAgent.load(checkpoint, system, agent_cfg,
                                   seed=child_seed(cfg.seed, "agent"))
        elif cfg.sweep_eval_only:
            raise ValueError(f"sweep_eval_only is set but no {strategy} checkpoint was given")
        else:
            agent = _train_for_point(cfg, system, profiles, strategy, value)
        summaries = evaluate_policy(AgentPolicy(agent), system, profiles, eval_seeds)
        add(strategy, "", summaries)
    return rows


def _sweep_point_star(args):
    return _sweep_point(*args)


def run_sweep(cfg: ExperimentConfig, out_dir, parallel: int = 1) -> RunRecord:
    """Evaluate the configured strategies at every sweep point."""
    if cfg.sweep_axis is None:
        raise ValueError("sweep requires a sweep_axis")
    if not cfg.sweep_values:
        raise ValueError("sweep requires non-empty sweep_values")
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)

    tasks = [(cfg, value) for value in cfg.sweep_values]
    if parallel > 1 and len(tasks) > 1:
        with multiprocessing.Pool(min(parallel, len(tasks))) as pool:
            per_point = pool.map(_sweep_point_star, tasks)
    else:
        per_point = [_sweep_point(*t) for t in tasks]

    rows = [row for point in per_point for row in point]
    # learned strategies are constant along the static_factor axis: replicate
    # their rows so every point carries all strategies
    if cfg.sweep_axis == "static_factor":
        learned = [r for r in rows if r[2] in ("ddpg", "eddpg")]
        for value in cfg.sweep_values[1:]:
            for r in learned:
                dup = list(r)
                dup[1] = value
                rows.append(dup)

    path = write_csv(out / f"sweep_{cfg.sweep_axis}.csv", SWEEP_COLUMNS, rows,
                     chash, cfg.seed)
    aggregates = sweep_aggregates(rows)
    record = RunRecord(kind="sweep", config_hash=chash, seed=cfg.seed,
                       columns=SWEEP_COLUMNS, rows=rows, aggregates=aggregates,
                       outputs={"sweep": path})
    record.outputs["meta"] = _write_meta(out, record, cfg, started, _now())
    return record


def sweep_aggregates(rows) -> dict:
    """Per (value, strategy) mean/std over repeats, recomputable from the rows."""
    groups = {}
    for r in rows:
        groups.setdefault((r[1], r[2]), []).append(r)
    out = {}
    for (value, strategy), rs in groups.items():
        out[f"{strategy}@{value}"] = {
            "mean_rounds": _mean(x[5] for x in rs),
            "mean_latency": _mean(x[6] for x in rs),
            "mean_energy": _mean(x[7] for x in rs),
            "mean_cost": _mean(x[8] for x in rs),
            "std_cost": _std(x[8] for x in rs),
            "repeats": len(rs),
        }
    return out


def run_fedavg_demo(cfg: ExperimentConfig, out_dir) -> RunRecord:
    """Run the convex federated-averaging demo and dump its loss curve."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    fa = cfg.fedavg
    clients, _ = make_synthetic_clients(fa.clients, fa.dim,
                                        (fa.samples_min, fa.samples_max),
                                        seed=child_seed(cfg.seed, "fedavg"),
                                        noise_std=fa.noise_std)
    _, losses = run_fedavg(clients, fa.rounds, fa.alpha, fa.epochs)
    rows = [[k, loss] for k, loss in enumerate(losses)]
    path = write_csv(out / "fedavg_loss.csv", FEDAVG_COLUMNS, rows, chash, cfg.seed)
    aggregates = {"initial_loss": losses[0], "final_loss": losses[-1],
                  "reduction": losses[-1] / losses[0] if losses[0] else 0.0}
    record = RunRecord(kind="fedavg-demo", config_hash=chash, seed=cfg.seed,
                       columns=FEDAVG_COLUMNS, rows=rows, aggregates=aggregates,
                       outputs={"loss_curve": path})
    record.outputs["meta"] = _write_meta(out, record, cfg, started, _now())
    return record
