"""Training and evaluation driver: presets, metrics, melodies, config files.

A run alternates exploratory training episodes with deterministic test
episodes, scoring test steps by the transform-independent 0.7 % pitch
criterion.  Results land in plot-ready CSV files; policies are saved in the
flat binary network format next to an INI sidecar holding the full config.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import dsp, neuralnet as nn
from .agent import AgentConfig, EpisodeRecord, TdgAgent
from .dsp import TimeSignal, TransformConfig, TransformKind
from .env import (CHROMATIC_FREQS, EPISODE_STEPS, EnvConfig, GoalTimeline,
                  PitchMap, RewardKind, ThereminEnv, fixed_goal_timeline,
                  make_batch_reward, success_step)
from .kinematics import Action, ActionSpace, RobotKind

DEFAULT_SEEDS = (0, 1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class RunConfig:
    name: str = "baseline"
    preset: str = "baseline"
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    epochs: int = 30
    train_episodes_per_epoch: int = 25
    test_episodes_per_epoch: int = 10
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        if min(self.epochs, self.train_episodes_per_epoch,
               self.test_episodes_per_epoch) <= 0:
            raise ValueError("all episode counts must be positive")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ValueError("seeds must be distinct and non-empty")

    @property
    def obs_dim(self) -> int:
        return self.env.n_bins + self.env.proprio_dim

    @property
    def goal_dim(self) -> int:
        return self.env.n_bins


@dataclass
class EpochMetrics:
    epoch: int
    successful_steps: list    # one count per test episode, 0..200
    reward_sums: list         # summed sparse reward per test episode

    @property
    def mean_successful_steps(self) -> float:
        return float(np.mean(self.successful_steps))


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    history: list             # EpochMetrics per epoch
    actor: nn.Mlp


# ---------------------------------------------------------------------------
# rollouts and training
# ---------------------------------------------------------------------------

def rollout(env: ThereminEnv, agent: TdgAgent, explore: bool,
            episode_id: int = 0, keep_tones: bool = False):
    """Run one full episode; returns (EpisodeRecord, stats dict)."""
    cfg = env.cfg
    n_bins, p_dim, a_dim = cfg.n_bins, cfg.proprio_dim, cfg.action_dim
    audio = np.empty((EPISODE_STEPS + 1, n_bins))
    proprio = np.empty((EPISODE_STEPS + 1, p_dim))
    achieved = np.empty(EPISODE_STEPS + 1)
    actions = np.empty((EPISODE_STEPS, a_dim))
    rewards = np.empty(EPISODE_STEPS)

    obs = env.reset()
    audio[0], proprio[0], achieved[0] = obs.audio.bins, obs.proprio, obs.achieved_freq
    timeline = env.timeline
    tones = []
    successes = 0
    for t in range(EPISODE_STEPS):
        goal = env.current_goal()
        s = np.concatenate([audio[t], proprio[t]])
        a = agent.act(s, goal.bins, explore)
        obs, r, _, done = env.step(Action(a, cfg.actuation))
        actions[t] = a
        rewards[t] = r
        audio[t + 1], proprio[t + 1] = obs.audio.bins, obs.proprio
        achieved[t + 1] = obs.achieved_freq
        goal_freq = timeline.freq_at(min(t + 1, EPISODE_STEPS - 1))
        successes += success_step(obs.achieved_freq, goal_freq)
        if keep_tones:
            tones.append(env.last_tone)
    record = EpisodeRecord(
        audio, proprio, achieved, actions, rewards,
        np.stack([sp.bins for sp in timeline.note_spectra]),
        timeline.note_freqs, episode_id,
    )
    stats = {"successful_steps": int(successes),
             "reward_sum": float(rewards.sum())}
    if keep_tones:
        stats["tones"] = tones
    return record, stats


def feature_scales(env_cfg: EnvConfig):
    """Fixed input gains: spectra are lifted so a clean A4 tone peaks at 1."""
    probe = dsp.transform(dsp.synth_tone(440.0), env_cfg.transform)
    gain = 1.0 / float(probe.bins.max())
    obs_scale = np.ones(env_cfg.n_bins + env_cfg.proprio_dim)
    obs_scale[:env_cfg.n_bins] = gain
    goal_scale = np.full(env_cfg.n_bins, gain)
    return obs_scale, goal_scale


def make_agent(cfg: RunConfig, seed) -> TdgAgent:
    obs_scale, goal_scale = feature_scales(cfg.env)
    return TdgAgent(cfg.obs_dim, cfg.goal_dim, cfg.env.action_dim, cfg.agent,
                    make_batch_reward(cfg.env), seed,
                    obs_scale=obs_scale, goal_scale=goal_scale)


def train_run(cfg: RunConfig, seed: int, log=None,
              agent: TdgAgent = None, env: ThereminEnv = None) -> RunResult:
    """One full training run: epochs of 25 train + 10 test episodes.

    Test episodes never touch the replay buffer or the parameters.  Passing
    an existing agent continues its training (used by the generalization
    retraining protocol).
    """
    env_seed, agent_seed = np.random.SeedSequence(seed).spawn(2)
    if env is None:
        env = ThereminEnv(cfg.env, env_seed)
    if agent is None:
        agent = make_agent(cfg, agent_seed)
    history = []
    episode_id = 0
    for epoch in range(cfg.epochs):
        for _ in range(cfg.train_episodes_per_epoch):
            record, _ = rollout(env, agent, explore=True, episode_id=episode_id)
            agent.train_on_episode(record)
            episode_id += 1
        steps, sums = [], []
        for _ in range(cfg.test_episodes_per_epoch):
            _, stats = rollout(env, agent, explore=False)
            steps.append(stats["successful_steps"])
            sums.append(stats["reward_sum"])
        history.append(EpochMetrics(epoch, steps, sums))
        if log is not None:
            log(f"[{cfg.name} seed {seed}] epoch {epoch:2d}: "
                f"test successful steps {np.mean(steps):6.1f}")
    return RunResult(cfg, seed, history, agent.actor.copy())


def aggregate(results: list) -> list:
    """Per-epoch median and quartiles across seeds of mean test success.

    Each run contributes one value per epoch (the mean successful steps over
    its test episodes); percentiles interpolate linearly.
    """
    if not results:
        raise ValueError("nothing to aggregate")
    lengths = {len(r.history) for r in results}
    if len(lengths) != 1:
        raise ValueError("runs have ragged epoch histories")
    rows = []
    for epoch in range(lengths.pop()):
        vals = [r.history[epoch].mean_successful_steps for r in results]
        q25, med, q75 = np.percentile(vals, [25.0, 50.0, 75.0])
        rows.append({"epoch": epoch, "median": float(med),
                     "q25": float(q25), "q75": float(q75)})
    return rows


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESET_NAMES = ("baseline", "transforms", "action-spaces", "her-ablation",
                "snr-sweep", "generalization", "tdg-ablation", "cart1d")

# fields each preset is allowed to vary from the baseline (config-diff check)
PRESET_FACTORS = {
    "baseline": set(),
    "transforms": {"env.transform"},
    "action-spaces": {"env.actuation"},
    "her-ablation": {"agent.her_ratio"},
    "snr-sweep": {"env.snr_db"},
    "generalization": {"env.goal_freq_range", "env.pitch_map"},
    "tdg-ablation": {"env.constant_goal"},
    "cart1d": {"env.robot", "env.reward_kind", "env.reset_between_episodes",
               "env.antenna_y_jitter"},
}


def _baseline_config() -> RunConfig:
    return RunConfig()


def cart1d_env(**overrides) -> EnvConfig:
    base = dict(robot=RobotKind.CART_1D, reward_kind=RewardKind.ARGMAX_CQT,
                reset_between_episodes=False, antenna_y_jitter=0.0)
    base.update(overrides)
    return EnvConfig(**base)


def preset(name: str) -> list:
    """Configs for one experiment preset, each varying a single factor."""
    if name not in PRESET_NAMES:
        raise ValueError(
            f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    base = _baseline_config()
    if name == "baseline":
        return [base]
    if name == "transforms":
        return [
            replace(base, name=f"transforms-{kind.value}", preset=name,
                    env=replace(base.env, transform=dsp.make_config(kind)))
            for kind in (TransformKind.CQT, TransformKind.STFT, TransformKind.MEL)
        ]
    if name == "action-spaces":
        return [
            replace(base, name=f"action-spaces-{space.value}", preset=name,
                    env=replace(base.env, actuation=space))
            for space in (ActionSpace.CARTESIAN, ActionSpace.JOINT)
        ]
    if name == "her-ablation":
        return [
            replace(base, name=f"her-ablation-{ratio}", preset=name,
                    agent=replace(base.agent, her_ratio=ratio))
            for ratio in (4, 0)
        ]
    if name == "snr-sweep":
        return [
            replace(base, name=f"snr-sweep-{snr}", preset=name,
                    env=replace(base.env, snr_db=float(snr)))
            for snr in (38, 16, 8, 0)
        ]
    if name == "generalization":
        off_scale = replace(base.env, goal_freq_range=(float(CHROMATIC_FREQS[0]),
                                                       float(CHROMATIC_FREQS[-1])))
        linear = replace(base.env, pitch_map=PitchMap.LINEAR)
        return [
            replace(base, name="generalization-offscale", preset=name, env=off_scale),
            replace(base, name="generalization-linear", preset=name, env=linear),
        ]
    if name == "tdg-ablation":
        return [replace(base, name="tdg-ablation", preset=name,
                        env=replace(base.env, constant_goal=True))]
    return [replace(base, name="cart1d", preset=name, env=cart1d_env())]


# ---------------------------------------------------------------------------
# config file format (INI sections, flat key-value)
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (TransformKind, RobotKind, ActionSpace, PitchMap,
                          RewardKind)):
        return value.value
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    t = cfg.env.transform
    parser["run"] = {
        "name": cfg.name,
        "preset": cfg.preset,
        "epochs": _fmt(cfg.epochs),
        "train_episodes_per_epoch": _fmt(cfg.train_episodes_per_epoch),
        "test_episodes_per_epoch": _fmt(cfg.test_episodes_per_epoch),
        "seeds": _fmt(cfg.seeds),
    }
    parser["env"] = {
        "robot": _fmt(cfg.env.robot),
        "actuation": _fmt(cfg.env.actuation),
        "snr_db": _fmt(cfg.env.snr_db),
        "reward_kind": _fmt(cfg.env.reward_kind),
        "epsilon": _fmt(cfg.env.epsilon),
        "reset_between_episodes": _fmt(cfg.env.reset_between_episodes),
        "antenna_y_jitter": _fmt(cfg.env.antenna_y_jitter),
        "pitch_map": _fmt(cfg.env.pitch_map),
        "goal_freq_range": _fmt(cfg.env.goal_freq_range),
        "constant_goal": _fmt(cfg.env.constant_goal),
    }
    parser["transform"] = {
        "kind": _fmt(t.kind),
        "sample_rate": _fmt(t.sample_rate),
        "window_len": _fmt(t.window_len),
        "fft_size": _fmt(t.fft_size),
        "f_min": _fmt(t.f_min),
        "bins_per_octave": _fmt(t.bins_per_octave),
        "cqt_bins": _fmt(t.cqt_bins),
        "mel_filters": _fmt(t.mel_filters),
    }
    parser["agent"] = {
        "gamma": _fmt(cfg.agent.gamma),
        "lr": _fmt(cfg.agent.lr),
        "random_action_prob": _fmt(cfg.agent.random_action_prob),
        "action_noise_scale": _fmt(cfg.agent.action_noise_scale),
        "her_ratio": _fmt(cfg.agent.her_ratio),
        "her_segment_coherent": _fmt(cfg.agent.her_segment_coherent),
        "batch_size": _fmt(cfg.agent.batch_size),
        "updates_per_episode": _fmt(cfg.agent.updates_per_episode),
        "tau": _fmt(cfg.agent.tau),
        "buffer_episodes": _fmt(cfg.agent.buffer_episodes),
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def _parse_opt_float(text: str):
    return None if text == "none" else float(text)


def parse_run_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    t_sec, e_sec, a_sec, r_sec = (parser["transform"], parser["env"],
                                  parser["agent"], parser["run"])
    transform = dsp.make_config(
        t_sec["kind"],
        sample_rate=int(t_sec["sample_rate"]),
        window_len=int(t_sec["window_len"]),
        fft_size=int(t_sec["fft_size"]),
        f_min=float(t_sec["f_min"]),
        bins_per_octave=int(t_sec["bins_per_octave"]),
        cqt_bins=int(t_sec["cqt_bins"]),
        mel_filters=int(t_sec["mel_filters"]),
    )
    freq_range = e_sec["goal_freq_range"]
    env_cfg = EnvConfig(
        robot=RobotKind(e_sec["robot"]),
        actuation=ActionSpace(e_sec["actuation"]),
        transform=transform,
        snr_db=_parse_opt_float(e_sec["snr_db"]),
        reward_kind=RewardKind(e_sec["reward_kind"]),
        epsilon=_parse_opt_float(e_sec["epsilon"]),
        reset_between_episodes=e_sec["reset_between_episodes"] == "true",
        antenna_y_jitter=float(e_sec["antenna_y_jitter"]),
        pitch_map=PitchMap(e_sec["pitch_map"]),
        goal_freq_range=(None if freq_range == "none"
                         else tuple(float(v) for v in freq_range.split(","))),
        constant_goal=e_sec["constant_goal"] == "true",
    )
    agent_cfg = AgentConfig(
        gamma=float(a_sec["gamma"]),
        lr=float(a_sec["lr"]),
        random_action_prob=float(a_sec["random_action_prob"]),
        action_noise_scale=float(a_sec["action_noise_scale"]),
        her_ratio=int(a_sec["her_ratio"]),
        her_segment_coherent=a_sec["her_segment_coherent"] == "true",
        batch_size=int(a_sec["batch_size"]),
        updates_per_episode=int(a_sec["updates_per_episode"]),
        tau=float(a_sec["tau"]),
        buffer_episodes=int(a_sec["buffer_episodes"]),
    )
    return RunConfig(
        name=r_sec["name"],
        preset=r_sec["preset"],
        env=env_cfg,
        agent=agent_cfg,
        epochs=int(r_sec["epochs"]),
        train_episodes_per_epoch=int(r_sec["train_episodes_per_epoch"]),
        test_episodes_per_epoch=int(r_sec["test_episodes_per_epoch"]),
        seeds=tuple(int(s) for s in r_sec["seeds"].split(",")),
    )


# ---------------------------------------------------------------------------
# metrics export
# ---------------------------------------------------------------------------

def export_metrics(results: list, out_dir) -> list:
    """Write one per-episode CSV and one aggregate CSV per config.

    Returns the written paths.  Outputs are pure functions of the results,
    so re-exporting identical histories is byte-identical.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_config = {}
    for res in results:
        by_config.setdefault(res.config.name, []).append(res)
    paths = []
    for name, runs in by_config.items():
        metrics_path = out_dir / f"{name}_metrics.csv"
        lines = ["epoch,episode_index,seed,successful_steps,mean_reward"]
        for run in runs:
            for em in run.history:
                for i, (steps, rsum) in enumerate(
                        zip(em.successful_steps, em.reward_sums)):
                    mean_r = rsum / EPISODE_STEPS
                    lines.append(f"{em.epoch},{i},{run.seed},{steps},"
                                 f"{str(float(mean_r))}")
        metrics_path.write_text("\n".join(lines) + "\n")
        agg_path = out_dir / f"{name}_aggregate.csv"
        lines = ["epoch,median,q25,q75"]
        for row in aggregate(runs):
            lines.append(f"{row['epoch']},{str(row['median'])},"
                         f"{str(row['q25'])},{str(row['q75'])}")
        agg_path.write_text("\n".join(lines) + "\n")
        paths.extend([metrics_path, agg_path])
    return paths


def save_policy(result: RunResult, path) -> None:
    """Network snapshot plus an INI sidecar with the full run config."""
    from pathlib import Path

    path = Path(path)
    nn.save_mlp(result.actor, path)
    path.with_suffix(".ini").write_text(config_to_ini(result.config))


def load_policy(path):
    """Returns (actor, RunConfig) from a snapshot and its INI sidecar."""
    from pathlib import Path

    path = Path(path)
    sidecar = path.with_suffix(".ini")
    if not sidecar.exists():
        raise FileNotFoundError(f"missing config sidecar {sidecar}")
    return nn.load_mlp(path), parse_run_config(sidecar.read_text())


# ---------------------------------------------------------------------------
# melody playback
# ---------------------------------------------------------------------------

_NOTE_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}


def note_to_freq(name: str) -> float:
    """Scientific pitch notation (A4 = 440 Hz) or a literal frequency."""
    try:
        return float(name)
    except ValueError:
        pass
    m = re.fullmatch(r"([A-Ga-g])([#b]?)(-?\d+)", name.strip())
    if m is None:
        raise ValueError(f"cannot parse note name {name!r}")
    letter, accidental, octave = m.groups()
    semitone = _NOTE_SEMITONES[letter.upper()]
    semitone += {"#": 1, "b": -1, "": 0}[accidental]
    midi = 12 * (int(octave) + 1) + semitone
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def play_melody(actor: nn.Mlp, notes, run_cfg: RunConfig, wav_path,
                csv_path=None, seed: int = 0) -> list:
    """Play up to 8 notes with a frozen policy; write WAV and step CSV.

    Returns the per-step trace as (goal_hz, achieved_hz, success) tuples.
    """
    from pathlib import Path

    freqs = [note_to_freq(n) for n in notes]
    if not freqs:
        raise ValueError("need at least one note")
    freqs = freqs[:8]
    env = ThereminEnv(run_cfg.env, seed)
    agent = make_agent(run_cfg, seed)
    agent.actor = actor
    timeline = fixed_goal_timeline(freqs, run_cfg.env.transform)

    obs = env.reset()
    env.set_timeline(timeline)
    trace = []
    tones = []
    audio, proprio = obs.audio.bins, obs.proprio
    for t in range(EPISODE_STEPS):
        goal = env.current_goal()
        s = np.concatenate([audio, proprio])
        a = agent.act(s, goal.bins, explore=False)
        obs, _, _, _ = env.step(Action(a, run_cfg.env.actuation))
        audio, proprio = obs.audio.bins, obs.proprio
        tones.append(env.last_tone)
        goal_freq = timeline.freq_at(min(t + 1, EPISODE_STEPS - 1))
        trace.append((goal_freq, obs.achieved_freq,
                      success_step(obs.achieved_freq, goal_freq)))
    samples = np.concatenate([tone.samples for tone in tones])
    dsp.write_wav(wav_path, TimeSignal(samples, run_cfg.env.transform.sample_rate))
    if csv_path is not None:
        lines = ["goal_hz,achieved_hz,success"]
        for goal_hz, achieved_hz, ok in trace:
            lines.append(f"{str(float(goal_hz))},{str(float(achieved_hz))},"
                         f"{int(ok)}")
        Path(csv_path).write_text("\n".join(lines) + "\n")
    return trace
