"""Actor-critic agent conditioned on per-step goal timelines.

DDPG-style off-policy learning from a replay buffer of whole episodes, with
hindsight relabeling: sampled transitions swap their goal for a spectrum the
robot actually produced at a later step of the same episode, and the reward
is recomputed against that substitute goal.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass

import numpy as np

from . import neuralnet as nn
from .env import EPISODE_STEPS, SEGMENT_LEN

TERMINAL_STEP = EPISODE_STEPS - 1  # only the time limit terminates an episode


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.995
    lr: float = 0.001
    random_action_prob: float = 0.30   # fraction of fully random actions
    action_noise_scale: float = 0.20   # stddev of Gaussian noise on the rest
    her_ratio: int = 4                 # relabeled : original experience
    her_segment_coherent: bool = False
    batch_size: int = 128
    updates_per_episode: int = 40
    tau: float = 0.05                  # target blend after each episode
    buffer_episodes: int = 5000
    action_l2: float = 0.05            # actor penalty against saturation
    clip_return: bool = True           # clamp critic targets to [-1/(1-gamma), 0]

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.her_ratio < 0:
            raise ValueError("her_ratio must be non-negative")


@dataclass(frozen=True)
class Transition:
    """One stored tuple: (s_t, a_t, g_t, s_next, g_next) plus bookkeeping."""

    s: np.ndarray
    a: np.ndarray
    g: np.ndarray
    s_next: np.ndarray
    g_next: np.ndarray
    achieved_next: np.ndarray     # spectrum the robot actually produced
    achieved_freq_next: float     # metrics only
    reward: float
    episode_id: int
    step_index: int
    segment_boundary: bool

    @property
    def terminal(self) -> bool:
        return self.step_index == TERMINAL_STEP


class EpisodeRecord:
    """Column storage of one 200-step episode.

    Goals are block-constant, so only the 8 note spectra are kept; per-step
    goal rows are reconstructed from segment indices on access.
    """

    def __init__(self, audio, proprio, achieved_freq, actions, rewards,
                 note_spectra, note_freqs, episode_id=0):
        self.audio = np.asarray(audio, dtype=np.float64)          # (201, n_bins)
        self.proprio = np.asarray(proprio, dtype=np.float64)      # (201, p)
        self.achieved_freq = np.asarray(achieved_freq, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)      # (200, da)
        self.rewards = np.asarray(rewards, dtype=np.float64)      # (200,)
        self.note_spectra = np.asarray(note_spectra, dtype=np.float64)  # (8, n_bins)
        self.note_freqs = np.asarray(note_freqs, dtype=np.float64)
        self.episode_id = episode_id
        n = EPISODE_STEPS
        if self.actions.shape[0] != n or self.audio.shape[0] != n + 1:
            raise ValueError(f"an episode is exactly {n} transitions")

    def __len__(self):
        return EPISODE_STEPS

    @staticmethod
    def goal_segment(t) -> np.ndarray:
        """Segment of the goal paired with step index t (last block persists)."""
        return np.minimum(t, TERMINAL_STEP) // SEGMENT_LEN

    def features(self, t) -> np.ndarray:
        return np.concatenate([self.audio[t], self.proprio[t]], axis=-1)

    def goal_freq_next(self, t) -> np.ndarray:
        """Goal pitch the post-action tone of step t is scored against."""
        return self.note_freqs[self.goal_segment(np.asarray(t) + 1)]

    def transition(self, t: int) -> Transition:
        if not 0 <= t < EPISODE_STEPS:
            raise IndexError(t)
        seg = int(self.goal_segment(t))
        seg_next = int(self.goal_segment(t + 1))
        return Transition(
            s=self.features(t),
            a=self.actions[t].copy(),
            g=self.note_spectra[seg].copy(),
            s_next=self.features(t + 1),
            g_next=self.note_spectra[seg_next].copy(),
            achieved_next=self.audio[t + 1].copy(),
            achieved_freq_next=float(self.achieved_freq[t + 1]),
            reward=float(self.rewards[t]),
            episode_id=self.episode_id,
            step_index=t,
            segment_boundary=seg_next != seg,
        )


class ReplayBuffer:
    """Ring of whole episodes; the oldest is evicted at capacity."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes = collections.deque(maxlen=capacity)

    def __len__(self):
        return len(self._episodes)

    def add(self, episode: EpisodeRecord) -> None:
        self._episodes.append(episode)

    def episode(self, i: int) -> EpisodeRecord:
        return self._episodes[i]


def her_relabel(episode: EpisodeRecord, steps, rng: np.random.Generator,
                ratio: int, batch_reward, segment_coherent: bool = False) -> dict:
    """Assemble training rows for ``steps`` of one episode, with relabeling.

    Each row keeps its original goal with probability 1/(ratio+1); otherwise
    both goal slots are replaced by the spectrum achieved at a future step
    drawn uniformly from (t, 200], and the reward is recomputed against the
    substitute.  Segment-coherent mode instead substitutes what the goal
    block finally achieved, so all rows of a block share one hindsight goal.
    """
    steps = np.asarray(steps, dtype=np.int64)
    if steps.size == 0:
        raise ValueError("need a non-empty step selection")
    seg = EpisodeRecord.goal_segment(steps)
    seg_next = EpisodeRecord.goal_segment(steps + 1)
    g = episode.note_spectra[seg].copy()
    g_next = episode.note_spectra[seg_next].copy()
    rewards = episode.rewards[steps].copy()

    p_relabel = ratio / (ratio + 1.0) if ratio > 0 else 0.0
    relabel = rng.random(steps.size) < p_relabel
    if np.any(relabel):
        if segment_coherent:
            future = (seg_next + 1) * SEGMENT_LEN - 1
        else:
            future = rng.integers(steps, EPISODE_STEPS)  # j in [t, 199]
        substitute = episode.audio[future[relabel] + 1]
        g[relabel] = substitute
        g_next[relabel] = substitute
        achieved = episode.audio[steps[relabel] + 1]
        rewards[relabel] = batch_reward(achieved, substitute)
    return {
        "s": episode.features(steps),
        "a": episode.actions[steps],
        "g": g,
        "s_next": episode.features(steps + 1),
        "g_next": g_next,
        "r": rewards,
        "terminal": steps == TERMINAL_STEP,
    }


def _stack_batches(parts: list[dict]) -> dict:
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def select_action(actor: nn.Mlp, s: np.ndarray, g: np.ndarray, explore: bool,
                  rng: np.random.Generator | None = None,
                  random_action_prob: float = 0.30,
                  action_noise_scale: float = 0.20) -> np.ndarray:
    """Deterministic policy output, optionally with exploration.

    While exploring, a fraction of actions is replaced by uniform noise in
    [-1, 1] and the rest get Gaussian noise added; evaluation actions are the
    raw actor output.
    """
    dim = actor.out_dim
    if explore:
        if rng is None:
            raise ValueError("exploration needs an rng")
        if rng.random() < random_action_prob:
            return rng.uniform(-1.0, 1.0, dim)
        a, _ = nn.forward(actor, np.concatenate([s, g]))
        a = a + rng.normal(0.0, action_noise_scale, dim)
        return np.clip(a, -1.0, 1.0)
    a, _ = nn.forward(actor, np.concatenate([s, g]))
    return np.clip(a, -1.0, 1.0)


def critic_update(critic: nn.Mlp, critic_target: nn.Mlp, actor_target: nn.Mlp,
                  batch: dict, cfg: AgentConfig) -> float:
    """One Adam step on the mean-squared Bellman error; returns the loss.

    Targets are r + gamma * Q'(s', pi'(s', g'), g'), with the bootstrap term
    dropped on episode-terminal rows.
    """
    s, a, g = batch["s"], batch["a"], batch["g"]
    s_next, g_next = batch["s_next"], batch["g_next"]
    a_next, _ = nn.forward(actor_target, np.concatenate([s_next, g_next], axis=1))
    q_next, _ = nn.forward(critic_target,
                           np.concatenate([s_next, a_next, g_next], axis=1))
    bootstrap = np.where(batch["terminal"], 0.0, q_next[:, 0])
    y = batch["r"] + cfg.gamma * bootstrap
    if cfg.clip_return:
        y = np.clip(y, -1.0 / (1.0 - cfg.gamma), 0.0)
    q, cache = nn.forward(critic, np.concatenate([s, a, g], axis=1))
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    d_q = (2.0 / err.size) * err[:, None]
    grads, _ = nn.backward(critic, cache, d_q)
    nn.adam_step(critic, grads, cfg.lr)
    return loss


def actor_update(actor: nn.Mlp, critic: nn.Mlp, batch: dict,
                 cfg: AgentConfig) -> float:
    """One Adam ascent step on J = mean Q(s, pi(s, g), g) - l2 * mean(pi^2).

    The critic's input gradient is chained through the actor; the critic's
    own weights are left untouched.  The quadratic action penalty keeps the
    tanh head out of saturation.
    """
    s, g = batch["s"], batch["g"]
    obs_dim = s.shape[1]
    a, actor_cache = nn.forward(actor, np.concatenate([s, g], axis=1))
    q, critic_cache = nn.forward(critic, np.concatenate([s, a, g], axis=1))
    objective = float(np.mean(q) - cfg.action_l2 * np.mean(a ** 2))
    d_q = np.full((q.shape[0], 1), 1.0 / q.shape[0])
    _, d_input = nn.backward(critic, critic_cache, d_q)
    d_a = d_input[:, obs_dim:obs_dim + a.shape[1]]
    d_a = d_a - cfg.action_l2 * 2.0 * a / a.size
    grads, _ = nn.backward(actor, actor_cache, d_a)
    nn.adam_step(actor, grads.scaled(-1.0), cfg.lr)  # ascent on J
    return objective


class TdgAgent:
    """Owns the four networks, the replay buffer and the training loop."""

    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int,
                 cfg: AgentConfig, batch_reward, seed: int | None = None,
                 obs_scale: np.ndarray | None = None,
                 goal_scale: np.ndarray | None = None):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.action_dim = action_dim
        self.batch_reward = batch_reward
        # fixed element-wise input gains bringing all features to O(1)
        self.obs_scale = np.ones(obs_dim) if obs_scale is None \
            else np.asarray(obs_scale, dtype=np.float64)
        self.goal_scale = np.ones(goal_dim) if goal_scale is None \
            else np.asarray(goal_scale, dtype=np.float64)
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        actor_seed, critic_seed, rng_seed = seed.spawn(3)
        self.actor = nn.init_mlp(obs_dim + goal_dim, action_dim,
                                 nn.OutputActivation.TANH, seed=actor_seed)
        self.critic = nn.init_mlp(obs_dim + action_dim + goal_dim, 1,
                                  nn.OutputActivation.IDENTITY, seed=critic_seed)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.buffer = ReplayBuffer(cfg.buffer_episodes)
        self.rng = np.random.default_rng(rng_seed)

    def act(self, s: np.ndarray, g: np.ndarray, explore: bool) -> np.ndarray:
        return select_action(self.actor, s * self.obs_scale,
                             g * self.goal_scale, explore, self.rng,
                             self.cfg.random_action_prob,
                             self.cfg.action_noise_scale)

    def sample_batch(self) -> dict:
        """Uniform over stored episodes and steps, hindsight-relabeled."""
        n = self.cfg.batch_size
        ep_idx = self.rng.integers(0, len(self.buffer), n)
        steps = self.rng.integers(0, EPISODE_STEPS, n)
        parts = []
        for e in np.unique(ep_idx):
            mask = ep_idx == e
            parts.append(her_relabel(self.buffer.episode(int(e)), steps[mask],
                                     self.rng, self.cfg.her_ratio,
                                     self.batch_reward,
                                     self.cfg.her_segment_coherent))
        batch = _stack_batches(parts)
        batch["s"] = batch["s"] * self.obs_scale
        batch["s_next"] = batch["s_next"] * self.obs_scale
        batch["g"] = batch["g"] * self.goal_scale
        batch["g_next"] = batch["g_next"] * self.goal_scale
        return batch

    def train_on_episode(self, episode: EpisodeRecord) -> dict:
        """Store the episode, run the update batches, blend the targets."""
        self.buffer.add(episode)
        losses, objectives = [], []
        for _ in range(self.cfg.updates_per_episode):
            batch = self.sample_batch()
            losses.append(critic_update(self.critic, self.critic_target,
                                        self.actor_target, batch, self.cfg))
            objectives.append(actor_update(self.actor, self.critic, batch,
                                           self.cfg))
        if self.cfg.updates_per_episode > 0:
            nn.polyak_blend(self.actor_target, self.actor, self.cfg.tau)
            nn.polyak_blend(self.critic_target, self.critic, self.cfg.tau)
        return {
            "critic_loss": float(np.mean(losses)) if losses else 0.0,
            "actor_objective": float(np.mean(objectives)) if objectives else 0.0,
        }
