"""The simulated theremin environment.

Robot tip distance to the antenna sets the pitch; every step emits one noisy
50 ms tone and scores it against a per-step goal timeline of 8 notes, each
held for 25 of the episode's 200 steps.  Rewards are sparse: 0 on a spectral
match, -1 otherwise.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dsp, kinematics as kin
from .dsp import Spectrum, TransformConfig, TransformKind
from .kinematics import Action, ActionSpace, RobotKind, RobotState

EPISODE_STEPS = 200
SEGMENT_LEN = 25
N_SEGMENTS = EPISODE_STEPS // SEGMENT_LEN

# 12-note chromatic scale from A4 up to Ab5, equal temperament
CHROMATIC_FREQS = 440.0 * 2.0 ** (np.arange(12) / 12.0)

SUCCESS_TOLERANCE = 0.007  # relative pitch error for a successful step

# distance-to-pitch map: f(d) = floor + span * exp(-d / scale), capped so the
# 8th partial of any producible pitch stays below Nyquist
PITCH_FLOOR = 180.0
PITCH_SPAN = 1200.0
PITCH_SCALE = 0.18
PITCH_CEIL = 1300.0

ARM_HOME = np.array([0.0, 0.6, 0.5, 0.4, 0.3, 0.0])
ARM_ANTENNA = np.array([1.06, 0.0, 0.38])   # ~0.18 m from the home tip
CART_ANTENNA = np.zeros(3)
CART_START = 0.325  # first-ever cart position, mid-track


class PitchMap(str, enum.Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


class RewardKind(str, enum.Enum):
    TEMPLATE_MATCH = "template"
    ARGMAX_CQT = "argmax"


def _linear_map_params():
    """Affine map through the same two anchor points as the exponential map."""
    d_low = pitch_to_distance(CHROMATIC_FREQS[0], PitchMap.EXPONENTIAL)
    d_high = pitch_to_distance(CHROMATIC_FREQS[-1], PitchMap.EXPONENTIAL)
    slope = (CHROMATIC_FREQS[-1] - CHROMATIC_FREQS[0]) / (d_high - d_low)
    return d_low, slope


def distance_to_pitch(d: float, pitch_map: PitchMap = PitchMap.EXPONENTIAL) -> float:
    """Pitch in Hz for a tip-to-antenna distance in metres (monotone down)."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    if pitch_map is PitchMap.EXPONENTIAL:
        f = PITCH_FLOOR + PITCH_SPAN * math.exp(-d / PITCH_SCALE)
    else:
        d_low, slope = _linear_map_params()
        f = CHROMATIC_FREQS[0] + slope * (d - d_low)
    return float(np.clip(f, PITCH_FLOOR, PITCH_CEIL))


def pitch_to_distance(f: float, pitch_map: PitchMap = PitchMap.EXPONENTIAL) -> float:
    """Inverse of distance_to_pitch on its unclipped range."""
    if not PITCH_FLOOR < f <= PITCH_CEIL:
        raise ValueError(f"pitch {f} Hz is outside the producible range")
    if pitch_map is PitchMap.EXPONENTIAL:
        return -PITCH_SCALE * math.log((f - PITCH_FLOOR) / PITCH_SPAN)
    d_low, slope = _linear_map_params()
    return d_low + (f - CHROMATIC_FREQS[0]) / slope


# ---------------------------------------------------------------------------
# rewards and calibration
# ---------------------------------------------------------------------------

def spectral_distance(s: Spectrum, g: Spectrum) -> float:
    if s.n_bins != g.n_bins:
        raise ValueError(f"bin count mismatch: {s.n_bins} vs {g.n_bins}")
    if s.kind is not g.kind:
        raise ValueError("spectra come from different transforms")
    return float(np.abs(g.bins - s.bins).sum())


def reward_template(s: Spectrum, g: Spectrum, epsilon: float) -> int:
    """0 when the summed absolute bin difference stays below epsilon, else -1."""
    return 0 if spectral_distance(s, g) < epsilon else -1


def reward_argmax(s: Spectrum, g: Spectrum) -> int:
    """0 when both CQT spectra peak in the same bin (ties take the lowest)."""
    if s.kind is not TransformKind.CQT or g.kind is not TransformKind.CQT:
        raise ValueError("argmax reward is defined on CQT spectra only")
    return 0 if int(np.argmax(s.bins)) == int(np.argmax(g.bins)) else -1


@functools.lru_cache(maxsize=8)
def calibrate_epsilon(cfg: TransformConfig) -> float:
    """Template-match threshold hitting the 0.7 % pitch tolerance.

    Minimum over the 12 goal notes and both detuning signs of the spectral
    distance between the clean note tone and the tone detuned by 0.7 %.
    Downward detunings produce slightly smaller distances than upward ones,
    so both must enter the minimum for every at-tolerance detuning to score
    -1 on every note.
    """
    distances = []
    for f in CHROMATIC_FREQS:
        clean = dsp.transform(dsp.synth_tone(f), cfg)
        for sign in (1.0, -1.0):
            detuned = dsp.transform(
                dsp.synth_tone(f * (1.0 + sign * SUCCESS_TOLERANCE)), cfg)
            distances.append(spectral_distance(clean, detuned))
    return min(distances)


def make_batch_reward(cfg: "EnvConfig"):
    """Vectorized reward over (rows, n_bins) arrays, matching the env reward."""
    if cfg.reward_kind is RewardKind.TEMPLATE_MATCH:
        eps = cfg.epsilon if cfg.epsilon is not None else calibrate_epsilon(cfg.transform)

        def fn(s_bins, g_bins):
            dist = np.abs(np.asarray(g_bins) - np.asarray(s_bins)).sum(axis=-1)
            return np.where(dist < eps, 0.0, -1.0)
    else:

        def fn(s_bins, g_bins):
            hit = np.argmax(s_bins, axis=-1) == np.argmax(g_bins, axis=-1)
            return np.where(hit, 0.0, -1.0)
    return fn


def success_step(achieved_freq: float, goal_freq: float) -> bool:
    """Transform-independent metric: within 0.7 % of the goal pitch."""
    if achieved_freq <= 0 or goal_freq <= 0:
        raise ValueError("frequencies must be positive")
    return abs(achieved_freq - goal_freq) / goal_freq < SUCCESS_TOLERANCE


# ---------------------------------------------------------------------------
# goal timeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoalTimeline:
    """8 goal notes, one per 25-step block of the 200-step episode."""

    note_freqs: np.ndarray          # (8,) Hz
    note_spectra: tuple             # 8 clean Spectrum objects
    segment_len: int = SEGMENT_LEN

    def __post_init__(self):
        if len(self.note_freqs) != N_SEGMENTS or len(self.note_spectra) != N_SEGMENTS:
            raise ValueError(f"timeline needs exactly {N_SEGMENTS} notes")

    def __len__(self):
        return EPISODE_STEPS

    def segment_of(self, t: int) -> int:
        if not 0 <= t < EPISODE_STEPS:
            raise IndexError(f"step {t} outside the {EPISODE_STEPS}-step episode")
        return t // self.segment_len

    def freq_at(self, t: int) -> float:
        return float(self.note_freqs[self.segment_of(t)])

    def spectrum_at(self, t: int) -> Spectrum:
        return self.note_spectra[self.segment_of(t)]


@functools.lru_cache(maxsize=64)
def _clean_spectrum(freq: float, cfg: TransformConfig) -> Spectrum:
    return dsp.transform(dsp.synth_tone(freq), cfg)


def sample_goal_timeline(rng: np.random.Generator, transform_cfg: TransformConfig,
                         freq_range: tuple[float, float] | None = None,
                         constant: bool = False) -> GoalTimeline:
    """8 goals drawn i.i.d.: chromatic notes, or uniform in ``freq_range``.

    With ``constant`` a single draw is held for the whole episode.
    """
    count = 1 if constant else N_SEGMENTS
    if freq_range is None:
        freqs = rng.choice(CHROMATIC_FREQS, size=count, replace=True)
    else:
        freqs = rng.uniform(freq_range[0], freq_range[1], size=count)
    if constant:
        freqs = np.repeat(freqs, N_SEGMENTS)
    spectra = tuple(_clean_spectrum(float(f), transform_cfg) for f in freqs)
    return GoalTimeline(np.asarray(freqs, dtype=np.float64), spectra)


def fixed_goal_timeline(freqs, transform_cfg: TransformConfig) -> GoalTimeline:
    """Timeline from explicit frequencies; short melodies repeat the last note."""
    freqs = [float(f) for f in freqs]
    if not 0 < len(freqs) <= N_SEGMENTS:
        raise ValueError(f"need 1..{N_SEGMENTS} notes, got {len(freqs)}")
    freqs = freqs + [freqs[-1]] * (N_SEGMENTS - len(freqs))
    spectra = tuple(_clean_spectrum(f, transform_cfg) for f in freqs)
    return GoalTimeline(np.asarray(freqs), spectra)


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvConfig:
    robot: RobotKind = RobotKind.ARM_6D
    actuation: ActionSpace = ActionSpace.CARTESIAN
    transform: TransformConfig = field(default_factory=dsp.cqt_config)
    snr_db: float | None = 38.0         # None synthesizes noise-free tones
    reward_kind: RewardKind = RewardKind.TEMPLATE_MATCH
    epsilon: float | None = None        # None -> calibrate_epsilon(transform)
    reset_between_episodes: bool = True
    antenna_y_jitter: float = 0.1
    pitch_map: PitchMap = PitchMap.EXPONENTIAL
    goal_freq_range: tuple[float, float] | None = None  # None -> chromatic set
    constant_goal: bool = False  # one note held for the whole episode

    def __post_init__(self):
        if self.reward_kind is RewardKind.ARGMAX_CQT \
                and self.transform.kind is not TransformKind.CQT:
            raise ValueError("argmax reward requires the CQT transform")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def proprio_dim(self) -> int:
        if self.robot is RobotKind.CART_1D:
            return 1
        return 3 if self.actuation is ActionSpace.CARTESIAN else kin.N_ARM_JOINTS

    @property
    def action_dim(self) -> int:
        return kin.action_dim(self.robot, self.actuation)

    @property
    def n_bins(self) -> int:
        return self.transform.n_bins


@dataclass(frozen=True)
class Observation:
    audio: Spectrum
    proprio: np.ndarray
    achieved_freq: float  # evaluation only, never a network input


class ThereminEnv:
    """Single-owner mutable episode state; one instance per worker."""

    def __init__(self, cfg: EnvConfig, seed: int | None = None):
        self.cfg = cfg
        self._rng = np.random.default_rng(seed)
        self._epsilon = cfg.epsilon
        self._state: RobotState | None = None
        self._antenna = self._antenna_base().copy()
        self._timeline: GoalTimeline | None = None
        self._t = 0
        self._done = True
        self.last_tone: dsp.TimeSignal | None = None  # most recent observed tone

    def _antenna_base(self) -> np.ndarray:
        return CART_ANTENNA if self.cfg.robot is RobotKind.CART_1D else ARM_ANTENNA

    @property
    def epsilon(self) -> float:
        if self._epsilon is None:
            self._epsilon = calibrate_epsilon(self.cfg.transform)
        return self._epsilon

    @property
    def timeline(self) -> GoalTimeline:
        if self._timeline is None:
            raise RuntimeError("reset() must run before the episode starts")
        return self._timeline

    @property
    def steps_taken(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    def _goal_index(self, t: int) -> int:
        return min(t, EPISODE_STEPS - 1)

    def current_goal(self) -> Spectrum:
        """Goal spectrum conditioning the next action."""
        return self.timeline.spectrum_at(self._goal_index(self._t))

    def current_goal_freq(self) -> float:
        return self.timeline.freq_at(self._goal_index(self._t))

    def _observe(self) -> Observation:
        d = float(np.linalg.norm(self._state.tip - self._antenna))
        freq = distance_to_pitch(d, self.cfg.pitch_map)
        tone = dsp.synth_tone(freq, sample_rate=self.cfg.transform.sample_rate)
        if self.cfg.snr_db is not None:
            noise = dsp.pink_noise(len(tone), int(self._rng.integers(2 ** 63)),
                                   tone.sample_rate)
            tone = dsp.mix_snr(tone, noise, self.cfg.snr_db)
        self.last_tone = tone
        audio = dsp.transform(tone, self.cfg.transform)
        if self.cfg.robot is RobotKind.CART_1D:
            proprio = np.array([self._state.position])
        elif self.cfg.actuation is ActionSpace.CARTESIAN:
            proprio = self._state.tip.copy()
        else:
            proprio = self._state.joints.copy()
        return Observation(audio, proprio, freq)

    def reset(self, rng: np.random.Generator | None = None) -> Observation:
        """Start a new episode: fresh goals, antenna jitter, arm re-homed.

        The cart keeps its position from the previous episode; the arm
        returns to the home configuration.
        """
        if rng is None:
            rng = self._rng
        if self.cfg.robot is RobotKind.CART_1D:
            if self._state is None:
                self._state = RobotState.cart(CART_START)
            elif self.cfg.reset_between_episodes:
                self._state = RobotState.cart(CART_START)
        else:
            if self._state is None or self.cfg.reset_between_episodes:
                self._state = RobotState.arm(ARM_HOME)
        self._antenna = self._antenna_base().copy()
        if self.cfg.antenna_y_jitter > 0:
            self._antenna[1] += rng.uniform(-self.cfg.antenna_y_jitter,
                                            self.cfg.antenna_y_jitter)
        self._timeline = sample_goal_timeline(rng, self.cfg.transform,
                                              self.cfg.goal_freq_range,
                                              self.cfg.constant_goal)
        self._t = 0
        self._done = False
        return self._observe()

    def set_timeline(self, timeline: GoalTimeline) -> None:
        """Replace the sampled goals (melody playback, probing)."""
        self._timeline = timeline

    def step(self, action: Action):
        """Apply one action; returns (obs, reward, goal_spectrum, done).

        The reward scores the post-action tone against the post-action goal,
        and ``goal_spectrum`` is that same goal, which also conditions the
        next action.
        """
        if self._done:
            raise RuntimeError("episode is done; call reset()")
        self._state = kin.apply_action(self._state, action)
        self._t += 1
        obs = self._observe()
        goal_idx = self._goal_index(self._t)
        goal = self.timeline.spectrum_at(goal_idx)
        if self.cfg.reward_kind is RewardKind.TEMPLATE_MATCH:
            reward = reward_template(obs.audio, goal, self.epsilon)
        else:
            reward = reward_argmax(obs.audio, goal)
        self._done = self._t >= EPISODE_STEPS
        return obs, reward, goal, self._done
