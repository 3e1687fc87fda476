"""Simulated robotic theremin player trained with per-step goal timelines.

Modules: ``dsp`` (tones, noise, transforms), ``kinematics`` (cart and arm
models), ``env`` (the theremin environment and rewards), ``neuralnet``
(dense nets, backprop, Adam), ``agent`` (actor-critic with hindsight
relabeling) and ``harness`` (training protocol, presets, CLI backend).
"""

from .agent import AgentConfig, ReplayBuffer, TdgAgent, Transition, her_relabel
from .dsp import (Spectrum, TimeSignal, TransformConfig, TransformKind,
                  cqt_config, mel_config, stft_config)
from .env import (CHROMATIC_FREQS, EnvConfig, GoalTimeline, Observation,
                  PitchMap, RewardKind, ThereminEnv, calibrate_epsilon,
                  distance_to_pitch, pitch_to_distance, success_step)
from .harness import (RunConfig, RunResult, aggregate, export_metrics,
                      note_to_freq, play_melody, preset, rollout, train_run)
from .kinematics import Action, ActionSpace, RobotKind, RobotState

__version__ = "0.1.0"
