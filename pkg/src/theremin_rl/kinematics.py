"""Analytic robot models: a 1-DOF cart and a 6-DOF serial arm.

The arm is a chain of six revolute joints with rotation axes z, y, y, y, y, z
and 0.2 m links, actuated either directly in joint space or in Cartesian
space through one damped-least-squares step on a numeric Jacobian per control
step.  States are immutable values; applying an action returns a new state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

LINK_LEN = 0.2
ARM_AXES = ("z", "y", "y", "y", "y", "z")
N_ARM_JOINTS = 6
# joint 0 spins the whole chain about the base z axis; the rest are elbows
ARM_JOINT_LIMITS = np.array(
    [[-np.pi, np.pi]] + [[-2.0, 2.0]] * (N_ARM_JOINTS - 1)
)
CART_TRACK = (0.05, 0.60)  # metres between the two end blocks

MAX_JOINT_STEP = 0.035  # rad per control step
MAX_CART_STEP = 0.02    # m per control step
DLS_DAMPING = 0.01

_JAC_EPS = 1e-6


class RobotKind(str, enum.Enum):
    CART_1D = "cart1d"
    ARM_6D = "arm6d"


class ActionSpace(str, enum.Enum):
    CARTESIAN = "cartesian"
    JOINT = "joint"


@dataclass(frozen=True)
class Action:
    values: np.ndarray
    space: ActionSpace

    def __post_init__(self):
        vals = np.clip(np.asarray(self.values, dtype=np.float64), -1.0, 1.0)
        object.__setattr__(self, "values", vals)


def _rot(axis: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    raise ValueError(f"unknown axis {axis!r}")


def forward_kinematics(joints) -> np.ndarray:
    """Tip position of the 6-joint chain (each link extends +z of its frame)."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape != (N_ARM_JOINTS,):
        raise ValueError(f"expected {N_ARM_JOINTS} joint angles")
    rot = np.eye(3)
    tip = np.zeros(3)
    link = np.array([0.0, 0.0, LINK_LEN])
    for axis, theta in zip(ARM_AXES, joints):
        rot = rot @ _rot(axis, theta)
        tip = tip + rot @ link
    return tip


@dataclass(frozen=True)
class RobotState:
    """Robot configuration plus its derived tip position."""

    kind: RobotKind
    joints: np.ndarray | None = None  # radians, Arm6D only
    position: float | None = None     # metres along the track, Cart1D only
    tip: np.ndarray = None

    @staticmethod
    def arm(joints) -> "RobotState":
        joints = np.clip(
            np.asarray(joints, dtype=np.float64),
            ARM_JOINT_LIMITS[:, 0],
            ARM_JOINT_LIMITS[:, 1],
        )
        return RobotState(RobotKind.ARM_6D, joints=joints,
                          tip=forward_kinematics(joints))

    @staticmethod
    def cart(position: float) -> "RobotState":
        position = float(np.clip(position, *CART_TRACK))
        return RobotState(RobotKind.CART_1D, position=position,
                          tip=np.array([position, 0.0, 0.0]))


def apply_joint_action(state: RobotState, action: Action) -> RobotState:
    """Increment each joint by up to MAX_JOINT_STEP, clamped to limits."""
    if action.space is not ActionSpace.JOINT:
        raise ValueError("expected a joint-space action")
    if action.values.shape != (N_ARM_JOINTS,):
        raise ValueError(f"joint action needs {N_ARM_JOINTS} components")
    return RobotState.arm(state.joints + action.values * MAX_JOINT_STEP)


def numeric_jacobian(joints) -> np.ndarray:
    """(3, 6) tip Jacobian by central differences."""
    joints = np.asarray(joints, dtype=np.float64)
    jac = np.empty((3, N_ARM_JOINTS))
    for i in range(N_ARM_JOINTS):
        step = np.zeros(N_ARM_JOINTS)
        step[i] = _JAC_EPS
        jac[:, i] = (
            forward_kinematics(joints + step) - forward_kinematics(joints - step)
        ) / (2.0 * _JAC_EPS)
    return jac


def apply_cartesian_action(state: RobotState, action: Action) -> RobotState:
    """Move the tip toward a displacement of up to MAX_CART_STEP per axis.

    One damped-least-squares iteration on the numeric Jacobian; the residual
    tip error of this single step is deliberate, the policy works around it.
    """
    if state.kind is not RobotKind.ARM_6D:
        raise ValueError("Cartesian actuation needs the 6-DOF arm")
    if action.space is not ActionSpace.CARTESIAN or action.values.shape != (3,):
        raise ValueError("expected a 3-component Cartesian action")
    desired = action.values * MAX_CART_STEP
    jac = numeric_jacobian(state.joints)
    gram = jac @ jac.T + DLS_DAMPING ** 2 * np.eye(3)
    delta = jac.T @ np.linalg.solve(gram, desired)
    return RobotState.arm(state.joints + delta)


def apply_cart_action(state: RobotState, action: Action) -> RobotState:
    """Slide the cart by up to MAX_CART_STEP, clamped to the track blocks."""
    if state.kind is not RobotKind.CART_1D:
        raise ValueError("cart actuation needs the 1-DOF cart")
    if action.values.shape != (1,):
        raise ValueError("cart action needs exactly 1 component")
    return RobotState.cart(state.position + action.values[0] * MAX_CART_STEP)


def apply_action(state: RobotState, action: Action) -> RobotState:
    if state.kind is RobotKind.CART_1D:
        return apply_cart_action(state, action)
    if action.space is ActionSpace.CARTESIAN:
        return apply_cartesian_action(state, action)
    return apply_joint_action(state, action)


def action_dim(kind: RobotKind, space: ActionSpace) -> int:
    if kind is RobotKind.CART_1D:
        return 1
    return 3 if space is ActionSpace.CARTESIAN else N_ARM_JOINTS
