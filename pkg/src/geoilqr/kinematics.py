"""Planar serial-arm kinematics and single-integrator batch dynamics.

The stacked-state convention is q_1 = q0 with q_{t+1} = q_t + dt * u_t, so
control u_t influences states strictly after timestep t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charts import CartesianPose, rot2


@dataclass(frozen=True)
class ArmModel:
    link_lengths: np.ndarray = field(default_factory=lambda: np.ones(3))
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    base_angle: float = 0.0

    def __post_init__(self):
        ll = np.asarray(self.link_lengths, dtype=float)
        if np.any(ll <= 0.0):
            raise ValueError("link lengths must be positive")
        object.__setattr__(self, "link_lengths", ll)
        object.__setattr__(self, "base_position",
                           np.asarray(self.base_position, dtype=float))

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())


@dataclass(frozen=True)
class JointTrajectory:
    dt: float
    states: np.ndarray    # T x D joint angles
    controls: np.ndarray  # T x D joint velocities

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


def forward_kinematics(arm: ArmModel, q: np.ndarray) -> CartesianPose:
    q = np.asarray(q, dtype=float)
    angles = arm.base_angle + np.cumsum(q)
    p = arm.base_position + np.array([arm.link_lengths @ np.cos(angles),
                                      arm.link_lengths @ np.sin(angles)])
    heading = float(angles[-1])
    return CartesianPose(p, np.array([np.cos(heading), np.sin(heading)]))


def link_positions(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """Joint positions including the base, (D+1) x 2. For plotting."""
    angles = arm.base_angle + np.cumsum(q)
    steps = arm.link_lengths[:, None] * np.stack([np.cos(angles),
                                                  np.sin(angles)], axis=1)
    return arm.base_position + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def kinematic_jacobian(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """3 x D matrix of (dx, dy, dheading) per joint rate."""
    q = np.asarray(q, dtype=float)
    D = arm.dof
    angles = arm.base_angle + np.cumsum(q)
    J = np.zeros((3, D))
    # joint i moves every link j >= i
    for i in range(D):
        J[0, i] = -(arm.link_lengths[i:] * np.sin(angles[i:])).sum()
        J[1, i] = (arm.link_lengths[i:] * np.cos(angles[i:])).sum()
    J[2, :] = 1.0
    return J


def batch_dynamics(D: int, T: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Stacked single-integrator transfer matrices: q = S_q q0 + S_u u."""
    if D < 1 or T < 1 or dt <= 0.0:
        raise ValueError("need D >= 1, T >= 1, dt > 0")
    S_q = np.tile(np.eye(D), (T, 1))
    S_u = np.zeros((D * T, D * T))
    for s in range(T):
        for t in range(s):
            S_u[s * D:(s + 1) * D, t * D:(t + 1) * D] = dt * np.eye(D)
    return S_q, S_u


def rollout(q0: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Step-by-step integration; states T x D with states[0] = q0."""
    u = np.atleast_2d(u)
    T, D = u.shape
    states = np.empty((T, D))
    states[0] = q0
    for t in range(T - 1):
        states[t + 1] = states[t] + dt * u[t]
    return states


def planar_ik_3link(arm: ArmModel, target: CartesianPose,
                    elbow_up: bool = False) -> tuple[np.ndarray, bool]:
    """Closed-form IK for a 3-link arm: the heading fixes the wrist point,
    the first two links solve the standard 2R problem."""
    if arm.dof != 3:
        raise ValueError("closed-form IK needs exactly 3 links")
    l1, l2, l3 = arm.link_lengths
    phi = target.heading_angle - arm.base_angle
    w = rot2(-arm.base_angle) @ (target.position - arm.base_position)
    w = w - l3 * np.array([np.cos(phi), np.sin(phi)])
    r2 = float(w @ w)
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c2) > 1.0 + 1e-9:
        return np.zeros(3), False
    q2 = np.arccos(np.clip(c2, -1.0, 1.0))
    if elbow_up:
        q2 = -q2
    q1 = np.arctan2(w[1], w[0]) - np.arctan2(l2 * np.sin(q2),
                                             l1 + l2 * np.cos(q2))
    q3 = phi - q1 - q2
    q = np.array([np.arctan2(np.sin(a), np.cos(a)) for a in (q1, q2, q3)])
    return q, True


def inverse_kinematics(arm: ArmModel, target: CartesianPose,
                       q_seed: np.ndarray, max_iter: int = 200,
                       tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Damped Gauss-Newton IK on (position, heading). Returns (q, converged)."""
    q = np.asarray(q_seed, dtype=float).copy()
    tgt_heading = target.heading_angle
    for _ in range(max_iter):
        pose = forward_kinematics(arm, q)
        err = np.empty(3)
        err[:2] = target.position - pose.position
        dh = tgt_heading - pose.heading_angle
        err[2] = np.arctan2(np.sin(dh), np.cos(dh))
        if np.linalg.norm(err) < tol:
            return q, True
        J = kinematic_jacobian(arm, q)
        dq = np.linalg.solve(J.T @ J + 1e-6 * np.eye(arm.dof), J.T @ err)
        q = q + dq
    return q, bool(np.linalg.norm(err) < 1e-6)
