"""Geometric tracking controller: desired wrench and desired orientation for 4, 5 and 6 DOF."""

from dataclasses import dataclass, field

import numpy as np

from .assembly import GRAVITY
from .so3 import E1, E3, axis_angle, euler_zyx_to_matrix, log_so3, rot_z, vee

EPS_THRUST = 1e-6
EPS_GIMBAL = 1e-8


class DegenerateOrientation(ValueError):
    """Desired orientation undefined (thrust vanishes or z_d is parallel to x_d)."""


@dataclass
class Gains:
    K_P: np.ndarray
    K_D: np.ndarray
    K_R: np.ndarray
    K_omega: np.ndarray

    def __post_init__(self):
        for name in ("K_P", "K_D", "K_R", "K_omega"):
            K = np.asarray(getattr(self, name), dtype=float)
            if K.ndim == 1:
                K = np.diag(K)
            if K.shape != (3, 3) or np.any(np.diag(K) <= 0) or np.any(K - np.diag(np.diag(K))):
                raise ValueError(f"{name} must be diagonal with positive entries")
            setattr(self, name, K)

    @classmethod
    def default(cls, model, kp=8.0, kd=4.0, kr=30.0, kw=8.0):
        """Gains scaled by assembly mass and the largest principal inertia."""
        nm = model.total_mass
        j = np.linalg.norm(model.J, 2)
        I = np.eye(3)
        return cls(kp * nm * I, kd * nm * I, kr * j * I, kw * j * I)


@dataclass
class TrajectoryPoint:
    p: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    R_d: np.ndarray = None
    omega_d: np.ndarray = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if self.R_d is None:
            self.R_d = euler_zyx_to_matrix(self.roll, self.pitch, self.yaw)
        if self.omega_d is None:
            self.omega_d = np.zeros(3)


def desired_thrust(model, state, tp, gains):
    """PD + feedforward thrust in the world frame."""
    nm = model.total_mass
    return (gains.K_P @ (tp.p - state.p) + gains.K_D @ (tp.v - state.v)
            + nm * tp.a + nm * GRAVITY * E3)


def _frame_from_z(z_d, yaw, y_ref=None):
    x_d = rot_z(yaw) @ E1
    c = np.cross(z_d, x_d)
    nc = np.linalg.norm(c)
    if nc <= EPS_GIMBAL:
        raise DegenerateOrientation("z_d parallel to x_d")
    y_d = c / nc
    if y_ref is not None and y_d @ y_ref < 0.0:
        # keep the sign of y_d continuous through the gimbal plane
        y_d = -y_d
    return np.column_stack([np.cross(y_d, z_d), y_d, z_d])


def desired_orientation_4dof(T_d, yaw, y_ref=None):
    """Thrust-aligned attitude tracking only yaw."""
    nT = np.linalg.norm(T_d)
    if nT <= EPS_THRUST:
        raise DegenerateOrientation(f"|T_d| = {nT:g} too small")
    return _frame_from_z(np.asarray(T_d) / nT, yaw, y_ref)


def desired_orientation_5dof(T_d, yaw, pitch, y_ref=None):
    """Attitude tracking yaw and pitch; z_d rotated out of the (e2, e3) plane by ``pitch``."""
    n_hat = np.array([0.0, T_d[1], T_d[2]])
    nn = np.linalg.norm(n_hat)
    if nn <= EPS_THRUST:
        raise DegenerateOrientation(f"|n_hat| = {nn:g} too small")
    m = np.cross(n_hat, E1)
    z = axis_angle(m, pitch) @ n_hat
    return _frame_from_z(z / np.linalg.norm(z), yaw, y_ref)


def attitude_errors(R, R_d, omega, omega_d):
    e_R = 0.5 * vee(R_d.T @ R - R.T @ R_d)
    e_omega = omega - R.T @ R_d @ omega_d
    return e_R, e_omega


def desired_torque(model, e_R, e_omega, state, gains):
    om = state.omega
    return -gains.K_R @ e_R - gains.K_omega @ e_omega + np.cross(om, model.J @ om)


class OrientationContext:
    """Per-simulation memory for the desired-orientation constructions.

    Keeps the last R_d of each tracking mode, used for the hold-previous
    fallback, y-axis sign continuity and the finite-difference omega_d.
    """

    def __init__(self, period):
        self.period = period
        self._prev = {}
        self._current = {}

    def _build(self, mode, T_d, tp, R_now):
        prev = self._prev.get(mode)
        y_ref = None if prev is None else prev[:, 1]
        try:
            if mode == 6:
                return tp.R_d
            if mode == 5:
                return desired_orientation_5dof(T_d, tp.yaw, tp.pitch, y_ref)
            return desired_orientation_4dof(T_d, tp.yaw, y_ref)
        except DegenerateOrientation:
            return prev if prev is not None else R_now

    def update(self, T_d, tp, R_now):
        """Compute (R_d, omega_d) for every mode at this control tick."""
        out = {}
        for mode in (6, 5, 4):
            R_d = self._build(mode, T_d, tp, R_now)
            prev = self._prev.get(mode)
            if prev is None:
                omega_d = np.zeros(3)
            else:
                omega_d = log_so3(prev.T @ R_d) / self.period
            out[mode] = (R_d, omega_d)
            self._prev[mode] = R_d
        self._current = out
        return out
