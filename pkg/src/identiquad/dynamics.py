"""Rigid-body simulation of an assembly (Newton-Euler, RK4) with battery drain and rotor failures."""

from dataclasses import dataclass, replace

import numpy as np

from .assembly import GRAVITY
from .so3 import E3, project_to_so3, skew, vee  # noqa: F401  (skew/vee re-exported)

K_BATT = 2e-3  # voltage fraction per second per rotor at full throttle


class SimulationError(RuntimeError):
    pass


@dataclass
class SimState:
    t: float
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray      # world <- assembly
    omega: np.ndarray  # body frame
    V: np.ndarray      # per-module battery voltage, fraction of full
    health: np.ndarray  # 4n bool, False = failed rotor

    @classmethod
    def initial(cls, n, p=None, R=None, V=None, v=None):
        return cls(
            t=0.0,
            p=np.zeros(3) if p is None else np.array(p, dtype=float),
            v=np.zeros(3) if v is None else np.array(v, dtype=float),
            R=np.eye(3) if R is None else np.array(R, dtype=float),
            omega=np.zeros(3),
            V=np.ones(n) if V is None else np.array(V, dtype=float),
            health=np.ones(4 * n, dtype=bool),
        )


@dataclass(frozen=True)
class FailureEvent:
    time: float
    module: int  # 1-based
    rotor: int   # 1-based

    @property
    def column(self):
        return 4 * (self.module - 1) + (self.rotor - 1)


def wrench(model, u, health=None):
    u = np.asarray(u, dtype=float)
    if health is not None:
        u = np.where(health, u, 0.0)
    return model.A @ u


def _derivative(model, Jinv, T, M, v, R, omega):
    p_dot = v
    v_dot = (R @ T) / model.total_mass - GRAVITY * E3
    R_dot = R @ skew(omega)
    omega_dot = Jinv @ (M - np.cross(omega, model.J @ omega))
    return p_dot, v_dot, R_dot, omega_dot


def battery_drain(params, V, u_module, dt, k_batt=K_BATT):
    """Linear voltage sag proportional to aerodynamic power ~ omega^3 = u^(3/2)."""
    u_module = np.clip(np.asarray(u_module, dtype=float), 0.0, None)
    load = np.sum((u_module / params.u_max) ** 1.5)
    return max(0.0, V - k_batt * dt * load)


def step(model, state, u, dt, k_batt=K_BATT):
    """Advance one RK4 step with ``u`` held constant."""
    if not 0.0 < dt <= 0.01:
        raise SimulationError(f"dt={dt} outside (0, 0.01]")
    u = np.where(state.health, np.asarray(u, dtype=float), 0.0)
    w = model.A @ u
    T, M = w[:3], w[3:]
    Jinv = np.linalg.inv(model.J)

    p, v, R, om = state.p, state.v, state.R, state.omega
    k1 = _derivative(model, Jinv, T, M, v, R, om)
    k2 = _derivative(model, Jinv, T, M, v + 0.5 * dt * k1[1], R + 0.5 * dt * k1[2], om + 0.5 * dt * k1[3])
    k3 = _derivative(model, Jinv, T, M, v + 0.5 * dt * k2[1], R + 0.5 * dt * k2[2], om + 0.5 * dt * k2[3])
    k4 = _derivative(model, Jinv, T, M, v + dt * k3[1], R + dt * k3[2], om + dt * k3[3])

    def comb(i):
        return dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    new_p = p + comb(0)
    new_v = v + comb(1)
    new_R = project_to_so3(R + comb(2))
    new_om = om + comb(3)

    params = model.params
    new_V = np.array([battery_drain(params, state.V[i], u[4 * i:4 * i + 4], dt, k_batt)
                      for i in range(len(state.V))])
    if not (np.all(np.isfinite(new_p)) and np.all(np.isfinite(new_v))
            and np.all(np.isfinite(new_R)) and np.all(np.isfinite(new_om))):
        raise SimulationError(f"non-finite state at t={state.t + dt}")
    return replace(state, t=state.t + dt, p=new_p, v=new_v, R=new_R, omega=new_om, V=new_V)


def apply_failures(state, events, t):
    """Clear the health bit of every rotor whose failure time is <= t."""
    health = state.health.copy()
    for ev in events:
        if ev.time <= t:
            health[ev.column] = False
    return replace(state, health=health)
