"""Energy-balanced control allocation and the fault-tolerant DOF cascade."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .actuation import UnderactuatedBeyondScope, controllable_dof
from .control import attitude_errors, desired_thrust, desired_torque

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


class AllocationError(RuntimeError):
    pass


@dataclass
class WeightMatrix:
    diag: np.ndarray  # 4n entries, four equal entries per module
    w: float
    V_mean: float

    @property
    def H(self):
        return np.diag(self.diag)


def weights(V, w):
    """Per-rotor weights 1 + w (V_mean - V_i) / V_mean; weaker batteries weigh more."""
    V = np.asarray(V, dtype=float)
    if w < 0:
        raise ValueError("w must be non-negative")
    V_mean = float(np.mean(V))
    if V_mean <= 0.0:
        raise ValueError("all battery voltages are zero")
    h = 1.0 + w * (V_mean - V) / V_mean
    if np.any(h <= 0.0):
        raise ValueError(f"non-positive weight for V={V}, w={w}")
    return WeightMatrix(np.repeat(h, 4), float(w), V_mean)


@dataclass
class AllocationResult:
    u: np.ndarray        # clamped command
    u_raw: np.ndarray    # closed-form solution before clamping
    saturated: bool      # max raw entry reached u_max
    cond: float


def _solve(A, h, delta, b, u_max):
    An = A * u_max  # commands normalised by u_max; delta acts on u / u_max
    Hinv2 = 1.0 / h ** 2
    G = (An * Hinv2) @ An.T + delta * np.eye(A.shape[0])
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise AllocationError(f"allocation matrix ill-conditioned (cond={cond:.3g}, "
                              f"{A.shape[1]} columns, delta={delta:g})")
    lam = np.linalg.solve(G, b)
    return u_max * Hinv2 * (An.T @ lam), cond


def _solve_nonneg(A, h, delta, b, u_max):
    """Same objective with u >= 0, as NNLS on the stacked system [A; sqrt(delta) H]."""
    An = A * u_max
    M = np.vstack([An, np.sqrt(delta) * np.diag(h)])
    rhs = np.concatenate([b, np.zeros(A.shape[1])])
    x, _ = nnls(M, rhs, maxiter=50 * A.shape[1])
    return u_max * x


def allocate(A, H, delta, b, u_max, negative="clamp"):
    """Tikhonov-regularised allocation.

    Minimises ||A u - b||^2 + delta ||H u / u_max||^2 in closed form, i.e.
    u = H^-2 A^T (A H^-2 A^T + delta' I)^-1 b with delta' = delta / u_max^2,
    then clamps to [0, u_max].  ``H`` is the diagonal of the weight matrix.

    With ``negative="nnls"`` a closed-form solution with negative entries is
    replaced by the minimiser of the same objective over u >= 0.
    """
    A = np.asarray(A, dtype=float)
    h = np.asarray(H, dtype=float)
    if h.ndim == 2:
        h = np.diag(h)
    b = np.asarray(b, dtype=float)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if negative not in ("clamp", "nnls"):
        raise ValueError(f"unknown negative handling {negative!r}")
    if not np.any(b):
        return AllocationResult(np.zeros(A.shape[1]), np.zeros(A.shape[1]), False, 1.0)

    raw, cond = _solve(A, h, delta, b, u_max)
    if negative == "nnls" and np.any(raw < 0.0):
        raw = _solve_nonneg(A, h, delta, b, u_max)
    return AllocationResult(np.clip(raw, 0.0, u_max), raw, bool(np.max(raw) >= u_max), float(cond))


class Allocator:
    """Allocation state of one simulation: active rotors, DOF mode and tuning."""

    def __init__(self, A, u_max, delta=1e-6, w=2.0, negative="clamp"):
        self.A_full = np.asarray(A, dtype=float)
        self.u_max = float(u_max)
        self.delta = float(delta)
        self.w = float(w)
        self.negative = negative
        self.active = np.ones(self.A_full.shape[1], dtype=bool)
        self.dof = controllable_dof(self.A_full)

    @property
    def active_columns(self):
        return np.flatnonzero(self.active)

    @property
    def A(self):
        return self.A_full[:, self.active]

    def remove_rotor(self, i, j):
        """Drop rotor ``j`` of module ``i`` (both 1-based) and recompute the DOF."""
        col = 4 * (i - 1) + (j - 1)
        if not self.active[col]:
            log.warning("rotor %d of module %d already removed", j, i)
            return self
        self.active[col] = False
        try:
            self.dof = controllable_dof(self.A)
        except UnderactuatedBeyondScope:
            self.active[col] = True
            raise
        log.info("removed rotor (%d, %d): %d active columns, %d DOF", i, j, self.active.sum(), self.dof)
        return self

    def solve(self, V, b):
        h = weights(V, self.w).diag[self.active]
        res = allocate(self.A, h, self.delta, b, self.u_max, self.negative)
        u = np.zeros(self.A_full.shape[1])
        u_raw = np.zeros(self.A_full.shape[1])
        u[self.active] = res.u
        u_raw[self.active] = res.u_raw
        return AllocationResult(u, u_raw, res.saturated, res.cond)


def remove_rotor(allocator, i, j):
    return allocator.remove_rotor(i, j)


@dataclass
class ControlOutput:
    T_d: np.ndarray      # world frame
    M_d: np.ndarray      # body frame
    R_d: np.ndarray      # orientation actually tracked
    mode: int            # tracking DOF used this tick
    drops: int           # cascade steps taken this tick
    u: np.ndarray        # 4n command, zero on removed rotors
    u_raw: np.ndarray
    saturated: bool


def fault_tolerant_control(allocator, model, state, tp, gains, context):
    """One control tick of the DOF-degradation cascade.

    Starts from the controllable DOF of the active rotors, drops roll and then
    pitch tracking while the allocation saturates; the 4-DOF result is
    returned even if still saturated.
    """
    T_d = desired_thrust(model, state, tp, gains)
    candidates = context.update(T_d, tp, state.R)
    b_T = state.R.T @ T_d
    modes = [m for m in (6, 5, 4) if m <= allocator.dof]
    drops = 0
    for mode in modes:
        R_d, omega_d = candidates[mode]
        e_R, e_omega = attitude_errors(state.R, R_d, state.omega, omega_d)
        M_d = desired_torque(model, e_R, e_omega, state, gains)
        res = allocator.solve(state.V, np.concatenate([b_T, M_d]))
        if mode == 4 or not res.saturated:
            break
        drops += 1
    return ControlOutput(T_d, M_d, R_d, mode, drops, res.u, res.u_raw, res.saturated)
