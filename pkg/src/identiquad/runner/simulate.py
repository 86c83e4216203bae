"""Closed-loop wiring: controller at the control rate, RK4 physics at dt, delayed failure view."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..actuation import build_model, matrix_rank, max_thrust_in_direction
from ..allocation import Allocator, fault_tolerant_control
from ..assembly import check_feasibility
from ..control import Gains, OrientationContext
from ..dynamics import FailureEvent, SimState, SimulationError, apply_failures, step
from ..so3 import E3, angle_between, matrix_to_euler_zyx
from .trajectory import trajectory_figure_eight, trajectory_hover, trajectory_roll_sweep

log = logging.getLogger(__name__)

DIVERGENCE_RADIUS = 100.0


class ScenarioInfeasible(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("assembly infeasible: " + "; ".join(report.diagnostics))


def make_trajectory(scenario):
    opts = dict(scenario.trajectory)
    kind = opts.pop("type")
    if kind == "figure_eight":
        l = opts.pop("l", 0.2)
        return lambda t: trajectory_figure_eight(l, t, **opts)
    if kind == "roll_sweep":
        duration = opts.pop("duration", scenario.duration)
        return lambda t: trajectory_roll_sweep(t, duration, **opts)
    if kind == "hover":
        return lambda t: trajectory_hover(t, **opts)
    raise ValueError(f"unknown trajectory type {kind!r}")


def make_gains(scenario, model):
    g = scenario.gains
    gains = Gains.default(model, kp=g.get("kp", 8.0), kd=g.get("kd", 4.0),
                          kr=g.get("kr", 30.0), kw=g.get("kw", 8.0))
    explicit = {k: g[k] for k in ("K_P", "K_D", "K_R", "K_omega") if k in g}
    if explicit:
        gains = Gains(**{**gains.__dict__, **explicit})
    return gains


def make_allocator(scenario, model):
    a = scenario.allocation
    return Allocator(model.A, scenario.params.u_max, delta=a.get("delta", 1e-6), w=a.get("w", 2.0),
                     negative=a.get("negative", "clamp"))


def check_final_rank(scenario, model):
    """Rank of the configuration matrix once every scheduled rotor has failed."""
    keep = np.ones(model.A.shape[1], dtype=bool)
    for ev in scenario.failures:
        keep[ev.column] = False
    return matrix_rank(model.A[:, keep])


@dataclass
class RunResult:
    scenario: str
    status: str                 # "ok" or "diverged"
    n: int
    columns: list
    rows: np.ndarray            # telemetry, one row per control tick
    extra: dict = field(default_factory=dict)   # per-tick arrays not in the CSV
    metrics: dict = field(default_factory=dict)

    def column(self, name):
        return self.rows[:, self.columns.index(name)]


def telemetry_columns(n):
    cols = ["t", "p_x", "p_y", "p_z", "pd_x", "pd_y", "pd_z", "roll", "pitch", "yaw",
            "roll_d", "pitch_d", "yaw_d", "dof_mode"]
    cols += [f"u_{i}{j}" for i in range(1, n + 1) for j in range(1, 5)]
    cols += [f"V_{i}" for i in range(1, n + 1)]
    return cols


def simulate(scenario, force=False, model=None):
    """Run a scenario in memory; no files are written."""
    model = model or build_model(scenario.params, scenario.graph)
    report = check_feasibility(scenario.params, model.poses, E3)
    if not report.ok:
        if not force:
            raise ScenarioInfeasible(report)
        log.warning("running infeasible assembly: %s", "; ".join(report.diagnostics))
    if check_final_rank(scenario, model) < 4:
        raise ValueError("scheduled failures leave fewer than four controllable DOF")

    n = model.n
    period = scenario.control_period
    dt = scenario.dt
    substeps = int(round(period / dt))
    n_ticks = int(round(scenario.duration / period))
    delay_ticks = int(round(scenario.reaction_delay / dt))

    # quantise failure times onto the physics grid so comparisons are exact
    events = [FailureEvent(int(round(ev.time / dt)) * dt, ev.module, ev.rotor) for ev in scenario.failures]
    event_ticks = [int(round(ev.time / dt)) for ev in scenario.failures]

    traj = make_trajectory(scenario)
    gains = make_gains(scenario, model)
    allocator = make_allocator(scenario, model)
    ctx = OrientationContext(period)

    tp0 = traj(0.0)
    # start on the reference: position, velocity and (when trackable) attitude
    state = SimState.initial(n, p=tp0.p, v=tp0.v, R=tp0.R_d if model.dof == 6 else np.eye(3),
                             V=scenario.battery)
    seen = [False] * len(events)

    cols = telemetry_columns(n)
    rows = []
    extra = {k: [] for k in ("saturated", "drops", "active", "att_err", "att_err_tracked")}
    status = "ok"
    for k in range(n_ticks + 1):
        s0 = k * substeps
        t = s0 * dt
        for idx, (ev, et) in enumerate(zip(events, event_ticks)):
            if not seen[idx] and et + delay_ticks <= s0:
                allocator.remove_rotor(ev.module, ev.rotor)
                seen[idx] = True
        tp = traj(t)
        out = fault_tolerant_control(allocator, model, state, tp, gains, ctx)

        roll, pitch, yaw = matrix_to_euler_zyx(state.R)
        rows.append([t, *state.p, *tp.p, roll, pitch, yaw, tp.roll, tp.pitch, tp.yaw, out.mode,
                     *out.u, *state.V])
        extra["saturated"].append(out.saturated)
        extra["drops"].append(out.drops)
        extra["active"].append(int(allocator.active.sum()))
        extra["att_err"].append(angle_between(state.R, tp.R_d))
        extra["att_err_tracked"].append(angle_between(state.R, out.R_d))

        if k == n_ticks:
            break
        try:
            for sub in range(substeps):
                s = s0 + sub
                state = apply_failures(state, events, s * dt)
                state = step(model, state, out.u, dt, k_batt=scenario.k_batt)
                state.t = (s + 1) * dt
        except SimulationError as exc:
            log.error("%s: %s", scenario.name, exc)
            status = "diverged"
            break
        if np.linalg.norm(state.p) > DIVERGENCE_RADIUS:
            log.error("%s: diverged at t=%.3f (|p| = %.1f m)", scenario.name, state.t, np.linalg.norm(state.p))
            status = "diverged"
            break

    rows = np.array(rows, dtype=float)
    extra = {k: np.array(v) for k, v in extra.items() if v}
    result = RunResult(scenario.name, status, n, cols, rows, extra)
    result.metrics = compute_metrics(result, scenario, model)
    return result


def dof_timeline(t, modes):
    """Compressed [(t_start, mode), ...] list."""
    out = []
    for ti, m in zip(t, modes):
        if not out or out[-1][1] != int(m):
            out.append((float(ti), int(m)))
    return out


def compute_metrics(result, scenario, model):
    t = result.column("t")
    p = result.rows[:, 1:4]
    pd = result.rows[:, 4:7]
    err = p - pd
    n = result.n
    u_cols = [result.columns.index(f"u_{i}1") for i in range(1, n + 1)]
    u = np.stack([result.rows[:, c:c + 4] for c in u_cols], axis=1)  # ticks x n x 4
    V = result.rows[:, -n:]
    period = scenario.control_period
    energy = (np.clip(u, 0, None) / scenario.params.u_max) ** 1.5
    energy = energy.sum(axis=2).sum(axis=0) * period
    return {
        "status": result.status,
        "duration": float(t[-1]) if len(t) else 0.0,
        "ticks": int(len(t)),
        "position_rmse": float(np.sqrt(np.mean(np.sum(err ** 2, axis=1)))) if len(t) else float("nan"),
        "max_abs_error": [float(x) for x in np.max(np.abs(err), axis=0)] if len(t) else [],
        "attitude_rms": float(np.sqrt(np.mean(result.extra["att_err"] ** 2))) if len(t) else float("nan"),
        "attitude_rms_tracked": float(np.sqrt(np.mean(result.extra["att_err_tracked"] ** 2))) if len(t) else float("nan"),
        "dof_timeline": dof_timeline(t, result.column("dof_mode")),
        "saturated_ticks": int(np.sum(result.extra["saturated"])) if len(t) else 0,
        "energy": [float(e) for e in energy],
        "final_voltages": [float(v) for v in V[-1]] if len(t) else [],
        "controllable_dof": int(model.dof),
    }


def analyze(scenario):
    """Static report of the assembly; no simulation."""
    model = build_model(scenario.params, scenario.graph)
    report = check_feasibility(scenario.params, model.poses, E3)
    axes = {name: max_thrust_in_direction(scenario.params, model.poses, d)
            for name, d in (("+x", [1, 0, 0]), ("-x", [-1, 0, 0]), ("+y", [0, 1, 0]),
                            ("-y", [0, -1, 0]), ("+z", [0, 0, 1]), ("-z", [0, 0, -1]))}
    return {
        "name": scenario.name,
        "modules": model.n,
        "mass": model.total_mass,
        "inertia": model.J.tolist(),
        "rank": matrix_rank(model.A),
        "dof": model.dof,
        "frame": model.frame.tolist(),
        "max_thrust": axes,
        "feasible": report.ok,
        "feasibility": {"space": report.space_ok, "thrust": report.thrust_ok,
                        "downwash": report.downwash_ok, "diagnostics": report.diagnostics},
        "rank_after_failures": check_final_rank(scenario, model),
    }
