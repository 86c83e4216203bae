"""Reference trajectories used by the shipped scenarios."""

import numpy as np

from ..control import TrajectoryPoint

TWO_PI = 2.0 * np.pi


def trajectory_figure_eight(l, t, period=1.0, origin=(0.0, 0.0, 0.0), yaw=0.0, pitch=0.0, roll=0.0):
    """Figure eight [l sin(2 pi s), l sin(2 pi s) cos(2 pi s), -l/3 sin(2 pi s)] with s = t / period."""
    if l <= 0:
        raise ValueError("l must be positive")
    if period <= 0:
        raise ValueError("period must be positive")
    w = TWO_PI / period
    s1, c1 = np.sin(w * t), np.cos(w * t)
    s2, c2 = np.sin(2 * w * t), np.cos(2 * w * t)
    p = np.array([l * s1, 0.5 * l * s2, -l / 3.0 * s1])
    v = np.array([l * w * c1, l * w * c2, -l / 3.0 * w * c1])
    a = np.array([-l * w * w * s1, -2.0 * l * w * w * s2, l / 3.0 * w * w * s1])
    return TrajectoryPoint(p=p + np.asarray(origin, dtype=float), v=v, a=a, yaw=yaw, pitch=pitch, roll=roll)


def sweep_angle(t, duration):
    return TWO_PI * min(max(t, 0.0), duration) / duration


def trajectory_roll_sweep(t, duration, origin=(0.0, 0.0, 0.0), axis="roll"):
    """Hover while one attitude angle sweeps 0 -> 2 pi linearly over ``duration``.

    ``axis`` picks which angle sweeps; the others stay zero.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if axis not in ("roll", "pitch", "yaw"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    angles = {"roll": 0.0, "pitch": 0.0, "yaw": 0.0}
    angles[axis] = sweep_angle(t, duration)
    return TrajectoryPoint(p=np.asarray(origin, dtype=float), **angles)


def trajectory_hover(t, origin=(0.0, 0.0, 0.0), yaw=0.0, pitch=0.0, roll=0.0):
    return TrajectoryPoint(p=np.asarray(origin, dtype=float), yaw=yaw, pitch=pitch, roll=roll)
