"""Fixed-step RK4 simulation of the closed loop and agreement detection."""

import math
from dataclasses import dataclass

import numpy as np

from .interconnect import SignalFrame, closed_loop_derivative, signals_at

__all__ = [
    "BLOWUP_THRESHOLD",
    "IntegrationConfig",
    "SimulationDiverged",
    "Trajectory",
    "detect_agreement",
    "disagreement_norms",
    "disagreement_series",
    "integrate",
]

BLOWUP_THRESHOLD = 1e12


class SimulationDiverged(ArithmeticError):
    """State left the finite region; ``time`` is the first offending sample time."""

    def __init__(self, time, reason):
        self.time = time
        self.reason = reason
        super().__init__(f"simulation diverged at t={time:.6g}: {reason}")


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 1e-3
    t_end: float = 20.0
    record_stride: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and math.isfinite(self.t_end)):
            raise ValueError("dt and t_end must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end ({self.t_end}) must be at least dt ({self.dt})")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        if self.steps % self.record_stride:
            raise ValueError(f"{self.steps} steps are not a multiple of record_stride {self.record_stride}")

    @property
    def steps(self):
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end ({self.t_end}) is not an integer multiple of dt ({self.dt})")
        return n


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of a closed-loop run.

    ``states`` has one row per sample; each signal array likewise, so
    ``y[k]`` is the output vector at ``times[k]``.
    """

    times: np.ndarray
    states: np.ndarray
    u: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    z: np.ndarray
    config: IntegrationConfig = None

    def __len__(self):
        return len(self.times)

    def frame(self, k):
        return SignalFrame(u=self.u[k], y=self.y[k], zeta=self.zeta[k], mu=self.mu[k], w=self.w[k], z=self.z[k])

    @classmethod
    def from_states(cls, net, times, states, config=None):
        """Recompute the signal record from stored states."""
        states = np.asarray(states, dtype=float)
        frame = signals_at(net, states)
        cols = {name: getattr(frame, name) for name in ("u", "y", "zeta", "mu", "w", "z")}
        return cls(times=np.asarray(times, dtype=float), states=states, config=config, **cols)


def _check_state(x, t):
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    # NaN fails the comparison as well
    if not peak <= BLOWUP_THRESHOLD:
        if not np.all(np.isfinite(x)):
            raise SimulationDiverged(t, "non-finite state")
        raise SimulationDiverged(t, f"|state| reached {peak:.3g}")


def integrate(net, x0, cfg=None):
    """Classical fourth-order Runge-Kutta from ``x0`` over ``[0, cfg.t_end]``.

    Samples are kept every ``cfg.record_stride`` steps, starting with the
    initial state. Raises :class:`SimulationDiverged` when the state becomes
    non-finite or exceeds ``BLOWUP_THRESHOLD`` in magnitude.
    """
    cfg = cfg or IntegrationConfig()
    x = np.array(x0, dtype=float)
    if x.shape != (net.state_dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({net.state_dim},)")
    _check_state(x, 0.0)

    dt = cfg.dt
    steps = cfg.steps
    stride = int(cfg.record_stride)
    f = closed_loop_derivative
    kept = [x.copy()]
    for k in range(steps):
        t = k * dt
        try:
            k1 = f(net, x, t)
            k2 = f(net, x + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = f(net, x + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = f(net, x + dt * k3, t + dt)
        except FloatingPointError as exc:
            raise SimulationDiverged(t, str(exc)) from exc
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_state(x, (k + 1) * dt)
        if (k + 1) % stride == 0:
            kept.append(x.copy())

    times = np.arange(len(kept)) * (dt * stride)
    return Trajectory.from_states(net, times, np.array(kept), config=cfg)


def disagreement_norms(y):
    """Row-wise ``||y - mean(y) 1||_2`` for a 1-D or 2-D output array."""
    y = np.asarray(y, dtype=float)
    centred = y - y.mean(axis=-1, keepdims=True)
    return np.sqrt(np.sum(centred * centred, axis=-1))


def disagreement_series(traj):
    """``(times, norms)`` of the output's component orthogonal to the consensus line."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return traj.times.copy(), disagreement_norms(traj.y)


def detect_agreement(traj, tol=1e-4, window=2.0):
    """Agreement value over the final ``window`` seconds, or None.

    Requires every sample in the window to be within ``tol`` of the
    consensus line and the mean output to move by at most ``tol`` across
    the window; returns the mean of the last output vector.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    t = traj.times
    if window > t[-1] - t[0] + 1e-12:
        raise ValueError(f"window {window} is longer than the trajectory ({t[-1] - t[0]:.6g} s)")
    in_window = t >= t[-1] - window - 1e-12
    y = traj.y[in_window]
    if np.any(disagreement_norms(y) > tol):
        return None
    means = y.mean(axis=1)
    if means.max() - means.min() > tol:
        return None
    return float(traj.y[-1].mean())
