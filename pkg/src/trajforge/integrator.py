"""Adaptive propagation of the augmented state/costate system.

A native Fehlberg 7(8) embedded pair drives both directions of time.
Dense sampling integrates exactly onto each requested time (step
clipping), so sample accuracy is the integrator tolerance itself, not an
interpolation error. For tightly smoothed throttles (eps <= 1e-5) the
step size is capped at span/500 so thin switching layers cannot be
leapt over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .pmp import AugmentedState, _as_aug_array
from .units import ThrustConfig

_STATUS_MESSAGES = {
    _kernels.STATUS_MAX_STEPS: "step budget exhausted",
    _kernels.STATUS_MIN_STEP: "step size underflow (tolerance unreachable)",
    _kernels.STATUS_DOMAIN: "state left validity domain (p, w or m <= 0)",
    _kernels.STATUS_BUFFER_FULL: "recording buffer full",
}

STEEP_THROTTLE_EPS = 1e-5
STEEP_THROTTLE_STEP_DIVISOR = 500.0


class PropagationError(RuntimeError):
    def __init__(self, status: int, t_reached: float):
        super().__init__(
            f"propagation failed at t={t_reached:.6g}: "
            f"{_STATUS_MESSAGES.get(status, 'unknown status')}")
        self.status = status
        self.t_reached = t_reached


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-13
    abs_tol: float = 1e-13
    max_steps: int = 200_000
    initial_step: float = 0.0  # 0 selects the automatic heuristic
    max_step: float = math.inf
    # Steps whose endpoint throttle change exceeds this are rejected:
    # switching layers of width O(eps) can hide between the stages of a
    # single step, where the embedded error estimate underpredicts.
    max_throttle_change: float = 0.15

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


def _effective_max_step(span: float, eps: float, cfg: IntegratorConfig) -> float:
    cap = cfg.max_step
    if eps <= STEEP_THROTTLE_EPS:
        cap = min(cap, span / STEEP_THROTTLE_STEP_DIVISOR)
    return cap


def propagate(aug0, t0: float, t1: float, thrust: ThrustConfig,
              cfg: IntegratorConfig | None = None) -> AugmentedState:
    """Propagate from t0 to t1 (t1 < t0 integrates backward)."""
    cfg = cfg or IntegratorConfig()
    if t0 == t1:
        raise ValueError("t0 and t1 must differ")
    y0 = _as_aug_array(aug0)
    span = abs(t1 - t0)
    y, t_reached, status, _, _ = _kernels.propagate_core(
        y0, t0, t1, thrust.c1, thrust.c2, thrust.eps,
        cfg.rel_tol, cfg.abs_tol, _effective_max_step(span, thrust.eps, cfg),
        cfg.max_steps, cfg.initial_step, cfg.max_throttle_change)
    if status != _kernels.STATUS_OK:
        raise PropagationError(status, t_reached)
    return AugmentedState.from_array(y)


@dataclass
class SampledTrajectory:
    """Dense samples of one augmented trajectory at prescribed times.

    Controls are derived data, recomputed from the sampled costates via
    the closed forms; they are never integrated.
    """

    times: np.ndarray            # (n,)
    states: np.ndarray           # (n, 14)
    throttles: np.ndarray        # (n,)
    directions: np.ndarray       # (n, 3)

    def __len__(self) -> int:
        return self.times.shape[0]

    def hamiltonians(self, thrust: ThrustConfig) -> np.ndarray:
        out = np.empty(len(self))
        for i in range(len(self)):
            out[i] = _kernels.hamiltonian(
                self.states[i], self.throttles[i],
                self.directions[i, 0], self.directions[i, 1],
                self.directions[i, 2], thrust.c1, thrust.c2, thrust.eps)
        return out


def recompute_controls(states: np.ndarray, thrust: ThrustConfig):
    """Closed-form controls for an (n, 14) block of augmented states."""
    n = states.shape[0]
    throttles = np.empty(n)
    directions = np.empty((n, 3))
    for i in range(n):
        u, ir, it, in_, _, _ = _kernels.control_from_costates(
            states[i], thrust.c1, thrust.c2, thrust.eps)
        throttles[i] = u
        directions[i] = (ir, it, in_)
    return throttles, directions


def propagate_sampled(aug0, t0: float, t1: float, n_samples: int,
                      thrust: ThrustConfig,
                      cfg: IntegratorConfig | None = None) -> SampledTrajectory:
    """Propagate reporting the state at n equi-spaced times.

    Sample times are exactly t0 + i*(t1-t0)/(n-1); each is hit by step
    clipping.
    """
    cfg = cfg or IntegratorConfig()
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    y0 = _as_aug_array(aug0)
    times = t0 + (t1 - t0) * np.arange(n_samples) / (n_samples - 1)
    times[-1] = t1
    out = np.empty((n_samples, 14))
    span = abs(t1 - t0)
    status, _ = _kernels.propagate_to_times(
        y0, times, thrust.c1, thrust.c2, thrust.eps,
        cfg.rel_tol, cfg.abs_tol, _effective_max_step(span, thrust.eps, cfg),
        cfg.max_steps, out, cfg.max_throttle_change)
    if status != _kernels.STATUS_OK:
        raise PropagationError(status, math.nan)
    throttles, directions = recompute_controls(out, thrust)
    return SampledTrajectory(
        times=times, states=out, throttles=throttles, directions=directions)


@dataclass
class DensePath:
    """Every accepted integrator step of one propagation.

    ``eval_at`` reproduces the solution anywhere on the span by taking a
    single fixed substep from the nearest recorded step, so its error is
    bounded by the local error of the original propagation.
    """

    times: np.ndarray    # (n,) monotone (increasing or decreasing)
    states: np.ndarray   # (n, 14)
    thrust: ThrustConfig

    def __post_init__(self):
        self._forward = bool(self.times[-1] >= self.times[0])

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def eval_at(self, t: float) -> np.ndarray:
        ts = self.times if self._forward else -self.times
        tq = t if self._forward else -t
        tq = min(max(tq, ts[0]), ts[-1])
        idx = int(np.searchsorted(ts, tq, side="right") - 1)
        idx = min(max(idx, 0), len(ts) - 2)
        t_base = float(self.times[idx])
        if t == t_base:
            return self.states[idx].copy()
        return _kernels.single_step(
            self.states[idx], t_base, t, self.thrust.c1, self.thrust.c2,
            self.thrust.eps)


def propagate_dense(aug0, t0: float, t1: float, thrust: ThrustConfig,
                    cfg: IntegratorConfig | None = None) -> DensePath:
    """Propagate recording every accepted step."""
    cfg = cfg or IntegratorConfig()
    y0 = _as_aug_array(aug0)
    span = abs(t1 - t0)
    cap = min(cfg.max_steps + 1, 400_000)
    tbuf = np.empty(cap)
    ybuf = np.empty((cap, 14))
    status, count = _kernels.propagate_record(
        y0, t0, t1, thrust.c1, thrust.c2, thrust.eps,
        cfg.rel_tol, cfg.abs_tol, _effective_max_step(span, thrust.eps, cfg),
        cfg.max_steps, tbuf, ybuf, cfg.max_throttle_change)
    if status != _kernels.STATUS_OK:
        raise PropagationError(status, float(tbuf[count - 1]) if count else t0)
    return DensePath(times=tbuf[:count].copy(), states=ybuf[:count].copy(),
                     thrust=thrust)


# --------------------------------------------------------------------------
# Generic adaptive driver for arbitrary (Python-callable) right-hand sides.
# Shares the Fehlberg 7(8) tableau with the compiled path; used for
# closed-loop rollouts where the control comes from a network callback.

def integrate_ode(fun, y0, t0: float, t1: float,
                  rtol: float = 1e-10, atol: float = 1e-10,
                  max_step: float = math.inf, max_steps: int = 200_000,
                  record: bool = False):
    """Adaptive RK7(8) for a generic RHS ``fun(t, y) -> ydot``.

    Returns (y_end, ts, ys) where ts/ys hold every accepted step when
    ``record`` else just the endpoints. Raises PropagationError on step
    underflow or budget exhaustion.
    """
    A, B8, C = _kernels._RK_A, _kernels._RK_B8, _kernels._RK_C
    y = np.asarray(y0, dtype=float).copy()
    n = y.size
    t = t0
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        raise ValueError("t0 and t1 must differ")
    h = min(span / 100.0, max_step)
    K = np.empty((13, n))
    ts = [t0]
    ys = [y.copy()]
    last_rejected = False

    for _ in range(max_steps):
        if direction * (t1 - t) <= 0.0:
            if not record:
                ts = [t0, t]
                ys = [np.asarray(y0, dtype=float), y.copy()]
            return y, np.array(ts), np.array(ys)
        h = min(h, abs(t1 - t))
        h_min = 16.0 * np.finfo(float).eps * max(abs(t), abs(t1))
        hs = direction * h

        K[0] = fun(t, y)
        for i in range(1, 13):
            yi = y + hs * (K[:i].T @ A[i, :i])
            K[i] = fun(t + C[i] * hs, yi)
        y_new = y + hs * (K.T @ B8)
        err = hs * (41.0 / 840.0) * (K[0] + K[10] - K[11] - K[12])
        if np.all(np.isfinite(y_new)):
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            errn = float(np.sqrt(np.mean((err / sc) ** 2)))
        else:
            errn = math.inf

        if errn <= 1.0:
            t = t + hs
            y = y_new
            if record:
                ts.append(t)
                ys.append(y.copy())
            fac = 5.0 if errn == 0.0 else min(
                5.0, max(0.2, 0.9 * errn ** (-0.125)))
            if last_rejected:
                fac = min(fac, 1.0)
            h = min(h * fac, max_step)
            last_rejected = False
        else:
            if h <= h_min:
                raise PropagationError(_kernels.STATUS_MIN_STEP, t)
            fac = 0.1 if math.isinf(errn) else min(
                0.9, max(0.1, 0.9 * errn ** (-0.125)))
            h = max(h * fac, h_min)
            last_rejected = True

    raise PropagationError(_kernels.STATUS_MAX_STEPS, t)
