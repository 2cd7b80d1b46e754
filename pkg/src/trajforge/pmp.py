"""Minimum-principle machinery for the smoothed mass-optimal problem.

The running cost is u - eps*log(u(1-u)): propellant consumption plus a
logarithmic barrier that keeps the throttle interior and smooths the
bang-bang structure. The Hamiltonian is minimized in closed form over
the throttle and the thrust direction, and the costate rates are exact
negative gradients of the Hamiltonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import EquinoctialState, DegenerateStateError
from .units import ThrustConfig

DIRECTION_SINGULARITY_TOL = 1e-14


class SingularDirectionError(ValueError):
    """|B^T lam| is numerically zero; the optimal direction is undefined."""


@dataclass
class Costate:
    lam: np.ndarray  # conjugate to (p, f, g, h, k, L)
    lam_m: float

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.shape != (6,):
            raise ValueError("lam must be a 6-vector")


@dataclass
class Control:
    throttle: float
    direction: np.ndarray  # unit vector, radial/tangential/normal frame

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)


@dataclass
class AugmentedState:
    """State, mass and costates packed for the 14-dimensional flow."""

    elements: EquinoctialState
    mass: float
    costate: Costate

    def as_array(self) -> np.ndarray:
        y = np.empty(14)
        y[:6] = self.elements.as_array()
        y[6] = self.mass
        y[7:13] = self.costate.lam
        y[13] = self.costate.lam_m
        return y

    @classmethod
    def from_array(cls, y) -> "AugmentedState":
        y = np.asarray(y, dtype=float)
        if y.shape != (14,):
            raise ValueError("expected a 14-vector")
        return cls(
            elements=EquinoctialState.from_array(y[:6]),
            mass=float(y[6]),
            costate=Costate(lam=y[7:13].copy(), lam_m=float(y[13])),
        )


def _as_aug_array(aug) -> np.ndarray:
    if isinstance(aug, AugmentedState):
        return aug.as_array()
    y = np.asarray(aug, dtype=float)
    if y.shape != (14,):
        raise ValueError("expected AugmentedState or 14-vector")
    return y


def switching_function(aug, cfg: ThrustConfig) -> float:
    """SF = 1 - (c1/m) |B^T lam| - c2 lam_m.

    Negative values call for full thrust in the bang-bang limit,
    positive values for coasting.
    """
    y = _as_aug_array(aug)
    if y[6] <= 0.0:
        raise DegenerateStateError("non-positive mass")
    B = _kernels.b_matrix(y[:6])
    btl = float(np.linalg.norm(B.T @ y[7:13]))
    return 1.0 - (cfg.c1 / y[6]) * btl - cfg.c2 * y[13]


def optimal_direction(aug) -> np.ndarray:
    """Hamiltonian-minimizing unit thrust direction -B^T lam / |B^T lam|."""
    y = _as_aug_array(aug)
    B = _kernels.b_matrix(y[:6])
    bt = B.T @ y[7:13]
    n = float(np.linalg.norm(bt))
    if n < DIRECTION_SINGULARITY_TOL:
        raise SingularDirectionError(
            f"|B^T lam| = {n:.3e} below {DIRECTION_SINGULARITY_TOL:.0e}")
    return -bt / n


def optimal_throttle(sf: float, eps: float) -> float:
    """Hamiltonian-minimizing throttle for a switching-function value.

    For eps > 0 this is the interior minimizer of
    u*sf - eps*log(u(1-u)); eps = 0 gives the bang-bang limit with the
    measure-zero tie at sf = 0 broken as u = 0.5.
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    return _kernels.throttle_from_sf(sf, eps)


def hamiltonian(aug, control: Control, cfg: ThrustConfig) -> float:
    """Control Hamiltonian at an explicit (not necessarily optimal) control."""
    y = _as_aug_array(aug)
    u = float(control.throttle)
    d = np.asarray(control.direction, dtype=float)
    if cfg.eps > 0.0 and not 0.0 < u < 1.0:
        raise ValueError("throttle must be interior to (0, 1) when eps > 0")
    if not 0.0 <= u <= 1.0:
        raise ValueError("throttle outside [0, 1]")
    return float(_kernels.hamiltonian(
        y, u, d[0], d[1], d[2], cfg.c1, cfg.c2, cfg.eps))


def closed_form_control(aug, cfg: ThrustConfig) -> Control:
    """Optimal control from the costates; total (singularity-safe).

    At the measure-zero |B^T lam| = 0 event the direction defaults to
    tangential and the throttle follows the switching function without
    the gradient term.
    """
    y = _as_aug_array(aug)
    u, ir, it, in_, _, _ = _kernels.control_from_costates(
        y, cfg.c1, cfg.c2, cfg.eps)
    return Control(throttle=float(u), direction=np.array([ir, it, in_]))


def costate_rhs(aug, control: Control, cfg: ThrustConfig):
    """Costate rates -dH/d(x, m) at an explicit control.

    Returns (lam_dot (6,), lam_m_dot). At the optimal direction the mass
    costate rate reduces to -(c1 u / m^2) |B^T lam|.
    """
    y = _as_aug_array(aug)
    w, _ = _kernels.auxiliaries(y[:6])
    if y[0] <= 0.0 or w <= 0.0 or y[6] <= 0.0:
        raise DegenerateStateError("state outside validity domain")
    d = np.asarray(control.direction, dtype=float)
    rates = _kernels.costate_rates(
        y, float(control.throttle), d[0], d[1], d[2], cfg.c1, cfg.c2)
    return rates[:6].copy(), float(rates[6])


def augmented_rhs(aug, cfg: ThrustConfig) -> np.ndarray:
    """Rates of the 14-vector with the optimal control substituted."""
    y = _as_aug_array(aug)
    out = _kernels.augmented_rhs(y, cfg.c1, cfg.c2, cfg.eps)
    if not np.all(np.isfinite(out)):
        raise DegenerateStateError("state outside validity domain")
    return out
