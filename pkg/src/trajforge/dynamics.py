"""Modified-equinoctial spacecraft dynamics and Cartesian conversions.

The element set is [p, f, g, h, k, L] (Walker et al.): semi-latus rectum,
eccentricity-vector components, inclination-vector components and true
longitude. Valid for all elliptic orbits away from i = 180 deg.

Thrust enters through the 6x3 influence matrix B (radial, tangential,
normal columns) and the drift vector D; all formulas assume the
canonical unit system of :mod:`trajforge.units` (mu = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .units import ThrustConfig


class DegenerateStateError(ValueError):
    """Raised for element sets outside the validity domain."""


class DegenerateOrbitError(ValueError):
    """Raised for Cartesian states outside the supported orbit regime."""


@dataclass
class EquinoctialState:
    p: float
    f: float
    g: float
    h: float
    k: float
    L: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.f, self.g, self.h, self.k, self.L])

    @classmethod
    def from_array(cls, x) -> "EquinoctialState":
        x = np.asarray(x, dtype=float)
        return cls(*x[:6])


def _as_elements(x) -> np.ndarray:
    if isinstance(x, EquinoctialState):
        return x.as_array()
    x = np.asarray(x, dtype=float)
    if x.shape != (6,):
        raise ValueError("expected 6 equinoctial elements")
    return x


def _check_domain(x: np.ndarray) -> None:
    w, _ = _kernels.auxiliaries(x)
    if x[0] <= 0.0 or w <= 0.0:
        raise DegenerateStateError(
            f"degenerate equinoctial state: p={x[0]:.6g}, w={w:.6g}")


def auxiliaries(x) -> tuple[float, float]:
    """Return (w, s^2): w = 1 + f cos L + g sin L, s^2 = 1 + h^2 + k^2."""
    x = _as_elements(x)
    return _kernels.auxiliaries(x)


def b_matrix(x) -> np.ndarray:
    """Thrust influence matrix B(x), shape (6, 3)."""
    x = _as_elements(x)
    _check_domain(x)
    return _kernels.b_matrix(x)


def d_vector(x) -> np.ndarray:
    """Keplerian drift vector D(x), shape (6,)."""
    x = _as_elements(x)
    _check_domain(x)
    return _kernels.d_vector(x)


def b_partials(x) -> np.ndarray:
    """Partials of B with respect to each element, shape (6, 6, 3).

    Leading axis order: d/dp, d/df, d/dg, d/dh, d/dk, d/dL.
    """
    x = _as_elements(x)
    _check_domain(x)
    return _kernels.b_partials(x)


def eom_rhs(x, m: float, throttle: float, direction, cfg: ThrustConfig):
    """Element and mass rates at an explicit control.

    ``direction`` is the unit thrust vector in the radial/tangential/
    normal frame. Returns (x_dot (6,), m_dot).
    """
    x = _as_elements(x)
    _check_domain(x)
    if m <= 0.0:
        raise DegenerateStateError(f"non-positive mass {m:.6g}")
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (3,):
        raise ValueError("thrust direction must be a 3-vector")
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"thrust direction must be unit (|i|={norm:.15g})")
    if not 0.0 <= throttle <= 1.0:
        raise ValueError(f"throttle {throttle:.6g} outside [0, 1]")
    rates = _kernels.state_rates(
        x, m, throttle, direction[0], direction[1], direction[2],
        cfg.c1, cfg.c2)
    return rates[:6].copy(), float(rates[6])


def to_cartesian(x, mu: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity [AU, AU/TU] from equinoctial elements."""
    x = _as_elements(x)
    _check_domain(x)
    p, f, g, h, k, L = x
    cL, sL = math.cos(L), math.sin(L)
    w = 1.0 + f * cL + g * sL
    s2 = 1.0 + h * h + k * k
    a2 = h * h - k * k
    r = p / w
    sq = math.sqrt(mu / p)

    pos = np.array([
        (r / s2) * (cL + a2 * cL + 2.0 * h * k * sL),
        (r / s2) * (sL - a2 * sL + 2.0 * h * k * cL),
        (2.0 * r / s2) * (h * sL - k * cL),
    ])
    vel = np.array([
        -(sq / s2) * (sL + a2 * sL - 2.0 * h * k * cL + g - 2.0 * f * h * k
                      + a2 * g),
        -(sq / s2) * (-cL + a2 * cL + 2.0 * h * k * sL - f + 2.0 * g * h * k
                      + a2 * f),
        (2.0 * sq / s2) * (h * cL + k * sL + f * h + g * k),
    ])
    return pos, vel


def from_cartesian(r, v, mu: float = 1.0) -> EquinoctialState:
    """Osculating equinoctial elements from a Cartesian state.

    Uses the nonsingular equinoctial basis directly, so circular and
    equatorial orbits pose no problem; only elliptic orbits with
    i != 180 deg are supported.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise DegenerateOrbitError("zero position vector")
    hv = np.cross(r, v)
    hn = np.linalg.norm(hv)
    if hn < 1e-12 * rn * max(np.linalg.norm(v), 1.0):
        raise DegenerateOrbitError("rectilinear orbit (zero angular momentum)")
    energy = 0.5 * float(v @ v) - mu / rn
    if energy >= 0.0:
        raise DegenerateOrbitError("parabolic/hyperbolic orbit not supported")

    p = hn * hn / mu
    h_hat = hv / hn
    denom = 1.0 + h_hat[2]
    if denom < 1e-12:
        raise DegenerateOrbitError("retrograde-equatorial singularity (i near 180 deg)")
    h = -h_hat[1] / denom
    k = h_hat[0] / denom
    s2 = 1.0 + h * h + k * k

    # Equinoctial in-plane basis.
    f_hat = np.array([1.0 - h * h + k * k, 2.0 * h * k, -2.0 * h]) / s2
    g_hat = np.array([2.0 * h * k, 1.0 + h * h - k * k, 2.0 * k]) / s2

    e_vec = np.cross(v, hv) / mu - r / rn
    f = float(e_vec @ f_hat)
    g = float(e_vec @ g_hat)
    L = math.atan2(float(r @ g_hat), float(r @ f_hat)) % (2.0 * math.pi)
    return EquinoctialState(p=float(p), f=f, g=g, h=float(h), k=float(k), L=L)


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [0, 2*pi). Propagation keeps L unwrapped; use this
    only where orbit-membership residuals are formed."""
    return angle % (2.0 * math.pi)
