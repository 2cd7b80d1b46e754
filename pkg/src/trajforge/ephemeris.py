"""Low-precision analytic ephemerides for Earth and Venus.

Elements come from the standard JPL approximate-positions table
(Keplerian elements and centennial rates, valid 1800-2050, ecliptic of
J2000). "Earth" is the Earth-Moon barycenter, as tabulated. Everything
is evaluated in the ecliptic frame in canonical units (AU, TU, mu = 1);
the transfer problem is frame-covariant so reported scalars (masses,
times) do not depend on this choice.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import EquinoctialState

_DEG = math.pi / 180.0


class UnsupportedPlanetError(ValueError):
    pass


class KeplerConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Epoch:
    """Days since 2000-01-01 00:00 (MJD2000)."""

    mjd2000: float

    def __post_init__(self):
        if not math.isfinite(self.mjd2000):
            raise ValueError("epoch must be finite")

    @property
    def julian_centuries_j2000(self) -> float:
        # J2000.0 is 2000-01-01 12:00, half a day past the MJD2000 origin.
        return (self.mjd2000 - 0.5) / 36525.0


def epoch_from_date(year: int, month: int, day: int) -> Epoch:
    """Calendar date (UT midnight) to MJD2000."""
    try:
        d = _dt.date(year, month, day)
    except ValueError as exc:
        raise ValueError(f"invalid date {year:04d}-{month:02d}-{day:02d}") from exc
    return Epoch(float((d - _dt.date(2000, 1, 1)).days))


def parse_epoch(text: str) -> Epoch:
    """Parse 'YYYY-MM-DD' into an Epoch."""
    try:
        d = _dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"invalid epoch string {text!r}") from exc
    return epoch_from_date(d.year, d.month, d.day)


@dataclass(frozen=True)
class KeplerianElements:
    """Classical elements [AU, rad] at a fixed epoch."""

    a: float
    e: float
    inc: float
    raan: float          # longitude of ascending node
    arg_perihelion: float
    mean_anomaly: float

    def __post_init__(self):
        if self.a <= 0.0 or not 0.0 <= self.e < 1.0:
            raise ValueError("need a > 0 and 0 <= e < 1")


# JPL approximate planetary positions, Table 1 (1800 AD - 2050 AD):
# a [AU], e, I [deg], L [deg], long.peri [deg], long.node [deg]
# and their rates per Julian century.
_ELEMENT_TABLE = {
    "venus": (
        (0.72333566, 0.00677672, 3.39467605, 181.97909950,
         131.60246718, 76.67984255),
        (0.00000390, -0.00004107, -0.00078890, 58517.81538729,
         0.00268329, -0.27769418),
    ),
    # Earth-Moon barycenter.
    "earth": (
        (1.00000261, 0.01671123, -0.00001531, 100.46457166,
         102.93768193, 0.0),
        (0.00000562, -0.00004392, -0.01294668, 35999.37244981,
         0.32327364, 0.0),
    ),
}


def planet_elements(planet: str, epoch: Epoch) -> KeplerianElements:
    """Osculating elements of 'earth' or 'venus' at an epoch."""
    key = planet.lower()
    if key not in _ELEMENT_TABLE:
        raise UnsupportedPlanetError(f"unsupported planet {planet!r}")
    base, rate = _ELEMENT_TABLE[key]
    T = epoch.julian_centuries_j2000
    a, e, inc_d, L_d, peri_d, node_d = (b + r * T for b, r in zip(base, rate))
    M = math.radians(L_d - peri_d)
    M = (M + math.pi) % (2.0 * math.pi) - math.pi
    return KeplerianElements(
        a=a, e=e, inc=inc_d * _DEG, raan=node_d * _DEG,
        arg_perihelion=(peri_d - node_d) * _DEG, mean_anomaly=M)


def solve_kepler(mean_anomaly: float, e: float, tol: float = 1e-14,
                 max_iter: int = 50) -> float:
    """Eccentric anomaly from Kepler's equation, Newton iteration."""
    M = (mean_anomaly + math.pi) % (2.0 * math.pi) - math.pi
    E = M + e * math.sin(M)
    for _ in range(max_iter):
        fval = E - e * math.sin(E) - M
        dE = fval / (1.0 - e * math.cos(E))
        E -= dE
        if abs(dE) < tol:
            return E
    raise KeplerConvergenceError(
        f"Kepler iteration stalled at M={M:.6g}, e={e:.6g}")


def elements_to_rv(el: KeplerianElements, mu: float = 1.0):
    """Heliocentric ecliptic position/velocity from classical elements."""
    E = solve_kepler(el.mean_anomaly, el.e)
    nu = 2.0 * math.atan2(
        math.sqrt(1.0 + el.e) * math.sin(0.5 * E),
        math.sqrt(1.0 - el.e) * math.cos(0.5 * E))
    p = el.a * (1.0 - el.e**2)
    r = el.a * (1.0 - el.e * math.cos(E))
    r_pf = np.array([r * math.cos(nu), r * math.sin(nu), 0.0])
    sq = math.sqrt(mu / p)
    v_pf = np.array([-sq * math.sin(nu), sq * (el.e + math.cos(nu)), 0.0])

    co, so = math.cos(el.raan), math.sin(el.raan)
    ci, si = math.cos(el.inc), math.sin(el.inc)
    cw, sw = math.cos(el.arg_perihelion), math.sin(el.arg_perihelion)
    rot = np.array([
        [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
        [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
        [sw * si, cw * si, ci],
    ])
    return rot @ r_pf, rot @ v_pf


def elements_to_equinoctial(el: KeplerianElements) -> EquinoctialState:
    """Direct classical-to-equinoctial conversion (exact)."""
    E = solve_kepler(el.mean_anomaly, el.e)
    nu = 2.0 * math.atan2(
        math.sqrt(1.0 + el.e) * math.sin(0.5 * E),
        math.sqrt(1.0 - el.e) * math.cos(0.5 * E))
    lon_peri = el.arg_perihelion + el.raan
    return EquinoctialState(
        p=el.a * (1.0 - el.e**2),
        f=el.e * math.cos(lon_peri),
        g=el.e * math.sin(lon_peri),
        h=math.tan(0.5 * el.inc) * math.cos(el.raan),
        k=math.tan(0.5 * el.inc) * math.sin(el.raan),
        L=(lon_peri + nu) % (2.0 * math.pi),
    )


def planet_state(planet: str, epoch: Epoch):
    """Heliocentric (r, v) in canonical units plus equinoctial elements."""
    el = planet_elements(planet, epoch)
    r, v = elements_to_rv(el)
    return r, v, elements_to_equinoctial(el)


def orbit_targets(planet: str, epoch: Epoch) -> np.ndarray:
    """The five orbit-shape elements [p, f, g, h, k] of a planet's orbit."""
    eq = elements_to_equinoctial(planet_elements(planet, epoch))
    return np.array([eq.p, eq.f, eq.g, eq.h, eq.k])
