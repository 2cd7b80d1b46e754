"""Canonical heliocentric units and thrust parameters.

Everything downstream works in nondimensional units: the astronomical
unit for length, the spacecraft wet mass for mass, and a time unit
chosen so that the Sun's gravity parameter equals one. Conversions to
and from SI happen only at the outermost (CLI / reporting) layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

AU_M = 1.49597870691e11
"""Astronomical unit [m]."""

GM_SUN = 1.32712440018e20
"""Heliocentric gravity parameter [m^3/s^2]."""

G0 = 9.80665
"""Standard gravity [m/s^2], used in the exhaust-velocity relation."""

TU_S = math.sqrt(AU_M**3 / GM_SUN)
"""Canonical time unit [s]; sqrt(AU^3 / GM_sun), approx 58.13 days."""

DAY_S = 86400.0
YEAR_S = 365.25 * DAY_S


@dataclass(frozen=True)
class UnitSystem:
    """Nondimensionalization for one mission (fixed wet mass).

    With this scaling mu = 1 exactly, lengths are in AU, times in TU and
    masses in multiples of ``m0_kg``.
    """

    m0_kg: float = 1500.0

    def __post_init__(self):
        if self.m0_kg <= 0.0:
            raise ValueError("m0_kg must be positive")

    @property
    def tu_s(self) -> float:
        return TU_S

    def thrust_to_nd(self, thrust_n: float) -> float:
        """Convert a thrust [N] to canonical acceleration*mass units."""
        return thrust_n * TU_S**2 / (self.m0_kg * AU_M)

    def mass_flow_to_nd(self, mdot_kg_s: float) -> float:
        """Convert a mass flow [kg/s] to canonical units."""
        return mdot_kg_s * TU_S / self.m0_kg

    def mass_to_kg(self, m_nd: float) -> float:
        return m_nd * self.m0_kg

    def mass_to_nd(self, m_kg: float) -> float:
        return m_kg / self.m0_kg

    def time_to_years(self, t_nd: float) -> float:
        return t_nd * TU_S / YEAR_S

    def years_to_nd(self, t_years: float) -> float:
        return t_years * YEAR_S / TU_S


@dataclass(frozen=True)
class ThrustConfig:
    """Engine constants in canonical units plus the smoothing parameter.

    ``c1`` is the maximum thrust, ``c2`` the mass-flow constant so that
    the flow rate is ``c2 * u`` at throttle ``u``.  ``eps`` is the
    logarithmic-barrier parameter of the smoothed throttle law; ``eps = 0``
    selects the bang-bang limit.  ``isp_s`` is retained for reporting only.
    """

    c1: float
    c2: float
    eps: float = 1e-6
    isp_s: float = float("nan")

    def __post_init__(self):
        if self.c1 <= 0.0:
            raise ValueError("c1 must be positive")
        if self.c2 <= 0.0:
            raise ValueError("c2 must be positive")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")

    def with_eps(self, eps: float) -> "ThrustConfig":
        return ThrustConfig(c1=self.c1, c2=self.c2, eps=eps, isp_s=self.isp_s)


def thrust_config_from_si(
    thrust_n: float,
    isp_s: float,
    units: UnitSystem,
    eps: float = 1e-6,
) -> ThrustConfig:
    """Build canonical engine constants from thrust [N] and Isp [s].

    The mass-flow constant is the physical flow at full throttle,
    thrust / (Isp * g0), nondimensionalized.
    """
    if thrust_n <= 0.0 or isp_s <= 0.0:
        raise ValueError("thrust and Isp must be positive")
    mdot_kg_s = thrust_n / (isp_s * G0)
    return ThrustConfig(
        c1=units.thrust_to_nd(thrust_n),
        c2=units.mass_flow_to_nd(mdot_kg_s),
        eps=eps,
        isp_s=isp_s,
    )


# Mission defaults: 1500 kg spacecraft, NEP engine, launch 2005-05-07.
DEFAULT_M0_KG = 1500.0
DEFAULT_ISP_S = 3800.0
DEFAULT_THRUST_N = 0.3
DEFAULT_LAUNCH_DATE = (2005, 5, 7)
