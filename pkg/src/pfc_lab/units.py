"""Temperature and frequency conversions shared by every module.

Static energies are linear frequencies in GHz (Planck constant h = 1).
Dynamics work in angular units: rad/ns, obtained by multiplying GHz by 2*pi.
"""
import math

from scipy import constants

TWO_PI = 2.0 * math.pi

# k_B / h in GHz per mK
_GHZ_PER_MK = constants.k / constants.h / 1e9 / 1e3


def mk_to_ghz(temperature_mk: float) -> float:
    """Thermal energy ``k_B T / h`` in GHz for a temperature in mK."""
    return temperature_mk * _GHZ_PER_MK


def beta_ghz(temperature_mk: float) -> float:
    """Inverse temperature ``h / (k_B T)`` in GHz^-1 (ns)."""
    if not temperature_mk > 0:
        raise ValueError(f"temperature must be positive, got {temperature_mk!r} mK")
    return 1.0 / mk_to_ghz(temperature_mk)


def beta_angular(temperature_mk: float) -> float:
    """Inverse temperature matched to angular energies: ``hbar / (k_B T)`` in ns/rad."""
    return beta_ghz(temperature_mk) / TWO_PI


def ghz_to_angular(x: float) -> float:
    return TWO_PI * x
