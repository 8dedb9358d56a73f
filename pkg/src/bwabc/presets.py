"""Named analytic families of density profiles and tilts.

Profiles depend on the first coordinate only. Margin constants are read off
a dense sample, so an inadmissible parameter choice shows up as a failed
:func:`~bwabc.thermo.validate_profile` rather than an exception here.
"""
from __future__ import annotations

import inspect

import numpy as np

from .fields import SpaceTimeFunction, TimeProfile, eigenmode, mode_function, ramp_function, zero_function
from .thermo import Profile


class PresetError(KeyError):
    pass


def _x1(u):
    u = np.asarray(u, dtype=float)
    return u[..., 0]


def _with_margins(f1, f2) -> Profile:
    s = np.linspace(-1.0, 1.0, 4001)[:, None]
    t1, t2 = np.broadcast_to(f1(s), (s.shape[0],)), np.broadcast_to(f2(s), (s.shape[0],))
    gap = float(np.min(t2 - np.abs(t1)))
    top = float(np.max(t2))
    c_star = 0.5 * gap if gap > 0 else gap
    C_star = 0.5 * (top + 1.0) if top < 1.0 else top
    return Profile(f1, f2, c_star, C_star)


def constant(m: float = 0.0, phi: float = 0.5) -> Profile:
    return _with_margins(lambda u: np.full(_x1(u).shape, float(m)),
                         lambda u: np.full(_x1(u).shape, float(phi)))


def linear(m_left: float = 0.0, phi_left: float = 0.5, m_right: float = 0.0,
           phi_right: float = 0.5) -> Profile:
    def lerp(a, b):
        return lambda u: a + (b - a) * 0.5 * (_x1(u) + 1.0)
    return _with_margins(lerp(float(m_left), float(m_right)), lerp(float(phi_left), float(phi_right)))


def sine_bump(m: float = 0.0, phi: float = 0.5, amp_m: float = 0.2, amp_phi: float = 0.2) -> Profile:
    """base + amp sin^2(pi (u1 + 1)/2): equal to the base, with zero slope, on both faces."""
    def bump(base, amp):
        return lambda u: base + amp * np.sin(0.5 * np.pi * (_x1(u) + 1.0)) ** 2
    return _with_margins(bump(float(m), float(amp_m)), bump(float(phi), float(amp_phi)))


def eigenmode_profile(m: float = 0.0, phi: float = 0.5, amp_m: float = 0.1,
                      amp_phi: float = 0.1, n: int = 0) -> Profile:
    """base + amp V_n(u1)."""
    mode = eigenmode(int(n))
    return _with_margins(lambda u: float(m) + float(amp_m) * mode.value(np.asarray(u)[..., :1]),
                         lambda u: float(phi) + float(amp_phi) * mode.value(np.asarray(u)[..., :1]))


def tilt_zero(d: int = 1) -> SpaceTimeFunction:
    return zero_function(int(d))


def tilt_eigenmode_bump(amp1: float = 1.5, amp2: float = 0.0, n: int = 0,
                        time: str = "halfcos", T: float = 1.0, k: int = 1) -> SpaceTimeFunction:
    """(amp1, amp2) V_n(u) g(t) with g a half-cosine bump in time (or constant)."""
    return mode_function(int(n), (float(amp1), float(amp2)), TimeProfile(str(time), float(T), int(k)))


def tilt_ramp(amp1: float = 0.0, amp2: float = 0.0) -> SpaceTimeFunction:
    return ramp_function((float(amp1), float(amp2)))


PROFILES = {
    "constant": constant,
    "linear": linear,
    "sine-bump": sine_bump,
    "eigenmode-bump": eigenmode_profile,
}

TILTS = {
    "zero": tilt_zero,
    "eigenmode-bump": tilt_eigenmode_bump,
    "ramp": tilt_ramp,
}


def parameters(kind: str, name: str) -> dict:
    table = PROFILES if kind == "profile" else TILTS
    if name not in table:
        raise PresetError(f"unknown {kind} preset {name!r}")
    sig = inspect.signature(table[name])
    return {k: v.default for k, v in sig.parameters.items()}


def make(kind: str, name: str, **params):
    table = PROFILES if kind == "profile" else TILTS
    if name not in table:
        raise PresetError(f"unknown {kind} preset {name!r}")
    allowed = parameters(kind, name)
    extra = set(params) - set(allowed)
    if extra:
        raise PresetError(f"preset {name!r} has no parameter(s) {sorted(extra)}")
    return table[name](**params)
