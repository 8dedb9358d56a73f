"""Single-site thermodynamics of the three-state spin product measures.

A site carries a spin s in {-1, 0, +1} with Gibbs weight exp(a1*s + a2*s**2).
The pair of chemical potentials (a1, a2) is in bijection with the pair of
densities (m, phi) = (E[s], E[s**2]) ranging over the open region
I = {|m| < phi < 1}.

All functions broadcast over numpy arrays; matrices are returned with the
two trailing axes holding the 2x2 block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

# Margin to the boundary of I below which Psi is refused.
EPS_INTERIOR = 1e-9
# Largest |a| accepted before exp() overflows in double precision.
MAX_CHEMPOT = 700.0


class ThermoError(ValueError):
    pass


class ChemPot(NamedTuple):
    a1: float | np.ndarray
    a2: float | np.ndarray


class DensityPair(NamedTuple):
    m: float | np.ndarray
    phi: float | np.ndarray


def single_site_moments(a: ChemPot) -> DensityPair:
    """Return (m, phi) of the single-site law with chemical potentials `a`.

    m = 2 e^{a2} sinh(a1) / Z and phi = 2 e^{a2} cosh(a1) / Z with
    Z = 1 + 2 e^{a2} cosh(a1).
    """
    a1 = np.asarray(a[0], dtype=float)
    a2 = np.asarray(a[1], dtype=float)
    if np.any(np.abs(a1) > MAX_CHEMPOT) or np.any(np.abs(a2) > MAX_CHEMPOT):
        raise ThermoError("chemical potential out of numeric range")
    # Weights of s = +1, -1 relative to s = 0, computed in log space so that
    # large positive potentials do not overflow the normalisation.
    lp = a2 + a1
    lm = a2 - a1
    shift = np.maximum(0.0, np.maximum(lp, lm))
    w0 = np.exp(-shift)
    wp = np.exp(lp - shift)
    wm = np.exp(lm - shift)
    z = w0 + wp + wm
    m = (wp - wm) / z
    phi = (wp + wm) / z
    if m.ndim == 0:
        return DensityPair(float(m), float(phi))
    return DensityPair(m, phi)


def _check_interior(m, phi, eps):
    if np.any(phi - np.abs(m) < eps) or np.any(1.0 - phi < eps):
        raise ThermoError("profile on boundary of I")


def chem_potentials(rho: DensityPair, eps: float = EPS_INTERIOR) -> ChemPot:
    """Inverse of :func:`single_site_moments` on the interior of I."""
    m = np.asarray(rho[0], dtype=float)
    phi = np.asarray(rho[1], dtype=float)
    _check_interior(m, phi, eps)
    a1 = 0.5 * (np.log(phi + m) - np.log(phi - m))
    a2 = 0.5 * (np.log(phi * phi - m * m) - np.log(4.0 * (1.0 - phi) ** 2))
    if a1.ndim == 0:
        return ChemPot(float(a1), float(a2))
    return ChemPot(a1, a2)


def mobility(rho: DensityPair) -> np.ndarray:
    """Compressibility matrix Sigma(m, phi), shape ``(..., 2, 2)``."""
    m = np.asarray(rho[0], dtype=float)
    phi = np.asarray(rho[1], dtype=float)
    off = 2.0 * m * (1.0 - phi)
    out = np.empty(m.shape + (2, 2))
    out[..., 0, 0] = 2.0 * (phi - m * m)
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    out[..., 1, 1] = 2.0 * phi * (1.0 - phi)
    return out


def mobility_regularized(rho: DensityPair, delta: float) -> np.ndarray:
    """Sigma_delta = 2 [[phi - m^2 + d, m(1-phi)], [m(1-phi), (phi+d)(1-phi+d)]].

    Reduces to :func:`mobility` at ``delta == 0`` and dominates it for
    ``delta > 0``.
    """
    m = np.asarray(rho[0], dtype=float)
    phi = np.asarray(rho[1], dtype=float)
    off = 2.0 * m * (1.0 - phi)
    out = np.empty(m.shape + (2, 2))
    out[..., 0, 0] = 2.0 * (phi - m * m + delta)
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    out[..., 1, 1] = 2.0 * (phi + delta) * (1.0 - phi + delta)
    return out


def mobility_inverse(rho: DensityPair, delta: float = 0.0,
                     eps: float = EPS_INTERIOR) -> np.ndarray:
    """Inverse of Sigma (``delta == 0``) or of Sigma_delta (``delta > 0``).

    The unregularised inverse uses the closed form
    Sigma^{-1} = [[phi, -m], [-m, phi + (phi^2 - m^2)/(1 - phi)]] / (2 (phi^2 - m^2)),
    which needs rho strictly inside I.
    """
    if delta < 0:
        raise ThermoError("delta must be non-negative")
    m = np.asarray(rho[0], dtype=float)
    phi = np.asarray(rho[1], dtype=float)
    out = np.empty(m.shape + (2, 2))
    if delta == 0.0:
        if np.any(phi - np.abs(m) < eps) or np.any(1.0 - phi < eps):
            raise ThermoError("singular mobility; pass delta > 0")
        q = phi * phi - m * m
        c = 1.0 / (2.0 * q)
        out[..., 0, 0] = c * phi
        out[..., 0, 1] = -c * m
        out[..., 1, 0] = -c * m
        out[..., 1, 1] = c * (phi + q / (1.0 - phi))
        return out
    s = mobility_regularized((m, phi), delta)
    det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
    out[..., 0, 0] = s[..., 1, 1] / det
    out[..., 1, 1] = s[..., 0, 0] / det
    out[..., 0, 1] = -s[..., 0, 1] / det
    out[..., 1, 0] = -s[..., 1, 0] / det
    return out


def mobility_det(rho: DensityPair) -> np.ndarray:
    """Closed form det Sigma = 4 (1 - phi)(phi^2 - m^2)."""
    m = np.asarray(rho[0], dtype=float)
    phi = np.asarray(rho[1], dtype=float)
    return 4.0 * (1.0 - phi) * (phi * phi - m * m)


def in_closure(m, phi, tol: float = 0.0) -> np.ndarray:
    """Pointwise test of |m| <= phi <= 1 up to `tol`."""
    m = np.asarray(m, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (np.abs(m) <= phi + tol) & (phi <= 1.0 + tol)


@dataclass(frozen=True)
class Profile:
    """Smooth pair of fields theta = (theta1, theta2) with margin constants.

    The evaluators take an array of positions with shape ``(..., d)`` (or
    ``(...,)`` in one dimension) and return arrays of the leading shape.
    """

    theta1: Callable[[np.ndarray], np.ndarray]
    theta2: Callable[[np.ndarray], np.ndarray]
    c_star: float = 0.0
    C_star: float = 1.0

    def __call__(self, u) -> DensityPair:
        u = as_positions(u)
        lead = u.shape[:-1]
        t1 = np.broadcast_to(np.asarray(self.theta1(u), dtype=float), lead)
        t2 = np.broadcast_to(np.asarray(self.theta2(u), dtype=float), lead)
        return DensityPair(np.array(t1), np.array(t2))


def as_positions(u) -> np.ndarray:
    """Coerce positions to shape (..., d); a flat array is read as 1-d points."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return u.reshape(1, 1)
    if u.ndim == 1:
        return u[:, None]
    return u


def validate_profile(p: Profile, grid) -> dict:
    """Check |theta1| + c* < theta2 <= C* < 1 on every grid point.

    Returns a report with the worst margin (negative means violated), the
    location of the worst point and a pass flag.
    """
    m, phi = p(grid)
    lower = phi - (np.abs(m) + p.c_star)
    upper = p.C_star - phi
    margin = np.minimum(lower, upper)
    k = int(np.argmin(margin)) if margin.size else 0
    worst = float(margin.flat[k]) if margin.size else np.inf
    ok = bool(np.all(lower > 0) and np.all(upper >= 0) and p.C_star < 1.0
              and p.c_star > 0.0)
    return {
        "passed": ok,
        "margin": worst,
        "lower_margin": float(lower.min()) if lower.size else np.inf,
        "upper_margin": float(upper.min()) if upper.size else np.inf,
        "worst_index": k,
    }
