"""Large-deviation functionals evaluated by quadrature on discrete trajectories.

Test fields and tilts are :class:`~bwabc.fields.TestField` objects sharing
the trajectory's grid and record times. Every integral is a trapezoid rule in
time of trapezoid rules in space.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .fields import SpaceTimeFunction, TestField, trapezoid
from .pde import DiscreteTrajectory, _check_pair, as_drift, mobility_field, weak_form
from .thermo import mobility_inverse, mobility_regularized

INFINITE = math.inf
DEFAULT_DELTA = 1e-6


def _as_field(F, traj: DiscreteTrajectory) -> TestField:
    if isinstance(F, SpaceTimeFunction):
        F = TestField.from_function(F, traj.grid, traj.times)
    _check_pair(traj, F)
    return F


def _weights(traj: DiscreteTrajectory, delta: float) -> np.ndarray:
    if delta == 0.0:
        return mobility_field(traj)
    return mobility_regularized((traj.fields[..., 0], traj.fields[..., 1]), delta)


def weighted_inner(F, G, traj: DiscreteTrajectory, delta: float = 0.0,
                   gradient: bool = False) -> float:
    """int_0^T <F_t, S_t G_t> dt with S = Sigma_delta(rho_t).

    With ``gradient=True`` the directional derivatives are paired instead,
    giving the weighted H^1 semi-inner product.
    """
    F = _as_field(F, traj)
    G = _as_field(G, traj)
    S = _weights(traj, delta)
    if gradient:
        integrand = np.einsum("...ki,...ij,...kj->...", F.grad, S, G.grad)
    else:
        integrand = np.einsum("...i,...ij,...j->...", F.values, S, G.values)
    return float(trapezoid(traj.grid.integrate(integrand), traj.times))


def sobolev_norm_sq(H, traj: DiscreteTrajectory, delta: float = 0.0) -> float:
    return weighted_inner(H, H, traj, delta, gradient=True)


def energy_Q(traj: DiscreteTrajectory, delta: float = DEFAULT_DELTA) -> float:
    """(1/2) sum_k int int <d_k rho, Sigma_delta(rho)^{-1} d_k rho> du dt."""
    g = traj.grid.gradient(traj.fields)
    Sinv = mobility_inverse((traj.fields[..., 0], traj.fields[..., 1]), delta)
    integrand = np.einsum("...ki,...ij,...kj->...", g, Sinv, g)
    return 0.5 * float(trapezoid(traj.grid.integrate(integrand), traj.times))


def ell(traj: DiscreteTrajectory, G: TestField, E, gamma=None, b=None) -> float:
    """Linear functional l_G(rho | gamma); shares its code with the weak residual."""
    return weak_form(traj, G, E, initial=gamma, b=b)


def validate_M0(traj: DiscreteTrajectory, tol: float = 0.0) -> dict:
    """Pointwise check of |m| <= phi <= 1 at every node and time."""
    m = traj.fields[..., 0]
    phi = traj.fields[..., 1]
    excess = np.maximum(np.abs(m) - phi, phi - 1.0)
    bad = excess > tol
    report = {"passed": not bool(np.any(bad)), "n_violations": int(np.sum(bad)),
              "worst": float(np.max(excess)) if excess.size else 0.0, "violations": []}
    if bad.any():
        idx = np.argwhere(bad)
        order = np.argsort(-excess[bad], kind="stable")
        for k in order[:20]:
            i = tuple(int(v) for v in idx[k])
            report["violations"].append({
                "time_index": i[0], "node": list(i[1:]), "t": float(traj.times[i[0]]),
                "m": float(m[i]), "phi": float(phi[i]),
                "kind": "phi>1" if phi[i] > 1.0 + tol else "|m|>phi",
            })
        report["location"] = report["violations"][0]
    return report


def J_G(traj: DiscreteTrajectory, G: TestField, E, gamma=None, b=None) -> float:
    """l_G - (1/2) ||G||^2_{1,Sigma}; +inf for trajectories leaving the closure of I."""
    if not validate_M0(traj)["passed"]:
        return INFINITE
    return ell(traj, G, E, gamma, b) - 0.5 * sobolev_norm_sq(G, traj)


def JJ_G(traj: DiscreteTrajectory, G: TestField, E) -> float:
    """Alternative quadratic functional for test fields vanishing at t = 0, T
    and on the left face:

        -int <rho, d_t G> + sum_k int <d_k rho - (1/2) Sigma E_k, d_k G> - (1/2)||G||^2.
    """
    if G.kind != "compact":
        raise ValueError("alternative functional needs a compact test field")
    _check_pair(traj, G)
    if not validate_M0(traj)["passed"]:
        return INFINITE
    grid = traj.grid
    rho = traj.fields
    E = as_drift(E, grid.d)
    S = mobility_field(traj)
    drho = grid.gradient(rho)
    flux = drho - 0.5 * np.einsum("...ij,kj->...ki", S, E)
    a = trapezoid(grid.integrate(np.sum(rho * G.dt, axis=-1)), traj.times)
    c = trapezoid(grid.integrate(np.sum(flux * G.grad, axis=(-2, -1))), traj.times)
    return float(-a + c) - 0.5 * sobolev_norm_sq(G, traj)


def rate_from_tilt(traj: DiscreteTrajectory, H) -> float:
    """(1/2) ||H||^2_{1,Sigma(rho)}: the rate of the trajectory driven by tilt H."""
    return 0.5 * sobolev_norm_sq(H, traj)


def rate_function(traj: DiscreteTrajectory, H, cap: float = 1e6,
                  delta: float = DEFAULT_DELTA) -> float:
    """Rate of a tilt-driven trajectory, or +inf when it is not admissible
    (values outside the closure of I, or energy above `cap`)."""
    if not validate_M0(traj)["passed"] or energy_Q(traj, delta) > cap:
        return INFINITE
    return rate_from_tilt(traj, H)


def rate_lower_bound(traj: DiscreteTrajectory, family: Sequence[TestField], E,
                     gamma=None, b=None) -> float:
    """max over the family of J_G."""
    if not family:
        raise ValueError("test-field family is empty")
    return max(J_G(traj, G, E, gamma, b) for G in family)


def span_lower_bound(traj: DiscreteTrajectory, family: Sequence[TestField], E,
                     gamma=None, b=None, rcond: float = 1e-10) -> float:
    """Supremum of J_G over the linear span of the family.

    J restricted to the span is l.c - c.Q.c/2, maximised at c = Q^+ l.
    """
    if not family:
        raise ValueError("test-field family is empty")
    if not validate_M0(traj)["passed"]:
        return INFINITE
    lv = np.array([ell(traj, G, E, gamma, b) for G in family])
    n = len(family)
    Q = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = weighted_inner(family[i], family[j], traj, gradient=True)
    c = np.linalg.lstsq(Q, lv, rcond=rcond)[0]
    return float(lv @ c - 0.5 * c @ Q @ c)


def quadratic_parts(traj: DiscreteTrajectory, G: TestField, E, gamma=None, b=None) -> tuple[float, float]:
    """(l_G, q_G) with J_{aG} = a l_G - a^2 q_G, read off from a = 1 and a = 2."""
    j1 = J_G(traj, G, E, gamma, b)
    j2 = J_G(traj, G.scaled(2.0), E, gamma, b)
    q = (2.0 * j1 - j2) / 2.0
    return j1 + q, q


def richardson_error(coarse: float, fine: float, order: int = 2) -> float:
    """Error estimate of the coarse value from a refinement pair."""
    f = 2.0 ** order
    return abs(coarse - fine) * f / (f - 1.0)


def rate_report(traj: DiscreteTrajectory, H, family: Sequence[TestField], E,
                gamma=None, b=None, delta: float = DEFAULT_DELTA) -> dict:
    I = rate_from_tilt(traj, H)
    lb = rate_lower_bound(traj, family, E, gamma, b)
    return {
        "Q": energy_Q(traj, delta), "I_from_tilt": I, "lower_bound": lb,
        "duality_gap": I - lb, "family_size": len(family), "delta": delta,
        "grid": {"M": traj.grid.M, "d": traj.grid.d, "nt": int(traj.times.size)},
    }


def drift_norm_sq(traj: DiscreteTrajectory, E) -> float:
    """sum_k int int <E_k, Sigma(rho) E_k> du dt."""
    E = as_drift(E, traj.grid.d)
    S = mobility_field(traj)
    integrand = np.einsum("ki,...ij,kj->...", E, S, E)
    return float(trapezoid(traj.grid.integrate(integrand), traj.times))


def comparison_bounds(traj: DiscreteTrajectory, H, E, tol: float = 1e-6) -> dict:
    """Rates of a tilt-driven trajectory seen with drift E and with no drift.

    A solution for (E, H) also solves the drift-free problem with tilt
    H + E (u1 + 1)/2, so both rates are available in closed form.
    """
    from .fields import ramp_function

    E = as_drift(E, traj.grid.d)
    if traj.grid.d != 1:
        raise ValueError("comparison bounds are implemented for d = 1")
    Hf = _as_field(H, traj)
    shift = TestField.from_function(ramp_function(E[0]), traj.grid, traj.times)
    I_E = rate_from_tilt(traj, Hf)
    I_0 = rate_from_tilt(traj, Hf + shift)
    e2 = drift_norm_sq(traj, E)
    return {
        "I_E": I_E, "I_0": I_0, "drift_norm_sq": e2,
        "first_ok": bool(I_E <= 2 * I_0 + 0.25 * e2 + tol),
        "second_ok": bool(I_0 <= 2 * I_E + 0.25 * e2 + tol),
        "shifted_tilt": Hf + shift,
    }
