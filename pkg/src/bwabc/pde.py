"""Hydrodynamic system: explicit flux-form solver, spectral heat solution,
weak-form residual and a Gronwall-type stability monitor.

The system solved, for the pair rho = (m, phi) on [-1, 1]:

    d_t rho = Lap rho - div( (1/2) Sigma(rho) (E + 2 grad H) ),
    rho = b on the left face,  zero total flux on the right face.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .fields import EigenMode, SpaceGrid, SpaceTimeFunction, TestField, eigenmode, trapezoid
from .thermo import Profile, mobility

__all__ = [
    "DiscreteTrajectory", "SchemeError", "SpaceGrid", "EigenMode", "eigenmode",
    "solve_system", "heat_spectral", "weak_form", "weak_residual", "gronwall_monitor",
    "as_drift", "profile_on_grid",
]

CLAMP_TOL = 1e-8


class SchemeError(RuntimeError):
    pass


@dataclass
class DiscreteTrajectory:
    """Pair fields at increasing times on a space grid.

    ``fields`` has shape (nt, *grid.shape, 2). ``b`` optionally holds the
    reservoir datum on the left face, shape (*grid.shape[1:], 2).
    """

    times: np.ndarray
    grid: SpaceGrid
    fields: np.ndarray
    b: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        if self.fields.shape != (self.times.size,) + self.grid.shape + (2,):
            raise SchemeError("fields do not match the grid and times")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise SchemeError("times must be strictly increasing")

    @property
    def m(self) -> np.ndarray:
        return self.fields[..., 0]

    @property
    def phi(self) -> np.ndarray:
        return self.fields[..., 1]

    def left_datum(self) -> np.ndarray:
        return self.b if self.b is not None else self.fields[0, 0]

    def at(self, t: float) -> np.ndarray:
        """Fields at time t by linear interpolation between records."""
        ts = self.times
        if not ts[0] - 1e-12 <= t <= ts[-1] + 1e-12:
            raise SchemeError("time outside the trajectory")
        k = int(np.searchsorted(ts, t))
        if k < ts.size and abs(ts[k] - t) < 1e-12:
            return self.fields[k]
        k = min(max(k, 1), ts.size - 1)
        a = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
        return (1 - a) * self.fields[k - 1] + a * self.fields[k]


def as_drift(E, d: int = 1) -> np.ndarray:
    """Drift vectors as an array (d, 2) whose row k is (E^1_k, E^2_k)."""
    E = np.asarray(E, dtype=float)
    if E.shape == (2,) and d == 1:
        return E.reshape(1, 2)
    if E.shape != (d, 2):
        raise SchemeError("drift must have shape (d, 2)")
    return E


def profile_on_grid(p: Profile, grid: SpaceGrid) -> np.ndarray:
    m, phi = p(grid.nodes)
    return np.stack([m, phi], axis=-1)


def _datum(b, grid: SpaceGrid) -> np.ndarray:
    if isinstance(b, Profile):
        return profile_on_grid(b, grid)[0]
    return np.broadcast_to(np.asarray(b, dtype=float), grid.shape[1:] + (2,)).copy()


def solve_system(gamma: Profile, b, E, H: SpaceTimeFunction | None, grid: SpaceGrid,
                 dt: float, T: float, record_dt: float | None = None) -> DiscreteTrajectory:
    """Explicit flux-form scheme for the (possibly tilted) hydrodynamic system.

    The left node is pinned to `b`. The right node is a half cell whose outer
    face carries zero flux, which keeps the scheme second order in space and
    the trapezoid mass balance exact. Records every `record_dt` (default:
    about 400 records over [0, T]).
    """
    if grid.d != 1:
        raise SchemeError("solve_system supports d = 1 only")
    dx = grid.dx
    if dt > dx * dx / 4.0 * (1 + 1e-12):
        raise SchemeError(f"CFL violated: dt = {dt:g} > dx^2/4 = {dx * dx / 4:g}")
    if not T > 0:
        raise SchemeError("horizon T must be positive")
    Ek = as_drift(E, 1)[0]
    rec = record_dt if record_dt is not None else T / 400.0
    stride = max(1, int(round(rec / dt)))
    n_rec = max(1, int(math.ceil(T / (stride * dt) - 1e-9)))
    n_steps = stride * n_rec
    dt = T / n_steps

    rho = profile_on_grid(gamma, grid)
    if np.any(~((np.abs(rho[..., 0]) < rho[..., 1]) & (rho[..., 1] < 1.0))[1:]):
        raise SchemeError("initial profile must take values inside I")
    bval = _datum(b, grid)
    if np.max(np.abs(rho[0] - bval)) > 1e-8:
        warnings.warn("initial profile does not match the boundary datum at the left face")
    rho[0] = bval
    tilted = H is not None and not H.is_zero
    nodes = grid.nodes
    out = np.empty((n_rec + 1,) + rho.shape)
    out[0] = rho
    r = dt / dx
    no_tilt = np.zeros((1,) + rho.shape)
    chunk = max(1, 200000 // rho.shape[0])
    n = 0
    while n < n_steps:
        k = min(chunk, n_steps - n)
        h = H.evaluate(np.arange(n, n + k) * dt, nodes)["value"] if tilted else no_tilt
        status = _flux_steps(rho, bval, Ek, h, tilted, r, dx, k, n, stride, out, CLAMP_TOL)
        if status:
            raise SchemeError("scheme instability")
        n += k
    times = np.arange(n_rec + 1) * (stride * dt)
    times[-1] = T
    meta = {"solver": "flux-explicit", "M": grid.M, "dt": dt, "E": Ek.tolist(), "tilted": tilted}
    return DiscreteTrajectory(times, grid, out, b=bval, meta=meta)


@njit(cache=True)
def _flux_steps(rho, bval, Ek, h, tilted, r, dx, k, n0, stride, out, tol):
    """Advance k explicit steps in place; returns 1 on a clamp beyond tol."""
    n = rho.shape[0]
    F = np.empty((n - 1, 2))
    for s in range(k):
        for j in range(n - 1):
            m = 0.5 * (rho[j, 0] + rho[j + 1, 0])
            p = 0.5 * (rho[j, 1] + rho[j + 1, 1])
            s11 = 2.0 * (p - m * m)
            s12 = 2.0 * m * (1.0 - p)
            s22 = 2.0 * p * (1.0 - p)
            v0 = Ek[0]
            v1 = Ek[1]
            if tilted:
                v0 += 2.0 * (h[s, j + 1, 0] - h[s, j, 0]) / dx
                v1 += 2.0 * (h[s, j + 1, 1] - h[s, j, 1]) / dx
            F[j, 0] = (rho[j + 1, 0] - rho[j, 0]) / dx - 0.5 * (s11 * v0 + s12 * v1)
            F[j, 1] = (rho[j + 1, 1] - rho[j, 1]) / dx - 0.5 * (s12 * v0 + s22 * v1)
        for j in range(1, n - 1):
            rho[j, 0] += r * (F[j, 0] - F[j - 1, 0])
            rho[j, 1] += r * (F[j, 1] - F[j - 1, 1])
        rho[n - 1, 0] -= 2.0 * r * F[n - 2, 0]
        rho[n - 1, 1] -= 2.0 * r * F[n - 2, 1]
        rho[0, 0] = bval[0]
        rho[0, 1] = bval[1]
        for j in range(n):
            m = rho[j, 0]
            p = rho[j, 1]
            if not (np.isfinite(m) and np.isfinite(p)):
                return 1
            over = max(p - 1.0, abs(m) - p)
            if over > tol:
                return 1
            if p > 1.0:
                p = 1.0
            if m > p:
                m = p
            elif m < -p:
                m = -p
            rho[j, 0] = m
            rho[j, 1] = p
        if (n0 + s + 1) % stride == 0:
            out[(n0 + s + 1) // stride] = rho
    return 0


def _laplacian_1d(f, u, h=1e-4):
    return (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h)


def heat_spectral(gamma: Profile, b_lift: Profile, t: float, n_max: int, grid: SpaceGrid,
                  lift_laplacian=None, n_quad: int = 256) -> np.ndarray:
    """Truncated eigen-expansion of the drift-free solution at time t.

    With theta the lift (theta = b on the left face, zero slope on the right
    face) the field is theta + sum_n [c_n e^{-l_n t} + d_n (1 - e^{-l_n t})/l_n] V_n
    with c_n = <gamma - theta, V_n> and d_n = <Lap theta, V_n>. Returns node
    values of shape (*grid.shape, 2).
    """
    if n_max < 1:
        raise SchemeError("n_max must be at least 1")
    if grid.d != 1:
        raise SchemeError("heat_spectral supports d = 1 only")
    xq, wq = np.polynomial.legendre.leggauss(n_quad)
    g = np.stack(gamma(xq), axis=-1)
    th = np.stack(b_lift(xq), axis=-1)
    if lift_laplacian is None:
        lap = np.stack([_laplacian_1d(lambda u, i=i: np.asarray(b_lift(u)[i]), xq) for i in (0, 1)], axis=-1)
    else:
        lap = np.asarray(lift_laplacian(xq), dtype=float)
    out = np.stack(b_lift(grid.x1), axis=-1)
    for n in range(n_max + 1):
        mode = eigenmode(n)
        vq = mode.value(xq)
        lam = mode.eigenvalue
        c = (wq * vq) @ (g - th)
        dn = (wq * vq) @ lap
        coef = c * math.exp(-lam * t) + dn * (-math.expm1(-lam * t)) / lam
        out = out + mode.value(grid.x1)[:, None] * coef
    return out


# ------------------------------------------------------------- weak form

def _check_pair(traj: DiscreteTrajectory, G: TestField):
    if G.grid != traj.grid:
        raise SchemeError("test field and trajectory grids differ")
    if G.times.shape != traj.times.shape or np.max(np.abs(G.times - traj.times)) > 1e-12:
        raise SchemeError("test field and trajectory times differ")
    G.check()


def mobility_field(traj: DiscreteTrajectory) -> np.ndarray:
    return mobility((traj.fields[..., 0], traj.fields[..., 1]))


def _grad_pairing(traj: DiscreteTrajectory, G: TestField, S: np.ndarray, vec: np.ndarray) -> float:
    """int_0^T int sum_k <d_k G, S v_k> du dt for per-node vectors v."""
    Sv = np.einsum("...ij,...kj->...ki", S, vec)
    integrand = np.sum(G.grad * Sv, axis=(-2, -1))
    return float(trapezoid(traj.grid.integrate(integrand), traj.times))


def weak_form(traj: DiscreteTrajectory, G: TestField, E, initial=None, b=None,
              H: SpaceTimeFunction | TestField | None = None) -> float:
    """Linear functional of the weak formulation tested against G.

    Zero (up to discretisation error) exactly when `traj` solves the
    hydrodynamic system with drift E, initial datum `initial` (node values or
    a Profile; defaults to the first record), left datum `b` (defaults to the
    trajectory's) and optional tilt H.
    """
    _check_pair(traj, G)
    grid = traj.grid
    rho = traj.fields
    ts = traj.times
    d = grid.d
    E = as_drift(E, d)
    if initial is None:
        g0 = rho[0]
    elif isinstance(initial, Profile):
        g0 = profile_on_grid(initial, grid)
    else:
        g0 = np.asarray(initial, dtype=float)
    bval = traj.left_datum() if b is None else _datum(b, grid)

    def space(f):
        return grid.integrate(np.sum(f, axis=-1))

    end = float(space(rho[-1] * G.values[-1]))
    start = float(space(g0 * G.values[0]))
    dt_term = float(trapezoid(space(rho * G.dt), ts))
    lap_term = float(trapezoid(space(rho * G.lap), ts))
    left = float(trapezoid(grid.face_integrate(np.sum(bval * G.grad[:, 0, ..., 0, :], axis=-1)), ts))
    right = float(trapezoid(grid.face_integrate(np.sum(rho[:, -1] * G.grad[:, -1, ..., 0, :], axis=-1)), ts))
    S = mobility_field(traj)
    drift = 0.5 * _grad_pairing(traj, G, S, np.broadcast_to(E, rho.shape[:-1] + (d, 2)))
    total = end - start - dt_term - lap_term - left + right - drift
    if H is not None:
        if isinstance(H, SpaceTimeFunction):
            H = TestField.from_function(H, grid, ts)
        total -= _grad_pairing(traj, G, S, H.grad)
    return total


def weak_residual(traj: DiscreteTrajectory, G: TestField, E, H=None, initial=None, b=None) -> float:
    return weak_form(traj, G, E, initial=initial, b=b, H=H)


# ---------------------------------------------------------- Gronwall monitor

def gronwall_monitor(a: DiscreteTrajectory, b: DiscreteTrajectory) -> dict:
    """Squared L2 distance G(t) between two trajectories and the smallest
    constants with G(t) <= C int_0^t G + G(0) and G(t) <= e^{C t} G(0)."""
    if a.grid != b.grid or a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise SchemeError("grid mismatch")
    diff = a.fields - b.fields
    G = a.grid.integrate(np.sum(diff * diff, axis=-1))
    ts = a.times
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (G[1:] + G[:-1]) * np.diff(ts))])
    pos = cum > 0
    C = float(np.max(np.maximum(G[pos] - G[0], 0.0) / cum[pos])) if np.any(pos) else 0.0
    C_exp = 0.0
    if G[0] > 0:
        k = ts > 0
        with np.errstate(divide="ignore"):
            rates = np.log(np.maximum(G[k], 1e-300) / G[0]) / ts[k]
        C_exp = float(max(0.0, np.max(rates))) if np.any(k) else 0.0
    return {"times": ts, "G": G, "integral": cum, "C": C, "C_exp": C_exp}
