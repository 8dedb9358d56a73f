"""Space grids, Laplacian eigenmodes and space-time field pairs.

Node data for a pair of fields lives in arrays of shape ``(nt, *grid.shape, 2)``;
the last axis holds the component acting on the magnetisation (0) and on
the concentration (1). Gradients insert a direction axis before it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np


class GridError(ValueError):
    pass


def trapezoid(y: np.ndarray, x: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.trapezoid(y, x, axis=axis)


def _central_gradient(f, h, axis):
    # written with differences so constants give exactly zero
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g, dtype=float)
    out[1:-1] = (g[2:] - g[:-2]) / (2 * h)
    out[0] = (3 * (g[1] - g[0]) - (g[2] - g[1])) / (2 * h)
    out[-1] = (3 * (g[-1] - g[-2]) - (g[-2] - g[-3])) / (2 * h)
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class SpaceGrid:
    """Nodes u_j = -1 + j/M (j = 0..2M) along the open axis, K periodic
    points per transverse direction when d >= 2."""

    M: int
    d: int = 1
    K: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise GridError("grid needs M >= 1")
        if self.d < 1:
            raise GridError("dimension must be >= 1")
        if self.d > 1 and self.K < 3:
            raise GridError("transverse resolution K >= 3 required for d >= 2")

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.M + 1,) + (self.K,) * (self.d - 1)

    @cached_property
    def x1(self) -> np.ndarray:
        return -1.0 + np.arange(2 * self.M + 1) / self.M

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node positions, shape ``(*shape, d)``."""
        axes = [self.x1] + [np.arange(self.K) / self.K] * (self.d - 1)
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack(g, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights along x1; plain rectangle sums on the torus."""
        w = np.full(2 * self.M + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w = w.reshape((-1,) + (1,) * (self.d - 1))
        return np.broadcast_to(w * self.face_weight, self.shape)

    @property
    def face_weight(self) -> float:
        return float(self.K) ** (1 - self.d) if self.d > 1 else 1.0

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Space integral of node data whose trailing axes are the grid axes."""
        f = np.asarray(f, dtype=float)
        lead = f.ndim - self.d
        return np.sum(f * self.weights, axis=tuple(range(lead, f.ndim)))

    def face_integrate(self, f: np.ndarray) -> np.ndarray:
        """Surface integral over a face; trailing d-1 axes are transverse."""
        f = np.asarray(f, dtype=float)
        if self.d == 1:
            return f
        return self.face_weight * np.sum(f, axis=tuple(range(f.ndim - self.d + 1, f.ndim)))

    def gradient(self, f: np.ndarray, lead: int = 1) -> np.ndarray:
        """Second-order discrete gradient of ``(lead..., *shape, 2)`` data.

        Returns ``(lead..., *shape, d, 2)``; one-sided at the two faces,
        periodic in the transverse directions.
        """
        out = []
        for k in range(self.d):
            ax = lead + k
            if k == 0:
                out.append(_central_gradient(f, self.dx, ax))
            else:
                h = 1.0 / self.K
                out.append((np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * h))
        return np.stack(out, axis=-2)

    def laplacian(self, f: np.ndarray, lead: int = 1) -> np.ndarray:
        out = np.zeros_like(f)
        h = self.dx
        ax = lead
        g = np.moveaxis(f, ax, 0)
        lap = np.empty_like(g)
        lap[1:-1] = (g[2:] - 2 * g[1:-1] + g[:-2]) / h ** 2
        # Second-order one-sided stencils at the faces.
        lap[0] = (2 * g[0] - 5 * g[1] + 4 * g[2] - g[3]) / h ** 2
        lap[-1] = (2 * g[-1] - 5 * g[-2] + 4 * g[-3] - g[-4]) / h ** 2
        out += np.moveaxis(lap, 0, ax)
        for k in range(1, self.d):
            a = lead + k
            hk = 1.0 / self.K
            out += (np.roll(f, -1, axis=a) - 2 * f + np.roll(f, 1, axis=a)) / hk ** 2
        return out


# ---------------------------------------------------------------- eigenmodes

@dataclass(frozen=True)
class EigenMode:
    """Product eigenfunction of -Laplacian, zero on the left face and with
    zero normal derivative on the right face."""

    n: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def parts(self) -> tuple[float, ...]:
        """Directional eigenvalues; their sum is :attr:`eigenvalue`."""
        first = (self.n[0] + 0.5) ** 2 * np.pi ** 2 / 4.0
        return (first,) + tuple(np.pi ** 2 * (k + 1) ** 2 for k in self.n[1:])

    @property
    def eigenvalue(self) -> float:
        return float(sum(self.parts))

    def _freqs(self):
        return [(self.n[0] + 0.5) * np.pi / 2.0] + [np.pi * (k + 1) for k in self.n[1:]]

    def _factors(self, u):
        w = self._freqs()
        vals = [np.sin(w[0] * (u[..., 0] + 1.0))]
        ders = [w[0] * np.cos(w[0] * (u[..., 0] + 1.0))]
        for i in range(1, self.d):
            vals.append(np.sqrt(2.0) * np.sin(w[i] * u[..., i]))
            ders.append(np.sqrt(2.0) * w[i] * np.cos(w[i] * u[..., i]))
        return vals, ders

    def value(self, u) -> np.ndarray:
        u = _positions(u, self.d)
        vals, _ = self._factors(u)
        return np.prod(vals, axis=0)

    def grad(self, u) -> np.ndarray:
        u = _positions(u, self.d)
        vals, ders = self._factors(u)
        out = []
        for k in range(self.d):
            f = ders[k]
            for i in range(self.d):
                if i != k:
                    f = f * vals[i]
            out.append(f)
        return np.stack(out, axis=-1)

    def lap(self, u) -> np.ndarray:
        return -self.eigenvalue * self.value(u)

    def __call__(self, u) -> np.ndarray:
        return self.value(u)


def eigenmode(n: int | Sequence[int]) -> EigenMode:
    n = (int(n),) if np.isscalar(n) else tuple(int(k) for k in n)
    if not n or any(k < 0 for k in n):
        raise GridError("mode index must be a non-empty tuple of naturals")
    return EigenMode(n)


def _positions(u, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if d == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    return u


@dataclass(frozen=True)
class Ramp:
    """The affine function (u1 + 1)/2, zero on the left face."""

    d: int = 1

    def value(self, u):
        u = _positions(u, self.d)
        return 0.5 * (u[..., 0] + 1.0)

    def grad(self, u):
        u = _positions(u, self.d)
        g = np.zeros(u.shape[:-1] + (self.d,))
        g[..., 0] = 0.5
        return g

    def lap(self, u):
        u = _positions(u, self.d)
        return np.zeros(u.shape[:-1])


# ------------------------------------------------------------- time profiles

@dataclass(frozen=True)
class TimeProfile:
    """Scalar time factor g(t).

    kinds: ``const``; ``halfcos`` (1 - cos(2 pi k t/T))/2, vanishing with
    zero slope at t = 0 and t = T; ``cos`` cos(k pi t / T).
    """

    kind: str = "const"
    T: float = 1.0
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("const", "halfcos", "cos"):
            raise GridError(f"unknown time profile {self.kind!r}")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.ones_like(t)
        if self.kind == "halfcos":
            return 0.5 * (1.0 - np.cos(2 * np.pi * self.k * t / self.T))
        return np.cos(np.pi * self.k * t / self.T)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.zeros_like(t)
        if self.kind == "halfcos":
            w = 2 * np.pi * self.k / self.T
            return 0.5 * w * np.sin(w * t)
        w = np.pi * self.k / self.T
        return -w * np.sin(w * t)

    @property
    def vanishes_at_ends(self) -> bool:
        return self.kind == "halfcos"


# ------------------------------------------------------- space-time functions

@dataclass(frozen=True)
class Term:
    amp: tuple[float, float]
    space: object
    time: TimeProfile


@dataclass(frozen=True)
class SpaceTimeFunction:
    """Finite sum of separable terms amp * S(u) * g(t) with analytic
    derivatives. Every space factor used here vanishes on the left face."""

    terms: tuple[Term, ...] = ()
    d: int = 1

    @property
    def is_zero(self) -> bool:
        return all(t.amp[0] == 0 and t.amp[1] == 0 for t in self.terms)

    def __add__(self, other: "SpaceTimeFunction") -> "SpaceTimeFunction":
        if self.d != other.d:
            raise GridError("dimension mismatch")
        return SpaceTimeFunction(self.terms + other.terms, self.d)

    def scaled(self, alpha: float) -> "SpaceTimeFunction":
        return SpaceTimeFunction(tuple(
            Term((alpha * t.amp[0], alpha * t.amp[1]), t.space, t.time) for t in self.terms), self.d)

    def evaluate(self, times, points) -> dict:
        """Values and derivatives at every (time, point) pair.

        `times` has shape (nt,), `points` shape (..., d). Returns arrays
        ``value``/``dt``/``lap`` of shape (nt, ..., 2) and ``grad`` of shape
        (nt, ..., d, 2).
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        pts = np.asarray(points, dtype=float)
        lead = pts.shape[:-1]
        nt = times.size
        val = np.zeros((nt,) + lead + (2,))
        dt = np.zeros_like(val)
        lap = np.zeros_like(val)
        grad = np.zeros((nt,) + lead + (self.d, 2))
        tshape = (nt,) + (1,) * len(lead)
        for term in self.terms:
            a = np.asarray(term.amp, dtype=float)
            s = term.space.value(pts)
            gs = term.space.grad(pts)
            ls = term.space.lap(pts)
            g = term.time.value(times).reshape(tshape)
            gd = term.time.deriv(times).reshape(tshape)
            val += (g * s)[..., None] * a
            dt += (gd * s)[..., None] * a
            lap += (g * ls)[..., None] * a
            grad += (g[..., None] * gs)[..., None] * a
        return {"value": val, "dt": dt, "lap": lap, "grad": grad}

    def __call__(self, t: float, points) -> np.ndarray:
        return self.evaluate([t], points)["value"][0]


def zero_function(d: int = 1) -> SpaceTimeFunction:
    return SpaceTimeFunction((), d)


def mode_function(n, amp=(1.0, 0.0), time: TimeProfile | None = None) -> SpaceTimeFunction:
    mode = eigenmode(n)
    return SpaceTimeFunction((Term(tuple(map(float, amp)), mode, time or TimeProfile()),), mode.d)


def ramp_function(amp, d: int = 1) -> SpaceTimeFunction:
    """amp * (u1 + 1)/2, constant in time."""
    return SpaceTimeFunction((Term(tuple(map(float, amp)), Ramp(d), TimeProfile()),), d)


# ---------------------------------------------------------------- test fields

KINDS = ("zero_left", "compact")


@dataclass(frozen=True, eq=False)
class TestField:
    """Space-time field pair sampled on a grid, with its derivatives.

    ``zero_left`` fields vanish on the left-face nodes at every time;
    ``compact`` fields additionally vanish at the first and last time.
    """

    grid: SpaceGrid
    times: np.ndarray
    values: np.ndarray
    grad: np.ndarray
    dt: np.ndarray
    lap: np.ndarray
    kind: str = "zero_left"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GridError(f"unknown test-field kind {self.kind!r}")
        expect = (len(self.times),) + self.grid.shape + (2,)
        if self.values.shape != expect:
            raise GridError("test field does not match the grid")

    @classmethod
    def from_function(cls, f: SpaceTimeFunction, grid: SpaceGrid, times,
                      kind: str = "zero_left") -> "TestField":
        times = np.asarray(times, dtype=float)
        ev = f.evaluate(times, grid.nodes)
        tf = cls(grid, times, ev["value"], ev["grad"], ev["dt"], ev["lap"], kind)
        return tf._pin()

    @classmethod
    def from_values(cls, values: np.ndarray, grid: SpaceGrid, times,
                    kind: str = "zero_left") -> "TestField":
        """Node values only; derivatives by second-order differences."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        dt = np.gradient(values, times, axis=0, edge_order=2) if len(times) > 2 else np.zeros_like(values)
        tf = cls(grid, times, values, grid.gradient(values), dt, grid.laplacian(values), kind)
        return tf._pin()

    @classmethod
    def zeros(cls, grid: SpaceGrid, times, kind: str = "zero_left") -> "TestField":
        times = np.asarray(times, dtype=float)
        z = np.zeros((len(times),) + grid.shape + (2,))
        return cls(grid, times, z, np.zeros(z.shape[:-1] + (grid.d, 2)), z.copy(), z.copy(), kind)

    def _pin(self) -> "TestField":
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
        v, dt = self.values.copy(), self.dt.copy()
        if np.max(np.abs(v[:, 0]), initial=0.0) > tol:
            raise GridError("test field does not vanish on the left face")
        v[:, 0] = 0.0
        dt[:, 0] = 0.0
        if self.kind == "compact":
            if max(np.max(np.abs(v[0])), np.max(np.abs(v[-1]))) > tol:
                raise GridError("compact test field does not vanish at t = 0 and t = T")
            v[0] = 0.0
            v[-1] = 0.0
        return replace(self, values=v, dt=dt)

    def check(self) -> None:
        if np.any(self.values[:, 0] != 0.0):
            raise GridError("test field must vanish on the left boundary")
        if self.kind == "compact" and (np.any(self.values[0] != 0) or np.any(self.values[-1] != 0)):
            raise GridError("compact test field must vanish at the end times")

    def scaled(self, alpha: float) -> "TestField":
        a = float(alpha)
        return replace(self, values=a * self.values, grad=a * self.grad,
                       dt=a * self.dt, lap=a * self.lap)

    def __add__(self, other: "TestField") -> "TestField":
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise GridError("test fields live on different grids")
        kind = "compact" if self.kind == other.kind == "compact" else "zero_left"
        return TestField(self.grid, self.times, self.values + other.values,
                         self.grad + other.grad, self.dt + other.dt,
                         self.lap + other.lap, kind)


def eigen_family(grid: SpaceGrid, times, n_max: int = 5, kind: str = "zero_left",
                 harmonics: Sequence[int] = (0, 1, 2)) -> list[TestField]:
    """Tensor products of eigenmodes (first index up to n_max, other indices
    zero) with time profiles, one field per component.

    For ``zero_left`` the time factors are cos(k pi t/T) for k in
    `harmonics`; for ``compact`` they are the half-cosine bumps with k >= 1.
    """
    times = np.asarray(times, dtype=float)
    T = float(times[-1])
    if kind == "compact":
        profs = [TimeProfile("halfcos", T, max(1, k)) for k in sorted({max(1, k) for k in harmonics})]
    else:
        profs = [TimeProfile("const") if k == 0 else TimeProfile("cos", T, k) for k in harmonics]
    out = []
    for n1 in range(n_max + 1):
        n = (n1,) + (0,) * (grid.d - 1)
        for prof in profs:
            for amp in ((1.0, 0.0), (0.0, 1.0)):
                f = mode_function(n, amp, prof)
                out.append(TestField.from_function(f, grid, times, kind))
    return out
