"""Discrete cylinder, spin configurations, Hamiltonian and jump rates.

Sites of Lambda_N = {-N..N} x T_N^{d-1} are stored flat; the first
coordinate is the slow (non-periodic) axis, so in one dimension site ``i``
has position ``x1 = i - N``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .thermo import DensityPair, Profile

MAGIC = b"BWABC1"


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    N: int
    d: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise LatticeError("N must be a positive integer")
        if self.d < 1:
            raise LatticeError("dimension must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.N + 1,) + (self.N,) * (self.d - 1)

    @property
    def n_sites(self) -> int:
        return (2 * self.N + 1) * self.N ** (self.d - 1)

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer coordinates, shape (n_sites, d)."""
        axes = [np.arange(-self.N, self.N + 1)] + [np.arange(self.N)] * (self.d - 1)
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def positions(self) -> np.ndarray:
        """Macroscopic positions x/N, shape (n_sites, d)."""
        return self.coords / float(self.N)

    def index(self, x) -> int:
        x = tuple(int(c) for c in np.atleast_1d(x))
        if len(x) != self.d:
            raise LatticeError("coordinate has wrong dimension")
        if not -self.N <= x[0] <= self.N:
            raise LatticeError("site outside the cylinder")
        rest = [c % self.N for c in x[1:]]
        return int(np.ravel_multi_index((x[0] + self.N, *rest), self.shape))

    @cached_property
    def bonds(self) -> np.ndarray:
        """Nearest-neighbour bonds (x, x + e_k, k), shape (n_bonds, 3).

        The first direction is open; the transverse directions wrap.
        """
        idx = np.arange(self.n_sites).reshape(self.shape)
        out = []
        for k in range(self.d):
            if k == 0:
                a = idx[:-1].ravel()
                b = idx[1:].ravel()
            else:
                if self.N < 2:
                    continue
                if self.N == 2:
                    # On a two-site ring both neighbours coincide; keep one bond.
                    sl = [slice(None)] * self.d
                    sl[k] = slice(0, 1)
                    a = idx[tuple(sl)].ravel()
                    b = np.roll(idx, -1, axis=k)[tuple(sl)].ravel()
                else:
                    a = idx.ravel()
                    b = np.roll(idx, -1, axis=k).ravel()
            out.append(np.stack([a, b, np.full(a.size, k)], axis=1))
        return np.concatenate(out).astype(np.int64)

    @cached_property
    def left_sites(self) -> np.ndarray:
        return np.nonzero(self.coords[:, 0] == -self.N)[0]

    @cached_property
    def right_sites(self) -> np.ndarray:
        return np.nonzero(self.coords[:, 0] == self.N)[0]

    def direction(self, x: int, y: int) -> tuple[int, int]:
        """Return (k, sign) with y = x + sign * e_k, or raise for non-adjacent sites."""
        diff = self.coords[y] - self.coords[x]
        for k in range(1, self.d):
            r = diff[k] % self.N
            diff[k] = 1 if r == 1 else (-1 if r == self.N - 1 else (0 if r == 0 else 2))
        nz = np.nonzero(diff)[0]
        if len(nz) != 1 or abs(diff[nz[0]]) != 1:
            raise LatticeError("sites are not nearest neighbours")
        return int(nz[0]), int(diff[nz[0]])


@dataclass
class ModelParams:
    """Parameters of the boundary-driven weakly asymmetric dynamics.

    ``E1`` and ``E2`` are the d-vectors of the weak fields acting on sigma and
    sigma**2; ``b_profile`` supplies the reservoir densities through its trace
    on the boundary faces.
    """

    E1: np.ndarray
    E2: np.ndarray
    b_profile: Profile
    a1: float = 0.0
    a2: float = 0.0
    al: float = 0.0
    ar: float = 1.5
    bulk_on: bool = True
    left_on: bool = True
    right_on: bool = True

    def __post_init__(self):
        self.E1 = np.atleast_1d(np.asarray(self.E1, dtype=float))
        self.E2 = np.atleast_1d(np.asarray(self.E2, dtype=float))
        if self.E1.shape != self.E2.shape:
            raise LatticeError("E1 and E2 must have the same dimension")
        if not 0.0 <= self.al < 1.0:
            raise LatticeError("left boundary exponent al must lie in [0, 1)")
        if not self.ar > 1.0:
            raise LatticeError("right boundary exponent ar must exceed 1")

    @property
    def d(self) -> int:
        return self.E1.size

    def E_pair(self, k: int) -> np.ndarray:
        """The 2-vector (E^1_k, E^2_k) driving direction k."""
        return np.array([self.E1[k], self.E2[k]])

    def boundary_datum(self, u) -> DensityPair:
        return self.b_profile(u)


def hamiltonian(sigma: np.ndarray, p: ModelParams, lat: Lattice) -> float:
    """Global energy -sum_i sum_x sigma^i h_i(x/N) - a1 sum sigma - a2 sum sigma^2."""
    s = np.asarray(sigma, dtype=float)
    u = lat.positions
    h1 = u @ p.E1
    h2 = u @ p.E2
    s2 = s * s
    return float(-(s @ h1) - (s2 @ h2) - p.a1 * s.sum() - p.a2 * s2.sum())


def exchange_rate(sigma: np.ndarray, x: int, y: int, p: ModelParams,
                  lat: Lattice) -> float:
    """Rate exp(-grad_{x,y} H / 2) of exchanging the spins at adjacent x, y.

    Uses the local closed form: only the field terms change under the swap,
    each by (sigma(x)^i - sigma(y)^i) E^i_k / N for y = x + e_k.
    """
    k, sgn = lat.direction(x, y)
    sx, sy = float(sigma[x]), float(sigma[y])
    if sx == sy:
        return 1.0
    arg = sgn * ((sx - sy) * p.E1[k] + (sx * sx - sy * sy) * p.E2[k])
    return float(np.exp(arg / (2.0 * lat.N)))


def swap(sigma: np.ndarray, x: int, y: int) -> np.ndarray:
    out = np.array(sigma, copy=True)
    out[x], out[y] = sigma[y], sigma[x]
    return out


def reservoir_rates(m, phi):
    """Rates (to -1, to 0, to +1) of a reservoir at densities (m, phi).

    The rate into a state does not depend on the current spin.
    """
    return 0.5 * (phi - m), 1.0 - phi, 0.5 * (phi + m)


def boundary_rates(m: float, phi: float, s: int) -> list[tuple[int, float]]:
    """Reservoir transitions (new spin, rate) from spin `s` at densities (m, phi)."""
    down, empty, up = reservoir_rates(m, phi)
    if s == 1:
        return [(0, empty), (-1, down)]
    if s == -1:
        return [(0, empty), (1, up)]
    if s == 0:
        return [(1, up), (-1, down)]
    raise LatticeError("spin values must lie in {-1, 0, 1}")


def boundary_events(sigma: np.ndarray, x: int, p: ModelParams,
                    lat: Lattice) -> list[tuple[int, float]]:
    """Reservoir transitions at boundary site `x`, before the speed factor."""
    if lat.coords[x, 0] not in (-lat.N, lat.N):
        raise LatticeError("site is not on a boundary face")
    m, phi = p.boundary_datum(lat.positions[x][None, :])
    m, phi = float(m[0]), float(phi[0])
    # Faces on the closure of I (phi = 1 or |m| = phi) are admissible limits.
    if not abs(m) <= phi <= 1.0:
        raise LatticeError("boundary datum outside I")
    return boundary_rates(m, phi, int(sigma[x]))


def empirical_fields(sigma: np.ndarray, lat: Lattice) -> DensityPair:
    """Per-site atoms (sigma(x), sigma(x)^2); each has mass N^{-d}."""
    s = np.asarray(sigma, dtype=float)
    return DensityPair(s, s * s)


def integrate_empirical(fields: DensityPair, lat: Lattice, G=None) -> tuple[float, float]:
    """<pi^{N,i}, G_i> for the empirical measures (G defaults to 1)."""
    w = lat.N ** (-lat.d)
    if G is None:
        return float(w * np.sum(fields[0])), float(w * np.sum(fields[1]))
    g1, g2 = G
    return float(w * np.sum(fields[0] * g1)), float(w * np.sum(fields[1] * g2))


def _box_mean_axis(a: np.ndarray, ell: int, axis: int, periodic: bool) -> np.ndarray:
    n = a.shape[axis]
    a = np.moveaxis(a, axis, 0)
    if periodic:
        if 2 * ell + 1 >= n:
            out = np.broadcast_to(a.mean(axis=0, keepdims=True), a.shape)
        else:
            ext = np.concatenate([a[-ell:], a, a[:ell]]) if ell else a
            c = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(ext, axis=0)])
            out = (c[2 * ell + 1:] - c[:n]) / (2 * ell + 1)
    else:
        c = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
        i = np.arange(n)
        lo = np.clip(i - ell, 0, n)
        hi = np.clip(i + ell + 1, 0, n)
        cnt = (hi - lo).reshape((-1,) + (1,) * (a.ndim - 1))
        out = (c[hi] - c[lo]) / cnt
    return np.moveaxis(np.asarray(out), 0, axis)


def coarse_grain_all(sigma: np.ndarray, lat: Lattice, ell: int) -> DensityPair:
    """Box averages of (sigma, sigma^2) over Lambda_ell(x) for every site x."""
    if ell < 0:
        raise LatticeError("box radius must be non-negative")
    s = np.asarray(sigma, dtype=float).reshape(lat.shape)
    out = []
    for f in (s, s * s):
        for ax in range(lat.d):
            f = _box_mean_axis(f, ell, ax, periodic=ax > 0)
        out.append(f.ravel())
    return DensityPair(out[0], out[1])


def coarse_grain(sigma: np.ndarray, x: int, ell: int, lat: Lattice) -> DensityPair:
    """Empirical mean of (sigma, sigma^2) on the box of radius ell around x."""
    c = lat.coords
    diff = np.abs(c - c[x])
    if lat.d > 1:
        diff[:, 1:] = np.minimum(diff[:, 1:], lat.N - diff[:, 1:])
    mask = np.all(diff <= ell, axis=1)
    s = np.asarray(sigma, dtype=float)[mask]
    return DensityPair(float(s.mean()), float((s * s).mean()))


def to_bytes(sigma: np.ndarray, lat: Lattice) -> bytes:
    """Serialise a configuration: magic, little-endian (N, d), int8 spins."""
    s = np.asarray(sigma)
    if s.size != lat.n_sites:
        raise LatticeError("configuration size does not match the lattice")
    if not np.all(np.isin(s, (-1, 0, 1))):
        raise LatticeError("spin values must lie in {-1, 0, 1}")
    return MAGIC + struct.pack("<II", lat.N, lat.d) + s.astype("<i1").tobytes()


def from_bytes(buf: bytes) -> tuple[np.ndarray, Lattice]:
    if buf[:len(MAGIC)] != MAGIC:
        raise LatticeError("not a BWABC1 configuration")
    N, d = struct.unpack_from("<II", buf, len(MAGIC))
    lat = Lattice(N, d)
    body = np.frombuffer(buf, dtype="<i1", offset=len(MAGIC) + 8)
    if body.size != lat.n_sites:
        raise LatticeError("truncated configuration")
    return body.astype(np.int8), lat
