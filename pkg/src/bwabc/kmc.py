"""Exact continuous-time simulation of the boundary-driven dynamics.

The generator already carries the diffusive factor N^2, so a run of length T
is macroscopic time T. Tilted runs freeze the space-time tilt on a fixed
re-rating grid and refresh all rates at each grid point.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .fields import SpaceGrid, SpaceTimeFunction
from .lattice import Lattice, LatticeError, ModelParams, reservoir_rates
from .thermo import Profile

UNIFORM_BLOCK = 1 << 16
# Points per call into the tilted kernel.
RERATE_CHUNK = 512
# Fewer expected right-face events than this and the slowed boundary is
# flagged as statistically invisible.
MIN_BOUNDARY_EVENTS = 100


class KMCError(RuntimeError):
    pass


def rng_stream(seed: int, replica: int = 0, purpose: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replica, purpose)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica), int(purpose)])))


@dataclass
class SimParams:
    model: ModelParams
    lattice: Lattice
    T: float
    snapshots: Sequence[float] = ()
    seed: int = 0
    replica: int = 0
    tilt: SpaceTimeFunction | None = None
    rerate: float | None = None
    # Replace (left, right) boundary speeds, e.g. to give both faces the same speed.
    speeds: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise KMCError("horizon T must be positive")
        s = np.asarray(self.snapshots, dtype=float)
        if s.size and (s.min() < 0 or s.max() > self.T):
            raise KMCError("snapshot times must lie in [0, T]")
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise KMCError("snapshot times must be strictly increasing")
        if self.model.d != self.lattice.d:
            raise KMCError("model and lattice dimensions differ")
        if self.tilt is not None:
            left = self.lattice.positions[self.lattice.left_sites]
            h = self.tilt.evaluate(np.linspace(0, self.T, 5), left)["value"]
            if np.any(h != 0.0):
                raise KMCError("tilt must vanish on the left boundary")

    @property
    def rerate_interval(self) -> float:
        if self.rerate is not None:
            return float(self.rerate)
        return min(0.1 / self.lattice.N ** 2, self.T / 1e4)

    def boundary_speeds(self) -> tuple[float, float]:
        N = float(self.lattice.N)
        if self.speeds is not None:
            left, right = self.speeds
        else:
            left, right = N ** (2 - self.model.al), N ** (2 - self.model.ar)
        return (left if self.model.left_on else 0.0, right if self.model.right_on else 0.0)

    def bulk_speed(self) -> float:
        return float(self.lattice.N) ** 2 if self.model.bulk_on else 0.0

    def fingerprint(self) -> str:
        lat = self.lattice
        faces = np.concatenate([lat.left_sites, lat.right_sites])
        b = np.stack(self.model.b_profile(lat.positions[faces]), axis=-1)
        blob = {
            "N": lat.N, "d": lat.d, "E1": self.model.E1.tolist(), "E2": self.model.E2.tolist(),
            "a1": self.model.a1, "a2": self.model.a2, "al": self.model.al, "ar": self.model.ar,
            "switches": [self.model.bulk_on, self.model.left_on, self.model.right_on],
            "T": self.T, "speeds": self.speeds, "rerate": self.rerate_interval,
            "b": hashlib.sha256(b.tobytes()).hexdigest(),
        }
        if self.tilt is not None:
            pts = lat.positions
            h = self.tilt.evaluate(np.linspace(0, self.T, 7), pts)["value"]
            blob["tilt"] = hashlib.sha256(h.tobytes()).hexdigest()
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


class EventTable:
    """All enabled events of a configuration with their rates, in a sum tree.

    Leaves 0..n_bonds-1 are bond exchanges; then three leaves per boundary
    site, one for each target spin -1, 0, +1.
    """

    def __init__(self, sigma: np.ndarray, p: SimParams, t: float = 0.0):
        lat = p.lattice
        self.lattice = lat
        b = lat.bonds
        self.bonds = np.ascontiguousarray(b[:, :2])
        k = b[:, 2]
        N2 = 2.0 * lat.N
        self.bond_e = np.stack([p.model.E1[k] / N2, p.model.E2[k] / N2], axis=1)
        site_bonds = [[] for _ in range(lat.n_sites)]
        for i, (x, y) in enumerate(self.bonds):
            site_bonds[x].append(i)
            site_bonds[y].append(i)
        width = max(1, max(len(s) for s in site_bonds))
        self.site_bonds = np.full((lat.n_sites, width), -1, dtype=np.int64)
        for x, s in enumerate(site_bonds):
            self.site_bonds[x, :len(s)] = s
        self.scale = p.bulk_speed()
        left_speed, right_speed = p.boundary_speeds()
        slots = np.concatenate([lat.left_sites, lat.right_sites]).astype(np.int64)
        speeds = np.concatenate([np.full(lat.left_sites.size, left_speed),
                                 np.full(lat.right_sites.size, right_speed)])
        self.slot_site = slots
        self.slot_of_site = np.full(lat.n_sites, -1, dtype=np.int64)
        self.slot_of_site[slots] = np.arange(slots.size)
        m, phi = p.model.b_profile(lat.positions[slots])
        if np.any(~((np.abs(m) <= phi) & (phi <= 1.0))):
            raise LatticeError("boundary datum outside I")
        down, empty, up = reservoir_rates(np.asarray(m), np.asarray(phi))
        self.slot_base = np.stack([down, empty, up], axis=1) * speeds[:, None]
        self.tilt = p.tilt
        h = self._tilt_at(t)
        self.bond_c = self.bond_e + (h[self.bonds[:, 1]] - h[self.bonds[:, 0]])
        self.slot_h = np.ascontiguousarray(h[slots])
        self.n_leaves = self.bonds.shape[0] + 3 * slots.size
        self.size = 1 << max(1, math.ceil(math.log2(max(2, self.n_leaves))))
        self.tree = np.zeros(2 * self.size)
        self.buf = np.zeros(self.n_leaves)
        self.sigma = sigma
        self.rebuild()

    def _tilt_at(self, t: float) -> np.ndarray:
        if self.tilt is None:
            return np.zeros((self.lattice.n_sites, 2))
        return self.tilt.evaluate([t], self.lattice.positions)["value"][0]

    def rebuild(self) -> None:
        """Recompute every leaf and internal node from scratch."""
        K.leaf_values(self.sigma, self.bonds, self.bond_c, self.scale, self.slot_site,
                      self.slot_base, self.slot_h, self.buf)
        self.tree[:] = 0.0
        self.tree[self.size:self.size + self.n_leaves] = self.buf
        K.rebuild(self.tree, self.size)

    @property
    def rates(self) -> np.ndarray:
        return self.tree[self.size:self.size + self.n_leaves].copy()

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def describe(self, leaf: int) -> tuple:
        nb = self.bonds.shape[0]
        if leaf < nb:
            return ("exchange", int(self.bonds[leaf, 0]), int(self.bonds[leaf, 1]))
        j, t = divmod(leaf - nb, 3)
        return ("flip", int(self.slot_site[j]), t - 1)

    def events(self) -> list[tuple[tuple, float]]:
        """Enabled events with positive rate."""
        r = self.rates
        return [(self.describe(i), float(r[i])) for i in np.nonzero(r > 0)[0]]

    def sample(self, u: float) -> int:
        """Leaf selected by a uniform u in [0, 1)."""
        return int(K.descend(self.tree, self.size, u * self.tree[1]))

    def kernel_args(self):
        return (self.tree, self.size, self.sigma, self.bonds, self.bond_c, self.scale,
                self.site_bonds, self.slot_of_site, self.slot_site, self.slot_base, self.slot_h)


def build_event_table(sigma: np.ndarray, p: SimParams, t: float = 0.0) -> EventTable:
    """Event table of `sigma` (shared, not copied) at time t."""
    sigma = _as_spins(sigma, p.lattice)
    return EventTable(sigma, p, t)


def _as_spins(sigma, lat: Lattice) -> np.ndarray:
    s = np.asarray(sigma)
    if s.size != lat.n_sites:
        raise LatticeError("configuration size does not match the lattice")
    if not np.all(np.isin(s, (-1, 0, 1))):
        raise LatticeError("spin values must lie in {-1, 0, 1}")
    return s if s.dtype == np.int8 else s.astype(np.int8)


_NO_WINDOW = np.array([np.inf, np.inf])


def step(state: np.ndarray, table: EventTable, rng: np.random.Generator) -> tuple[float, tuple]:
    """Perform one event on `state` (the table's own spin array).

    Returns the exponential holding time and a description of the event.
    """
    if table.sigma is not state:
        raise KMCError("state is not the configuration tracked by the table")
    total = table.total
    if not total > 0:
        raise KMCError("absorbing state: total rate is zero")
    u0, u1 = rng.random(2)
    dt = -math.log1p(-u0) / total
    leaf = int(K.descend(table.tree, table.size, u1 * total))
    event = table.describe(leaf)
    K.apply_leaf(leaf, table.tree, table.size, table.sigma, table.bonds, table.bond_c,
                 table.scale, table.site_bonds, table.slot_of_site, table.slot_site,
                 table.slot_base, table.slot_h, np.zeros((state.size, 5)),
                 np.zeros(state.size), 0.0, _NO_WINDOW)
    return dt, event


class Simulator:
    """Stateful driver around the compiled loop.

    The clock, the pending event time and the position in the uniform stream
    persist across calls, so stopping at snapshot times never changes the
    sample path.
    """

    def __init__(self, sigma: np.ndarray, p: SimParams, t0: float = 0.0):
        self.p = p
        self.sigma = np.array(_as_spins(sigma, p.lattice), dtype=np.int8, copy=True)
        self.table = EventTable(self.sigma, p, self._grid_time(t0) if p.tilt is not None else t0)
        self.rng = rng_stream(p.seed, p.replica, 1)
        self.uniforms = self.rng.random(UNIFORM_BLOCK)
        self.clock = np.array([t0, 0.0, 0.0])
        self.count = np.zeros(2, dtype=np.int64)
        n = self.sigma.size
        self.occ = np.zeros((n, 5))
        self.last = np.full(n, float(t0))
        self.window = _NO_WINDOW.copy()
        self._r = int(math.floor(t0 / p.rerate_interval + 1e-9)) if p.tilt is not None else 0

    def _grid_time(self, t: float) -> float:
        d = self.p.rerate_interval
        return math.floor(t / d + 1e-9) * d

    @property
    def t(self) -> float:
        return float(self.clock[0])

    @property
    def n_events(self) -> int:
        return int(self.count[1])

    def _refill(self) -> None:
        self.uniforms = self.rng.random(UNIFORM_BLOCK)
        self.count[0] = 0

    def set_window(self, t0: float, t1: float = np.inf) -> None:
        """Start accumulating time integrals of each site's spin on [t0, t1]."""
        K.flush_occupation(self.sigma, self.occ, self.last, self.t, self.window)
        self.occ[:] = 0.0
        self.window = np.array([float(t0), float(t1)])

    def occupation(self) -> dict:
        """Time averages over the window so far: m, phi and the law of each site."""
        K.flush_occupation(self.sigma, self.occ, self.last, self.t, self.window)
        span = min(self.t, self.window[1]) - self.window[0]
        if not span > 0:
            raise KMCError("empty averaging window")
        o = self.occ / span
        return {"m": o[:, 0], "phi": o[:, 1], "law": o[:, 2:], "span": span}

    def run_until(self, t_end: float) -> None:
        if t_end < self.t:
            raise KMCError("cannot run backwards in time")
        if self.p.tilt is None:
            self._run(t_end, np.iinfo(np.int64).max)
        else:
            self._run_tilted(t_end)

    def run_events(self, n: int) -> None:
        """Apply exactly n further events (untilted dynamics only)."""
        if self.p.tilt is not None:
            raise KMCError("event-count runs need time-independent rates")
        target = self.n_events + int(n)
        while self.n_events < target:
            self._run(np.inf, target - self.n_events)

    def _run(self, t_stop: float, budget: int) -> None:
        status = K.NEED_UNIFORMS
        while status == K.NEED_UNIFORMS:
            start = self.n_events
            status = K.run(t_stop, budget, self.uniforms, self.clock, self.count, *self._core(),
                           self.occ, self.last, self.window)
            budget -= self.n_events - start
            if status == K.NEED_UNIFORMS:
                self._refill()
            elif status == K.ABSORBING:
                raise KMCError("absorbing state: total rate is zero")

    def _core(self):
        tb = self.table
        return (tb.tree, tb.size, self.sigma, tb.bonds, tb.bond_c, tb.scale, tb.site_bonds,
                tb.slot_of_site, tb.slot_site, tb.slot_base, tb.slot_h)

    def _run_tilted(self, t_end: float) -> None:
        tb = self.table
        d = self.p.rerate_interval
        pos = self.p.lattice.positions
        while True:
            r_lo = self._r
            t_grid = np.arange(r_lo, r_lo + RERATE_CHUNK + 1) * d
            if t_grid[0] >= t_end and self.t >= t_end:
                return
            h = np.ascontiguousarray(self.p.tilt.evaluate(t_grid[:-1], pos)["value"])
            rr = 0
            while True:
                status, rr = K.run_tilted(rr, t_grid, h, tb.bond_e, t_end, self.uniforms,
                                          self.clock, self.count, tb.tree, tb.size, self.sigma,
                                          tb.bonds, tb.bond_c, tb.scale, tb.site_bonds,
                                          tb.slot_of_site, tb.slot_site, 1.0, tb.slot_base,
                                          tb.slot_h, self.occ, self.last, self.window, tb.buf)
                if status == K.NEED_UNIFORMS:
                    self._refill()
                    continue
                if status == K.ABSORBING:
                    raise KMCError("absorbing state: total rate is zero")
                break
            self._r = r_lo + rr
            if rr < RERATE_CHUNK:
                return


@dataclass
class Trajectory:
    """Spin snapshots at increasing times with run metadata."""

    times: np.ndarray
    spins: np.ndarray
    lattice: Lattice
    meta: dict = field(default_factory=dict)
    final: np.ndarray | None = None

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise KMCError("snapshot times must be strictly increasing")

    @property
    def fields(self) -> np.ndarray:
        """Per-site (sigma, sigma^2), shape (n_snap, n_sites, 2)."""
        s = self.spins.astype(float)
        return np.stack([s, s * s], axis=-1)

    def to_discrete(self):
        """View the snapshots as node fields on the grid with M = N."""
        from .pde import DiscreteTrajectory

        lat = self.lattice
        grid = SpaceGrid(lat.N, lat.d, lat.N if lat.d > 1 else 0)
        f = self.fields.reshape((len(self.times),) + lat.shape + (2,))
        return DiscreteTrajectory(np.asarray(self.times, dtype=float), grid, f, meta=dict(self.meta))


def sample_initial(gamma: Profile, lat: Lattice, seed: int, replica: int = 0) -> np.ndarray:
    """Independent spins with P(+-1) = (phi +- m)/2 and P(0) = 1 - phi at gamma(x/N)."""
    m, phi = gamma(lat.positions)
    m = np.asarray(m, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(~((np.abs(m) < phi) & (phi < 1.0))):
        raise LatticeError("initial profile must take values inside I")
    u = rng_stream(seed, replica, 0).random(lat.n_sites)
    up = 0.5 * (phi + m)
    down = 0.5 * (phi - m)
    s = np.where(u < up, 1, np.where(u < up + down, -1, 0))
    return s.astype(np.int8)


def expected_boundary_events(p: SimParams) -> float:
    """Order-of-magnitude count of right-face events over the horizon."""
    right = p.boundary_speeds()[1]
    return right * p.lattice.right_sites.size * p.T


def simulate(initial: np.ndarray, p: SimParams) -> Trajectory:
    """Run to time T recording spin snapshots at ``p.snapshots``."""
    sim = Simulator(initial, p)
    times = np.asarray(p.snapshots, dtype=float)
    snaps = np.empty((times.size, p.lattice.n_sites), dtype=np.int8)
    for i, t in enumerate(times):
        sim.run_until(t)
        snaps[i] = sim.sigma
    sim.run_until(p.T)
    meta = {
        "N": p.lattice.N, "d": p.lattice.d, "seed": int(p.seed), "replica": int(p.replica),
        "params_hash": p.fingerprint(), "events": sim.n_events,
        "tilted": p.tilt is not None,
        "right_boundary_unverifiable": bool(p.model.right_on and expected_boundary_events(p) < MIN_BOUNDARY_EVENTS),
    }
    return Trajectory(times, snaps, p.lattice, meta, final=sim.sigma.copy())
