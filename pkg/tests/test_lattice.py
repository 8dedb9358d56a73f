import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bwabc import presets
from bwabc.lattice import (Lattice, LatticeError, ModelParams, boundary_events, boundary_rates,
                           coarse_grain, coarse_grain_all, empirical_fields, exchange_rate,
                           from_bytes, hamiltonian, integrate_empirical, reservoir_rates, swap,
                           to_bytes)


def params(E1=(0.0,), E2=(0.0,), b=(0.0, 0.5), **kw):
    return ModelParams(np.array(E1, float), np.array(E2, float), presets.constant(*b), **kw)


def global_hamiltonian(sigma, p, lat):
    # site-by-site loop, independent of the vectorised version
    total = 0.0
    for x in range(lat.n_sites):
        u = lat.coords[x] / lat.N
        s = float(sigma[x])
        total -= s * float(np.dot(u, p.E1)) + s * s * float(np.dot(u, p.E2))
        total -= p.a1 * s + p.a2 * s * s
    return total


def test_lattice_geometry():
    lat = Lattice(3)
    assert lat.n_sites == 7
    assert lat.positions[0, 0] == -1.0 and lat.positions[-1, 0] == 1.0
    assert lat.bonds.shape == (6, 3)
    assert list(lat.left_sites) == [0] and list(lat.right_sites) == [6]
    assert lat.direction(2, 3) == (0, 1)
    assert lat.direction(3, 2) == (0, -1)
    with pytest.raises(LatticeError):
        lat.direction(1, 3)


def test_lattice_two_dimensional_wraps():
    lat = Lattice(4, 2)
    assert lat.n_sites == 9 * 4
    assert lat.bonds.shape[0] == 8 * 4 + 9 * 4
    x = lat.index((0, 3))
    y = lat.index((0, 0))
    assert lat.direction(x, y) == (1, 1)
    assert lat.left_sites.size == 4


def test_hamiltonian_examples():
    lat = Lattice(1)
    p = params(E1=(1.0,))
    assert hamiltonian(np.zeros(3), p, lat) == 0.0
    assert hamiltonian(np.array([1, 1, 1]), p, lat) == 0.0
    p = params(E1=(1.0,), a1=1.0)
    assert hamiltonian(np.array([1, 0, 0]), p, lat) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_hamiltonian_matches_site_loop(N, seed):
    rng = np.random.default_rng(seed)
    lat = Lattice(N)
    p = params(E1=rng.normal(size=1), E2=rng.normal(size=1), a1=rng.normal(), a2=rng.normal())
    s = rng.integers(-1, 2, lat.n_sites)
    assert hamiltonian(s, p, lat) == pytest.approx(global_hamiltonian(s, p, lat), rel=1e-12, abs=1e-12)


def test_exchange_rate_examples():
    lat = Lattice(5)
    s = np.zeros(lat.n_sites, dtype=int)
    rng = np.random.default_rng(0)
    s0 = rng.integers(-1, 2, lat.n_sites)
    for x, y, _ in lat.bonds:
        assert exchange_rate(s0, x, y, params(), lat) == 1.0
    s[4] = 1
    assert exchange_rate(s, 4, 5, params(E1=(1.0,)), lat) == pytest.approx(math.exp(1 / (2 * 5)), rel=1e-15)


def test_detailed_balance_random_cases():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        N = int(rng.integers(1, 7))
        d = int(rng.integers(1, 3))
        lat = Lattice(max(N, 3) if d == 2 else N, d)
        p = params(E1=rng.normal(0, 3, d), E2=rng.normal(0, 3, d), a1=rng.normal(), a2=rng.normal())
        s = rng.integers(-1, 2, lat.n_sites)
        # a linear field has no single-valued potential across a transverse wrap
        bonds = [b for b in lat.bonds if np.abs(lat.coords[b[1]] - lat.coords[b[0]]).sum() == 1]
        x, y, _ = bonds[rng.integers(len(bonds))]
        if rng.random() < 0.5:
            x, y = y, x
        s2 = swap(s, x, y)
        lhs = exchange_rate(s, x, y, p, lat) * math.exp(-global_hamiltonian(s, p, lat))
        rhs = exchange_rate(s2, y, x, p, lat) * math.exp(-global_hamiltonian(s2, p, lat))
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
        # local closed form against the global energy difference
        dH = global_hamiltonian(s2, p, lat) - global_hamiltonian(s, p, lat)
        assert exchange_rate(s, x, y, p, lat) == pytest.approx(math.exp(-dH / 2), rel=1e-12)
    assert worst <= 1e-12


@given(st.lists(st.integers(-1, 1), min_size=7, max_size=7), st.integers(0, 5))
def test_swap_conserves_moments(spins, i):
    s = np.array(spins)
    t = swap(s, i, i + 1)
    assert t.sum() == s.sum()
    assert (t * t).sum() == (s * s).sum()


def test_boundary_events_examples():
    lat = Lattice(4)
    s = np.zeros(lat.n_sites, dtype=int)
    ev = dict(boundary_events(s, 0, params(b=(0.0, 2 / 3)), lat))
    assert ev[1] == pytest.approx(1 / 3) and ev[-1] == pytest.approx(1 / 3)
    for spin in (1, -1):
        assert dict(boundary_rates(0.3, 1.0, spin))[0] == 0.0
    with pytest.raises(LatticeError):
        boundary_events(s, 3, params(), lat)


def stationary_law(m, phi):
    # solve pi Q = 0 for the three-state reservoir chain
    states = (-1, 0, 1)
    Q = np.zeros((3, 3))
    for i, s in enumerate(states):
        for t, r in boundary_rates(m, phi, s):
            Q[i, states.index(t)] += r
            Q[i, i] -= r
    A = np.vstack([Q.T, np.ones(3)])
    pi = np.linalg.lstsq(A, np.array([0, 0, 0, 1.0]), rcond=None)[0]
    return dict(zip(states, pi))


@settings(max_examples=100)
@given(st.floats(0.01, 0.99), st.floats(-0.99, 0.99))
def test_reservoir_chain_stationary_law(phi, s):
    m = s * phi
    pi = stationary_law(m, phi)
    assert pi[1] == pytest.approx((phi + m) / 2, abs=1e-10)
    assert pi[-1] == pytest.approx((phi - m) / 2, abs=1e-10)
    assert pi[0] == pytest.approx(1 - phi, abs=1e-10)
    assert reservoir_rates(m, phi) == pytest.approx(((phi - m) / 2, 1 - phi, (phi + m) / 2))


def test_empirical_fields_examples():
    lat = Lattice(10)
    z = empirical_fields(np.zeros(lat.n_sites), lat)
    assert not z.m.any() and not z.phi.any()
    ones = empirical_fields(np.ones(lat.n_sites), lat)
    assert integrate_empirical(ones, lat) == pytest.approx((21 / 10, 21 / 10))
    s = np.random.default_rng(1).integers(-1, 2, lat.n_sites)
    f = empirical_fields(s, lat)
    np.testing.assert_array_equal(f.phi, f.m ** 2)
    tot = integrate_empirical(f, lat)
    assert abs(tot[0]) <= 2 + 1 / lat.N and tot[1] <= 2 + 1 / lat.N


def test_coarse_grain_examples():
    lat = Lattice(5)
    for s in (-1, 0, 1):
        assert coarse_grain(np.full(lat.n_sites, s), 5, 2, lat) == (s, s * s)
    sig = np.zeros(lat.n_sites, dtype=int)
    sig[4:7] = (1, -1, 0)
    m, phi = coarse_grain(sig, 5, 1, lat)
    assert m == pytest.approx(0.0) and phi == pytest.approx(2 / 3)
    alt = np.array([(-1) ** i for i in range(lat.n_sites)])
    for ell in (1, 2, 3):
        m, phi = coarse_grain(alt, 5, ell, lat)
        assert abs(m) in (0.0, pytest.approx(1 / (2 * ell + 1)))
        assert phi == 1.0


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(0, 4), st.integers(0, 2 ** 31), st.integers(1, 2))
def test_coarse_grain_all_matches_pointwise(N, ell, seed, d):
    if d == 2:
        N = max(N, 3)
    lat = Lattice(N, d)
    s = np.random.default_rng(seed).integers(-1, 2, lat.n_sites)
    m, phi = coarse_grain_all(s, lat, ell)
    assert np.all(np.abs(m) <= phi + 1e-15) and np.all(phi <= 1.0)
    for x in range(0, lat.n_sites, max(1, lat.n_sites // 7)):
        mx, px = coarse_grain(s, x, ell, lat)
        assert m[x] == pytest.approx(mx, abs=1e-12)
        assert phi[x] == pytest.approx(px, abs=1e-12)


def test_serialisation_roundtrip():
    lat = Lattice(6, 2)
    s = np.random.default_rng(5).integers(-1, 2, lat.n_sites).astype(np.int8)
    buf = to_bytes(s, lat)
    assert buf.startswith(b"BWABC1")
    s2, lat2 = from_bytes(buf)
    assert lat2 == lat
    np.testing.assert_array_equal(s2, s)
    with pytest.raises(LatticeError):
        from_bytes(b"XXXXXX" + buf[6:])
    with pytest.raises(LatticeError):
        from_bytes(buf[:-1])
    with pytest.raises(LatticeError):
        to_bytes(np.full(lat.n_sites, 2), lat)


def test_model_params_validation():
    with pytest.raises(LatticeError):
        params(al=1.0)
    with pytest.raises(LatticeError):
        params(ar=1.0)
    with pytest.raises(LatticeError):
        ModelParams(np.zeros(1), np.zeros(2), presets.constant())
