import math

import numpy as np
import pytest

from bwabc import presets
from bwabc.fields import mode_function, zero_function, TimeProfile
from bwabc.kmc import (KMCError, SimParams, Simulator, build_event_table, expected_boundary_events,
                       rng_stream, sample_initial, simulate, step)
from bwabc.lattice import Lattice, LatticeError, ModelParams, coarse_grain_all
from bwabc.pde import solve_system
from bwabc.fields import SpaceGrid


def model(E1=0.0, E2=0.0, b=(0.0, 0.5), **kw):
    return ModelParams([E1], [E2], presets.constant(*b), **kw)


def sim_params(N=8, T=1.0, **kw):
    mkw = {k: kw.pop(k) for k in list(kw) if k in ("E1", "E2", "b", "al", "ar", "bulk_on", "left_on", "right_on")}
    return SimParams(model(**mkw), Lattice(N), T, **kw)


def test_constant_config_has_only_boundary_events():
    p = sim_params(N=6)
    for s in (-1, 0, 1):
        table = build_event_table(np.full(p.lattice.n_sites, s), p)
        kinds = {e[0] for e, _ in table.events()}
        assert kinds == {"flip"}


def test_five_site_table():
    p = sim_params(N=2)
    table = build_event_table(np.array([1, 0, 1, 0, 1]), p)
    ex = [(e, r) for e, r in table.events() if e[0] == "exchange"]
    assert len(ex) == 4
    assert all(r == pytest.approx(4.0, rel=1e-15) for _, r in ex)
    flips = [(e, r) for e, r in table.events() if e[0] == "flip"]
    # each face site at +1 can go to 0 or to -1
    assert sorted((e[1], e[2]) for e, _ in flips) == [(0, -1), (0, 0), (4, -1), (4, 0)]
    left = {e[2]: r for e, r in flips if e[1] == 0}
    right = {e[2]: r for e, r in flips if e[1] == 4}
    assert left[0] == pytest.approx(0.5 * 4.0)
    assert right[-1] == pytest.approx(0.25 * 2 ** 0.5)
    assert table.total == pytest.approx(sum(table.rates))


def test_zero_tilt_table_is_untilted_table():
    p0 = sim_params(N=5, E1=0.7)
    p1 = sim_params(N=5, E1=0.7, tilt=zero_function())
    s = np.random.default_rng(2).integers(-1, 2, p0.lattice.n_sites)
    np.testing.assert_array_equal(build_event_table(s, p0).rates, build_event_table(s, p1, 0.3).rates)


def test_tilt_must_vanish_on_left_face():
    from bwabc.fields import ramp_function

    class Shifted:
        is_zero = False

        def evaluate(self, times, pts):
            v = np.ones((len(times), pts.shape[0], 2))
            return {"value": v}

    with pytest.raises(KMCError):
        sim_params(tilt=Shifted())
    sim_params(tilt=ramp_function((1.0, 0.0)))


def test_single_enabled_event_is_chosen():
    p = sim_params(N=1, b=(1.0, 1.0), bulk_on=False, left_on=False)
    sigma = np.array([1, 1, 0], dtype=np.int8)
    table = build_event_table(sigma, p)
    assert len(table.events()) == 1
    rng = np.random.default_rng(0)
    dt, ev = step(sigma, table, rng)
    assert ev == ("flip", 2, 1)
    assert dt > 0
    assert sigma[2] == 1


def test_pick_frequency_one_to_three():
    # from spin 0 at (m, phi) = (0.4, 0.8): rate 0.2 to -1, 0.6 to +1
    p = sim_params(N=1, b=(0.4, 0.8), bulk_on=False, right_on=False)
    sigma = np.zeros(3, dtype=np.int8)
    table = build_event_table(sigma, p)
    r = sorted(r for _, r in table.events())
    assert r[1] / r[0] == pytest.approx(3.0)
    u = np.random.default_rng(11).random(100_000)
    picks = [table.describe(table.sample(x)) for x in u]
    n_up = sum(1 for e in picks if e[2] == 1)
    n = len(picks)
    mean = 0.75 * n
    sd = math.sqrt(n * 0.75 * 0.25)
    assert abs(n_up - mean) <= 3 * sd


def test_step_rejects_foreign_state():
    p = sim_params(N=3)
    s = np.zeros(p.lattice.n_sites, dtype=np.int8)
    table = build_event_table(s, p)
    with pytest.raises(KMCError):
        step(s.copy(), table, np.random.default_rng(0))


def test_bulk_only_run_conserves_moments():
    p = sim_params(N=50, E1=1.3, E2=-0.4, left_on=False, right_on=False)
    s0 = sample_initial(presets.sine_bump(), p.lattice, 3)
    sim = Simulator(s0, p)
    sim.run_events(1_000_000)
    assert sim.n_events == 1_000_000
    s = sim.sigma.astype(int)
    assert s.sum() == s0.astype(int).sum()
    assert (s * s).sum() == (s0.astype(int) ** 2).sum()


def test_event_table_total_after_many_updates():
    p = sim_params(N=40, E1=0.8, E2=0.3)
    sim = Simulator(sample_initial(presets.sine_bump(), p.lattice, 1), p)
    sim.run_events(1_000_000)
    before = sim.table.total
    sum_leaves = float(np.sum(sim.table.rates))
    sim.table.rebuild()
    assert abs(sim.table.total - before) <= 1e-9 * before
    assert abs(sum_leaves - before) <= 1e-9 * before


def test_zero_snapshots_and_final_state():
    p = sim_params(N=6, T=0.2)
    tr = simulate(sample_initial(presets.sine_bump(), p.lattice, 0), p)
    assert tr.times.size == 0 and tr.spins.shape == (0, p.lattice.n_sites)
    assert np.all(np.isin(tr.final, (-1, 0, 1)))
    assert tr.meta["events"] > 0


def test_determinism_byte_for_byte():
    p = sim_params(N=10, T=0.3, snapshots=(0.1, 0.2, 0.3), E1=1.0, seed=9)
    s0 = sample_initial(presets.sine_bump(), p.lattice, 9)
    a = simulate(s0, p)
    b = simulate(s0.copy(), p)
    assert a.spins.tobytes() == b.spins.tobytes()
    assert a.meta == b.meta


def test_zero_tilt_equals_untilted_run():
    kw = dict(N=10, T=0.3, snapshots=(0.05, 0.15, 0.3), E1=0.5, seed=4)
    s0 = sample_initial(presets.sine_bump(), Lattice(10), 4)
    a = simulate(s0, sim_params(**kw))
    b = simulate(s0, sim_params(tilt=zero_function(), **kw))
    np.testing.assert_array_equal(a.spins, b.spins)
    np.testing.assert_array_equal(a.final, b.final)
    assert a.meta["events"] == b.meta["events"]


def test_snapshots_do_not_change_the_path():
    kw = dict(N=10, T=0.3, E1=0.5, seed=4)
    s0 = sample_initial(presets.sine_bump(), Lattice(10), 4)
    a = simulate(s0, sim_params(snapshots=(0.3,), **kw))
    b = simulate(s0, sim_params(snapshots=(0.01, 0.1, 0.2, 0.3), **kw))
    np.testing.assert_array_equal(a.spins[-1], b.spins[-1])


def test_independent_streams():
    a = rng_stream(1, 0, 1).random(4)
    b = rng_stream(1, 1, 1).random(4)
    c = rng_stream(1, 0, 0).random(4)
    assert not np.allclose(a, b) and not np.allclose(a, c)
    np.testing.assert_array_equal(a, rng_stream(1, 0, 1).random(4))


def test_matched_product_measure_is_stationary():
    # E = 0, boundary and initial law both (0, 2/3): time averages stay there
    N, R = 16, 32
    means = []
    for r in range(R):
        p = sim_params(N=N, T=1.0, b=(0.0, 2 / 3), seed=5, replica=r)
        sim = Simulator(sample_initial(presets.constant(0.0, 2 / 3), p.lattice, 5, r), p)
        sim.run_until(0.5)
        sim.set_window(0.5, 1.0)
        sim.run_until(1.0)
        occ = sim.occupation()
        means.append((occ["m"].mean(), occ["phi"].mean()))
    means = np.array(means)
    se = means.std(axis=0, ddof=1) / math.sqrt(R)
    assert abs(means[:, 0].mean() - 0.0) <= 3 * se[0] + 1e-12
    assert abs(means[:, 1].mean() - 2 / 3) <= 3 * se[1] + 1e-12


def test_pair_correlations_match_product_measure():
    # equal boundary speeds and E = 0: the product measure at b is reversible
    N, R = 16, 8
    b = (0.2, 0.6)
    est = []
    for r in range(R):
        lat = Lattice(N)
        p = SimParams(model(b=b), lat, 3.0, snapshots=tuple(np.linspace(1.0, 3.0, 21)), seed=7,
                      replica=r, speeds=(N ** 2, N ** 2))
        tr = simulate(sample_initial(presets.constant(*b), lat, 7, r), p)
        s = tr.spins.astype(float)
        est.append(np.mean(s[:, :-1] * s[:, 1:]))
    est = np.array(est)
    se = est.std(ddof=1) / math.sqrt(R)
    assert abs(est.mean() - b[0] ** 2) <= 3 * se


def test_sample_initial_rejects_boundary_profile():
    with pytest.raises(LatticeError):
        sample_initial(presets.constant(1.0, 1.0), Lattice(5), 0)


def test_sample_initial_marginal_chi_square():
    lat = Lattice(50_000)
    s = sample_initial(presets.constant(0.0, 2 / 3), lat, 123)
    counts = np.array([(s == v).sum() for v in (-1, 0, 1)])
    expected = lat.n_sites / 3
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 9.21  # 99% quantile, 2 degrees of freedom


def test_sample_initial_clt_rate():
    gamma = presets.sine_bump()
    # int_{-1}^{1} of the magnetisation profile, spacing 1/N, summed exactly
    errs = {}
    for N in (100, 10_000):
        lat = Lattice(N)
        m_exact = float(np.sum(gamma(lat.positions).m) / N)
        e = [abs(sample_initial(gamma, lat, 1, r).astype(float).sum() / N - m_exact) for r in range(40)]
        errs[N] = math.sqrt(np.mean(np.square(e)))
    ratio = errs[100] / errs[10_000]
    assert 5.0 < ratio < 20.0  # sqrt(10^4 / 10^2) = 10


def test_boundary_event_flag():
    p = sim_params(N=256, T=0.5)
    assert expected_boundary_events(p) == pytest.approx(16 * 0.5)
    tr = simulate(np.zeros(p.lattice.n_sites, dtype=np.int8), SimParams(p.model, p.lattice, 0.001))
    assert tr.meta["right_boundary_unverifiable"]


def test_simulator_tracks_pde_better_with_larger_N():
    gamma = presets.sine_bump()
    T = 0.1
    grid = SpaceGrid(100)
    pde = solve_system(gamma, (0.0, 0.5), (0.0, 0.0), None, grid, grid.dx ** 2 / 4, T)
    out = []
    for N in (100, 200):
        lat = Lattice(N)
        d = []
        for r in range(3):
            p = SimParams(model(), lat, T, (T,), seed=2, replica=r)
            tr = simulate(sample_initial(gamma, lat, 2, r), p)
            cg = np.stack(coarse_grain_all(tr.spins[0], lat, int(0.05 * N)), axis=-1)
            ref = np.stack([np.interp(lat.positions[:, 0], grid.x1, pde.fields[-1][:, i]) for i in (0, 1)], axis=-1)
            d.append(np.abs(cg - ref).sum() / N)
        out.append(np.mean(d))
    assert out[1] < out[0]


def test_tilted_run_moves_towards_tilted_solution():
    gamma = presets.sine_bump()
    T = 0.2
    H = mode_function(0, (1.5, 0.0), TimeProfile("const"))
    N = 64
    lat = Lattice(N)
    grid = SpaceGrid(64)
    plain = solve_system(gamma, (0.0, 0.5), (0.0, 0.0), None, grid, grid.dx ** 2 / 4, T)
    tilt = solve_system(gamma, (0.0, 0.5), (0.0, 0.0), H, grid, grid.dx ** 2 / 4, T)
    mean = np.zeros(lat.n_sites)
    R = 6
    for r in range(R):
        p = SimParams(model(), lat, T, (T,), seed=3, replica=r, tilt=H)
        mean += simulate(sample_initial(gamma, lat, 3, r), p).spins[0] / R
    x = lat.positions[:, 0]
    d_tilt = np.abs(mean - np.interp(x, grid.x1, tilt.fields[-1][:, 0])).mean()
    d_plain = np.abs(mean - np.interp(x, grid.x1, plain.fields[-1][:, 0])).mean()
    assert d_tilt < d_plain


def test_run_backwards_and_window_errors():
    p = sim_params(N=4)
    sim = Simulator(np.zeros(p.lattice.n_sites), p)
    sim.run_until(0.1)
    with pytest.raises(KMCError):
        sim.run_until(0.05)
    sim.set_window(0.1)
    with pytest.raises(KMCError):
        sim.occupation()
