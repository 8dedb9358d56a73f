"""Compiled inner loops of the jump-process simulator.

Leaves of the sum tree: one per bond (rate 0 when the two spins agree), then
three per boundary slot indexed by the target spin + 1 (rate 0 for the current
spin). Internal node i holds tree[2i] + tree[2i+1]; every update recomputes
the path to the root from the children, so the stored totals never drift.

State scalars live in small arrays so the Python driver can stop and resume
the loop at any point without losing a pending event time:
    clock[0] = t, clock[1] = pending event time, clock[2] = 1.0 if pending
    count[0] = next unused uniform, count[1] = events applied
"""
from __future__ import annotations

import numpy as np
from numba import njit

STOPPED = 0       # reached the stop time
NEED_UNIFORMS = 1  # uniform buffer exhausted; refill and call again
MAX_EVENTS = 2    # event budget for this call used up
ABSORBING = 3     # total rate is zero and no stop time is finite


@njit(cache=True)
def bond_rate(sx, sy, c1, c2, scale):
    if sx == sy:
        return 0.0
    fx = float(sx)
    fy = float(sy)
    return scale * np.exp((fx - fy) * c1 + (fx * fx - fy * fy) * c2)


@njit(cache=True)
def slot_rate(s, target, base, h1, h2):
    if s == target:
        return 0.0
    fs = float(s)
    ft = float(target)
    return base[target + 1] * np.exp((ft - fs) * h1 + (ft * ft - fs * fs) * h2)


@njit(cache=True)
def set_leaf(tree, size, i, v):
    j = size + i
    tree[j] = v
    j >>= 1
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j >>= 1


@njit(cache=True)
def rebuild(tree, size):
    for j in range(size - 1, 0, -1):
        tree[j] = tree[2 * j] + tree[2 * j + 1]


@njit(cache=True)
def descend(tree, size, r):
    """Leaf index whose cumulative-rate interval contains r in [0, total)."""
    j = 1
    while j < size:
        left = tree[2 * j]
        right = tree[2 * j + 1]
        if right <= 0.0 or (r < left and left > 0.0):
            j = 2 * j
        else:
            r -= left
            j = 2 * j + 1
    return j - size


@njit(cache=True)
def leaf_values(sigma, bonds, bond_c, scale, slot_site, slot_base, slot_h, out):
    nb = bonds.shape[0]
    for b in range(nb):
        out[b] = bond_rate(sigma[bonds[b, 0]], sigma[bonds[b, 1]],
                           bond_c[b, 0], bond_c[b, 1], scale)
    for j in range(slot_site.shape[0]):
        s = sigma[slot_site[j]]
        for t in range(3):
            out[nb + 3 * j + t] = slot_rate(s, t - 1, slot_base[j], slot_h[j, 0], slot_h[j, 1])


@njit(cache=True)
def refresh(tree, size, sigma, bonds, bond_c, scale, slot_site, slot_base, slot_h, buf):
    """Recompute every leaf; return True when any leaf changed."""
    n = bonds.shape[0] + 3 * slot_site.shape[0]
    leaf_values(sigma, bonds, bond_c, scale, slot_site, slot_base, slot_h, buf)
    changed = False
    for i in range(n):
        if tree[size + i] != buf[i]:
            tree[size + i] = buf[i]
            changed = True
    if changed:
        rebuild(tree, size)
    return changed


@njit(cache=True)
def _update_site(x, tree, size, sigma, bonds, bond_c, scale, site_bonds,
                 slot_of_site, slot_base, slot_h):
    nb = bonds.shape[0]
    for q in range(site_bonds.shape[1]):
        b = site_bonds[x, q]
        if b < 0:
            continue
        set_leaf(tree, size, b, bond_rate(sigma[bonds[b, 0]], sigma[bonds[b, 1]],
                                          bond_c[b, 0], bond_c[b, 1], scale))
    j = slot_of_site[x]
    if j >= 0:
        s = sigma[x]
        for t in range(3):
            set_leaf(tree, size, nb + 3 * j + t,
                     slot_rate(s, t - 1, slot_base[j], slot_h[j, 0], slot_h[j, 1]))


@njit(cache=True)
def _occ_add(occ, last, x, s, t, w0, w1):
    a = max(last[x], w0)
    b = min(t, w1)
    if b > a:
        fs = float(s)
        occ[x, 0] += fs * (b - a)
        occ[x, 1] += fs * fs * (b - a)
        occ[x, 2 + s + 1] += b - a
    last[x] = t


@njit(cache=True)
def flush_occupation(sigma, occ, last, t, window):
    for x in range(sigma.shape[0]):
        _occ_add(occ, last, x, sigma[x], t, window[0], window[1])


@njit(cache=True)
def apply_leaf(leaf, tree, size, sigma, bonds, bond_c, scale, site_bonds,
               slot_of_site, slot_site, slot_base, slot_h, occ, last, t, window):
    """Apply the event of `leaf` at time t; returns the spin-changing sites."""
    nb = bonds.shape[0]
    if leaf < nb:
        x = bonds[leaf, 0]
        y = bonds[leaf, 1]
        _occ_add(occ, last, x, sigma[x], t, window[0], window[1])
        _occ_add(occ, last, y, sigma[y], t, window[0], window[1])
        s = sigma[x]
        sigma[x] = sigma[y]
        sigma[y] = s
        _update_site(x, tree, size, sigma, bonds, bond_c, scale, site_bonds,
                     slot_of_site, slot_base, slot_h)
        _update_site(y, tree, size, sigma, bonds, bond_c, scale, site_bonds,
                     slot_of_site, slot_base, slot_h)
        return x, y
    j = (leaf - nb) // 3
    target = (leaf - nb) % 3 - 1
    x = slot_site[j]
    _occ_add(occ, last, x, sigma[x], t, window[0], window[1])
    sigma[x] = target
    _update_site(x, tree, size, sigma, bonds, bond_c, scale, site_bonds,
                 slot_of_site, slot_base, slot_h)
    return x, -1


@njit(cache=True)
def run(t_stop, max_events, uniforms, clock, count, tree, size, sigma, bonds,
        bond_c, scale, site_bonds, slot_of_site, slot_site, slot_base, slot_h,
        occ, last, window):
    """Advance the exact jump process until t_stop, the event budget or the
    end of the uniform buffer, whichever comes first."""
    nu = uniforms.shape[0]
    done = 0
    while True:
        if clock[2] == 0.0:
            if count[0] >= nu:
                return NEED_UNIFORMS
            total = tree[1]
            u = uniforms[count[0]]
            count[0] += 1
            if total > 0.0:
                clock[1] = clock[0] - np.log1p(-u) / total
            else:
                clock[1] = np.inf
            clock[2] = 1.0
        if clock[1] > t_stop:
            clock[0] = t_stop
            return STOPPED
        if clock[1] == np.inf:
            return ABSORBING
        if done >= max_events:
            return MAX_EVENTS
        if count[0] >= nu:
            return NEED_UNIFORMS
        r = uniforms[count[0]] * tree[1]
        count[0] += 1
        leaf = descend(tree, size, r)
        t = clock[1]
        apply_leaf(leaf, tree, size, sigma, bonds, bond_c, scale, site_bonds,
                   slot_of_site, slot_site, slot_base, slot_h, occ, last, t, window)
        clock[0] = t
        clock[2] = 0.0
        count[1] += 1
        done += 1


@njit(cache=True)
def run_tilted(r0, t_grid, h_sites, bond_e, t_stop, uniforms, clock, count,
               tree, size, sigma, bonds, bond_c, scale, site_bonds, slot_of_site,
               slot_site, tilt_sign, slot_base, slot_h, occ, last, window, buf):
    """Piecewise-frozen tilted dynamics over the re-rating grid `t_grid`.

    On interval r the tilt takes the site values h_sites[r]; bond coefficients
    become bond_e + H(y) - H(x) and the boundary slots see tilt_sign * H(x).
    A pending event time is redrawn at an interval start only if some rate
    changed. Returns (status, current interval index).
    """
    nr = h_sites.shape[0]
    nb = bonds.shape[0]
    r = r0
    while r < nr:
        for b in range(nb):
            x = bonds[b, 0]
            y = bonds[b, 1]
            bond_c[b, 0] = bond_e[b, 0] + (h_sites[r, y, 0] - h_sites[r, x, 0])
            bond_c[b, 1] = bond_e[b, 1] + (h_sites[r, y, 1] - h_sites[r, x, 1])
        for j in range(slot_site.shape[0]):
            slot_h[j, 0] = tilt_sign * h_sites[r, slot_site[j], 0]
            slot_h[j, 1] = tilt_sign * h_sites[r, slot_site[j], 1]
        if refresh(tree, size, sigma, bonds, bond_c, scale, slot_site, slot_base, slot_h, buf):
            clock[2] = 0.0
        stop = min(t_grid[r + 1], t_stop)
        status = run(stop, np.iinfo(np.int64).max, uniforms, clock, count, tree, size,
                     sigma, bonds, bond_c, scale, site_bonds, slot_of_site, slot_site,
                     slot_base, slot_h, occ, last, window)
        if status != STOPPED:
            return status, r
        if stop < t_grid[r + 1]:
            return STOPPED, r
        r += 1
    return STOPPED, r
