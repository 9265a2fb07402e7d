"""Compiled inner loops for periodic cell-list neighbour search."""
from __future__ import annotations

import functools
import itertools

import numba as nb
import numpy as np


def full_shell(d: int) -> np.ndarray:
    """All offsets in {-1,0,1}^d."""
    return np.asarray(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)


def cells_per_axis(width: float, n_points: int, d: int) -> int:
    """Cells per axis: width at least ``width``, at most ``max(27, 2n)`` cells."""
    m = int(np.floor(1.0 / width)) if width > 0 else 1
    cap = int(np.floor(max(27, 2 * n_points) ** (1.0 / d) + 1e-9))
    return max(1, min(m, cap))


def half_shell(d: int) -> np.ndarray:
    """Offsets in {-1,0,1}^d that are zero or lexicographically positive.

    Scanning these from every cell visits each unordered pair of neighbouring
    cells once, provided the grid has at least 3 cells per axis.
    """
    offs = [o for o in itertools.product((-1, 0, 1), repeat=d) if o >= (0,) * d]
    return np.asarray(offs, dtype=np.int64)


@nb.njit(cache=True, inline="always")
def _torus_d2(x, p, q, d):
    s = 0.0
    for c in range(d):
        dx = x[p, c] - x[q, c]
        if dx >= 0.5:
            dx -= 1.0
        elif dx < -0.5:
            dx += 1.0
        s += dx * dx
    return s


@nb.njit(cache=True)
def _push(out_i, out_j, n, i, j):
    if n == out_i.shape[0]:
        new_i = np.empty(2 * n, np.int64)
        new_j = np.empty(2 * n, np.int64)
        new_i[:n] = out_i
        new_j[:n] = out_j
        out_i = new_i
        out_j = new_j
    out_i[n] = i
    out_j[n] = j
    return out_i, out_j, n + 1


@nb.njit(cache=True)
def brute_pairs(x, radius):
    n, d = x.shape
    r2 = radius * radius
    out_i = np.empty(64, np.int64)
    out_j = np.empty(64, np.int64)
    cnt = 0
    for i in range(n):
        for j in range(i + 1, n):
            if _torus_d2(x, i, j, d) <= r2:
                out_i, out_j, cnt = _push(out_i, out_j, cnt, i, j)
    return out_i[:cnt], out_j[:cnt]


@nb.njit(cache=True)
def cell_index(x, m):
    n, d = x.shape
    cells = np.empty(n, np.int64)
    for i in range(n):
        lin = 0
        for c in range(d):
            ci = np.int64(np.floor((x[i, c] + 0.5) * m))
            if ci >= m:
                ci = m - 1
            elif ci < 0:
                ci = 0
            lin = lin * m + ci
        cells[i] = lin
    return cells


def neighbour_table(m: int, d: int, offsets: np.ndarray) -> np.ndarray:
    """Linear index of cell ``c + offset`` (periodic), shape (m**d, len(offsets))."""
    return _neighbour_table_cached(int(m), int(d), offsets.tobytes(), offsets.shape[0])


@functools.lru_cache(maxsize=8)
def _neighbour_table_cached(m, d, off_bytes, noff):
    offsets = np.frombuffer(off_bytes, dtype=np.int64).reshape(noff, d)
    idx = np.indices((m,) * d).reshape(d, -1).T
    weights = m ** np.arange(d - 1, -1, -1)
    table = np.stack([((idx + o) % m) @ weights for o in offsets], axis=1)
    table.setflags(write=False)
    return np.ascontiguousarray(table, dtype=np.int64)


@nb.njit(cache=True)
def grid_pairs(x, radius, m, table):
    """All index pairs (i < j) within torus distance ``radius``.

    ``m`` cells per axis of width 1/m >= radius, m >= 3; ``table`` is the
    half-shell neighbour table, first column the cell itself.
    """
    n, d = x.shape
    r2 = radius * radius
    ncell = m**d
    cells = cell_index(x, m)
    start = np.zeros(ncell + 1, np.int64)
    for i in range(n):
        start[cells[i] + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    order = np.empty(n, np.int64)
    for i in range(n):
        order[fill[cells[i]]] = i
        fill[cells[i]] += 1

    out_i = np.empty(max(16, 4 * n), np.int64)
    out_j = np.empty(max(16, 4 * n), np.int64)
    cnt = 0
    nof = table.shape[1]
    ia = 0
    while ia < n:
        c = cells[order[ia]]
        a0 = start[c]
        a1 = start[c + 1]
        for o in range(nof):
            nb_lin = table[c, o]
            b0 = start[nb_lin]
            b1 = start[nb_lin + 1]
            for pa in range(a0, a1):
                p = order[pa]
                jb0 = pa + 1 if o == 0 else b0
                for ib in range(jb0, b1):
                    q = order[ib]
                    if _torus_d2(x, p, q, d) <= r2:
                        if p < q:
                            out_i, out_j, cnt = _push(out_i, out_j, cnt, p, q)
                        else:
                            out_i, out_j, cnt = _push(out_i, out_j, cnt, q, p)
        ia = a1
    return out_i[:cnt], out_j[:cnt]


@nb.njit(cache=True)
def _grow(a, n):
    out = np.empty(2 * a.shape[0], a.dtype)
    out[:n] = a[:n]
    return out


@nb.njit(cache=True)
def _grow2(a, n):
    out = np.empty((2 * a.shape[0], a.shape[1]), a.dtype)
    out[:n] = a[:n]
    return out


@nb.njit(cache=True, inline="always")
def _cell_of(pos, p, m, d):
    lin = 0
    for c in range(d):
        v = pos[p, c]
        v -= np.floor(v + 0.5)
        ci = np.int64(np.floor((v + 0.5) * m))
        if ci >= m:
            ci = m - 1
        elif ci < 0:
            ci = 0
        lin = lin * m + ci
    return lin


@nb.njit(cache=True, inline="always")
def _wrapped_d2(a, p, b, q, d):
    s = 0.0
    for c in range(d):
        dx = a[p, c] - b[q, c]
        dx -= np.floor(dx + 0.5)
        s += dx * dx
    return s


@nb.njit(cache=True)
def _rebuild_grid(u, ref, alive, na, m, half, head, nxt, R2, ci_, cj_):
    """Reset references to current positions and list all candidate pairs.

    Counting-sorts the alive points by cell, sweeps the half shell over
    cell-contiguous coordinates, then rebuilds the per-cell linked lists
    used for later insertions.
    """
    d = u.shape[1]
    ncell = head.shape[0]
    cells = np.empty(na, np.int64)
    start = np.zeros(ncell + 1, np.int64)
    for a in range(na):
        p = alive[a]
        for c in range(d):
            ref[p, c] = u[p, c]
        cl = _cell_of(ref, p, m, d)
        cells[a] = cl
        start[cl + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    order = np.empty(na, np.int64)
    xs = np.empty((na, d))
    for a in range(na):
        slot = fill[cells[a]]
        fill[cells[a]] += 1
        p = alive[a]
        order[slot] = p
        for c in range(d):
            v = ref[p, c]
            xs[slot, c] = v - np.floor(v + 0.5)
    nc = 0
    nof = half.shape[1]
    ia = 0
    while ia < na:
        cl = _cell_of(xs, ia, m, d)
        a0 = start[cl]
        a1 = start[cl + 1]
        for o in range(nof):
            other = half[cl, o]
            b0 = start[other]
            b1 = start[other + 1]
            for pa in range(a0, a1):
                jb0 = pa + 1 if o == 0 else b0
                for ib in range(jb0, b1):
                    if _wrapped_d2(xs, pa, xs, ib, d) <= R2:
                        p = order[pa]
                        q = order[ib]
                        if p < q:
                            ci_, cj_, nc = _push(ci_, cj_, nc, p, q)
                        else:
                            ci_, cj_, nc = _push(ci_, cj_, nc, q, p)
        ia = a1
    head[:] = -1
    for slot in range(na - 1, -1, -1):
        p = order[slot]
        cl = _cell_of(xs, slot, m, d)
        nxt[p] = head[cl]
        head[cl] = p
    return ci_, cj_, nc


@nb.njit(cache=True)
def trajectory_pairs(x0, birth, death, grid, sigma, normals, radius, skin, m, half, full):
    """Close pairs of the marked process at every grid time.

    Points must be sorted by birth. At grid time t every alive point
    (birth <= t < death) is advanced by sigma * sqrt(t - t_last) times the next
    row of ``normals``; rows are consumed step by step in ascending point index.

    Candidate pairs are those whose reference positions lie within
    radius + skin; references are reset for everyone as soon as any point has
    drifted more than skin / 2 from its reference, so no pair within
    ``radius`` is ever missed. ``m`` is the number of cells per axis (cell
    width >= radius + skin); ``half`` and ``full`` are the half-shell and
    full-shell neighbour tables. With m < 3 all pairs are compared directly.

    Returns (step, i, j, pos_i, pos_j) for every alive pair within ``radius``,
    then the number of normal rows used and the number of rebuilds.
    """
    N, d = x0.shape
    G = grid.shape[0]
    R2 = (radius + skin) ** 2
    r2 = radius * radius
    half2 = 0.25 * skin * skin
    use_grid = m >= 3
    ncell = m**d if use_grid else 1

    head = np.full(ncell, -1, np.int64)
    nxt = np.full(N, -1, np.int64)
    cellof = np.zeros(N, np.int64)
    u = x0.copy()
    ref = x0.copy()
    last = birth.copy()
    alive = np.empty(N, np.int64)
    na = 0
    nb_ptr = 0
    noff = 0
    nrebuild = 0

    ci_ = np.empty(1024, np.int64)
    cj_ = np.empty(1024, np.int64)
    nc = 0
    o_s = np.empty(1024, np.int64)
    o_i = np.empty(1024, np.int64)
    o_j = np.empty(1024, np.int64)
    o_pi = np.empty((1024, d))
    o_pj = np.empty((1024, d))
    no = 0

    for g in range(G):
        t = grid[g]
        k2 = 0
        for a in range(na):
            p = alive[a]
            if death[p] > t:
                alive[k2] = p
                k2 += 1
        na = k2
        first_new = na
        while nb_ptr < N and birth[nb_ptr] <= t:
            if death[nb_ptr] > t:
                alive[na] = nb_ptr
                na += 1
            nb_ptr += 1

        if sigma > 0.0:
            for a in range(na):
                p = alive[a]
                s = sigma * np.sqrt(t - last[p])
                for c in range(d):
                    u[p, c] += s * normals[noff, c]
                noff += 1
                last[p] = t

        rebuild = g == 0
        if not rebuild and sigma > 0.0:
            for a in range(first_new):
                p = alive[a]
                s2 = 0.0
                for c in range(d):
                    dx = u[p, c] - ref[p, c]
                    s2 += dx * dx
                if s2 > half2:
                    rebuild = True
                    break

        if rebuild:
            nrebuild += 1
            nc = 0
            if use_grid:
                ci_, cj_, nc = _rebuild_grid(u, ref, alive, na, m, half, head, nxt, R2, ci_, cj_)
                first_new = na
            else:
                first_new = 0

        # insert points not yet tracked, pairing each with those already in
        for a in range(first_new, na):
            p = alive[a]
            for c in range(d):
                ref[p, c] = u[p, c]
            if use_grid:
                cl = _cell_of(ref, p, m, d)
                cellof[p] = cl
                for o in range(full.shape[1]):
                    q = head[full[cl, o]]
                    while q >= 0:
                        if death[q] > t and _wrapped_d2(ref, p, ref, q, d) <= R2:
                            ci_, cj_, nc = _push(ci_, cj_, nc, q, p)
                        q = nxt[q]
                nxt[p] = head[cl]
                head[cl] = p
            else:
                for b in range(a):
                    q = alive[b]
                    if _wrapped_d2(ref, p, ref, q, d) <= R2:
                        ci_, cj_, nc = _push(ci_, cj_, nc, q, p)

        for c in range(nc):
            p = ci_[c]
            q = cj_[c]
            if death[p] <= t or death[q] <= t:
                continue
            if _wrapped_d2(u, p, u, q, d) <= r2:
                if no == o_s.shape[0]:
                    o_s = _grow(o_s, no)
                    o_i = _grow(o_i, no)
                    o_j = _grow(o_j, no)
                    o_pi = _grow2(o_pi, no)
                    o_pj = _grow2(o_pj, no)
                o_s[no] = g
                o_i[no] = p
                o_j[no] = q
                for cc in range(d):
                    v = u[p, cc]
                    o_pi[no, cc] = v - np.floor(v + 0.5)
                    v = u[q, cc]
                    o_pj[no, cc] = v - np.floor(v + 0.5)
                no += 1

        # drop candidates whose members died, keeping the list short
        if g % 16 == 15:
            k2 = 0
            for c in range(nc):
                if death[ci_[c]] > t and death[cj_[c]] > t:
                    ci_[k2] = ci_[c]
                    cj_[k2] = cj_[c]
                    k2 += 1
            nc = k2

    return o_s[:no], o_i[:no], o_j[:no], o_pi[:no], o_pj[:no], noff, nrebuild
