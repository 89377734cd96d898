"""Compiled birth-death Metropolis-Hastings kernel.

The chain state lives in flat arrays plus a bucket grid (cell size >= R,
singly linked lists) so neighbour counts are O(1) expected.  The RNG is
numba's per-thread Mersenne Twister, seeded explicitly at kernel entry;
a given (inputs, seed) pair always reproduces the same trajectory.

Draw order per iteration (mirrored by the pure-Python engine):
  move = random()
  birth:  cell = random(), posx = random(), posy = random(), accept = random()
  death (n > 0): pick = random(), accept = random()
  death on the empty pattern consumes no further draws.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _bucket_cell(x, y, xmin, ymin, wx, wy, gx, gy):
    cx = int((x - xmin) / wx)
    if cx >= gx:
        cx = gx - 1
    cy = int((y - ymin) / wy)
    if cy >= gy:
        cy = gy - 1
    return cx * gy + cy


@njit(cache=True)
def _unlink(i, cid, head, nxt):
    j = head[cid]
    if j == i:
        head[cid] = nxt[i]
        return
    while nxt[j] != i:
        j = nxt[j]
    nxt[j] = nxt[i]


@njit(cache=True)
def _count_close(x, y, exclude, r2, xs, ys, head, nxt,
                 xmin, ymin, wx, wy, gx, gy):
    cx = int((x - xmin) / wx)
    if cx >= gx:
        cx = gx - 1
    cy = int((y - ymin) / wy)
    if cy >= gy:
        cy = gy - 1
    t = 0
    for ci in range(max(0, cx - 1), min(gx, cx + 2)):
        for cj in range(max(0, cy - 1), min(gy, cy + 2)):
            k = head[ci * gy + cj]
            while k >= 0:
                if k != exclude:
                    dx = x - xs[k]
                    dy = y - ys[k]
                    if dx * dx + dy * dy <= r2:
                        t += 1
                k = nxt[k]
    return t


@njit(cache=True)
def run_bd_chain(
    xs0,
    ys0,
    cum_prob,
    field_nx,
    field_ny,
    field_dx,
    field_dy,
    xmin,
    ymin,
    width,
    height,
    log_iz,
    gamma,
    R,
    n_iters,
    seed,
    record,
    check_every,
):
    """Run n_iters birth-death MH steps; returns (xs, ys, sR, n_trace, s_trace)."""
    np.random.seed(seed)

    gx = max(1, int(width / R))
    gy = max(1, int(height / R))
    wx = width / gx
    wy = height / gy
    r2 = R * R

    n = xs0.shape[0]
    cap = max(256, 2 * n + 64)
    xs = np.empty(cap)
    ys = np.empty(cap)
    nxt = np.full(cap, -1, dtype=np.int64)
    head = np.full(gx * gy, -1, dtype=np.int64)

    # insert initial points, accumulating the close-pair count on the way in
    s_r = 0
    for i in range(n):
        x = xs0[i]
        y = ys0[i]
        s_r += _count_close(x, y, -1, r2, xs, ys, head, nxt,
                            xmin, ymin, wx, wy, gx, gy)
        xs[i] = x
        ys[i] = y
        cid = _bucket_cell(x, y, xmin, ymin, wx, wy, gx, gy)
        nxt[i] = head[cid]
        head[cid] = i

    trace_len = n_iters + 1 if record else 1
    n_trace = np.empty(trace_len, dtype=np.int64)
    s_trace = np.empty(trace_len, dtype=np.int64)
    n_trace[0] = n
    s_trace[0] = s_r

    hard_core = gamma == 0.0
    log_gamma = 0.0 if hard_core else np.log(gamma)

    for it in range(1, n_iters + 1):
        if np.random.random() < 0.5:
            # birth: cell by exp(z) mass, uniform inside the cell
            cell = np.searchsorted(cum_prob, np.random.random(), side="right")
            ci = cell // field_ny
            cj = cell - ci * field_ny
            ux = xmin + (ci + np.random.random()) * field_dx
            uy = ymin + (cj + np.random.random()) * field_dy
            u_acc = np.random.random()
            t = _count_close(ux, uy, -1, r2, xs, ys, head, nxt,
                             xmin, ymin, wx, wy, gx, gy)
            if hard_core:
                log_r = log_iz - np.log(n + 1.0) if t == 0 else -np.inf
            else:
                log_r = t * log_gamma + log_iz - np.log(n + 1.0)
            if log_r >= 0.0 or u_acc < np.exp(log_r):
                if n == cap:
                    cap *= 2
                    nxs = np.empty(cap)
                    nys = np.empty(cap)
                    nxs[:n] = xs[:n]
                    nys[:n] = ys[:n]
                    xs = nxs
                    ys = nys
                    nxt = np.full(cap, -1, dtype=np.int64)
                    head[:] = -1
                    for i in range(n):
                        cid = _bucket_cell(xs[i], ys[i], xmin, ymin, wx, wy, gx, gy)
                        nxt[i] = head[cid]
                        head[cid] = i
                xs[n] = ux
                ys[n] = uy
                cid = _bucket_cell(ux, uy, xmin, ymin, wx, wy, gx, gy)
                nxt[n] = head[cid]
                head[cid] = n
                n += 1
                s_r += t
        elif n > 0:
            k = int(np.random.random() * n)
            if k == n:
                k = n - 1
            u_acc = np.random.random()
            x = xs[k]
            y = ys[k]
            t = _count_close(x, y, k, r2, xs, ys, head, nxt,
                             xmin, ymin, wx, wy, gx, gy)
            if hard_core:
                accept = True if t >= 1 else u_acc < np.exp(np.log(float(n)) - log_iz)
            else:
                log_r = np.log(float(n)) - log_iz - t * log_gamma
                accept = log_r >= 0.0 or u_acc < np.exp(log_r)
            if accept:
                cid = _bucket_cell(x, y, xmin, ymin, wx, wy, gx, gy)
                _unlink(k, cid, head, nxt)
                last = n - 1
                if k != last:
                    lx = xs[last]
                    ly = ys[last]
                    lcid = _bucket_cell(lx, ly, xmin, ymin, wx, wy, gx, gy)
                    _unlink(last, lcid, head, nxt)
                    xs[k] = lx
                    ys[k] = ly
                    nxt[k] = head[lcid]
                    head[lcid] = k
                n -= 1
                s_r -= t
        # death proposed on the empty pattern: automatic rejection

        if record:
            n_trace[it] = n
            s_trace[it] = s_r
        if check_every > 0 and it % check_every == 0:
            total = 0
            for i in range(n):
                total += _count_close(xs[i], ys[i], i, r2, xs, ys, head, nxt,
                                      xmin, ymin, wx, wy, gx, gy)
            if total != 2 * s_r:
                raise RuntimeError("incremental close-pair count diverged")

    return xs[:n].copy(), ys[:n].copy(), s_r, n_trace, s_trace
