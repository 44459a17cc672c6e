"""Numba kernel for the coarse-grained vacancy walk.

Kept apart from ``diffusion`` so the pure-Python layer stays importable and
readable. Randomness comes from a numpy ``Generator`` passed in, which numba
drives natively; one generator per trial keeps runs reproducible.
"""
import numba as nb
import numpy as np

ACTIVE, CAPTURED, ABSORBED = 0, 1, 2


@nb.njit(cache=True, nogil=True, inline="always")
def cell_inside(ix, iy, iz, a, kind, r_top, r_bot, height, half_side, cutoff):
    """Containment test on the cell centre; mirrors ``DeviceGeometry.contains``."""
    z = (iz + 0.5) * a
    if z <= 0.0 or z >= cutoff:
        return False
    if kind == 2 or z >= height:
        return True
    x = (ix + 0.5) * a
    y = (iy + 0.5) * a
    if kind == 0:
        r = r_top + (r_bot - r_top) * z / height
        return x * x + y * y < r * r
    return abs(x) < half_side and abs(y) < half_side


@nb.njit(cache=True, nogil=True)
def _capture(rng, cx, cy, cz, n_lo, n_dims, keys, order, consumed, p_cap):
    """Capture trial for a vacancy in cell (cx, cy, cz).

    Returns ``(nitrogen index, orientation)`` or ``(-1, -1)``. One trial is
    made per unconsumed nitrogen sharing the cell.
    """
    key = ((cx - n_lo[0]) * n_dims[1] + (cy - n_lo[1])) * n_dims[2] + (cz - n_lo[2])
    j = np.searchsorted(keys, key)
    while j < keys.shape[0] and keys[j] == key:
        k = order[j]
        if not consumed[k]:
            if rng.random() < p_cap:
                consumed[k] = True
                return k, int(rng.random() * 4.0)
        j += 1
    return -1, -1


@nb.njit(cache=True, nogil=True)
def anneal_kernel(rng, cells, a, gp, n_total, jumps_per_step, p_cap,
                  n_lo, n_dims, keys, order, consumed):
    """Walk every vacancy ``n_total`` jumps with capture trials after each block.

    Within a step vacancies are processed in index order: each does its block
    of jumps and then its capture trial. ``cells`` is modified in place and
    holds the final cells on return. Returns the status per vacancy and the
    capture records (nitrogen index, step, orientation).
    """
    kind = int(gp[0])
    r_top, r_bot, height, half_side, cutoff = gp[1], gp[2], gp[3], gp[4], gp[5]
    lx, ly, lz = n_lo[0], n_lo[1], n_lo[2]
    hx, hy, hz = lx + n_dims[0], ly + n_dims[1], lz + n_dims[2]
    has_n = keys.shape[0] > 0

    n = cells.shape[0]
    status = np.zeros(n, dtype=np.int8)
    rec_n = np.empty(n, dtype=np.int64)
    rec_step = np.empty(n, dtype=np.int64)
    rec_orient = np.empty(n, dtype=np.int64)
    n_rec = 0
    active = np.empty(n, dtype=np.int64)
    n_active = 0
    for i in range(n):
        if cell_inside(cells[i, 0], cells[i, 1], cells[i, 2], a,
                       kind, r_top, r_bot, height, half_side, cutoff):
            active[n_active] = i
            n_active += 1
        else:
            status[i] = ABSORBED

    done = 0
    first = True
    while n_active > 0 and (first or done < n_total):
        block = 0 if first else min(jumps_per_step, n_total - done)
        done += block
        keep = 0
        for m in range(n_active):
            i = active[m]
            cx = cells[i, 0]
            cy = cells[i, 1]
            cz = cells[i, 2]
            alive = True
            for _ in range(block):
                d = int(rng.random() * 6.0)
                s = 1 - 2 * (d & 1)
                ax = d >> 1
                if ax == 0:
                    cx += s
                elif ax == 1:
                    cy += s
                else:
                    cz += s
                if not cell_inside(cx, cy, cz, a, kind, r_top, r_bot,
                                   height, half_side, cutoff):
                    alive = False
                    break
            cells[i, 0] = cx
            cells[i, 1] = cy
            cells[i, 2] = cz
            if not alive:
                status[i] = ABSORBED
                continue
            if (has_n and lx <= cx < hx and ly <= cy < hy and lz <= cz < hz):
                k, orient = _capture(rng, cx, cy, cz, n_lo, n_dims, keys, order,
                                     consumed, p_cap)
                if k >= 0:
                    status[i] = CAPTURED
                    rec_n[n_rec] = k
                    rec_step[n_rec] = done
                    rec_orient[n_rec] = orient
                    n_rec += 1
                    continue
            active[keep] = i
            keep += 1
        n_active = keep
        first = False
    return status, rec_n[:n_rec], rec_step[:n_rec], rec_orient[:n_rec]
