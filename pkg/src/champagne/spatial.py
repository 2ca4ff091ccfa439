"""Spatial index for nearest-surface queries against a union of balls.

Obstacles accumulate toward the unit sphere, so a single uniform grid
cannot serve every depth.  Centres are bucketed into geometric bands by
their boundary gap (band b holds gap in (2^-(b+1), 2^-b]) and each band
gets a uniform grid whose cell size matches the band's own length scale.
Occupied cells are kept as a band-major sorted array of hashed cell keys
(CSR), so deep bands cost memory proportional to their obstacle count.

Queries visit bands in order of a radial lower bound and walk cells in
Chebyshev rings around the query point, falling back to a linear scan of
a band when the ring budget would blow past `_MAX_RING`.  A hash collision
between distinct cells merely merges their candidate lists: a few extra
distance checks, never a wrong answer.
"""

import numpy as np
from numba import njit

from .rng import mix64, U64

_MAX_BAND = 60
_MAX_RING = 48
_MAX_CELLS = 4096
_KEY_MASK = U64(0x00FFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _cell_hash(coords, d):
    h = U64(0x51E0D9F2C845A7B3)
    for i in range(d):
        h = mix64(h ^ (U64(coords[i]) + U64(0x9E3779B97F4A7C15)))
    return h


@njit(cache=True, inline="always")
def _pack_key(band, h):
    # high byte = band so keys sort band-major; 56-bit cell hash below
    return (np.int64(band) << 56) | np.int64(h & _KEY_MASK)


@njit(cache=True, inline="always")
def _band_of_gap(g):
    b = 0
    while g <= 2.0 ** -(b + 1) and b < _MAX_BAND:
        b += 1
    return b


@njit(cache=True)
def _obstacle_keys(centers, gaps, out_keys, out_band):
    n, d = centers.shape
    coords = np.empty(d, dtype=np.int64)
    for i in range(n):
        b = _band_of_gap(gaps[i])
        h = 2.0 ** -(b + 1)
        for k in range(d):
            coords[k] = np.int64(np.floor((centers[i, k] + 1.0) / h))
        out_band[i] = b
        out_keys[i] = _pack_key(b, _cell_hash(coords, d))


@njit(cache=True, inline="always")
def _find_cell(ukeys, lo, hi, key):
    while lo < hi:
        mid = (lo + hi) >> 1
        v = ukeys[mid]
        if v < key:
            lo = mid + 1
        elif v > key:
            hi = mid
        else:
            return mid
    return np.int64(-1)


@njit(cache=True, inline="always")
def _consider(x, i, centers, radii, norms, norm_cap, exclude, surface,
              best, best_id):
    if norms[i] > norm_cap or i == exclude:
        return best, best_id
    s = 0.0
    for k in range(centers.shape[1]):
        dx = x[k] - centers[i, k]
        s += dx * dx
    dist = np.sqrt(s)
    if surface:
        dist -= radii[i]
    if dist < best or (dist == best and i < best_id):
        return dist, i
    return best, best_id


@njit(cache=True)
def nearest_query(x, cap, norm_cap, exclude, surface, best, best_id,
                  centers, radii, norms, order, ukeys, ustart,
                  band_id, band_h, band_rmax, band_gmin, band_gmax,
                  ub_lo, ub_hi):
    """Nearest obstacle surface (or centre when surface=False) to x.

    `cap` bounds the region of interest: the returned distance is exact
    whenever it is < cap, else any value >= cap may come back with id -1.
    `best`/`best_id` seed the search with a known candidate (or inf/-1).
    Ties break toward the lowest obstacle id.
    """
    d = centers.shape[1]
    nb = band_id.shape[0]
    xn = 0.0
    for k in range(d):
        xn += x[k] * x[k]
    xn = np.sqrt(xn)
    g = 1.0 - xn
    gap_cap = 1.0 - norm_cap

    coords = np.empty(d, dtype=np.int64)
    cc = np.empty(d, dtype=np.int64)
    visited = np.zeros(nb, dtype=np.bool_)
    while True:
        bsel = -1
        lb_min = np.inf
        for s in range(nb):
            if visited[s]:
                continue
            if band_gmax[s] < gap_cap:
                visited[s] = True      # band entirely beyond truncation
                continue
            lb = 0.0
            if band_gmin[s] > g:
                lb = band_gmin[s] - g
            elif g > band_gmax[s]:
                lb = g - band_gmax[s]
            if surface:
                lb -= band_rmax[s]
            if lb < 0.0:
                lb = 0.0
            if lb < lb_min:
                lb_min = lb
                bsel = s
        if bsel < 0 or lb_min >= min(best, cap):
            break
        visited[bsel] = True

        b = band_id[bsel]
        h = band_h[bsel]
        rmax = band_rmax[bsel] if surface else 0.0
        klo = ub_lo[bsel]
        khi = ub_hi[bsel]
        if klo >= khi:
            continue
        olo = ustart[klo]
        ohi = ustart[khi]

        reach = min(best, cap) + rmax
        if not np.isfinite(reach) or reach / h > _MAX_RING:
            for t in range(olo, ohi):
                best, best_id = _consider(x, order[t], centers, radii, norms,
                                          norm_cap, exclude, surface,
                                          best, best_id)
            continue

        for k in range(d):
            cc[k] = np.int64(np.floor((x[k] + 1.0) / h))
        L = 0
        while True:
            ring_lb = (L - 1) * h if L > 0 else 0.0
            if ring_lb - rmax >= min(best, cap):
                break
            if L > _MAX_RING:
                for t in range(olo, ohi):
                    best, best_id = _consider(x, order[t], centers, radii,
                                              norms, norm_cap, exclude,
                                              surface, best, best_id)
                break
            width = 2 * L + 1
            ncell = 1
            for _ in range(d):
                ncell *= width
            for t in range(ncell):
                rem = t
                cheb = 0
                for k in range(d):
                    off = rem % width - L
                    rem //= width
                    coords[k] = cc[k] + off
                    a = -off if off < 0 else off
                    if a > cheb:
                        cheb = a
                if cheb != L:
                    continue
                slot = _find_cell(ukeys, klo, khi, _pack_key(b, _cell_hash(coords, d)))
                if slot < 0:
                    continue
                for u in range(ustart[slot], ustart[slot + 1]):
                    best, best_id = _consider(x, order[u], centers, radii,
                                              norms, norm_cap, exclude,
                                              surface, best, best_id)
            L += 1
    return best, best_id


@njit(cache=True)
def box_caps(lo, hi, dm2, centers, radii, norms, order, ukeys, ustart,
             band_id, band_h, band_rmax, band_gmin, band_gmax,
             ub_lo, ub_hi):
    """Capacity bracket of (union of balls) clipped to the box [lo, hi].

    Returns (cap_lower, cap_upper, n_intersecting): upper is the sum of
    r^(d-2) over balls meeting the closed box (subadditivity), lower the
    largest r^(d-2) over balls contained in it.  dm2 = d - 2.
    """
    d = centers.shape[1]
    nb = band_id.shape[0]

    bn_min = 0.0
    bn_max = 0.0
    for k in range(d):
        a = lo[k] if lo[k] > 0.0 else (hi[k] if hi[k] < 0.0 else 0.0)
        bn_min += a * a
        m = -lo[k] if -lo[k] > hi[k] else hi[k]
        bn_max += m * m
    bn_min = np.sqrt(bn_min)
    bn_max = np.sqrt(bn_max)

    cap_u = 0.0
    cap_l = 0.0
    nhit = 0
    coords = np.empty(d, dtype=np.int64)
    for s in range(nb):
        rmax = band_rmax[s]
        # obstacle norms live in [1-gmax, 1-gmin]
        if 1.0 - band_gmin[s] < bn_min - rmax or 1.0 - band_gmax[s] > bn_max + rmax:
            continue
        klo = ub_lo[s]
        khi = ub_hi[s]
        if klo >= khi:
            continue
        h = band_h[s]
        b = band_id[s]

        ncells = 1.0
        for k in range(d):
            c0 = np.floor((lo[k] - rmax + 1.0) / h)
            c1 = np.floor((hi[k] + rmax + 1.0) / h)
            ncells *= c1 - c0 + 1.0
        if ncells > _MAX_CELLS:
            for t in range(ustart[klo], ustart[khi]):
                i = order[t]
                cap_l, cap_u, nhit = _ball_box(i, lo, hi, dm2, centers, radii,
                                               cap_l, cap_u, nhit)
            continue

        # odometer over the cell range
        spans = np.empty(d, dtype=np.int64)
        base = np.empty(d, dtype=np.int64)
        total = 1
        for k in range(d):
            c0 = np.int64(np.floor((lo[k] - rmax + 1.0) / h))
            c1 = np.int64(np.floor((hi[k] + rmax + 1.0) / h))
            base[k] = c0
            spans[k] = c1 - c0 + 1
            total *= spans[k]
        for t in range(total):
            rem = t
            for k in range(d):
                coords[k] = base[k] + rem % spans[k]
                rem //= spans[k]
            slot = _find_cell(ukeys, klo, khi, _pack_key(b, _cell_hash(coords, d)))
            if slot < 0:
                continue
            for u in range(ustart[slot], ustart[slot + 1]):
                i = order[u]
                cap_l, cap_u, nhit = _ball_box(i, lo, hi, dm2, centers, radii,
                                               cap_l, cap_u, nhit)
    return cap_l, cap_u, nhit


@njit(cache=True, inline="always")
def _ball_box(i, lo, hi, dm2, centers, radii, cap_l, cap_u, nhit):
    d = centers.shape[1]
    r = radii[i]
    s = 0.0
    contained = True
    for k in range(d):
        c = centers[i, k]
        a = lo[k] if c < lo[k] else (hi[k] if c > hi[k] else c)
        dx = c - a
        s += dx * dx
        if c - r < lo[k] or c + r > hi[k]:
            contained = False
    if s <= r * r:
        p = 1.0
        for _ in range(dm2):
            p *= r
        cap_u += p
        nhit += 1
        if contained and p > cap_l:
            cap_l = p
    return cap_l, cap_u, nhit


class GridIndex:
    """Immutable band-bucketed grid over obstacle centres."""

    def __init__(self, centers, radii):
        centers = np.ascontiguousarray(centers, dtype=np.float64)
        radii = np.ascontiguousarray(radii, dtype=np.float64)
        n, d = centers.shape
        norms = np.sqrt((centers ** 2).sum(axis=1))
        gaps = 1.0 - norms
        if n and gaps.min() <= 0.0:
            raise ValueError("obstacle centre on or outside the unit sphere")

        keys = np.empty(n, dtype=np.int64)
        bands = np.empty(n, dtype=np.int32)
        if n:
            _obstacle_keys(centers, gaps, keys, bands)
        order = np.argsort(keys, kind="stable").astype(np.int64)
        skeys = keys[order]
        if n:
            ukeys, first = np.unique(skeys, return_index=True)
            ustart = np.append(first, n).astype(np.int64)
        else:
            ukeys = np.empty(0, dtype=np.int64)
            ustart = np.zeros(1, dtype=np.int64)

        present = np.unique(bands) if n else np.empty(0, dtype=np.int32)
        nb = len(present)
        band_h = np.empty(nb)
        band_rmax = np.empty(nb)
        band_gmin = np.empty(nb)
        band_gmax = np.empty(nb)
        ub_lo = np.empty(nb, dtype=np.int64)
        ub_hi = np.empty(nb, dtype=np.int64)
        for s, b in enumerate(present):
            sel = bands == b
            band_h[s] = 2.0 ** -(int(b) + 1)
            band_rmax[s] = radii[sel].max() if sel.any() else 0.0
            band_gmin[s] = gaps[sel].min()
            band_gmax[s] = gaps[sel].max()
            ub_lo[s] = np.searchsorted(ukeys, np.int64(int(b)) << 56, side="left")
            ub_hi[s] = np.searchsorted(ukeys, np.int64(int(b) + 1) << 56, side="left")

        self.n = n
        self.d = d
        self.centers = centers
        self.radii = radii
        self.norms = norms
        self.arrays = (centers, radii, norms, order, ukeys, ustart,
                       present.astype(np.int64), band_h, band_rmax,
                       band_gmin, band_gmax, ub_lo, ub_hi)
        for a in self.arrays:
            a.flags.writeable = False

    def nearest_surface(self, x, norm_cap=np.inf, exclude=-1):
        """(distance to nearest obstacle surface, obstacle id); exact."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if self.n == 0:
            return np.inf, -1
        dist, idx = nearest_query(x, np.inf, norm_cap, exclude, True,
                                  np.inf, -1, *self.arrays)
        return float(dist), int(idx)

    def nearest_center(self, x, norm_cap=np.inf, exclude=-1):
        """(distance to nearest obstacle centre, obstacle id); exact."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if self.n == 0:
            return np.inf, -1
        dist, idx = nearest_query(x, np.inf, norm_cap, exclude, False,
                                  np.inf, -1, *self.arrays)
        return float(dist), int(idx)
