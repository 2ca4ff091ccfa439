"""Whitney decomposition of the unit ball and the boundary-point Wiener
series over an obstacle field.

The adopted Whitney convention is diam(Q) <= dist(Q, boundary) <= 4 diam(Q),
with dist measured corner-exactly (dyadic corners are exact doubles).  A
cube is emitted the first time the lower inequality holds while recursing
from side 1/2; the upper inequality then holds automatically because its
parent was rejected.

Wiener terms use the capacity normalization cap(ball of radius r) = r^(d-2)
and bracket the capacity of the clipped union of obstacles between the
largest contained ball (lower) and the subadditive sum over intersecting
balls (upper), so convergence verdicts are interval-honest.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .criteria import Verdict, classify_tail
from .errors import DomainError, RangeError
from .spatial import box_caps


@dataclass(frozen=True)
class ConeWindow:
    """Restrict enumeration to cubes meeting |x - tau| <= factor (1-|x|) + cap."""

    tau: tuple
    factor: float = 8.0
    cap: float = 0.0


@dataclass(frozen=True, eq=False)
class WhitneyCube:
    level: int
    grid_index: tuple
    center: np.ndarray
    side: float
    qk: float


def _cube_box(level, gidx):
    side = 1.0 / float(1 << level)
    lo = np.array(gidx, dtype=float) * side
    return side, lo, lo + side


def _cube_classify(d, level, gidx):
    """(emit, subdivide) per the Whitney rules; both False = dropped."""
    side, lo, hi = _cube_box(level, gidx)
    minn2 = 0.0
    maxn2 = 0.0
    for k in range(d):
        a = lo[k] if lo[k] > 0.0 else (hi[k] if hi[k] < 0.0 else 0.0)
        minn2 += a * a
        m = max(-lo[k], hi[k])
        maxn2 += m * m
    if minn2 >= 1.0:
        return False, False
    dist = 1.0 - math.sqrt(maxn2)
    diam = side * math.sqrt(d)
    if diam <= dist:
        return True, False
    return False, True


def _window_may_touch(window, d, level, gidx):
    side, lo, hi = _cube_box(level, gidx)
    c = lo + 0.5 * side
    hd = 0.5 * side * math.sqrt(d)
    tau = np.asarray(window.tau, dtype=float)
    lhs = np.linalg.norm(c - tau) - hd
    cn = np.linalg.norm(c)
    rhs = window.factor * (1.0 - max(cn - hd, 0.0)) + window.cap + 1e-15
    return lhs <= rhs


def decompose(d, max_level, window=None):
    """Stream the Whitney cubes of the unit ball up to `max_level`.

    Deterministic depth-first preorder with lexicographic children; a
    cone window prunes whole subtrees that cannot meet it.  Cubes still
    failing the Whitney condition at `max_level` are dropped, so coverage
    approaches the ball as `max_level` grows.
    """
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    if not (1 <= max_level <= 40):
        raise RangeError(f"max_level must lie in [1, 40], got {max_level}")

    starters = sorted(np.ndindex(*(4,) * d))
    stack = [(1, tuple(int(g) - 2 for g in gi)) for gi in reversed(starters)]
    while stack:
        level, gidx = stack.pop()
        if window is not None and not _window_may_touch(window, d, level, gidx):
            continue
        emit, subdivide = _cube_classify(d, level, gidx)
        if emit:
            side, lo, hi = _cube_box(level, gidx)
            center = lo + 0.5 * side
            yield WhitneyCube(level, gidx, center, side,
                              1.0 - float(np.linalg.norm(center)))
        elif subdivide and level < max_level:
            for t in range((1 << d) - 1, -1, -1):
                child = tuple(2 * g + ((t >> (d - 1 - k)) & 1)
                              for k, g in enumerate(gidx))
                stack.append((level + 1, child))


def cap_interval(field, cube):
    """(capLower, capUpper) of the obstacle union clipped to the cube."""
    side, lo, hi = _cube_box(cube.level, cube.grid_index)
    cl, cu, _ = box_caps(lo, hi, field.d - 2, *field.index().arrays)
    return float(cl), float(cu)


# ---------------------------------------------------------------------------
# fused enumeration + capacity kernel

@njit(cache=True)
def _wiener_kernel(d, max_level, use_window, wtau, wfactor, wcap,
                   out_counts, out_volumes, cap_level, cap_gidx, cap_center,
                   cap_q, cap_lo, cap_up, cap_nhit,
                   centers, radii, norms, order, ukeys, ustart, band_id,
                   band_h, band_rmax, band_gmin, band_gmax, ub_lo, ub_hi):
    cap_size = cap_level.shape[0]
    sz = 4 ** d + (max_level + 2) * (1 << d) + 64
    stack_m = np.empty(sz, dtype=np.int64)
    stack_g = np.empty((sz, d), dtype=np.int64)
    top = 0
    n_start = 4 ** d
    for t in range(n_start - 1, -1, -1):
        rem = t
        for k in range(d - 1, -1, -1):
            stack_g[top, k] = rem % 4 - 2
            rem //= 4
        stack_m[top] = 1
        top += 1

    gbuf = np.empty(d, dtype=np.int64)
    lo = np.empty(d)
    hi = np.empty(d)
    sqrt_d = np.sqrt(float(d))
    ncontrib = 0
    while top > 0:
        top -= 1
        m = stack_m[top]
        for k in range(d):
            gbuf[k] = stack_g[top, k]
        side = 1.0 / float(np.int64(1) << m)
        minn2 = 0.0
        maxn2 = 0.0
        for k in range(d):
            lo[k] = gbuf[k] * side
            hi[k] = lo[k] + side
            a = lo[k] if lo[k] > 0.0 else (hi[k] if hi[k] < 0.0 else 0.0)
            minn2 += a * a
            mm = -lo[k] if -lo[k] > hi[k] else hi[k]
            maxn2 += mm * mm
        if minn2 >= 1.0:
            continue
        if use_window:
            cnorm2 = 0.0
            dt2 = 0.0
            for k in range(d):
                c = lo[k] + 0.5 * side
                cnorm2 += c * c
                dc = c - wtau[k]
                dt2 += dc * dc
            hd = 0.5 * side * sqrt_d
            base = np.sqrt(cnorm2) - hd
            if base < 0.0:
                base = 0.0
            if np.sqrt(dt2) - hd > wfactor * (1.0 - base) + wcap + 1e-15:
                continue
        dist = 1.0 - np.sqrt(maxn2)
        diam = side * sqrt_d
        if diam <= dist:
            out_counts[m] += 1
            v = 1.0
            for _ in range(d):
                v *= side
            out_volumes[m] += v
            cl, cu, nhit = box_caps(lo, hi, d - 2, centers, radii, norms,
                                    order, ukeys, ustart, band_id, band_h,
                                    band_rmax, band_gmin, band_gmax,
                                    ub_lo, ub_hi)
            if cu > 0.0:
                if ncontrib < cap_size:
                    cap_level[ncontrib] = m
                    q2 = 0.0
                    for k in range(d):
                        c = lo[k] + 0.5 * side
                        cap_gidx[ncontrib, k] = gbuf[k]
                        cap_center[ncontrib, k] = c
                        q2 += c * c
                    cap_q[ncontrib] = 1.0 - np.sqrt(q2)
                    cap_lo[ncontrib] = cl
                    cap_up[ncontrib] = cu
                    cap_nhit[ncontrib] = nhit
                ncontrib += 1
        elif m < max_level:
            for t in range((1 << d) - 1, -1, -1):
                for k in range(d):
                    stack_g[top, k] = 2 * gbuf[k] + ((t >> (d - 1 - k)) & 1)
                stack_m[top] = m + 1
                top += 1
    return ncontrib


class _CubeSet:
    """Contributing cubes (nonzero upper capacity) of one enumeration."""

    def __init__(self, d, max_level, counts, volumes, level, gidx, center,
                 q, cap_lo, cap_up, nhit):
        self.d = d
        self.max_level = max_level
        self.counts = counts
        self.volumes = volumes
        self.level = level
        self.gidx = gidx
        self.center = center
        self.q = q
        self.cap_lo = cap_lo
        self.cap_up = cap_up
        self.nhit = nhit


def _collect_cubes(field, max_level, window=None):
    key = (max_level, window)
    cached = field._wiener_cache.get(key)
    if cached is not None:
        return cached
    d = field.d
    use_window = window is not None
    wtau = np.asarray(window.tau, dtype=float) if use_window else np.zeros(d)
    wfactor = window.factor if use_window else 0.0
    wcap = window.cap if use_window else 0.0

    guess = max(4 * field.n_obstacles + 1024, 1 << 12)
    while True:
        counts = np.zeros(max_level + 1, dtype=np.int64)
        volumes = np.zeros(max_level + 1)
        level = np.empty(guess, dtype=np.int32)
        gidx = np.empty((guess, d), dtype=np.int64)
        center = np.empty((guess, d))
        q = np.empty(guess)
        cap_lo = np.empty(guess)
        cap_up = np.empty(guess)
        nhit = np.empty(guess, dtype=np.int64)
        n = _wiener_kernel(d, max_level, use_window, wtau, wfactor, wcap,
                           counts, volumes, level, gidx, center, q,
                           cap_lo, cap_up, nhit, *field.index().arrays)
        if n <= guess:
            cubes = _CubeSet(d, max_level, counts, volumes, level[:n].copy(),
                             gidx[:n].copy(), center[:n].copy(), q[:n].copy(),
                             cap_lo[:n].copy(), cap_up[:n].copy(),
                             nhit[:n].copy())
            field._wiener_cache[key] = cubes
            return cubes
        guess = int(n * 1.2) + 1024


def whitney_census(d, max_level):
    """(per-level cube counts, per-level cube volumes) of the decomposition."""
    if not (1 <= max_level <= 40):
        raise RangeError(f"max_level must lie in [1, 40], got {max_level}")
    counts = np.zeros(max_level + 1, dtype=np.int64)
    volumes = np.zeros(max_level + 1)
    zero = np.zeros(0)
    z2 = np.zeros((0, d))
    zi = np.zeros(0, dtype=np.int32)
    zg = np.zeros((0, d), dtype=np.int64)
    zh = np.zeros(0, dtype=np.int64)
    from .spatial import GridIndex

    empty = GridIndex(np.empty((0, d)), np.empty(0))
    _wiener_kernel(d, max_level, False, np.zeros(d), 0.0, 0.0, counts,
                   volumes, zi, zg, z2, zero, zero.copy(), zero.copy(), zh,
                   *empty.arrays)
    return counts, volumes


# ---------------------------------------------------------------------------
# Wiener series report

@dataclass
class WienerReport:
    tau: tuple
    levels: np.ndarray          # per contributing cube
    grid_index: np.ndarray
    rho: np.ndarray
    cap_lower: np.ndarray
    cap_upper: np.ndarray
    term_lower: np.ndarray
    term_upper: np.ndarray
    per_level_sums: list        # (level, lower sum, upper sum)
    classified_levels: tuple
    verdict: Verdict
    tail_exponent_lower: float | None
    tail_exponent_upper: float | None
    flags: list
    truncation_estimate: float | None = None

    @property
    def per_cube(self):
        return [((int(l), tuple(map(int, g))), float(r), float(cl), float(cu),
                 float(tl), float(tu))
                for l, g, r, cl, cu, tl, tu in
                zip(self.levels, self.grid_index, self.rho, self.cap_lower,
                    self.cap_upper, self.term_lower, self.term_upper)]

    def total_lower(self):
        return float(self.term_lower.sum())

    def total_upper(self):
        return float(self.term_upper.sum())

    def to_dict(self, include_cubes=None):
        if include_cubes is None:
            include_cubes = len(self.levels) <= 20000
        doc = {
            "tau": [float(v) for v in self.tau],
            "perLevelSums": [[int(l), float(a), float(b)]
                             for l, a, b in self.per_level_sums],
            "classifiedLevels": list(self.classified_levels),
            "verdict": self.verdict.value,
            "tailExponentLower": _opt(self.tail_exponent_lower),
            "tailExponentUpper": _opt(self.tail_exponent_upper),
            "totalLower": self.total_lower(),
            "totalUpper": self.total_upper(),
            "flags": list(self.flags),
            "truncationEstimate": _opt(self.truncation_estimate),
        }
        if include_cubes:
            doc["perCube"] = [
                {"cube": [cube_id[0], list(cube_id[1])], "rho": r,
                 "capLower": cl, "capUpper": cu, "termLower": tl,
                 "termUpper": tu}
                for cube_id, r, cl, cu, tl, tu in self.per_cube]
        return doc


def _opt(v):
    return None if v is None else (None if not np.isfinite(v) else float(v))


def boundary_points(d, count, seed=0):
    """Deterministic quasi-uniform points on the unit sphere."""
    if d == 3:
        i = np.arange(count, dtype=float) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
        pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    else:
        from scipy.stats import qmc
        from scipy.special import ndtri

        sob = qmc.Sobol(d=d, scramble=True, seed=seed)
        m = sob.random_base2(int(math.ceil(math.log2(max(count, 2)))))[:count]
        pts = ndtri(np.clip(m, 2.0 ** -53, 1.0 - 2.0 ** -53))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def wiener_series(field, tau, max_level, window=None, margin=0.1):
    """Wiener-type series report for a field at boundary point tau.

    Per-cube terms are q_k^2 / |c_k - tau|^d times the capacity bracket;
    per-level interval sums are classified after trimming leading/trailing
    all-zero levels (a finite field has no signal beyond its depth).
    The verdict converges only if the upper sums converge, diverges only
    if the lower sums diverge, and is otherwise inconclusive.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (field.d,):
        raise DomainError(f"tau must be a point in R^{field.d}")
    if abs(float(np.linalg.norm(tau)) - 1.0) > 1e-12:
        raise DomainError("tau must lie on the unit sphere (within 1e-12)")
    if max_level < 4:
        raise DomainError("max_level must be >= 4")

    cubes = _collect_cubes(field, max_level, window)
    rho = np.sqrt(((cubes.center - tau) ** 2).sum(axis=1))
    w = cubes.q ** 2 / rho ** field.d
    term_lo = w * cubes.cap_lo
    term_up = w * cubes.cap_up

    lo_sums = np.zeros(max_level + 1)
    up_sums = np.zeros(max_level + 1)
    np.add.at(lo_sums, cubes.level, term_lo)
    np.add.at(up_sums, cubes.level, term_up)
    per_level = [(m, float(lo_sums[m]), float(up_sums[m]))
                 for m in range(1, max_level + 1)]

    flags = []
    nz = np.flatnonzero(up_sums > 0.0)
    if len(nz) == 0:
        verdict = Verdict.CONVERGES
        lo_exp = up_exp = -np.inf
        window_levels = (0, 0)
    else:
        first, last = int(nz[0]), int(nz[-1])
        window_levels = (first, last)
        upper_window = up_sums[first:last + 1]
        lower_window = lo_sums[first:last + 1]
        if len(upper_window) < 8:
            verdict = Verdict.INCONCLUSIVE
            lo_exp = up_exp = None
            flags.append(f"only {len(upper_window)} informative levels; "
                         "need >= 8 to classify")
        else:
            v_up, up_exp = classify_tail(upper_window, margin=margin)
            v_lo, lo_exp = classify_tail(lower_window, margin=margin)
            if v_up == Verdict.CONVERGES:
                verdict = Verdict.CONVERGES
            elif v_lo == Verdict.DIVERGES:
                verdict = Verdict.DIVERGES
            else:
                verdict = Verdict.INCONCLUSIVE

    truncation = None
    if window is not None:
        truncation = _window_truncation_estimate(field, cubes, window)
        flags.append("cone window active: far-cube contributions excluded")

    return WienerReport(tuple(map(float, tau)), cubes.level, cubes.gidx,
                        rho, cubes.cap_lo, cubes.cap_up, term_lo, term_up,
                        per_level, window_levels, verdict, lo_exp, up_exp,
                        flags, truncation)


def measure_ring_constant(d, ref_level=6):
    """Empirical c_d with at most c_d n^(d-2) Whitney cubes per ring.

    Rings of width 4 sqrt(d) 2^-m around a boundary point are counted at
    one reference level of the actual decomposition.
    """
    tau = np.zeros(d)
    tau[0] = 1.0
    width = 4.0 * math.sqrt(d) * 2.0 ** -ref_level
    counts = {}
    for cube in decompose(d, ref_level):
        if cube.level != ref_level:
            continue
        n = max(1, int(math.ceil(float(np.linalg.norm(cube.center - tau)) / width)))
        counts[n] = counts.get(n, 0) + 1
    if not counts:
        return 1.0
    return max(c / n ** (d - 2) for n, c in counts.items())


def _window_truncation_estimate(field, cubes, window):
    """Ring-bound estimate of what the cone window leaves out.

    Per annulus j the excluded cubes contribute at most
    N K^-2j phi_j^(d-2) (K^j)^d c_d sum_{n > n0} n^-2 with n0 ~ the cone
    factor; N is the largest per-cube obstacle count actually observed.
    """
    if field.profile is None or field.n_obstacles == 0:
        return None
    d = field.d
    c_d = measure_ring_constant(d, ref_level=6)
    n_max = int(cubes.nhit.max()) if len(cubes.nhit) else 1
    n0 = max(int(window.factor), 1)
    # sum_{n > n0} n^-2 < 1/n0
    tail = 1.0 / n0
    total = 0.0
    for j in field.shells.js():
        g = field.shells.K ** float(-j)
        phi = float(field.profile.eval_gap(g))
        total += n_max * g * g * phi ** (d - 2) * (1.0 / g) ** d * c_d * tail
    return float(total)
