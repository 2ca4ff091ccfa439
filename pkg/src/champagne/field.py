"""Obstacle-field geometry: radius profiles, shell ladders, generation,
spacing validation, and JSON round-tripping.

Radius profiles are evaluated from the boundary gap g = 1 - t internally;
shell radii rho_j = 1 - K^-j round to exactly 1.0 in double precision for
deep j, so anything computed from t directly would silently lose the very
scales the convergence criteria care about.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import spatial
from .errors import ConfigurationError, DomainError, RangeError, SchemaError
from .rng import derive_key, unit_vector_at
from .spatial import GridIndex, nearest_query

_GAP_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# radius profiles

@dataclass(frozen=True)
class PowerLawProfile:
    """phi(t) = c (1-t)^alpha."""

    c: float
    alpha: float

    kind = "powerlaw"

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise SchemaError(f"PowerLaw c must be in (0,1), got {self.c}")
        if self.alpha <= 0.0:
            raise SchemaError(f"PowerLaw alpha must be positive, got {self.alpha}")

    def eval_gap(self, g):
        return self.c * g ** self.alpha

    def params(self):
        return {"c": self.c, "alpha": self.alpha}


@dataclass(frozen=True)
class PowerLogProfile:
    """phi(t) = c (1-t) / log(e/(1-t))^beta."""

    c: float
    beta: float

    kind = "powerlog"

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise SchemaError(f"PowerLog c must be in (0,1), got {self.c}")
        if self.beta <= 0.0:
            raise SchemaError(f"PowerLog beta must be positive, got {self.beta}")

    def eval_gap(self, g):
        # log(e/g) = 1 - log(g)
        return self.c * g / (1.0 - np.log(g)) ** self.beta

    def params(self):
        return {"c": self.c, "beta": self.beta}


@dataclass(frozen=True)
class TableProfile:
    """Left-constant step profile over sorted (t, phi) knots.

    The last knot's value extends to t -> 1; evaluating below the first
    knot is a domain error.  Step interpolation keeps monotonicity exact.
    """

    knots: tuple

    kind = "table"

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) == 0:
            raise SchemaError("Table profile needs at least one knot")
        ts = [t for t, _ in knots]
        vs = [v for _, v in knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise SchemaError("Table knots must be sorted strictly by t")
        if any(not (0.0 <= t < 1.0) for t in ts):
            raise SchemaError("Table knot abscissae must lie in [0,1)")
        if any(not (0.0 < v < 1.0) for v in vs):
            raise SchemaError("Table knot values must lie in (0,1)")
        if any(b > a for a, b in zip(vs, vs[1:])):
            raise SchemaError("Table knot values must be non-increasing")

    def eval_gap(self, g):
        t = 1.0 - np.asarray(g, dtype=float)
        ts = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        idx = np.searchsorted(ts, t, side="right") - 1
        if np.any(idx < 0):
            raise DomainError("t below the Table profile's first knot")
        out = vs[idx]
        return float(out) if np.isscalar(g) or np.ndim(g) == 0 else out

    def params(self):
        return {"knots": [[t, v] for t, v in self.knots]}


def profile_eval(profile, t):
    """phi(t); t must lie in [0,1)."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0.0) or np.any(ta >= 1.0):
        raise DomainError(f"profile argument must lie in [0,1), got {t}")
    return profile.eval_gap(1.0 - ta)


def profile_to_dict(profile):
    if profile is None:
        return None
    return {"kind": profile.kind, **profile.params()}


def profile_from_dict(doc):
    if doc is None:
        return None
    try:
        kind = doc["kind"]
    except (KeyError, TypeError):
        raise SchemaError(f"profile document lacks a kind: {doc!r}")
    if kind == "powerlaw":
        return PowerLawProfile(doc["c"], doc["alpha"])
    if kind == "powerlog":
        return PowerLogProfile(doc["c"], doc["beta"])
    if kind == "table":
        return TableProfile(tuple((t, v) for t, v in doc["knots"]))
    raise SchemaError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# shell geometry

@dataclass(frozen=True)
class ShellGeometry:
    """Geometric shell ladder rho_j = 1 - K^-j."""

    K: float
    j_min: int
    j_max: int

    def __post_init__(self):
        if not self.K > 1.0:
            raise SchemaError(f"K must exceed 1, got {self.K}")
        if self.j_min < 1:
            raise SchemaError(f"j_min must be >= 1, got {self.j_min}")
        if self.j_max < self.j_min - 1:
            raise SchemaError("j_max may be at most one below j_min (empty range)")
        self.gap(max(self.j_max, 1))  # underflow guard at construction

    def gap(self, j):
        """Boundary gap K^-j of shell j."""
        g = self.K ** float(-j)
        if g < _GAP_FLOOR:
            raise RangeError(f"K^-j underflows for K={self.K}, j={j}")
        return g

    def rho(self, j):
        return 1.0 - self.gap(j)

    def js(self):
        return range(self.j_min, self.j_max + 1)


def shell_radius(shells, j):
    """Radius rho_j = 1 - K^-j of the j-th shell sphere."""
    if j < 0:
        raise DomainError(f"shell index must be >= 0, got {j}")
    return shells.rho(j)


# ---------------------------------------------------------------------------
# obstacles and fields

@dataclass(frozen=True, eq=False)
class Obstacle:
    center: np.ndarray
    radius: float


@dataclass
class SpacingReport:
    epsilon_empirical: float
    density_r_empirical: float
    violations: list
    vacuous: bool = False


class ObstacleField:
    """Immutable collection of closed balls inside the unit ball.

    `epsilon` and `density_r` are the declared spacing constants (the
    generator stores measured values); `profile` may be None for
    hand-assembled fields, which disables profile-driven extensions.
    """

    def __init__(self, d, centers, radii, epsilon, density_r, shells,
                 profile=None, validate=True):
        centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, d)
        radii = np.ascontiguousarray(radii, dtype=np.float64).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise SchemaError("centers/radii length mismatch")
        if d < 3:
            raise SchemaError(f"dimension must be >= 3, got {d}")
        self.d = int(d)
        self.centers = centers
        self.radii = radii
        self.epsilon = float(epsilon)
        self.density_r = float(density_r)
        self.shells = shells
        self.profile = profile
        self.norms = np.sqrt((centers ** 2).sum(axis=1))
        for a in (self.centers, self.radii, self.norms):
            a.flags.writeable = False
        self._index = None
        self._wiener_cache = {}
        if validate:
            self._validate()

    # -- construction checks ------------------------------------------------

    def _validate(self):
        n = self.n_obstacles
        if n == 0:
            return
        if np.any(self.radii <= 0.0):
            raise ConfigurationError("non-positive obstacle radius")
        bad = self.norms + self.radii >= 1.0
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ConfigurationError(
                f"obstacle {i} pokes outside the unit ball "
                f"(|c|+r = {self.norms[i] + self.radii[i]:.17g})")
        inside = self.radii >= self.norms
        if np.any(inside):
            i = int(np.argmax(inside))
            raise ConfigurationError(f"origin lies inside obstacle {i}")
        if n > 1:
            margin, i = _min_surface_margin(*self.index().arrays)
            if margin <= 0.0:
                raise ConfigurationError(
                    f"obstacles are not pairwise disjoint (worst at id {i}, "
                    f"margin {margin:.3g})")

    # -- views ---------------------------------------------------------------

    @property
    def n_obstacles(self):
        return self.centers.shape[0]

    @property
    def obstacles(self):
        return [Obstacle(self.centers[i], float(self.radii[i]))
                for i in range(self.n_obstacles)]

    def index(self):
        if self._index is None:
            self._index = GridIndex(self.centers, self.radii)
        return self._index

    def with_profile(self, profile, validate=True):
        """Same centres, radii re-derived from `profile` at each |c|."""
        radii = np.asarray(profile.eval_gap(1.0 - self.norms), dtype=float)
        return ObstacleField(self.d, self.centers.copy(), radii, self.epsilon,
                             self.density_r, self.shells, profile,
                             validate=validate)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "dimension": self.d,
            "K": self.shells.K,
            "jMin": self.shells.j_min,
            "jMax": self.shells.j_max,
            "profile": profile_to_dict(self.profile),
            "epsilon": self.epsilon,
            "densityR": self.density_r,
            "obstacles": [{"center": list(map(float, c)), "radius": float(r)}
                          for c, r in zip(self.centers, self.radii)],
        }

    @classmethod
    def from_dict(cls, doc, validate=False):
        try:
            d = int(doc["dimension"])
            shells = ShellGeometry(float(doc["K"]), int(doc["jMin"]),
                                   int(doc["jMax"]))
            profile = profile_from_dict(doc.get("profile"))
            obstacles = doc["obstacles"]
            centers = np.array([o["center"] for o in obstacles],
                               dtype=np.float64).reshape(-1, d)
            radii = np.array([o["radius"] for o in obstacles], dtype=np.float64)
            return cls(d, centers, radii, float(doc["epsilon"]),
                       float(doc["densityR"]), shells, profile,
                       validate=validate)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed field document: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, validate=False):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), validate=validate)


# ---------------------------------------------------------------------------
# generation

@njit(cache=True)
def _pack_sphere(d, rho, reject, cap, budget, key, out):
    """Greedy dart-throwing packing of a sphere of radius rho.

    Accepts a dart when no prior dart lies within `reject` (chordal).
    Deterministic in `key`; returns the accepted count (rows of `out`).
    """
    size = 1
    while size < 4 * cap + 8:
        size <<= 1
    mask = size - 1
    tkey = np.full(size, np.int64(-1), dtype=np.int64)
    thead = np.full(size, np.int64(-1), dtype=np.int64)
    nxt = np.full(cap, np.int64(-1), dtype=np.int64)

    u = np.empty(d, dtype=np.float64)
    coords = np.empty(d, dtype=np.int64)
    count = 0
    ctr = 0
    r2 = reject * reject
    for _ in range(budget):
        ctr = unit_vector_at(key, ctr, u)
        for k in range(d):
            u[k] *= rho
        ok = True
        width = 3
        ncell = 1
        for _ in range(d):
            ncell *= width
        for t in range(ncell):
            rem = t
            for k in range(d):
                coords[k] = np.int64(np.floor((u[k] + 1.0) / reject)) + rem % width - 1
                rem //= width
            ckey = np.int64(spatial._cell_hash(coords, d) >> np.uint64(1))
            slot = np.int64(spatial._cell_hash(coords, d)) & mask
            while True:
                if tkey[slot] == ckey:
                    p = thead[slot]
                    while p >= 0:
                        s = 0.0
                        for k in range(d):
                            dx = u[k] - out[p, k]
                            s += dx * dx
                        if s <= r2:
                            ok = False
                            break
                        p = nxt[p]
                    break
                if tkey[slot] == -1:
                    break
                slot = (slot + 1) & mask
            if not ok:
                break
        if not ok:
            continue
        if count >= cap:
            break
        # insert into own cell
        for k in range(d):
            coords[k] = np.int64(np.floor((u[k] + 1.0) / reject))
            out[count, k] = u[k]
        ckey = np.int64(spatial._cell_hash(coords, d) >> np.uint64(1))
        slot = np.int64(spatial._cell_hash(coords, d)) & mask
        while tkey[slot] != -1 and tkey[slot] != ckey:
            slot = (slot + 1) & mask
        tkey[slot] = ckey
        nxt[count] = thead[slot]
        thead[slot] = count
        count += 1
    return count


def _packing_cap(d, rho, reject):
    """Upper bound on how many reject-separated points fit on the sphere."""
    area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0) * (rho + reject / 2.0) ** (d - 1)
    disk = math.pi ** ((d - 1) / 2.0) / math.gamma((d + 1) / 2.0) * (reject / 2.0) ** (d - 1)
    return int(math.ceil(area / disk)) + 8


def generate_regular_field(d, shells, profile, sep, seed, subshells=1,
                           retry_factor=64):
    """Greedy Poisson-disk obstacle field on the shell ladder.

    Darts land on the sphere of each (sub)shell radius and are rejected
    within chordal distance sep * (boundary gap); packing runs until the
    retry budget is exhausted, which approximates a maximal packing.
    `subshells` > 1 interpolates extra spheres geometrically inside each
    annulus, densifying the field for density-sensitive uses.

    Deterministic for a fixed seed: every (sub)shell draws from its own
    derived stream, so shell order and scheduling cannot matter.
    """
    if d < 3:
        raise ConfigurationError(f"dimension must be >= 3, got {d}")
    if not (0.0 < sep < 1.0):
        raise ConfigurationError(f"sep must lie in (0,1), got {sep}")
    if subshells < 1:
        raise ConfigurationError("subshells must be >= 1")

    levels = []
    for j in shells.js():
        for l in range(1, subshells + 1):
            e = (j - 1) + l / subshells
            gap = shells.K ** -e
            if gap < _GAP_FLOOR:
                raise RangeError(f"shell {j} underflows (K^-{e:.3f})")
            r = float(profile.eval_gap(gap))
            levels.append((j, e, gap, 1.0 - gap, r))

    # geometric feasibility before any darts fly
    for j, e, gap, rho, r in levels:
        reject = sep * gap
        if r <= 0.0:
            raise ConfigurationError(f"profile vanishes on shell {j}")
        if r >= gap:
            raise ConfigurationError(
                f"shell {j}: radius {r:.3g} does not fit inside the ball "
                f"(gap {gap:.3g})")
        if r >= rho:
            raise ConfigurationError(
                f"shell {j}: radius {r:.3g} swallows the origin (rho {rho:.3g})")
        if 2.0 * r >= reject:
            raise ConfigurationError(
                f"shell {j}: obstacles of radius {r:.3g} cannot be disjoint "
                f"under rejection radius {reject:.3g}")
    for (j0, _, _, rho0, r0), (j1, _, _, rho1, r1) in zip(levels, levels[1:]):
        if rho1 - rho0 <= r0 + r1:
            raise ConfigurationError(
                f"shells {j0}/{j1}: radial gap {rho1 - rho0:.3g} cannot "
                f"separate radii {r0:.3g} + {r1:.3g}")

    chunks = []
    radii_chunks = []
    for li, (j, e, gap, rho, r) in enumerate(levels):
        reject = sep * gap
        cap = _packing_cap(d, rho, reject)
        budget = retry_factor * cap
        buf = np.empty((cap, d), dtype=np.float64)
        got = _pack_sphere(d, rho, reject, cap, budget, derive_key(seed, li), buf)
        chunks.append(buf[:got].copy())
        radii_chunks.append(np.full(got, r))

    if chunks:
        centers = np.vstack(chunks)
        radii = np.concatenate(radii_chunks)
    else:
        centers = np.empty((0, d))
        radii = np.empty(0)

    if centers.shape[0] >= 2:
        index = GridIndex(centers, radii)
        eps_emp, _, _ = _exact_min_ratio(index)
        epsilon = eps_emp * (1.0 - 1e-9)
    else:
        index = GridIndex(centers, radii) if centers.shape[0] else None
        epsilon = sep
    if centers.shape[0] >= 1:
        density = _measure_density(index, shells, d, probe_count=2048,
                                   seed=derive_key(seed, 1 << 40))
    else:
        density = 1.0

    return ObstacleField(d, centers, radii, epsilon, density, shells,
                         profile, validate=True)


# ---------------------------------------------------------------------------
# spacing validation

@njit(cache=True, parallel=True)
def _min_surface_margin_kernel(out, centers, radii, norms, order, ukeys,
                               ustart, band_id, band_h, band_rmax,
                               band_gmin, band_gmax, ub_lo, ub_hi):
    n = centers.shape[0]
    for i in prange(n):
        cap = 2.0 * (1.0 - norms[i])
        best = np.inf
        while True:
            best, bid = nearest_query(centers[i], cap, np.inf, i, True,
                                      np.inf, -1, centers, radii, norms,
                                      order, ukeys, ustart, band_id, band_h,
                                      band_rmax, band_gmin, band_gmax,
                                      ub_lo, ub_hi)
            if bid >= 0 and best < cap:
                break
            if cap > 4.0:
                best, bid = nearest_query(centers[i], np.inf, np.inf, i, True,
                                          np.inf, -1, centers, radii, norms,
                                          order, ukeys, ustart, band_id,
                                          band_h, band_rmax, band_gmin,
                                          band_gmax, ub_lo, ub_hi)
                break
            cap *= 4.0
        out[i] = best - radii[i]


def _min_surface_margin(*arrays):
    n = arrays[0].shape[0]
    out = np.empty(n)
    _min_surface_margin_kernel(out, *arrays)
    i = int(np.argmin(out))
    return float(out[i]), i


@njit(cache=True, parallel=True)
def _pair_ratio_pass(cap, out_ratio, out_j, centers, radii, norms, order,
                     ukeys, ustart, band_id, band_h, band_rmax, band_gmin,
                     band_gmax, ub_lo, ub_hi):
    """Per-obstacle min of |c_i-c_j| / (1-max(|c_i|,|c_j|)) within reach cap."""
    n = centers.shape[0]
    d = centers.shape[1]
    nb = band_id.shape[0]
    for i in prange(n):
        R = cap * (1.0 - norms[i])
        best = np.inf
        bj = -1
        coords = np.empty(d, dtype=np.int64)
        for s in range(nb):
            if 1.0 - band_gmin[s] < norms[i] - R or 1.0 - band_gmax[s] > norms[i] + R:
                continue
            klo = ub_lo[s]
            khi = ub_hi[s]
            if klo >= khi:
                continue
            h = band_h[s]
            b = band_id[s]
            span = 2.0 * R / h + 2.0
            if span ** d > spatial._MAX_CELLS:
                for t in range(ustart[klo], ustart[khi]):
                    jj = order[t]
                    if jj == i:
                        continue
                    sdist = 0.0
                    for k in range(d):
                        dx = centers[i, k] - centers[jj, k]
                        sdist += dx * dx
                    dist = np.sqrt(sdist)
                    if dist <= R:
                        nmax = norms[i] if norms[i] > norms[jj] else norms[jj]
                        ratio = dist / (1.0 - nmax)
                        if ratio < best:
                            best = ratio
                            bj = jj
                continue
            base = np.empty(d, dtype=np.int64)
            spans = np.empty(d, dtype=np.int64)
            total = 1
            for k in range(d):
                c0 = np.int64(np.floor((centers[i, k] - R + 1.0) / h))
                c1 = np.int64(np.floor((centers[i, k] + R + 1.0) / h))
                base[k] = c0
                spans[k] = c1 - c0 + 1
                total *= spans[k]
            for t in range(total):
                rem = t
                for k in range(d):
                    coords[k] = base[k] + rem % spans[k]
                    rem //= spans[k]
                slot = spatial._find_cell(
                    ukeys, klo, khi,
                    spatial._pack_key(b, spatial._cell_hash(coords, d)))
                if slot < 0:
                    continue
                for u in range(ustart[slot], ustart[slot + 1]):
                    jj = order[u]
                    if jj == i:
                        continue
                    sdist = 0.0
                    for k in range(d):
                        dx = centers[i, k] - centers[jj, k]
                        sdist += dx * dx
                    dist = np.sqrt(sdist)
                    if dist <= R:
                        nmax = norms[i] if norms[i] > norms[jj] else norms[jj]
                        ratio = dist / (1.0 - nmax)
                        if ratio < best:
                            best = ratio
                            bj = jj
        out_ratio[i] = best
        out_j[i] = bj


def _exact_min_ratio(index):
    """Exact min over ordered pairs of |c-c'|/(1-|c|_outer); (-> ratio, i, j)."""
    n = index.n
    if n < 2:
        return np.inf, -1, -1
    out_ratio = np.empty(n)
    out_j = np.empty(n, dtype=np.int64)
    cap = 1.0
    while True:
        _pair_ratio_pass(cap, out_ratio, out_j, *index.arrays)
        m = out_ratio.min()
        if m <= cap:
            i = int(np.argmin(out_ratio))
            return float(m), i, int(out_j[i])
        if not np.isfinite(m):
            cap *= 8.0
            if cap > 1e12:
                return np.inf, -1, -1
        else:
            cap = m * (1.0 + 1e-9)


def _quasi_points(d, count, seed):
    """Scrambled-Sobol unit directions plus a uniform auxiliary coordinate."""
    from scipy.stats import qmc

    sob = qmc.Sobol(d=d + 1, scramble=True, seed=seed)
    m = sob.random_base2(int(math.ceil(math.log2(max(count, 2)))))[:count]
    m = np.clip(m, 2.0 ** -53, 1.0 - 2.0 ** -53)
    from scipy.special import ndtri

    dirs = ndtri(m[:, :d])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs, m[:, d]


def _measure_density(index, shells, d, probe_count, seed):
    if shells.j_max < shells.j_min:
        return 1.0
    dirs, radial = _quasi_points(d, probe_count, int(seed) % (2 ** 32))
    r_lo = shells.rho(shells.j_min)
    r_hi = shells.rho(shells.j_max)
    rad = r_lo + radial * (r_hi - r_lo)
    worst = 0.0
    for i in range(len(rad)):
        x = dirs[i] * rad[i]
        dist, _ = index.nearest_center(x)
        ratio = dist / (1.0 - rad[i])
        if ratio > worst:
            worst = ratio
    return float(worst)


def validate_spacing(field, probe_count, seed, eps=None, density=None):
    """Empirical spacing audit of a field.

    epsilon_empirical is the exact minimum over ordered pairs of
    |c-c'|/(1-|c|) with the larger-norm centre in the denominator;
    density_r_empirical is the max over quasi-random probes of
    (distance to the nearest centre)/(1-|x|).  Violations are reported
    against the supplied (or declared) constants.
    """
    if probe_count < 1:
        raise DomainError("probeCount must be >= 1")
    eps = field.epsilon if eps is None else eps
    density = field.density_r if density is None else density

    if field.n_obstacles == 0:
        return SpacingReport(np.inf, 1.0, [], vacuous=True)

    if field.n_obstacles >= 2:
        eps_emp, wi, wj = _exact_min_ratio(field.index())
    else:
        eps_emp, wi, wj = np.inf, -1, -1

    violations = []
    if np.isfinite(eps_emp) and eps_emp <= eps:
        violations.extend(_pair_violations(field, eps))

    dirs, radial = _quasi_points(field.d, probe_count, int(seed) % (2 ** 32))
    r_lo = field.shells.rho(field.shells.j_min)
    r_hi = field.shells.rho(max(field.shells.j_max, field.shells.j_min))
    rad = r_lo + radial * (r_hi - r_lo)
    index = field.index()
    worst = 0.0
    for i in range(len(rad)):
        x = dirs[i] * rad[i]
        dist, _ = index.nearest_center(x)
        ratio = dist / (1.0 - rad[i])
        worst = max(worst, ratio)
        if ratio > density:
            violations.append(("probe", tuple(map(float, x)), float(ratio)))

    return SpacingReport(float(eps_emp), float(worst), violations)


def _pair_violations(field, eps, max_out=1024):
    """All ordered pairs with ratio <= eps (small fields / rare event)."""
    out = []
    centers, norms = field.centers, field.norms
    n = field.n_obstacles
    index = field.index()
    for i in range(n):
        R = eps * (1.0 - norms[i])
        d2 = ((centers - centers[i]) ** 2).sum(axis=1)
        near = np.flatnonzero(d2 <= R * R)
        for j in near:
            if j == i:
                continue
            nmax = max(norms[i], norms[j])
            outer, inner = (i, j) if norms[i] >= norms[j] else (j, i)
            if outer != i and not np.isclose(norms[i], norms[j]):
                continue  # charge the pair to its outer end once
            if norms[i] == norms[j] and j < i:
                continue
            ratio = math.sqrt(d2[j]) / (1.0 - nmax)
            if ratio <= eps:
                out.append(("pair", int(outer), int(inner), float(ratio)))
                if len(out) >= max_out:
                    return out
    _ = index
    return out
