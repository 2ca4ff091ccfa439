"""Walk-on-spheres estimator of harmonic measure for obstacle fields.

Each trial draws from its own counter-based stream (key = seed XOR trial),
so estimates are bit-identical under any worker count or schedule.  A
sweep over truncation depths runs as ONE coupled walk per trial: every
step ball is sized against the deepest still-active depth, hence contained
in every active depth's domain (the walk stays exact in law for each), and
an eta-contact with an obstacle resolves exactly the depths whose
truncation contains that obstacle.  Absorption sets are nested by
construction, which makes the escape estimate non-increasing in depth
path-wise, with no tolerance.

Truncation at depth J keeps obstacles with |c| <= rho_J; the domain beyond
is treated as obstacle-free, so the truncated estimate upper-bounds the
ideal field's escape probability and the union tail bound at J certifies
the gap.
"""

import math
import os
from dataclasses import dataclass, field as dfield

import numpy as np
from numba import njit, prange

from . import bounds as bounds_mod
from .errors import ConfigurationError, DomainError
from .rng import U64, stream_key, unit_vector_at
from .spatial import nearest_query

_WILSON_Z = 1.959963984540054
_STEP_BUDGET = 10 ** 13
_CENSOR_FLAG_FRACTION = 1e-3


@dataclass(frozen=True)
class WalkConfig:
    trials: int
    boundary_tol: float = 1e-6
    max_steps: int = 10 ** 6
    truncation_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not (0.0 < self.boundary_tol < 1e-2):
            raise ConfigurationError("boundary_tol must lie in (0, 1e-2)")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if self.trials * self.max_steps > _STEP_BUDGET:
            raise ConfigurationError(
                f"trials*max_steps exceeds the step budget {_STEP_BUDGET:g}")


@dataclass
class HarmonicEstimate:
    depth: int
    trials: int
    escapes: int
    absorbed: int
    censored: int
    p_hat: float
    ci_low: float
    ci_high: float
    tail_bound: float
    flags: list = dfield(default_factory=list)

    def bracket(self):
        """[p_hat - tail_bound, p_hat] brackets the ideal field's escape
        probability up to Monte Carlo error."""
        return max(self.p_hat - self.tail_bound, 0.0), self.p_hat

    def to_dict(self):
        lo, hi = self.bracket()
        return {
            "depth": self.depth, "trials": self.trials,
            "escapes": self.escapes, "absorbed": self.absorbed,
            "censored": self.censored, "pHat": self.p_hat,
            "ciLow": self.ci_low, "ciHigh": self.ci_high,
            "tailBound": self.tail_bound,
            "bracketLow": lo, "bracketHigh": hi,
            "flags": list(self.flags),
        }


def wilson_interval(successes, n, z=_WILSON_Z):
    """95% Wilson score interval for a binomial proportion."""
    if n <= 0:
        return math.nan, math.nan
    p = successes / n
    den = 1.0 + z * z / n
    centre = p + z * z / (2.0 * n)
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return (centre - half) / den, (centre + half) / den


def set_workers(n):
    """Pin the numba thread count (CHAMPAGNE_WORKERS honors this too)."""
    import numba

    numba.set_num_threads(max(1, int(n)))


def _env_workers():
    w = os.environ.get("CHAMPAGNE_WORKERS")
    if w:
        set_workers(int(w))


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _surface_dist(x, i, centers, radii):
    s = 0.0
    for k in range(centers.shape[1]):
        dx = x[k] - centers[i, k]
        s += dx * dx
    return np.sqrt(s) - radii[i]


@njit(cache=True, parallel=True)
def _walk_kernel(x0, trials, seed, rho_caps, eta, max_steps,
                 outcomes, absorber, steps_out,
                 centers, radii, norms, order, ukeys, ustart, band_id,
                 band_h, band_rmax, band_gmin, band_gmax, ub_lo, ub_hi):
    m = rho_caps.shape[0]
    d = x0.shape[0]
    have_obs = centers.shape[0] > 0
    for t in prange(trials):
        key = stream_key(seed, U64(t))
        ctr = 0
        x = x0.copy()
        dirbuf = np.empty(d)
        hi = m - 1
        nsteps = 0
        prev = -1
        while True:
            if nsteps >= max_steps:
                for i in range(hi + 1):
                    outcomes[t, i] = 2
                    absorber[t, i] = -1
                break
            xn = 0.0
            for k in range(d):
                xn += x[k] * x[k]
            douter = 1.0 - np.sqrt(xn)
            if douter < eta:
                for i in range(hi + 1):
                    outcomes[t, i] = 0
                    absorber[t, i] = -1
                break
            best = np.inf
            bid = -1
            if have_obs:
                if prev >= 0 and norms[prev] <= rho_caps[hi]:
                    best = _surface_dist(x, prev, centers, radii)
                    bid = prev
                best, bid = nearest_query(x, douter, rho_caps[hi], -1, True,
                                          best, bid, centers, radii, norms,
                                          order, ukeys, ustart, band_id,
                                          band_h, band_rmax, band_gmin,
                                          band_gmax, ub_lo, ub_hi)
            if bid >= 0 and best < eta:
                onorm = norms[bid]
                i = hi
                while i >= 0 and onorm <= rho_caps[i]:
                    outcomes[t, i] = 1
                    absorber[t, i] = bid
                    i -= 1
                hi = i
                if hi < 0:
                    break
                prev = -1
                continue
            step = best if best < douter else douter
            ctr = unit_vector_at(key, ctr, dirbuf)
            for k in range(d):
                x[k] += step * dirbuf[k]
            prev = bid
            nsteps += 1
        steps_out[t] = nsteps
    return 0


# ---------------------------------------------------------------------------
# public operations

def nearest_surfaces(x, field, depth=None):
    """(distance to the unit sphere, distance to the nearest indexed
    obstacle surface, its id or None) at an interior point x.

    Obstacles with |c| > rho_depth are ignored when depth is given.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (field.d,):
        raise DomainError(f"x must be a point in R^{field.d}")
    xn = float(np.linalg.norm(x))
    if xn >= 1.0:
        raise DomainError("x must lie in the open unit ball")
    norm_cap = np.inf if depth is None else field.shells.rho(depth) + 1e-12
    if field.n_obstacles == 0:
        return 1.0 - xn, np.inf, None
    dist, idx = field.index().nearest_surface(x, norm_cap=norm_cap)
    if idx >= 0 and dist <= 0.0:
        raise DomainError("x lies inside an obstacle")
    return 1.0 - xn, dist, (int(idx) if idx >= 0 else None)


def simulate_raw(field, x0, config, depths):
    """Coupled multi-depth walk; returns (outcomes, absorber ids, steps).

    outcomes[t, i]: 0 escape, 1 absorbed, 2 censored, for depths[i]
    (ascending).  absorber[t, i] is the eta-contacted obstacle id or -1.
    """
    _env_workers()
    depths = list(depths)
    if not depths:
        raise DomainError("need at least one depth")
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise DomainError("depths must be strictly increasing")
    sh = field.shells
    for J in depths:
        if not (sh.j_min <= J <= sh.j_max) and field.n_obstacles:
            raise DomainError(f"depth {J} outside the field's shell range "
                              f"[{sh.j_min}, {sh.j_max}]")
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    d_out, d_obs, _ = nearest_surfaces(x0, field,
                                       depth=depths[-1] if field.n_obstacles
                                       else None)
    if min(d_out, d_obs) <= 0.0:
        raise DomainError("x0 must lie strictly inside the walk domain")

    rho_caps = np.array([sh.rho(J) + 1e-12 for J in depths])
    m = len(depths)
    outcomes = np.full((config.trials, m), 255, dtype=np.uint8)
    absorber = np.full((config.trials, m), -1, dtype=np.int64)
    steps = np.zeros(config.trials, dtype=np.int64)
    seed = U64(int(config.seed) & 0xFFFFFFFFFFFFFFFF)
    _walk_kernel(x0, config.trials, seed, rho_caps,
                 float(config.boundary_tol), int(config.max_steps),
                 outcomes, absorber, steps, *field.index().arrays)
    return outcomes, absorber, steps


def _estimate_from_column(field, depth, trials, outcomes_col, flags_extra=()):
    escapes = int((outcomes_col == 0).sum())
    absorbed = int((outcomes_col == 1).sum())
    censored = int((outcomes_col == 2).sum())
    n = escapes + absorbed
    p_hat = escapes / n if n else math.nan
    ci_low, ci_high = wilson_interval(escapes, n)
    flags = list(flags_extra)
    if censored > _CENSOR_FLAG_FRACTION * trials:
        flags.append(f"excess censoring: {censored}/{trials} walks hit the "
                     "step limit")
    tail = bounds_mod.union_tail_bound(field, depth)
    return HarmonicEstimate(depth, trials, escapes, absorbed, censored,
                            p_hat, ci_low, ci_high, tail.value, flags)


def run_walks(field, x0, config):
    """Escape-probability estimate at one truncation depth.

    p_hat = escapes/(escapes+absorbed) with a 95% Wilson interval; the
    attached union tail bound certifies [p_hat - tailBound, p_hat] as a
    bracket for the untruncated field, up to Monte Carlo error.
    """
    depth = config.truncation_depth
    if depth is None:
        depth = field.shells.j_max if field.shells.j_max >= field.shells.j_min \
            else field.shells.j_min
    outcomes, _, _ = simulate_raw(field, x0, config, [depth])
    return _estimate_from_column(field, depth, config.trials, outcomes[:, 0])


def depth_sweep(field, config, depths, x0=None):
    """Estimates at several truncation depths under one coupled walk.

    Shares every trial's stream across depths, so the escape indicator is
    non-increasing in depth for each trial individually; a single-depth
    sweep is bit-identical to run_walks.
    """
    x0 = np.zeros(field.d) if x0 is None else x0
    outcomes, _, _ = simulate_raw(field, x0, config, depths)
    return [_estimate_from_column(field, J, config.trials, outcomes[:, i])
            for i, J in enumerate(depths)]
