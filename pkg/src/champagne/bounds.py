"""Closed-form harmonic-measure bounds built from Kelvin-transform barriers.

The single-obstacle sandwich pairs u(x) = (r/|x-c|)^(d-2) with its Kelvin
reflection u*(x) = (r/w(x))^(d-2), where

    w(x)^2 = |x-c|^2 + (1-|x|^2)(1-|c|^2)

(the algebraic form of |x| |x/|x|^2 - c|; it makes u* >= u impossible and
vanishing of the gap on the sphere exact).  u - u* is harmonic, vanishes
on the unit sphere, and is at most 1 on the obstacle, so it sits below
the obstacle's hitting probability; doubling it dominates the hitting
probability wherever u* <= 1/2 on the obstacle surface, which has the
exact certificate sup u* = (r / (1 - |c|^2 - r|c|))^(d-2).
"""

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .criteria import integral_partial_s
from .errors import ConfigurationError, DomainError

_EXT_TERM_FLOOR = 1e-18
_EXT_MAX_SHELLS = 200000


@dataclass(frozen=True)
class SandwichBound:
    lower: float
    upper: float
    upper_valid: bool
    u_star_max: float

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper,
                "upperValid": self.upper_valid, "uStarMax": self.u_star_max}


@dataclass
class BoundReport:
    kind: str                     # "UnionTail" | "ProductAvoidance"
    per_shell_terms: list
    value: float
    valid_from_j: int | None
    flags: list = dfield(default_factory=list)
    extras: dict = dfield(default_factory=dict)

    def to_dict(self):
        return {
            "kind": self.kind,
            "perShellTerms": [[int(j), float(v)] for j, v in self.per_shell_terms],
            "value": float(self.value),
            "validFromJ": None if self.valid_from_j is None else int(self.valid_from_j),
            "flags": list(self.flags),
            "extras": {k: (float(v) if isinstance(v, (int, float, np.floating))
                           else v) for k, v in self.extras.items()},
        }


def _pow_dm2(x, d):
    p = x
    for _ in range(d - 3):
        p *= x
    return p


def sandwich_values(center, r, x, d):
    """(u, u_star) of the Kelvin pair at x."""
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    dist2 = float(((x - center) ** 2).sum())
    xn2 = float((x ** 2).sum())
    cn2 = float((center ** 2).sum())
    u = _pow_dm2(r / math.sqrt(dist2), d)
    w = math.sqrt(dist2 + (1.0 - xn2) * (1.0 - cn2))
    return u, _pow_dm2(r / w, d)


def sandwich(center, r, x, d):
    """Two-sided barrier bound on the obstacle-hitting probability at x.

    lower = u - u* never exceeds the harmonic measure of the obstacle
    boundary in (ball minus obstacle); upper = 2 lower dominates it when
    upper_valid certifies sup u* <= 1/2 on the obstacle surface.
    """
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    if r <= 0.0:
        raise DomainError("obstacle radius must be positive")
    cn = float(np.linalg.norm(center))
    if cn + r >= 1.0:
        raise DomainError("obstacle must lie strictly inside the unit ball")
    xn = float(np.linalg.norm(x))
    if xn > 1.0 + 1e-15:
        raise DomainError("evaluation point lies outside the closed unit ball")
    if float(np.linalg.norm(x - center)) <= r:
        raise DomainError("evaluation point lies inside the obstacle")

    u, ustar = sandwich_values(center, r, x, d)
    lower = max(u - ustar, 0.0)
    denom = 1.0 - cn * cn - r * cn
    if denom > 0.0:
        u_star_max = _pow_dm2(r / denom, d)
    else:
        u_star_max = math.inf
    return SandwichBound(lower, min(2.0 * lower, 1.0), u_star_max <= 0.5,
                         u_star_max)


def exact_concentric(r, s, d):
    """Harmonic measure of the inner sphere in {r < |x| < 1} at radius s.

    The unique radial harmonic interpolant gives (s^(2-d)-1)/(r^(2-d)-1).
    """
    if not (0.0 < r < s < 1.0):
        raise DomainError("need 0 < r < s < 1")
    return (s ** (2 - d) - 1.0) / (r ** (2 - d) - 1.0)


# ---------------------------------------------------------------------------
# union bound on hitting any obstacle beyond a depth

def _annulus_of(norm, K):
    """Annulus index j with rho_(j-1) < |c| <= rho_j (fp-tolerant)."""
    gap = 1.0 - norm
    return max(1, int(math.ceil(math.log(1.0 / gap) / math.log(K) - 1e-9)))


def sufficiency_depth(field):
    """(r, n_r) from which the per-paper tail bound is guaranteed below 1.

    r is the smallest radius with
    integral_r^1 phi^(d-2)/(1-t)^(d-1) dt < eps^d (K-1)^(d-2) /
    (2^(d+1) d (d-2) K^(2d-1)), and n_r the biggest integer smaller than
    1 + log(1/(1-r))/log K.  Returns (None, None) when the integral
    diverges (no such r exists).
    """
    profile, d = field.profile, field.d
    K, eps = field.shells.K, field.epsilon
    if profile is None:
        return None, None
    threshold = (eps ** d * (K - 1.0) ** (d - 2)
                 / (2.0 ** (d + 1) * d * (d - 2) * K ** (2 * d - 1)))

    inc1 = integral_partial_s(profile, d, K, 45.0, 60.0)
    inc2 = integral_partial_s(profile, d, K, 60.0, 75.0)
    if inc1 > 0.0 and inc2 >= 0.5 * inc1:
        return None, None          # no geometric decay: integral diverges
    ratio = inc2 / inc1 if inc1 > 0.0 else 0.0
    remainder = inc2 * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf

    def tail(s):
        return integral_partial_s(profile, d, K, s, 75.0) + remainder

    if tail(0.0) < threshold:
        return 0.0, 0
    lo_s, hi_s = 0.0, 60.0
    for _ in range(80):
        mid = 0.5 * (lo_s + hi_s)
        if tail(mid) < threshold:
            hi_s = mid
        else:
            lo_s = mid
    s = hi_s
    r = 1.0 - K ** -s
    n_r = math.ceil(1.0 + s) - 1
    return r, int(n_r)


def union_tail_bound(field, from_depth):
    """Certified upper bound on ever hitting an obstacle at |c| >= rho_J.

    Sums the sandwich uppers at the origin over generated obstacles with
    |c| >= rho_(from_depth), then extends analytically past the generated
    range with the per-shell product of the separation-derived centre
    count 2^d d K^2 / eps^d K^((d-1)j) and the barrier value bound
    4K(d-2) (phi_(j-1)/rho_(j-1))^(d-2) K^-j, provided the field carries
    a profile and separation constant.  The value is clipped to 1 (a
    probability); a divergent extension is reported as the vacuous 1.
    """
    shells = field.shells
    if not (0 <= from_depth):
        raise DomainError("from_depth must be >= 0")
    rho_from = shells.rho(from_depth)
    d, K = field.d, shells.K

    flags = []
    sel = field.norms >= rho_from
    per_shell = {}
    uncertified = set()
    total = 0.0
    for i in np.flatnonzero(sel):
        b = sandwich(field.centers[i], float(field.radii[i]),
                     np.zeros(d), d)
        total += b.upper
        j = _annulus_of(field.norms[i], K)
        per_shell[j] = per_shell.get(j, 0.0) + b.upper
        if not b.upper_valid:
            uncertified.add(j)
    if uncertified:
        flags.append("uncertified: sup u* > 1/2 on shells "
                     f"{sorted(uncertified)}")

    ext_total = 0.0
    if field.profile is not None and field.epsilon > 0.0:
        eps = field.epsilon
        const = 2.0 ** d * d * K * K / eps ** d * 4.0 * K * (d - 2)
        j = max(shells.j_max + 1, from_depth)
        prev = math.inf
        rising = 0
        while j - shells.j_max <= _EXT_MAX_SHELLS:
            gap_prev = K ** float(-(j - 1))
            if gap_prev < 1e-300:
                flags.append(f"extension truncated at j={j}: underflow")
                break
            phi_prev = float(field.profile.eval_gap(gap_prev))
            term = (const * K ** float((d - 1) * j)
                    * (phi_prev / (1.0 - gap_prev)) ** (d - 2)
                    * K ** float(-j))
            per_shell[j] = per_shell.get(j, 0.0) + term
            ext_total += term
            if term >= prev:
                rising += 1
                if rising >= 8:
                    flags.append("divergent analytic extension: bound is "
                                 "the vacuous 1")
                    ext_total = math.inf
                    break
            else:
                rising = 0
            if term < _EXT_TERM_FLOOR * max(ext_total + total, 1e-300):
                break
            prev = term
            j += 1
    else:
        flags.append("no profile/epsilon: tail beyond the generated range "
                     "not extended")

    raw = total + ext_total
    valid_from = None
    certified = [j for j in sorted(per_shell) if j not in uncertified]
    for j in sorted(per_shell):
        if all(jj in certified for jj in per_shell if jj >= j):
            valid_from = j
            break

    r_thr, n_r = sufficiency_depth(field)
    extras = {"rawSum": raw, "generatedSum": total, "extensionSum": ext_total}
    if r_thr is not None:
        extras["thresholdRadius"] = r_thr
        extras["guaranteedDepth"] = n_r

    return BoundReport("UnionTail", sorted(per_shell.items()),
                       min(raw, 1.0), valid_from, flags, extras)


# ---------------------------------------------------------------------------
# product bound on avoidance of a parity-thinned field

def product_avoidance_bound(field, parity, j_end=None):
    """Upper bound on avoiding all obstacles in annuli of one parity.

    Multiplies 1 - t_j over annuli of the requested parity from the first
    j where rho_(j+1)/rho_(j-1) < (1+D)/2 (D = K/(K-1)), with

        t_j = [1 - (rho_(j+1)/(D rho_(j-1)))^(d-2)]
              * (phi_j / ((K-1) K^-j))^(d-2)

    clamped to [0,1).  Requires K > max{4, (1+R)/(1-R)} for the field's
    declared density constant R.
    """
    if parity not in ("even", "odd"):
        raise DomainError(f"parity must be 'even' or 'odd', got {parity!r}")
    if field.profile is None:
        raise DomainError("product bound needs a field with a profile")
    d, shells = field.d, field.shells
    K, R = shells.K, field.density_r
    if R >= 1.0:
        raise ConfigurationError(
            "field is not uniformly dense at probe resolution (R >= 1); "
            "the lemma precondition K > max{4, (1+R)/(1-R)} is unsatisfiable")
    needed = max(4.0, (1.0 + R) / (1.0 - R))
    if not K > needed:
        raise ConfigurationError(
            f"K = {K} violates the lemma constraint "
            f"K > max{{4, (1+R)/(1-R)}} = {needed:.6g} for R = {R:.6g}")

    D = K / (K - 1.0)
    valid_from = None
    for j in range(2, max(shells.j_max, 3) + 64):
        if (1.0 - K ** float(-(j + 1))) / (1.0 - K ** float(-(j - 1))) \
                < (1.0 + D) / 2.0:
            valid_from = j
            break
    if valid_from is None:
        raise ConfigurationError("no shell satisfies the sufficiently-large-j "
                                 "condition in the scanned range")

    j_end = shells.j_max if j_end is None else int(j_end)
    want = 0 if parity == "even" else 1
    terms = []
    value = 1.0
    for j in range(valid_from, j_end + 1):
        if j % 2 != want:
            continue
        rho_m = 1.0 - K ** float(-(j - 1))
        rho_p = 1.0 - K ** float(-(j + 1))
        phi_j = float(field.profile.eval_gap(K ** float(-j)))
        bracket = 1.0 - _pow_dm2(rho_p / (D * rho_m), d)
        t = bracket * _pow_dm2(phi_j / ((K - 1.0) * K ** float(-j)), d)
        t = min(max(t, 0.0), 1.0 - 1e-16)
        terms.append((j, t))
        value *= 1.0 - t

    return BoundReport("ProductAvoidance", terms, value, valid_from,
                       extras={"parity": parity, "jEnd": j_end, "D": D})
