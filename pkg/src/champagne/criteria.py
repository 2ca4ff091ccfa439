"""Avoidability criteria: the boundary integral, its shell-series
equivalent, and a three-valued convergence classifier for finite windows.

The integral of phi(t)^(d-2)/(1-t)^(d-1) is evaluated after substituting
t = 1 - K^-s, under which the integrand becomes ln K * (phi_s K^s)^(d-2):
divergent families grow linearly in s instead of blowing up at t=1, and
the per-unit-s increments behave exactly like the shell-series terms.
"""

import enum
import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .field import TableProfile


class Verdict(str, enum.Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class CriterionReport:
    method: str                      # "Integral" | "ShellSeries" | "Wiener"
    terms: list                      # (index, term value)
    partial_sums: list
    verdict: Verdict
    tail_exponent: float | None
    flags: list = dfield(default_factory=list)

    def to_dict(self):
        return {
            "method": self.method,
            "terms": [[int(j), float(v)] for j, v in self.terms],
            "partialSums": [float(s) for s in self.partial_sums],
            "verdict": self.verdict.value,
            "tailExponent": None if self.tail_exponent is None
            else float(self.tail_exponent),
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# tail classification

def _fit_line(x, y):
    """Least-squares slope and R^2 of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x - x.mean()
    ym = y - y.mean()
    vxx = float(xm @ xm)
    if vxx == 0.0:
        return 0.0, 0.0
    slope = float(xm @ ym) / vxx
    ss_res = float(((ym - slope * xm) ** 2).sum())
    ss_tot = float(ym @ ym)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, r2


def classify_tail(terms, margin=0.1):
    """Three-valued convergence call on a finite window of series terms.

    Rule order: (i) non-vanishing terms (late-quartile mean at least half
    the early-quartile max) diverge; (ii) a geometric fit (log term vs
    index) with slope < -margin converges, accepted only when it explains
    the data at least as well as the power fit; (iii) a power fit
    (log term vs log index) with exponent p converges for p > 1+margin,
    diverges for p < 1-margin, and is otherwise inconclusive.

    Returns (verdict, tail_exponent); the exponent is the geometric slope
    when rule (ii) fires, otherwise the fitted p (None for rule (i),
    -inf for an all-zero window).
    """
    t = np.asarray(terms, dtype=float)
    if t.ndim != 1 or len(t) < 8:
        raise DomainError("classify_tail needs at least 8 terms")
    if np.any(t < 0.0):
        raise DomainError("series terms must be non-negative")
    if not np.any(t > 0.0):
        return Verdict.CONVERGES, -np.inf

    q = max(len(t) // 4, 1)
    first_max = t[:q].max()
    last_mean = t[-q:].mean()
    if first_max > 0.0 and last_mean >= 0.5 * first_max:
        return Verdict.DIVERGES, None

    pos = np.flatnonzero(t > 0.0)
    if len(pos) < 4:
        return Verdict.CONVERGES, -np.inf
    j = pos + 1.0          # 1-based index within the window
    logt = np.log(t[pos])

    slope, r2_geo = _fit_line(j, logt)
    pslope, r2_pow = _fit_line(np.log(j), logt)
    p = -pslope

    if slope < -margin and r2_geo >= r2_pow:
        return Verdict.CONVERGES, float(slope)
    if p > 1.0 + margin:
        return Verdict.CONVERGES, float(p)
    if p < 1.0 - margin:
        return Verdict.DIVERGES, float(p)
    return Verdict.INCONCLUSIVE, float(p)


# ---------------------------------------------------------------------------
# shell series (phi_j K^j)^(d-2)

def shell_series(profile, d, shells, margin=0.1):
    """Series report with terms (phi(rho_j) K^j)^(d-2) over the shell range."""
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    terms = []
    flags = []
    for j in shells.js():
        g = shells.K ** float(-j)
        if g < 1e-300:
            flags.append(f"truncated at j={j - 1}: K^-j underflows")
            break
        phi = float(profile.eval_gap(g))
        base = phi * shells.K ** float(j)
        term = base
        for _ in range(d - 3):
            term *= base
        terms.append((j, term))
    values = [v for _, v in terms]
    sums = list(np.cumsum(values))
    verdict, expo = classify_tail(values, margin=margin)
    return CriterionReport("ShellSeries", terms, sums, verdict, expo, flags)


# ---------------------------------------------------------------------------
# boundary integral

def integral_partial_s(profile, d, K, s_a, s_b, rel_tol=1e-10):
    """The boundary integral over t in [1-K^-s_a, 1-K^-s_b], computed in s.

    Substituting t = 1 - K^-s turns phi(t)^(d-2)/(1-t)^(d-1) dt into
    ln K (phi K^s)^(d-2) ds, which stays finite-magnitude arbitrarily
    close to the boundary.  Table profiles integrate in closed form.
    """
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    if s_a < 0.0 or s_b < s_a:
        raise DomainError("need 0 <= s_a <= s_b")
    if s_a == s_b:
        return 0.0
    lnk = math.log(K)
    dm2 = d - 2

    if isinstance(profile, TableProfile):
        s_knots = [-math.log1p(-t) / lnk for t, _ in profile.knots]
        if s_a < s_knots[0] - 1e-12:
            raise DomainError("integration range starts below the first knot")
        vs = [v for _, v in profile.knots]
        cuts = [s_a] + [s for s in s_knots if s_a < s < s_b] + [s_b]
        total = 0.0
        for lo, hi in zip(cuts, cuts[1:]):
            i = np.searchsorted(s_knots, lo * (1 + 1e-15), side="right") - 1
            c = vs[max(i, 0)] ** dm2
            # integral of ln K * K^(s dm2) ds = K^(s dm2)/dm2
            total += c * (K ** (hi * dm2) - K ** (lo * dm2)) / dm2
        return float(total)

    def f(s):
        g = K ** -s
        return lnk * (profile.eval_gap(g) * K ** s) ** dm2

    val, _ = quad(f, s_a, s_b, epsabs=0.0, epsrel=rel_tol, limit=400)
    return float(val)


def integral_partial(profile, d, a, b, K=5.0, rel_tol=1e-10):
    """integral_a^b phi(t)^(d-2) / (1-t)^(d-1) dt for 0 <= a <= b < 1."""
    if not (0.0 <= a < 1.0) or not (0.0 <= b < 1.0):
        raise DomainError("integration endpoints must lie in [0,1)")
    if b < a:
        raise DomainError("need a <= b")
    lnk = math.log(K)
    return integral_partial_s(profile, d, K, -math.log1p(-a) / lnk,
                              -math.log1p(-b) / lnk, rel_tol=rel_tol)


def integral_report(profile, d, K=5.0, levels=32, margin=0.1):
    """Classify the boundary integral from its per-level increments.

    Increment m is the integral over t in [1-K^-(m-1), 1-K^-m], i.e. one
    unit of s after substitution; the increments mirror the shell series,
    so the same tail classifier applies.
    """
    if levels < 8:
        raise DomainError("need at least 8 levels to classify")
    increments = []
    for m in range(1, levels + 1):
        increments.append((m, integral_partial_s(profile, d, K,
                                                 float(m - 1), float(m))))
    values = [v for _, v in increments]
    sums = list(np.cumsum(values))
    verdict, expo = classify_tail(values, margin=margin)
    return CriterionReport("Integral", increments, sums, verdict, expo)


# ---------------------------------------------------------------------------
# cross-checks

@dataclass
class EquivalenceReport:
    series: CriterionReport
    integral: CriterionReport
    wiener: "object"               # WienerReport; typed loosely to avoid a cycle
    consistent: bool

    def verdicts(self):
        return {
            "series": self.series.verdict,
            "integral": self.integral.verdict,
            "wiener": self.wiener.verdict,
        }

    def to_dict(self):
        return {
            "series": self.series.to_dict(),
            "integral": self.integral.to_dict(),
            "wiener": self.wiener.to_dict(),
            "consistent": self.consistent,
        }


def mutually_consistent(verdicts):
    """True when all non-Inconclusive verdicts agree."""
    hard = [v for v in verdicts if v != Verdict.INCONCLUSIVE]
    return all(v == hard[0] for v in hard) if hard else True


def equivalence_check(field, tau, max_level=10, levels=32, margin=0.1):
    """Run the three avoidability tests on one field and compare verdicts.

    Inconclusive entries are reported as-is and ignored by the
    consistency flag, never coerced.
    """
    from .whitney import wiener_series

    if field.profile is None:
        raise DomainError("equivalence check needs a field with a profile")
    series = shell_series(field.profile, field.d, field.shells, margin=margin)
    integral = integral_report(field.profile, field.d, K=field.shells.K,
                               levels=max(levels, 8), margin=margin)
    wiener = wiener_series(field, tau, max_level=max_level, margin=margin)
    consistent = mutually_consistent(
        [series.verdict, integral.verdict, wiener.verdict])
    return EquivalenceReport(series, integral, wiener, consistent)
