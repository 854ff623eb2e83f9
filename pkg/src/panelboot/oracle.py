"""Exact finite-sample theory for the Gaussian stratum-means model.

With z_it ~ N(eta_i, phi) the pooled variance estimator satisfies
nm*phat/phi0 ~ chi-squared with n(m-1) degrees of freedom, so the scaled
estimation error, its bootstrap counterpart and every studentized
statistic have closed-form three-parameter Gamma or inverse-Gamma laws.
This module evaluates those laws directly: coverage numbers and plot
curves come from special-function calls, not simulation, which makes it
the reference the Monte Carlo engine is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import (
    gammainc,
    gammaincc,
    gammainccinv,
    gammaincinv,
    gammaln,
    ndtr,
    ndtri,
)

from .errors import NumericalError, UsageError

__all__ = [
    "Gamma3",
    "InvGamma3",
    "mle_exact_law",
    "corrected_mle_exact_law",
    "bootstrap_exact_law",
    "eps0_bootstrap_law",
    "studentized_exact_law",
    "exact_coverage",
    "percentile_coverage_quadrature",
    "figure1_curves",
    "second_moment_truth",
    "table1_rows",
    "TABLE1_DESIGNS",
    "STUDENTIZED_NAMES",
]

TABLE1_DESIGNS = ((10, 10), (20, 10), (40, 10), (100, 10))
STUDENTIZED_NAMES = ("s_hat", "s_check", "s_tilde")


def _as_array(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Gamma3:
    """location + scale * G with G ~ Gamma(shape, 1).

    ``mirrored`` represents the law of the negated variable, which keeps
    left-skewed statistics in the same family without ad hoc sign
    flipping at every call site.
    """

    location: float
    shape: float
    scale: float
    mirrored: bool = False

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise UsageError("Gamma3 needs shape > 0 and scale > 0")

    @property
    def mean(self) -> float:
        m = self.location + self.shape * self.scale
        return -m if self.mirrored else m

    @property
    def variance(self) -> float:
        return self.shape * self.scale * self.scale

    def cdf(self, x):
        x = _as_array(x)
        if self.mirrored:
            t = (-x - self.location) / self.scale
            return gammaincc(self.shape, np.maximum(t, 0.0)) * (t > 0) + 1.0 * (t <= 0)
        t = (x - self.location) / self.scale
        return np.where(t > 0, gammainc(self.shape, np.maximum(t, 0.0)), 0.0)

    def pdf(self, x):
        x = _as_array(x)
        t = ((-x if self.mirrored else x) - self.location) / self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (
                (self.shape - 1.0) * np.log(np.maximum(t, 1e-300))
                - t
                - gammaln(self.shape)
                - math.log(self.scale)
            )
        return np.where(t > 0, np.exp(logf), 0.0)

    def quantile(self, q):
        q = _as_array(q)
        if np.any((q <= 0) | (q >= 1)):
            raise UsageError("quantile argument must lie in (0, 1)")
        if self.mirrored:
            return -(self.location + self.scale * gammaincinv(self.shape, 1.0 - q))
        return self.location + self.scale * gammaincinv(self.shape, q)


@dataclass(frozen=True)
class InvGamma3:
    """location + scale / G with G ~ Gamma(shape, 1), support above location.

    ``mirrored=True`` is the law of the negated variable (support below
    -location); the left-skewed studentized statistics live there.
    """

    location: float
    shape: float
    scale: float
    mirrored: bool = False

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise UsageError("InvGamma3 needs shape > 0 and scale > 0")

    @property
    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf if not self.mirrored else -math.inf
        m = self.location + self.scale / (self.shape - 1.0)
        return -m if self.mirrored else m

    @property
    def variance(self) -> float:
        if self.shape <= 2:
            return math.inf
        d = self.shape - 1.0
        return self.scale * self.scale / (d * d * (self.shape - 2.0))

    def _base_cdf(self, y):
        t = y - self.location
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = gammaincc(self.shape, self.scale / t[pos])
        return out

    def cdf(self, x):
        x = _as_array(x)
        if self.mirrored:
            # P(-Y <= x) = P(Y >= -x) for the continuous base variable Y
            return 1.0 - self._base_cdf(-x)
        return self._base_cdf(x)

    def pdf(self, x):
        x = _as_array(x)
        t = ((-x if self.mirrored else x)) - self.location
        out = np.zeros_like(t)
        pos = t > 0
        tp = t[pos]
        g = self.scale / tp
        logf = self.shape * np.log(g) - g - gammaln(self.shape) - np.log(tp)
        out[pos] = np.exp(logf)
        return out

    def quantile(self, q):
        q = _as_array(q)
        if np.any((q <= 0) | (q >= 1)):
            raise UsageError("quantile argument must lie in (0, 1)")
        if self.mirrored:
            return -(self.location + self.scale / gammainccinv(self.shape, 1.0 - q))
        return self.location + self.scale / gammainccinv(self.shape, q)


def _check_nm(n: int, m: int) -> None:
    if n < 1 or m < 2:
        raise UsageError(f"need n >= 1 and m >= 2, got n={n}, m={m}")


def _shape(n: int, m: int) -> float:
    return 0.5 * n * (m - 1)


def mle_exact_law(n: int, m: int, phi0: float) -> Gamma3:
    """Law of sqrt(nm)*(phat - phi0) for the pooled variance estimator."""
    _check_nm(n, m)
    if phi0 <= 0:
        raise UsageError(f"phi0 must be positive, got {phi0}")
    rnm = math.sqrt(n * m)
    return Gamma3(location=-rnm * phi0, shape=_shape(n, m), scale=2.0 * phi0 / rnm)


def corrected_mle_exact_law(n: int, m: int, phi0: float) -> Gamma3:
    """Law of sqrt(nm)*(pcheck - phi0) with pcheck = phat*(1 + 1/m).

    Change of variables on the uncorrected law: the location is unchanged
    and the scale picks up the (1 + 1/m) factor.
    """
    base = mle_exact_law(n, m, phi0)
    return Gamma3(base.location, base.shape, base.scale * (1.0 + 1.0 / m))


def bootstrap_exact_law(n: int, m: int, phi_hat: float) -> Gamma3:
    """Conditional law of sqrt(nm)*(phat_star - phat) given phat."""
    if phi_hat <= 0:
        raise UsageError(f"phi_hat must be positive, got {phi_hat}")
    return mle_exact_law(n, m, phi_hat)


def eps0_bootstrap_law(n: int, m: int, phi0: float) -> Gamma3:
    """First-order bootstrap law: the conditioning estimate replaced by its mean.

    Freezing the data-dependence at E[phat] = phi0*(1 - 1/m) gives the
    fixed reference law used for the plotted bootstrap curve and for the
    closed-form percentile coverage numbers.
    """
    _check_nm(n, m)
    return bootstrap_exact_law(n, m, phi0 * (1.0 - 1.0 / m))


def studentized_exact_law(n: int, m: int, which: str = "s_hat") -> InvGamma3:
    """Law of a studentized variance statistic; pivotal, so no phi0 argument.

    ``s_hat`` is sqrt(nm)*(phat-phi0)/sqrt(2*phat^2); ``s_check`` recenters
    with the bias-corrected estimate while keeping the uncorrected spread
    (location scaled by 1 + 1/m); ``s_tilde`` studentizes by the corrected
    spread as well (scale multiplied by m/(m+1)).  All three are mirrored
    translated inverse-Gamma laws.
    """
    _check_nm(n, m)
    half = math.sqrt(0.5 * n * m)
    loc = -half
    scale = half * 0.5 * n * m
    if which == "s_hat":
        pass
    elif which == "s_check":
        loc *= 1.0 + 1.0 / m
    elif which == "s_tilde":
        scale *= m / (m + 1.0)
    else:
        raise UsageError(
            f"unknown studentized statistic {which!r}; expected one of {STUDENTIZED_NAMES}"
        )
    return InvGamma3(location=loc, shape=_shape(n, m), scale=scale, mirrored=True)


def exact_coverage(method: str, n: int, m: int, level: float = 0.95) -> float:
    """P(|T| <= z_{1-alpha/2}) for a studentized statistic treated as normal.

    ``s_star`` is the studentized bootstrap: its statistic is exactly
    pivotal here, so the bootstrap quantiles are the true ones and
    coverage equals the nominal level for every (n, m).
    """
    if not 0.0 < level < 1.0:
        raise UsageError(f"level must be in (0,1), got {level}")
    if method == "s_star":
        _check_nm(n, m)
        return float(level)
    law = studentized_exact_law(n, m, method)
    z = float(ndtri(0.5 + level / 2.0))
    return float(law.cdf(z) - law.cdf(-z))


def _chi2_logpdf(w, k):
    # chi-squared with 2k degrees of freedom equals Gamma(k, scale 2)
    return (k - 1.0) * np.log(w) - 0.5 * w - k * math.log(2.0) - gammaln(k)


def _adaptive_gl(f, a: float, b: float, rtol: float) -> float:
    """Adaptive Gauss-Legendre panels; split until 10- and 20-point rules agree."""
    if not b > a:
        return 0.0
    x10, w10 = np.polynomial.legendre.leggauss(10)
    x20, w20 = np.polynomial.legendre.leggauss(20)

    def panel(lo, hi, nodes, weights):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        return half * float(np.sum(weights * f(mid + half * nodes)))

    total = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        coarse = panel(lo, hi, x10, w10)
        fine = panel(lo, hi, x20, w20)
        if abs(fine - coarse) <= max(rtol * abs(fine), 1e-14) or depth >= 40:
            if depth >= 40 and abs(fine - coarse) > max(rtol * abs(fine), 1e-12):
                raise NumericalError("quadrature failed to converge")
            total += fine
        else:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid, depth + 1))
            stack.append((mid, hi, depth + 1))
    return total


def percentile_coverage_quadrature(
    n: int,
    m: int,
    level: float = 0.95,
    phi0: float = 1.0,
    conditional: bool = False,
    rtol: float = 1e-4,
    route: str = "quadrature",
) -> float:
    """Exact coverage of the percentile interval for the variance parameter.

    The covering event reduces to the scaled estimator falling in an
    interval, so coverage is one chi-squared integral.  By default the
    bootstrap quantiles are taken from the first-order law with the
    data-dependence frozen at its mean (this is what reproduces the
    published coverage table); ``conditional=True`` instead lets every
    value of the estimate carry its own conditional quantiles, which
    produces noticeably lower numbers.  ``route="closed-form"`` swaps the
    quadrature for the incomplete-gamma CDF, as an independent check.
    The result does not depend on ``phi0``; the argument exists so that
    invariance can be verified numerically.
    """
    _check_nm(n, m)
    if not 0.0 < level < 1.0:
        raise UsageError(f"level must be in (0,1), got {level}")
    if phi0 <= 0:
        raise UsageError(f"phi0 must be positive, got {phi0}")
    alpha = 1.0 - level
    rnm = math.sqrt(n * m)
    k = _shape(n, m)

    if not conditional:
        law = eps0_bootstrap_law(n, m, phi0)
        q_lo = float(law.quantile(alpha / 2.0))
        q_hi = float(law.quantile(1.0 - alpha / 2.0))
        # cover iff q_lo <= sqrt(nm)(phat - phi0) <= q_hi, i.e. W in [a, b]
        a = n * m * (1.0 + q_lo / (rnm * phi0))
        b = n * m * (1.0 + q_hi / (rnm * phi0))
    else:
        unit = bootstrap_exact_law(n, m, 1.0)
        q_lo = float(unit.quantile(alpha / 2.0))
        q_hi = float(unit.quantile(1.0 - alpha / 2.0))
        # quantiles scale with the conditioning estimate; solve the two
        # linear inequalities for the estimate, then convert to W
        d_hi = rnm - q_hi
        d_lo = rnm - q_lo
        if d_lo <= 0:
            return 0.0
        phat_lo = rnm * phi0 / d_lo
        phat_hi = rnm * phi0 / d_hi if d_hi > 0 else math.inf
        a = n * m * phat_lo / phi0
        b = n * m * phat_hi / phi0

    a = max(a, 0.0)
    if not b > a:
        return 0.0
    if route == "closed-form":
        hi = gammainc(k, b / 2.0) if math.isfinite(b) else 1.0
        return float(hi - gammainc(k, a / 2.0))
    if route != "quadrature":
        raise UsageError(f"unknown route {route!r}")
    # truncate the integration domain to all but 1e-12 tail mass
    lo_t = 2.0 * float(gammaincinv(k, 1e-12))
    hi_t = 2.0 * float(gammainccinv(k, 1e-12))
    a_t, b_t = max(a, lo_t), min(b if math.isfinite(b) else hi_t, hi_t)
    f = lambda w: np.exp(_chi2_logpdf(w, k))
    return _adaptive_gl(f, a_t, b_t, rtol)


def second_moment_truth(phi0: float, eta0, n: int, m: int):
    """Exact (bias, variance) of the plug-in second moment of stratum means.

    The estimator averages squared stratum means; under normality its
    bias is phi0/m regardless of the effects, and its variance is
    (2 phi0 / nm) * (2 * mean(eta0^2) + phi0/m).
    """
    _check_nm(n, m)
    if phi0 <= 0:
        raise UsageError(f"phi0 must be positive, got {phi0}")
    eta0 = np.broadcast_to(np.asarray(eta0, dtype=float), (n,))
    bias = phi0 / m
    variance = (2.0 * phi0 / (n * m)) * (2.0 * float(np.mean(eta0 * eta0)) + phi0 / m)
    return bias, variance


def table1_rows(level: float = 0.95, designs=TABLE1_DESIGNS):
    """Coverage grid: one dict per design with every interval method's value."""
    rows = []
    for n, m in designs:
        rows.append(
            {
                "n": n,
                "m": m,
                "s_hat": exact_coverage("s_hat", n, m, level),
                "s_check": exact_coverage("s_check", n, m, level),
                "s_tilde": exact_coverage("s_tilde", n, m, level),
                "e_star": percentile_coverage_quadrature(n, m, level),
                "s_star": exact_coverage("s_star", n, m, level),
            }
        )
    return rows


def _normal_ref(x, sd):
    pdf = np.exp(-0.5 * (x / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    return pdf, ndtr(x / sd)


def figure1_curves(n: int = 10, m: int = 5, phi0: float = 1.0, points: int = 4001):
    """Density/CDF grids for the six plotted statistics, reference included.

    Keys ``e_hat``, ``e_star``, ``e_check`` carry the estimation-error
    laws against the N(0, 2*phi0^2) limit; ``s_hat`` (the studentized
    bootstrap follows the identical law), ``s_check`` and ``s_tilde``
    are compared against the standard normal.  Each value is a dict of
    equal-length arrays: x, pdf, cdf, ref_pdf, ref_cdf.
    """
    _check_nm(n, m)
    if points < 3:
        raise UsageError("points must be at least 3")
    e_laws = {
        "e_hat": mle_exact_law(n, m, phi0),
        "e_star": eps0_bootstrap_law(n, m, phi0),
        "e_check": corrected_mle_exact_law(n, m, phi0),
    }
    s_laws = {
        "s_hat": studentized_exact_law(n, m, "s_hat"),
        "s_check": studentized_exact_law(n, m, "s_check"),
        "s_tilde": studentized_exact_law(n, m, "s_tilde"),
    }
    out = {}
    e_sd = math.sqrt(2.0) * phi0
    for fam, laws, sd in (("e", e_laws, e_sd), ("s", s_laws, 1.0)):
        lo = min(float(law.quantile(1e-9)) for law in laws.values())
        hi = max(float(law.quantile(1.0 - 1e-9)) for law in laws.values())
        lo, hi = min(lo, -5.0 * sd), max(hi, 5.0 * sd)
        x = np.linspace(lo, hi, points)
        ref_pdf, ref_cdf = _normal_ref(x, sd)
        for name, law in laws.items():
            out[name] = {
                "x": x,
                "pdf": law.pdf(x),
                "cdf": law.cdf(x),
                "ref_pdf": ref_pdf,
                "ref_cdf": ref_cdf,
            }
    return out
