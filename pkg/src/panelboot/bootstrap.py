"""Parametric bootstrap: resampling, replicate refits, confidence sets.

Replicates are simulated from the fitted model at the estimated
parameters, conditioning on the observed initial conditions and
covariates of the retained strata.  Each replicate is refit and the
recentred roots are collected; interval endpoints come from fixed
order statistics of those roots, never from interpolated quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .contract import AverageEffectSpec, ModelContract
from .data import PanelDataset
from .errors import NumericalError, UsageError
from .inference import SigmaHat, delta_hat, sigma_from_profile, sigma_hat
from .newton import FitOptions, FitResult, estimate, fit
from .params import ParameterPoint

__all__ = [
    "BootstrapDraws",
    "IntervalReport",
    "resample",
    "run_bootstrap",
    "quantile",
    "percentile_ci",
    "percentile_t_ci",
    "normal_ci",
    "ellipsoid_critical",
    "ellipsoid_interval",
    "delta_bootstrap_ci",
    "write_intervals_csv",
]

MIN_REPLICATES = 39
MAX_FAILURE_SHARE = 0.10


def resample(
    model: ModelContract,
    data: PanelDataset,
    result: FitResult,
    rng: np.random.Generator,
) -> PanelDataset:
    """One synthetic panel drawn from the fitted model.

    Only strata retained by the original fit are regenerated; dropped
    strata do not appear in the replicate at all.  Pre-sample outcomes
    and covariates are carried over unchanged.  Exactly one uniform per
    (stratum, period) cell is consumed, row-major, so replicates are
    identical whichever kernel backend is active.
    """
    idx = np.asarray(result.retained, dtype=int)
    if idx.size == 0:
        raise UsageError("fit retained no strata")
    k, m = idx.size, data.m
    phi = result.theta.phi
    eta = result.theta.eta[idx]
    y_pre = data.y_pre[idx]
    x = data.x[idx]
    u = rng.random((k, m))

    if model.panel_sampler is not None:
        y = np.asarray(model.panel_sampler(phi, eta, y_pre, x, u), dtype=float)
    else:
        p = model.p
        y = np.empty((k, m))
        for r in range(k):
            for t in range(m):
                lags = np.array(
                    [
                        y[r, t - s] if t - s >= 0 else y_pre[r, p + t - s]
                        for s in range(1, p + 1)
                    ]
                )
                y[r, t] = model.transition_sampler(phi, eta[r], lags, x[r, t], u[r, t])
    return PanelDataset(n=k, m=m, p=data.p, y=y, y_pre=y_pre.copy(), x=x.copy())


@dataclass(frozen=True, eq=False)
class BootstrapDraws:
    """Replicate estimates recentred at the original fit.

    ``phi_star``/``sigma_star``/``nm_star`` hold one row per successful
    replicate, in replicate order so each row stays paired with its own
    variance; interval builders form their statistic and sort there.
    ``B`` counts successful replicates only and ``failures`` how many
    were discarded (failed refit, non-convergence, or a degenerate
    variance), so the requested count is B + failures.
    """

    phi_hat: np.ndarray
    sigma: SigmaHat
    phi_star: np.ndarray  # (B_ok, dphi)
    sigma_star: np.ndarray  # (B_ok, dphi, dphi)
    nm_star: np.ndarray  # (B_ok,)
    B: int
    failures: int
    delta_center: Optional[float] = None
    delta_star: Optional[np.ndarray] = None

    @property
    def n_ok(self) -> int:
        return self.phi_star.shape[0]

    @property
    def dim_phi(self) -> int:
        return self.phi_hat.shape[0]


def _entropy_tuple(entropy) -> tuple:
    if isinstance(entropy, (int, np.integer)):
        return (int(entropy),)
    return tuple(int(v) for v in entropy)


def run_bootstrap(
    model: ModelContract,
    data: PanelDataset,
    result: FitResult,
    B: int,
    entropy,
    effect: Optional[AverageEffectSpec] = None,
    opts: FitOptions = FitOptions(),
    use_model_fast_fit: bool = True,
) -> BootstrapDraws:
    """Simulate, refit and collect B bootstrap replicates.

    ``entropy`` is an int or tuple of ints; replicate b draws from
    ``numpy.random.SeedSequence((*entropy, b))`` with b counted from 0,
    so any single replicate can be regenerated in isolation.  Replicate
    fits warm-start at the original estimate.  More than 10% failed
    replicates is treated as a modelling problem and raises rather than
    silently reporting intervals from the survivors.
    """
    if B < MIN_REPLICATES:
        raise UsageError(f"B must be at least {MIN_REPLICATES}, got {B}")
    base = _entropy_tuple(entropy)
    sigma0 = sigma_hat(model, data, result)
    center = result.theta.phi.copy()
    delta_center = (
        delta_hat(model, data, result, effect) if effect is not None else None
    )
    eta_start = result.theta.eta[list(result.retained)].copy()

    phi_rows, sig_rows, nm_rows, delta_rows = [], [], [], []
    failures = 0
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(base + (b,)))
        sim = resample(model, data, result, rng)
        try:
            res_b = _refit(model, sim, center, eta_start, opts, use_model_fast_fit)
            sig_b = sigma_from_profile(
                res_b.profile_info, len(res_b.retained) * sim.m, res_b.retained
            )
            if effect is not None:
                delta_rows.append(delta_hat(model, sim, res_b, effect))
        except NumericalError:
            failures += 1
            continue
        phi_rows.append(res_b.theta.phi)
        sig_rows.append(sig_b.sigma)
        nm_rows.append(sig_b.nm)

    if failures > MAX_FAILURE_SHARE * B:
        raise NumericalError(
            f"{failures} of {B} bootstrap replicates failed; "
            "the fitted model is too unstable for interval construction"
        )
    dphi = center.shape[0]
    return BootstrapDraws(
        phi_hat=center,
        sigma=sigma0,
        phi_star=np.asarray(phi_rows, dtype=float).reshape(-1, dphi),
        sigma_star=np.asarray(sig_rows, dtype=float).reshape(-1, dphi, dphi),
        nm_star=np.asarray(nm_rows, dtype=float),
        B=B - failures,
        failures=failures,
        delta_center=delta_center,
        delta_star=np.asarray(delta_rows, dtype=float) if effect is not None else None,
    )


def _refit(model, sim, phi_start, eta_start, opts, use_model_fast_fit) -> FitResult:
    if use_model_fast_fit and model.fast_fit is not None:
        return estimate(model, sim, opts)
    theta0 = ParameterPoint(phi=phi_start.copy(), eta=eta_start.copy())
    res = fit(model, sim, theta0, opts)
    if not res.converged:
        raise NumericalError("replicate fit did not converge")
    return res


def quantile(draws, alpha: float) -> float:
    """The ceil(alpha*B)-th order statistic of the draws, 1-based.

    A fixed order statistic rather than an interpolated quantile: with
    B = 999 and alpha = 0.975 this is draw 975 of the sorted sample.
    The index is clamped to [1, B].
    """
    if not 0.0 < alpha <= 1.0:
        raise UsageError(f"alpha must be in (0, 1], got {alpha}")
    arr = np.sort(np.asarray(draws, dtype=float).ravel())
    if arr.size == 0:
        raise UsageError("quantile of an empty draw set")
    k = min(max(math.ceil(alpha * arr.size), 1), arr.size)
    return float(arr[k - 1])


@dataclass(frozen=True)
class IntervalReport:
    """A single confidence interval plus its bootstrap bookkeeping."""

    method: str
    level: float
    lower: float
    upper: float
    B: int
    failures: int

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _contrast(draws: BootstrapDraws, c) -> np.ndarray:
    if c is None:
        if draws.dim_phi != 1:
            raise UsageError("a contrast vector is required when dim_phi > 1")
        return np.ones(1)
    c = np.asarray(c, dtype=float)
    if c.shape != (draws.dim_phi,):
        raise UsageError(f"contrast must have shape ({draws.dim_phi},)")
    return c


def percentile_ci(draws: BootstrapDraws, c=None, level: float = 0.95) -> IntervalReport:
    """Reflected interval from quantiles of c'(phi_star - phi_hat)."""
    c = _contrast(draws, c)
    alpha = 1.0 - level
    roots = draws.phi_star @ c - float(c @ draws.phi_hat)
    center = float(c @ draws.phi_hat)
    lo = center - quantile(roots, 1.0 - alpha / 2.0)
    hi = center - quantile(roots, alpha / 2.0)
    return IntervalReport("percentile", level, lo, hi, draws.B, draws.failures)


def percentile_t_ci(draws: BootstrapDraws, c=None, level: float = 0.95) -> IntervalReport:
    """Studentized interval; each root is scaled by its replicate's own spread.

    Roots are c'(phi_star - phi_hat) / sqrt(c' Sigma_star c) and the
    endpoints rescale by sqrt(c' Sigma_hat c) from the original fit.  The
    panel-size factor cancels between the two steps, so neither carries it.
    """
    c = _contrast(draws, c)
    alpha = 1.0 - level
    spread = np.einsum("p,bpq,q->b", c, draws.sigma_star, c)
    if np.any(spread <= 0):
        raise NumericalError("non-positive replicate contrast variance")
    roots = (draws.phi_star @ c - float(c @ draws.phi_hat)) / np.sqrt(spread)
    s0 = math.sqrt(float(c @ draws.sigma.sigma @ c))
    center = float(c @ draws.phi_hat)
    lo = center - s0 * quantile(roots, 1.0 - alpha / 2.0)
    hi = center - s0 * quantile(roots, alpha / 2.0)
    return IntervalReport("percentile-t", level, lo, hi, draws.B, draws.failures)


def normal_ci(draws: BootstrapDraws, c=None, level: float = 0.95) -> IntervalReport:
    """Symmetric normal interval from the original-sample variance alone.

    Half-width is z * sqrt(c' Sigma c / (n m)).  Nothing resampled enters;
    this is the baseline the bootstrap constructions are compared against,
    so it reports B=0 and zero failures.
    """
    c = _contrast(draws, c)
    spread = float(c @ draws.sigma.sigma @ c)
    if spread <= 0.0:
        raise NumericalError("non-positive contrast variance")
    center = float(c @ draws.phi_hat)
    half = float(ndtri(0.5 + level / 2.0)) * math.sqrt(spread / draws.sigma.nm)
    return IntervalReport("normal", level, center - half, center + half, 0, 0)


def _quad(cmat, diff, sigma, nm) -> float:
    inner = cmat.T @ sigma @ cmat
    proj = cmat.T @ diff
    try:
        sol = np.linalg.solve(inner, proj)
    except np.linalg.LinAlgError:
        raise NumericalError("singular contrast variance in quadratic form") from None
    return float(nm * proj @ sol)


def ellipsoid_critical(draws: BootstrapDraws, cmat=None, level: float = 0.95) -> float:
    """Bootstrap critical value for the Wald quadratic on C'phi.

    The confidence set is every point whose quadratic distance from the
    estimate, in the original metric, is at most this value.
    """
    if cmat is None:
        cmat = np.eye(draws.dim_phi)
    cmat = np.asarray(cmat, dtype=float)
    if cmat.ndim == 1:
        cmat = cmat[:, None]
    if cmat.shape[0] != draws.dim_phi:
        raise UsageError(f"contrast matrix must have {draws.dim_phi} rows")
    stats = np.array(
        [
            _quad(cmat, draws.phi_star[b] - draws.phi_hat, draws.sigma_star[b], draws.nm_star[b])
            for b in range(draws.n_ok)
        ]
    )
    return quantile(stats, level)


def ellipsoid_interval(draws: BootstrapDraws, c=None, level: float = 0.95) -> IntervalReport:
    """Scalar section of the ellipsoid set: an interval when c is a vector."""
    c = _contrast(draws, c)
    crit = ellipsoid_critical(draws, c[:, None], level)
    s0sq = float(c @ draws.sigma.sigma @ c)
    half = math.sqrt(crit * s0sq / draws.sigma.nm)
    center = float(c @ draws.phi_hat)
    return IntervalReport("ellipsoid", level, center - half, center + half, draws.B, draws.failures)


def delta_bootstrap_ci(
    draws: BootstrapDraws, level: float = 0.95, method: str = "percentile"
) -> IntervalReport:
    """Interval for the average effect from its bootstrap replicates.

    ``method="percentile"`` reflects quantiles of delta_star - delta_hat.
    ``method="normal"`` is a substitute for studentizing: a symmetric
    normal interval whose scale is the replicate standard deviation
    (the average effect has no per-replicate variance estimate to
    studentize by, so a genuine bootstrap-t is unavailable here).
    """
    if draws.delta_star is None or draws.delta_center is None:
        raise UsageError("bootstrap was run without an average-effect spec")
    alpha = 1.0 - level
    center = draws.delta_center
    if method == "percentile":
        roots = draws.delta_star - center
        lo = center - quantile(roots, 1.0 - alpha / 2.0)
        hi = center - quantile(roots, alpha / 2.0)
        return IntervalReport("delta-percentile", level, lo, hi, draws.B, draws.failures)
    if method == "normal":
        if draws.delta_star.size < 2:
            raise UsageError("need at least two replicates for a normal interval")
        se = float(np.std(draws.delta_star, ddof=1))
        half = float(ndtri(0.5 + level / 2.0)) * se
        return IntervalReport("delta-normal", level, center - half, center + half, draws.B, draws.failures)
    raise UsageError(f"unknown delta interval method {method!r}")


def write_intervals_csv(fh, reports: Sequence[IntervalReport]) -> None:
    """Write interval rows as CSV: method,level,lower,upper,length,B,failures."""
    fh.write("method,level,lower,upper,length,B,failures\n")
    for r in reports:
        fh.write(
            f"{r.method},{repr(r.level)},{repr(r.lower)},{repr(r.upper)},"
            f"{repr(r.length)},{r.B},{r.failures}\n"
        )
