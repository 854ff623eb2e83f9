"""Plug-in large-panel variance and the statistics built on it.

``sigma_hat`` estimates the limiting variance of sqrt(n*m) times the
common-parameter error after the per-stratum effects are concentrated
out.  Everything downstream (studentized roots, Wald quadratics, average
effects) consumes that one matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contract import AverageEffectSpec, ModelContract
from .data import PanelDataset, assemble_z
from .errors import NumericalError, UsageError
from .newton import FitResult, _assemble_ll

__all__ = [
    "SigmaHat",
    "sigma_hat",
    "sigma_from_profile",
    "studentize",
    "wald_quadratic",
    "delta_hat",
]


@dataclass(frozen=True, eq=False)
class SigmaHat:
    """Variance estimate for sqrt(nm)*(phi_hat - phi0).

    ``nm`` is the retained observation count used for the scaling; ``rho``
    holds the per-stratum cross-curvature ratios h_phieta h_etaeta^{-1}
    (one (dim_phi, dim_eta) block per retained stratum), or None when the
    estimate was built from an already-concentrated curvature matrix.
    """

    sigma: np.ndarray
    nm: int
    rho: Optional[np.ndarray]
    strata: tuple

    @property
    def dim_phi(self) -> int:
        return self.sigma.shape[0]


def sigma_hat(model: ModelContract, data: PanelDataset, result: FitResult) -> SigmaHat:
    """Concentrated-information variance; retained strata only.

    Algebraically this equals nm * (-profile_info)^{-1}: the subtracted
    rho term is exactly the concentration correction.  Both routes are
    kept in the tests; this one is the defining formula.
    """
    retained = list(result.retained)
    if not retained:
        raise UsageError("fit retained no strata")
    _, b = _assemble_ll(model, data, result.theta.phi, result.theta.eta, retained)
    nm = len(retained) * data.m

    rho = np.linalg.solve(
        np.transpose(b.h_etaeta, (0, 2, 1)), np.transpose(b.h_phieta, (0, 2, 1))
    )
    rho = np.transpose(rho, (0, 2, 1))  # (k, dphi, deta)
    corr = np.einsum("kpe,kqe->pq", rho, b.h_phieta)
    scaled = -(b.h_phiphi - corr) / nm
    scaled = 0.5 * (scaled + scaled.T)

    eigs = np.linalg.eigvalsh(scaled)
    if eigs[0] <= 0:
        raise NumericalError(
            f"information matrix not positive definite (min eigenvalue {eigs[0]:.6g})"
        )
    sigma = np.linalg.inv(scaled)
    sigma = 0.5 * (sigma + sigma.T)
    return SigmaHat(sigma=sigma, nm=nm, rho=rho, strata=tuple(retained))


def sigma_from_profile(profile_info: np.ndarray, nm: int, strata=()) -> SigmaHat:
    """Variance estimate from the concentrated curvature in phi.

    Algebraically identical to :func:`sigma_hat` (the concentration
    correction there is exactly the profile reduction); this route skips
    re-assembling the blocks when a fit already carries profile_info.
    """
    if nm < 1:
        raise UsageError("nm must be a positive observation count")
    scaled = -np.asarray(profile_info, dtype=float) / nm
    scaled = 0.5 * (scaled + scaled.T)
    eigs = np.linalg.eigvalsh(scaled)
    if eigs[0] <= 0:
        raise NumericalError(
            f"information matrix not positive definite (min eigenvalue {eigs[0]:.6g})"
        )
    sigma = np.linalg.inv(scaled)
    return SigmaHat(sigma=0.5 * (sigma + sigma.T), nm=nm, rho=None, strata=tuple(strata))


def studentize(
    c: np.ndarray, est_phi: np.ndarray, ref_phi: np.ndarray, sig: SigmaHat
) -> float:
    """sqrt(nm) * c'(est - ref) / sqrt(c' Sigma c)."""
    c = np.asarray(c, dtype=float)
    if c.shape != (sig.dim_phi,):
        raise UsageError(f"contrast must have shape ({sig.dim_phi},)")
    denom = float(c @ sig.sigma @ c)
    if denom <= 0:
        raise NumericalError("contrast variance is not positive")
    diff = float(c @ (np.asarray(est_phi, dtype=float) - np.asarray(ref_phi, dtype=float)))
    return np.sqrt(sig.nm) * diff / np.sqrt(denom)


def wald_quadratic(
    cmat: np.ndarray, est_phi: np.ndarray, ref_phi: np.ndarray, sig: SigmaHat
) -> float:
    """nm * (est-ref)' C (C' Sigma C)^{-1} C' (est-ref) for contrast matrix C."""
    cmat = np.asarray(cmat, dtype=float)
    if cmat.ndim == 1:
        cmat = cmat[:, None]
    if cmat.ndim != 2 or cmat.shape[0] != sig.dim_phi:
        raise UsageError(f"contrast matrix must have {sig.dim_phi} rows")
    inner = cmat.T @ sig.sigma @ cmat
    diff = cmat.T @ (np.asarray(est_phi, dtype=float) - np.asarray(ref_phi, dtype=float))
    try:
        sol = np.linalg.solve(inner, diff)
    except np.linalg.LinAlgError:
        raise NumericalError("contrast matrix gives singular variance; drop dependent columns") from None
    return float(sig.nm * diff @ sol)


def delta_hat(
    model: ModelContract,
    data: PanelDataset,
    result: FitResult,
    effect: AverageEffectSpec,
) -> float:
    """Average of the per-observation effect over retained strata.

    Uses the vectorized panel evaluator when the effect provides one,
    otherwise averages pointwise evaluations over every (stratum, period)
    cell.
    """
    retained = list(result.retained)
    if not retained:
        raise UsageError("fit retained no strata")
    phi, eta = result.theta.phi, result.theta.eta
    if effect.mu_panel is not None:
        vals = effect.mu_panel(phi, eta, data, retained)
        vals = np.asarray(vals, dtype=float)
        if vals.shape != (len(retained), data.m):
            raise NumericalError(
                f"mu_panel returned shape {vals.shape}, expected {(len(retained), data.m)}"
            )
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite average-effect contribution")
        return float(np.mean(vals))
    total = 0.0
    for i in retained:
        for t in range(1, data.m + 1):
            v = float(effect.mu(assemble_z(data, i, t), phi, eta[i]))
            if not np.isfinite(v):
                raise NumericalError(
                    f"non-finite average-effect contribution at stratum {i}, period {t}"
                )
            total += v
    return total / (len(retained) * data.m)
