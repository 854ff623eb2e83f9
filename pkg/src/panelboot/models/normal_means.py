"""Gaussian location model: z_it ~ N(eta_i, phi).

phi is the common within-stratum variance, eta_i the stratum mean.  The
maximizer is available in closed form, which the solver and bootstrap use
as a fast path; the Newton path remains fully supported and is checked
against the closed form in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .._backend import kernels
from ..contract import AverageEffectSpec, ModelContract
from ..data import PanelDataset
from ..errors import DegenerateFitError
from ..params import ParameterPoint

__all__ = [
    "make_normal_means",
    "nm_closed_form_mle",
    "nm_simulate",
    "nm_bias_corrected",
    "nm_delta_spec",
    "nm_delta_naive_ci",
]

LOG_2PI = 1.8378770664093453


def _loglik_point(phi, eta, z):
    v = phi[0]
    if v <= 0.0:
        return -math.inf
    r = z[0] - eta[0]
    return -0.5 * (LOG_2PI + math.log(v)) - r * r / (2.0 * v)


def _score_point(phi, eta, z):
    v = phi[0]
    r = z[0] - eta[0]
    s_phi = np.array([-0.5 / v + r * r / (2.0 * v * v)])
    s_eta = np.array([r / v])
    return s_phi, s_eta


def _hess_point(phi, eta, z):
    v = phi[0]
    r = z[0] - eta[0]
    h_pp = np.array([[0.5 / (v * v) - r * r / (v * v * v)]])
    h_pe = np.array([[-r / (v * v)]])
    h_ee = np.array([[-1.0 / v]])
    return h_pp, h_pe, h_ee


def _transition_sampler(phi, eta, lags, x, u):
    # inverse-CDF draw from N(eta, phi) using a single uniform
    return eta[0] + math.sqrt(phi[0]) * float(ndtri(u))


def _stratum_admissible(y_i, y_pre_i) -> bool:
    # the stratum mean is always identified; degeneracy (zero within
    # variance) is a global property handled by the closed-form fit
    return True


def _admissible_mask(data: PanelDataset) -> np.ndarray:
    return np.ones(data.n, dtype=bool)


def _point_admissible(phi, eta) -> bool:
    return phi[0] > 0.0


def _panel_blocks(phi, eta, data: PanelDataset, strata):
    idx = np.asarray(strata, dtype=int)
    y = np.ascontiguousarray(data.y[idx])
    e = np.ascontiguousarray(eta[idx, 0])
    return kernels.nm_blocks(y, e, float(phi[0]))


def _panel_sampler(phi, eta, y_pre, x, u):
    return eta[:, 0][:, None] + math.sqrt(phi[0]) * ndtri(u)


def nm_closed_form_mle(data: PanelDataset):
    """Closed-form maximizer: stratum means and pooled within variance.

    Returns ``(phi_hat, eta_hat)`` with ``eta_hat`` of shape (n,).
    Raises :class:`DegenerateFitError` when the within variance is zero
    (every stratum constant), where no maximizer exists.
    """
    eta_hat = data.y.mean(axis=1)
    r = data.y - eta_hat[:, None]
    phi_hat = float(np.mean(r * r))
    scale = 1.0 + float(np.mean(data.y * data.y))
    if phi_hat <= 1e-14 * scale:
        raise DegenerateFitError(
            "zero within-stratum variance: the variance estimate degenerates"
        )
    return phi_hat, eta_hat


def _fast_fit(data: PanelDataset):
    phi_hat, eta_hat = nm_closed_form_mle(data)
    return np.array([phi_hat]), eta_hat[:, None]


def make_normal_means() -> ModelContract:
    return ModelContract(
        name="normal-means",
        dim_phi=1,
        dim_eta=1,
        dim_y=1,
        dim_x=0,
        p=0,
        loglik_point=_loglik_point,
        score_point=_score_point,
        hess_point=_hess_point,
        transition_sampler=_transition_sampler,
        stratum_admissible=_stratum_admissible,
        panel_blocks=_panel_blocks,
        fast_fit=_fast_fit,
        point_admissible=_point_admissible,
        panel_sampler=_panel_sampler,
        admissible_mask=_admissible_mask,
    )


def nm_simulate(phi0: float, eta0, n: int, m: int, rng: np.random.Generator) -> PanelDataset:
    """Simulate z_it = eta0_i + sqrt(phi0) * standard normal, (n, m) draws."""
    if phi0 <= 0:
        raise ValueError(f"phi0 must be positive, got {phi0}")
    eta0 = np.broadcast_to(np.asarray(eta0, dtype=float), (n,))
    z = eta0[:, None] + math.sqrt(phi0) * rng.standard_normal((n, m))
    return PanelDataset(n=n, m=m, p=0, y=z)


def nm_bias_corrected(phi_hat: float, m: int) -> float:
    """First-order bias-corrected variance estimate, phi_hat * (1 + 1/m)."""
    return phi_hat * (1.0 + 1.0 / m)


def _mu_eta_sq(z, phi, eta):
    return eta[0] * eta[0]


def _mu_eta_sq_panel(phi, eta, data: PanelDataset, strata):
    idx = np.asarray(strata, dtype=int)
    vals = eta[idx, 0] ** 2
    return np.repeat(vals[:, None], data.m, axis=1)


def nm_delta_spec() -> AverageEffectSpec:
    """Average-effect spec for the second moment of the fixed effects."""
    return AverageEffectSpec(
        name="eta-squared",
        mu=_mu_eta_sq,
        dmu_dphi=lambda z, phi, eta: np.zeros(1),
        dmu_deta=lambda z, phi, eta: np.array([2.0 * eta[0]]),
        mu_panel=_mu_eta_sq_panel,
    )


def nm_theta(phi: float, eta) -> ParameterPoint:
    """Convenience constructor for a normal-means parameter point."""
    return ParameterPoint(phi=np.array([float(phi)]), eta=np.asarray(eta, dtype=float))


def nm_delta_naive_ci(delta_hat: float, phi_hat: float, n: int, m: int, level: float):
    """Normal plug-in interval for the average squared effect.

    The estimator is a mean of independent eta_hat_i^2 terms with
    eta_hat_i ~ N(eta_i, phi/m), so its variance is
    (2 phi / (n m)) * (2 delta + phi / m) after replacing unknowns by
    their estimates.  No bias correction is applied; that is the point.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0,1), got {level}")
    var = (2.0 * phi_hat / (n * m)) * (2.0 * delta_hat + phi_hat / m)
    half = float(ndtri(0.5 + level / 2.0)) * math.sqrt(max(var, 0.0))
    return delta_hat - half, delta_hat + half
