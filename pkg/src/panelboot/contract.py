"""Model contract: log-likelihood, analytic derivatives, simulator, drop rule.

Every estimator and resampler in the package works through this interface;
the built-in models live in :mod:`panelboot.models`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import PanelDataset, assemble_z
from .errors import NumericalError, UsageError
from .params import ParameterPoint

__all__ = ["ModelContract", "AverageEffectSpec", "total_loglik"]


@dataclass(frozen=True)
class ModelContract:
    """Pointwise model interface plus optional vectorized fast paths.

    Required callables (``z`` is the assembled observation tuple):

    - ``loglik_point(phi, eta_i, z) -> float``
    - ``score_point(phi, eta_i, z) -> (s_phi, s_eta)``
    - ``hess_point(phi, eta_i, z) -> (h_pp, h_pe, h_ee)``
      with shapes (dphi,dphi), (dphi,deta), (deta,deta).
    - ``transition_sampler(phi, eta_i, lags, x_it, u) -> y_it`` where ``u``
      is a uniform draw on [0,1); sampling by inverse CDF from a single
      uniform keeps replicates identical across kernel backends.
    - ``stratum_admissible(y_i, y_pre_i) -> bool``

    Optional fast paths (used when present, never required):

    - ``panel_blocks(phi, eta, data, strata) -> (ll, s_phi, s_eta, h_pp, h_pe, h_ee)``
      per-stratum sums over t, stacked over the given strata.
    - ``fast_fit(data) -> (phi_hat, eta_hat)`` closed-form maximizer.
    - ``point_admissible(phi, eta) -> bool`` parameter-domain gate
      (e.g. a positive-variance requirement).
    - ``panel_sampler(phi, eta, y_pre, x, u) -> y`` vectorized simulator
      consuming the uniform array ``u`` of shape (k, m) exactly as the
      pointwise sampler would, row-major.
    - ``admissible_mask(data) -> bool (n,)`` vectorized twin of
      ``stratum_admissible``.
    """

    name: str
    dim_phi: int
    dim_eta: int
    dim_y: int
    dim_x: int
    p: int
    loglik_point: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    score_point: Callable[..., tuple]
    hess_point: Callable[..., tuple]
    transition_sampler: Callable[..., float]
    stratum_admissible: Callable[[np.ndarray, np.ndarray], bool]
    panel_blocks: Optional[Callable[..., tuple]] = None
    fast_fit: Optional[Callable[..., tuple]] = None
    point_admissible: Optional[Callable[..., bool]] = None
    panel_sampler: Optional[Callable[..., np.ndarray]] = None
    admissible_mask: Optional[Callable[..., np.ndarray]] = None

    def admissibility(self, data: PanelDataset) -> np.ndarray:
        """Boolean retention mask over strata, vectorized when possible."""
        if self.admissible_mask is not None:
            mask = np.asarray(self.admissible_mask(data), dtype=bool)
            if mask.shape != (data.n,):
                raise NumericalError(
                    f"admissible_mask returned shape {mask.shape}, expected ({data.n},)"
                )
            return mask
        return np.fromiter(
            (self.stratum_admissible(data.y[i], data.y_pre[i]) for i in range(data.n)),
            dtype=bool,
            count=data.n,
        )

    def check_data(self, data: PanelDataset) -> None:
        if data.p != self.p:
            raise UsageError(f"model {self.name} needs p={self.p}, dataset has p={data.p}")
        if data.dim_x != self.dim_x:
            raise UsageError(
                f"model {self.name} needs dim_x={self.dim_x}, dataset has {data.dim_x}"
            )


@dataclass(frozen=True)
class AverageEffectSpec:
    """A per-observation effect ``mu(z_it, phi, eta_i)`` averaged over the panel."""

    name: str
    mu: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    # first derivatives, used only for diagnostics; optional
    dmu_dphi: Optional[Callable[..., np.ndarray]] = None
    dmu_deta: Optional[Callable[..., np.ndarray]] = None
    # optional vectorized path: mu_panel(phi, eta, data, strata) -> (len(strata), m)
    mu_panel: Optional[Callable[..., np.ndarray]] = None


def total_loglik(
    model: ModelContract,
    data: PanelDataset,
    theta: ParameterPoint,
    strata=None,
) -> float:
    """Sum of per-observation log densities over the given strata (default all).

    Separable across strata given phi.  A non-finite contribution raises
    :class:`NumericalError` naming the offending observation.
    """
    model.check_data(data)
    if theta.n != data.n:
        raise UsageError(f"theta has {theta.n} strata, dataset has {data.n}")
    idx = range(data.n) if strata is None else strata
    if model.panel_blocks is not None:
        ll, *_ = model.panel_blocks(theta.phi, theta.eta, data, list(idx))
        total = float(np.sum(ll))
        if np.isfinite(total):
            return total
        # fall through to the pointwise loop to name the offending (i, t)
    total = 0.0
    for i in idx:
        for t in range(1, data.m + 1):
            term = model.loglik_point(theta.phi, theta.eta[i], assemble_z(data, i, t))
            if not np.isfinite(term):
                raise NumericalError(
                    f"non-finite log-likelihood at stratum {i}, period {t}"
                )
            total += term
    return total
