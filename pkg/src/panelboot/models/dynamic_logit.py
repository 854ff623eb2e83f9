"""First-order binary autoregression with logistic errors.

y_it = 1{eta_i + phi * y_it-1 > e_it}, e_it i.i.d. logistic.  The
per-observation log density is y*a - log(1+e^a) with a = eta_i + phi*lag;
everything is evaluated through softplus/log1p so large |a| cannot
overflow.  A stratum whose outcomes are all zero or all one has a
divergent intercept estimate and is flagged inadmissible.
"""

from __future__ import annotations

import math
import weakref

import numpy as np

from .._backend import kernels
from ..contract import ModelContract
from ..data import PanelDataset
from ..errors import UsageError

__all__ = ["make_dynamic_logit", "dl_stationary_init", "dl_simulate"]


def _sigmoid(a: float) -> float:
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


def _softplus(a: float) -> float:
    if a > 0.0:
        return a + math.log1p(math.exp(-a))
    return math.log1p(math.exp(a))


def _loglik_point(phi, eta, z):
    a = eta[0] + phi[0] * z[1]
    return z[0] * a - _softplus(a)


def _score_point(phi, eta, z):
    a = eta[0] + phi[0] * z[1]
    resid = z[0] - _sigmoid(a)
    return np.array([resid * z[1]]), np.array([resid])


def _hess_point(phi, eta, z):
    a = eta[0] + phi[0] * z[1]
    pr = _sigmoid(a)
    w = pr * (1.0 - pr)
    lag = z[1]
    return (
        np.array([[-w * lag * lag]]),
        np.array([[-w * lag]]),
        np.array([[-w]]),
    )


def _transition_sampler(phi, eta, lags, x, u):
    pr = _sigmoid(eta[0] + phi[0] * lags[0])
    return 1.0 if u < pr else 0.0


def _stratum_admissible(y_i, y_pre_i) -> bool:
    s = float(np.sum(y_i))
    return 0.0 < s < y_i.size


def _admissible_mask(data: PanelDataset) -> np.ndarray:
    s = data.y.sum(axis=1)
    return (s > 0.0) & (s < data.m)


# lag matrix (y_pre[:, -1], y[:, :-1]) cached per dataset; datasets are immutable
_lag_cache: "weakref.WeakKeyDictionary[PanelDataset, np.ndarray]" = weakref.WeakKeyDictionary()


def _lag_matrix(data: PanelDataset) -> np.ndarray:
    lags = _lag_cache.get(data)
    if lags is None:
        lags = np.empty((data.n, data.m))
        lags[:, 0] = data.y_pre[:, -1]
        lags[:, 1:] = data.y[:, :-1]
        lags.setflags(write=False)
        _lag_cache[data] = lags
    return lags


def _panel_blocks(phi, eta, data: PanelDataset, strata):
    idx = np.asarray(strata, dtype=int)
    y = np.ascontiguousarray(data.y[idx])
    ylag = np.ascontiguousarray(_lag_matrix(data)[idx])
    e = np.ascontiguousarray(eta[idx, 0])
    return kernels.dl_blocks(y, ylag, e, float(phi[0]))


def _panel_sampler(phi, eta, y_pre, x, u):
    y0 = np.ascontiguousarray(y_pre[:, -1])
    e = np.ascontiguousarray(eta[:, 0])
    return kernels.dl_simulate_core(y0, np.ascontiguousarray(u), e, float(phi[0]))


def make_dynamic_logit() -> ModelContract:
    return ModelContract(
        name="dynamic-logit",
        dim_phi=1,
        dim_eta=1,
        dim_y=1,
        dim_x=0,
        p=1,
        loglik_point=_loglik_point,
        score_point=_score_point,
        hess_point=_hess_point,
        transition_sampler=_transition_sampler,
        stratum_admissible=_stratum_admissible,
        panel_blocks=_panel_blocks,
        panel_sampler=_panel_sampler,
        admissible_mask=_admissible_mask,
    )


def dl_stationary_init(eta: float, phi: float) -> float:
    """P(y_0 = 1) under the chain's stationary distribution.

    F(eta) / (1 - F(eta+phi) + F(eta)) with F the logistic CDF.
    """
    f0 = _sigmoid(eta)
    f1 = _sigmoid(eta + phi)
    return f0 / (1.0 - f1 + f0)


def dl_simulate(
    phi0: float,
    eta0,
    n: int,
    m: int,
    init="stationary",
    rng: np.random.Generator | None = None,
) -> PanelDataset:
    """Simulate the binary autoregression.

    ``init`` is either the string ``"stationary"`` (draw y_0 from the
    stationary law, one uniform per stratum) or a fixed initial outcome
    (scalar or length-n array of 0/1).  The initial outcome is recorded
    as the pre-sample lag and treated as fixed by everything downstream.

    Draw order is: initial uniforms (when stationary), then one uniform
    per observation, stratum-major and time-minor, so a given seed yields
    the same panel on every kernel backend.
    """
    if rng is None:
        raise UsageError("dl_simulate requires an explicit rng")
    eta0 = np.ascontiguousarray(np.broadcast_to(np.asarray(eta0, dtype=float), (n,)))
    if isinstance(init, str):
        if init != "stationary":
            raise UsageError(f"init must be 'stationary' or a fixed value, got {init!r}")
        p_init = np.array([dl_stationary_init(e, phi0) for e in eta0])
        y0 = (rng.random(n) < p_init).astype(float)
    else:
        y0 = np.ascontiguousarray(np.broadcast_to(np.asarray(init, dtype=float), (n,)).copy())
        if not np.all((y0 == 0.0) | (y0 == 1.0)):
            raise UsageError("fixed init values must be 0 or 1")
    u = rng.random((n, m))
    y = kernels.dl_simulate_core(y0, u, eta0, float(phi0))
    return PanelDataset(n=n, m=m, p=1, y=y, y_pre=y0[:, None])
