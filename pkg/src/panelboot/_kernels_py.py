"""NumPy implementations of the hot kernels.

Mirrors the compiled module in :mod:`panelboot._kernels`; the backend
selector picks one of the two at import time.  Both consume identical
pre-drawn uniforms so simulations agree bit-for-bit across backends.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = 1.8378770664093453


def nm_blocks(y: np.ndarray, eta: np.ndarray, phi: float):
    """Per-stratum Gaussian log-likelihood and derivative sums.

    y : (n, m), eta : (n,), phi : scalar variance.
    Returns (ll, s_phi, s_eta, h_pp, h_pe, h_ee), each shape (n,).
    """
    n, m = y.shape
    r = y - eta[:, None]
    sr = r.sum(axis=1)
    sr2 = (r * r).sum(axis=1)
    ll = -0.5 * m * (LOG_2PI + np.log(phi)) - sr2 / (2.0 * phi)
    s_eta = sr / phi
    s_phi = -m / (2.0 * phi) + sr2 / (2.0 * phi * phi)
    h_ee = np.full(n, -m / phi)
    h_pe = -sr / (phi * phi)
    h_pp = m / (2.0 * phi * phi) - sr2 / (phi * phi * phi)
    return ll, s_phi, s_eta, h_pp, h_pe, h_ee


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _softplus(a: np.ndarray) -> np.ndarray:
    # log(1 + e^a), stable on both tails
    return np.where(a > 0, a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def dl_blocks(y: np.ndarray, ylag: np.ndarray, eta: np.ndarray, phi: float):
    """Per-stratum logit log-likelihood and derivative sums.

    y, ylag : (n, m) binary arrays (float), eta : (n,), phi : scalar.
    Returns (ll, s_phi, s_eta, h_pp, h_pe, h_ee), each shape (n,).
    """
    a = eta[:, None] + phi * ylag
    pr = _sigmoid(a)
    resid = y - pr
    w = pr * (1.0 - pr)
    ll = (y * a - _softplus(a)).sum(axis=1)
    s_eta = resid.sum(axis=1)
    s_phi = (resid * ylag).sum(axis=1)
    h_ee = -w.sum(axis=1)
    h_pe = -(w * ylag).sum(axis=1)
    h_pp = -(w * ylag * ylag).sum(axis=1)
    return ll, s_phi, s_eta, h_pp, h_pe, h_ee


def dl_simulate_core(y0: np.ndarray, u: np.ndarray, eta: np.ndarray, phi: float):
    """Recursive binary panel: y_it = 1{u_it < sigmoid(eta_i + phi * lag)}.

    y0 : (n,) initial lags, u : (n, m) uniforms consumed stratum-major
    time-minor, eta : (n,).  Returns (n, m) outcomes.
    """
    n, m = u.shape
    y = np.empty((n, m))
    lag = y0.astype(float).copy()
    for t in range(m):
        pr = _sigmoid(eta + phi * lag)
        lag = (u[:, t] < pr).astype(float)
        y[:, t] = lag
    return y
