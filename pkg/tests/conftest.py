"""Shared fixtures and the dense-solve reference used by solver tests."""

import numpy as np
import pytest

from panelboot import ParameterPoint, get_model
from panelboot.errors import NumericalError
from panelboot.models.dynamic_logit import dl_simulate
from panelboot.models.normal_means import nm_simulate
from panelboot.newton import _assemble_ll


@pytest.fixture(scope="session")
def nm_model():
    return get_model("normal-means")


@pytest.fixture(scope="session")
def dl_model():
    return get_model("dynamic-logit")


def make_nm_data(seed, n=12, m=6, phi0=1.0, eta0=None):
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    if eta0 is None:
        eta0 = np.arange(1, n + 1) / n
    return nm_simulate(phi0, eta0, n, m, rng)


def make_dl_data(seed, n=15, m=8, phi0=0.5, eta0=None):
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    if eta0 is None:
        eta0 = np.zeros(n)
    return dl_simulate(phi0, eta0, n, m, rng=rng)


def dense_reference_trace(model, data, theta0, opts):
    """Damped Newton iterates from one dense solve of the full system.

    Mirrors fit()'s acceptance rule exactly (same block assembly, same
    log-likelihood values, same halving schedule) but computes each
    direction by assembling the bordered Hessian and calling a single
    dense ``np.linalg.solve``.  Instances are chosen so the divergence
    cap never binds.
    """
    mask = model.admissibility(data)
    retained = np.nonzero(mask)[0].tolist()
    assert retained, "reference needs at least one admissible stratum"
    phi = theta0.phi.copy()
    eta = theta0.eta.copy()
    tol = opts.tol_score if opts.tol_score is not None else 1e-8 * len(retained) * data.m
    ll, blocks = _assemble_ll(model, data, phi, eta, retained)
    k, dp, de = len(retained), model.dim_phi, model.dim_eta
    iterates = []
    for _ in range(1, opts.max_iter + 1):
        iterates.append(np.concatenate([phi, eta[retained].ravel()]))
        if blocks.score_sup_norm() <= tol:
            break
        dim = dp + k * de
        hess = np.zeros((dim, dim))
        grad = np.zeros(dim)
        hess[:dp, :dp] = blocks.h_phiphi
        grad[:dp] = blocks.s_phi
        for j in range(k):
            a = dp + j * de
            b = a + de
            hess[:dp, a:b] = blocks.h_phieta[j]
            hess[a:b, :dp] = blocks.h_phieta[j].T
            hess[a:b, a:b] = blocks.h_etaeta[j]
            grad[a:b] = blocks.s_eta[j]
        step = -np.linalg.solve(hess, grad)
        dphi = step[:dp]
        deta = step[dp:].reshape(k, de)
        lam = 1.0
        accepted = False
        for _h in range(opts.halving_limit + 1):
            cand_phi = phi + lam * dphi
            cand_eta = eta.copy()
            cand_eta[retained] += lam * deta
            ok = True
            if model.point_admissible is not None:
                ok = all(model.point_admissible(cand_phi, cand_eta[i]) for i in retained)
            if ok:
                try:
                    cand_ll, cand_blocks = _assemble_ll(model, data, cand_phi, cand_eta, retained)
                except NumericalError:
                    cand_ll = None
                if cand_ll is not None and cand_ll >= ll:
                    phi, eta, ll, blocks = cand_phi, cand_eta, cand_ll, cand_blocks
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
        assert not np.any(np.max(np.abs(eta[retained]), axis=1) > opts.eta_cap)
    return iterates


def random_start(model, data, rng):
    phi = np.ones(model.dim_phi) + 0.4 * rng.uniform(-1, 1, model.dim_phi)
    eta = 0.5 * rng.uniform(-1, 1, (data.n, model.dim_eta))
    return ParameterPoint(phi=phi, eta=eta)


def random_eval_points(model_name, count, seed):
    """Random (z, phi, eta) triples in each model's natural domain."""
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(count):
        if model_name == "normal-means":
            z = np.array([rng.normal(0.0, 1.5)])
            phi = np.array([rng.uniform(0.4, 2.5)])
            eta = np.array([rng.normal()])
        else:
            z = np.array([float(rng.integers(0, 2)), float(rng.integers(0, 2))])
            phi = np.array([rng.normal(0.0, 1.5)])
            eta = np.array([rng.normal(0.0, 1.5)])
        points.append((z, phi, eta))
    return points


def fd_point_errors(model, z, phi, eta, h=1e-5):
    """Max relative error of analytic derivatives vs central differences.

    Score is differenced from the log-density, the Hessian from the
    analytic score.  Errors are relative to max(1, magnitude).
    """

    def rel(err, ref):
        return abs(err) / max(1.0, abs(ref))

    dp, de = phi.size, eta.size
    score_err = 0.0
    hess_err = 0.0
    s_phi, s_eta = model.score_point(phi, eta, z)
    h_pp, h_pe, h_ee = model.hess_point(phi, eta, z)
    for j in range(dp):
        step = np.zeros(dp)
        step[j] = h
        fd = (
            model.loglik_point(phi + step, eta, z)
            - model.loglik_point(phi - step, eta, z)
        ) / (2 * h)
        score_err = max(score_err, rel(fd - s_phi[j], s_phi[j]))
        sp_p, se_p = model.score_point(phi + step, eta, z)
        sp_m, se_m = model.score_point(phi - step, eta, z)
        for a in range(dp):
            hess_err = max(hess_err, rel((sp_p[a] - sp_m[a]) / (2 * h) - h_pp[a, j], h_pp[a, j]))
        for b in range(de):
            hess_err = max(hess_err, rel((se_p[b] - se_m[b]) / (2 * h) - h_pe[j, b], h_pe[j, b]))
    for b in range(de):
        step = np.zeros(de)
        step[b] = h
        fd = (
            model.loglik_point(phi, eta + step, z)
            - model.loglik_point(phi, eta - step, z)
        ) / (2 * h)
        score_err = max(score_err, rel(fd - s_eta[b], s_eta[b]))
        _, se_p = model.score_point(phi, eta + step, z)
        _, se_m = model.score_point(phi, eta - step, z)
        for c in range(de):
            hess_err = max(hess_err, rel((se_p[c] - se_m[c]) / (2 * h) - h_ee[c, b], h_ee[c, b]))
    return score_err, hess_err
