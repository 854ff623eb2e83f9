"""Solver checks: partitioned-vs-dense equivalence, damping, drops, options."""

import numpy as np
import pytest

from panelboot import (
    BlockScoreHessian,
    FitOptions,
    NumericalError,
    PanelDataset,
    ParameterPoint,
    UsageError,
    assemble,
    estimate,
    fit,
    get_model,
    newton_direction,
)
from panelboot.models.normal_means import nm_closed_form_mle, nm_simulate
from panelboot.newton import _assemble_ll

from conftest import (
    dense_reference_trace,
    make_dl_data,
    make_nm_data,
    random_start,
)


# ------------------------------------------------- partitioned vs dense solve


def _nm_start(data, rng):
    # The variance model is concave only locally; start the effects near
    # the stratum means so the Newton direction is an ascent direction.
    ybar = data.y.mean(axis=1)
    within = float(np.mean((data.y - ybar[:, None]) ** 2))
    phi = np.array([within * rng.uniform(0.7, 1.4)])
    eta = (ybar + 0.2 * rng.uniform(-1, 1, data.n))[:, None]
    return ParameterPoint(phi=phi, eta=eta)


def _instances():
    rng = np.random.default_rng(20240502)
    out = []
    for j in range(50):
        name = "normal-means" if j % 2 == 0 else "dynamic-logit"
        n = int(rng.integers(3, 6))
        m = int(rng.integers(4, 9))
        seed = 1000 + j
        if name == "normal-means":
            data = make_nm_data(seed, n=n, m=m)
            theta0 = _nm_start(data, rng)
        else:
            data = make_dl_data(seed, n=n, m=max(m, 6))
            theta0 = random_start(get_model(name), data, rng)
        out.append((name, data, theta0))
    return out


def test_partitioned_newton_matches_dense_bordered_solve():
    """Every iterate of fit() equals a dense full-Hessian Newton run.

    The reference shares block assembly and the damping rule, so any
    discrepancy isolates the partitioned direction computation.  The
    divergence cap is lifted here (its drop-restart path is covered
    separately); a couple of instances carry near-separated strata with
    effects just past the default cap.
    """
    opts = FitOptions(eta_cap=1e6)
    checked = 0
    for name, data, theta0 in _instances():
        model = get_model(name)
        if not model.admissibility(data).all():
            continue  # reference assumes no admissibility drops
        got = fit(model, data, theta0, opts, trace=True)
        want = dense_reference_trace(model, data, theta0, opts)
        assert got.converged
        assert len(got.trace) == len(want)
        for a, b in zip(got.trace, want):
            scale = max(1.0, float(np.max(np.abs(b))))
            assert float(np.max(np.abs(a - b))) <= 1e-7 * scale
        checked += 1
    assert checked >= 40


def test_newton_direction_equals_dense_linear_solve(dl_model):
    data = make_dl_data(seed=77, n=6, m=9)
    theta = ParameterPoint(phi=np.array([0.3]), eta=0.1 * np.ones((6, 1)))
    b = assemble(dl_model, data, theta)
    dphi, deta = newton_direction(b)
    k = 6
    dim = 1 + k
    hess = np.zeros((dim, dim))
    grad = np.zeros(dim)
    hess[0, 0] = b.h_phiphi[0, 0]
    grad[0] = b.s_phi[0]
    for j in range(k):
        hess[0, 1 + j] = b.h_phieta[j, 0, 0]
        hess[1 + j, 0] = b.h_phieta[j, 0, 0]
        hess[1 + j, 1 + j] = b.h_etaeta[j, 0, 0]
        grad[1 + j] = b.s_eta[j, 0]
    step = -np.linalg.solve(hess, grad)
    np.testing.assert_allclose(dphi, step[:1], rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(deta[:, 0], step[1:], rtol=1e-10, atol=1e-13)


def test_newton_direction_multidim_blocks():
    # dim_phi=2, dim_eta=1 exercises the generic einsum path.
    rng = np.random.default_rng(5)
    k = 4
    h_pe = rng.normal(size=(k, 2, 1))
    h_ee = -(1.0 + rng.random((k, 1, 1)))
    a = rng.normal(size=(2, 2))
    h_pp = -(a @ a.T + 10 * np.eye(2))
    b = BlockScoreHessian(
        s_phi=rng.normal(size=2),
        s_eta=rng.normal(size=(k, 1)),
        h_phiphi=h_pp,
        h_phieta=h_pe,
        h_etaeta=h_ee,
        strata=tuple(range(k)),
    )
    dphi, deta = newton_direction(b)
    dim = 2 + k
    hess = np.zeros((dim, dim))
    grad = np.zeros(dim)
    hess[:2, :2] = h_pp
    grad[:2] = b.s_phi
    for j in range(k):
        hess[:2, 2 + j] = h_pe[j, :, 0]
        hess[2 + j, :2] = h_pe[j, :, 0]
        hess[2 + j, 2 + j] = h_ee[j, 0, 0]
        grad[2 + j] = b.s_eta[j, 0]
    step = -np.linalg.solve(hess, grad)
    np.testing.assert_allclose(dphi, step[:2], rtol=1e-10)
    np.testing.assert_allclose(deta[:, 0], step[2:], rtol=1e-10)


def test_newton_direction_singular_blocks_raise():
    base = dict(
        s_phi=np.array([1.0]),
        s_eta=np.array([[1.0], [1.0]]),
        h_phiphi=np.array([[-2.0]]),
        h_phieta=np.zeros((2, 1, 1)),
        strata=(4, 9),
    )
    sing_eta = BlockScoreHessian(h_etaeta=np.array([[[-1.0]], [[0.0]]]), **base)
    with pytest.raises(NumericalError, match=r"\[9\]"):
        newton_direction(sing_eta)
    flat = BlockScoreHessian(
        s_phi=np.array([1.0]),
        s_eta=np.array([[1.0]]),
        h_phiphi=np.array([[-1.0]]),
        h_phieta=np.array([[[1.0]]]),
        h_etaeta=np.array([[[-1.0]]]),
        strata=(0,),
    )
    # profile = -1 - (1 * -1 * 1) = 0 exactly
    with pytest.raises(NumericalError, match="profile"):
        newton_direction(flat)


# ------------------------------------------------------------ solution checks


def test_nm_fit_matches_closed_form(nm_model):
    data = make_nm_data(seed=31, n=10, m=7)
    ybar = data.y.mean(axis=1)
    theta0 = ParameterPoint(phi=np.array([0.6]), eta=(ybar + 0.2)[:, None])
    res = fit(nm_model, data, theta0, FitOptions(tol_score=1e-12))
    phi_hat, eta_hat = nm_closed_form_mle(data)
    assert res.converged
    assert res.theta.phi[0] == pytest.approx(phi_hat, abs=1e-10)
    np.testing.assert_allclose(res.theta.eta[:, 0], eta_hat, atol=1e-10)
    assert res.loglik == pytest.approx(
        _assemble_ll(nm_model, data, res.theta.phi, res.theta.eta, list(range(10)))[0]
    )


def test_estimate_uses_fast_route_for_nm(nm_model):
    data = make_nm_data(seed=32)
    res = estimate(nm_model, data)
    phi_hat, eta_hat = nm_closed_form_mle(data)
    assert res.converged and res.iterations == 0
    assert res.theta.phi[0] == phi_hat
    np.testing.assert_array_equal(res.theta.eta[:, 0], eta_hat)
    # Score at the closed form is numerically zero on the fit scale.
    assert res.score_sup < 1e-10 * data.n * data.m


def test_estimate_and_fit_agree_for_dl(dl_model):
    data = make_dl_data(seed=33, n=12, m=10)
    via_estimate = estimate(dl_model, data)
    theta0 = ParameterPoint(phi=np.zeros(1), eta=np.zeros((12, 1)))
    via_fit = fit(dl_model, data, theta0)
    assert via_estimate.converged and via_fit.converged
    np.testing.assert_allclose(via_estimate.theta.phi, via_fit.theta.phi, atol=1e-12)
    np.testing.assert_allclose(
        via_estimate.theta.eta[via_fit.retained, 0],
        via_fit.theta.eta[via_fit.retained, 0],
        atol=1e-12,
    )


def test_loglik_never_decreases_along_trace(dl_model):
    data = make_dl_data(seed=34, n=8, m=12)
    theta0 = ParameterPoint(phi=np.array([2.5]), eta=-1.5 * np.ones((8, 1)))
    res = fit(dl_model, data, theta0, trace=True)
    assert res.converged and len(res.trace) >= 2
    retained = list(res.retained)
    k = len(retained)
    lls = []
    for it in res.trace:
        phi = it[:1]
        eta = np.zeros((data.n, 1))
        eta[retained, 0] = it[1 : 1 + k]
        lls.append(_assemble_ll(dl_model, data, phi, eta, retained)[0])
    assert all(b >= a for a, b in zip(lls, lls[1:]))
    assert lls[-1] == pytest.approx(res.loglik)


def test_step_halving_rejects_domain_exits(nm_model):
    # Start next to the variance boundary; the full step would cross it.
    data = make_nm_data(seed=35, n=5, m=4, phi0=1.0)
    theta0 = ParameterPoint(phi=np.array([0.02]), eta=np.zeros((5, 1)))
    res = fit(nm_model, data, theta0)
    assert res.converged
    assert res.theta.phi[0] > 0
    phi_hat, _ = nm_closed_form_mle(data)
    assert res.theta.phi[0] == pytest.approx(phi_hat, rel=1e-8)


def test_max_iter_returns_nonconverged(dl_model):
    data = make_dl_data(seed=36, n=10, m=8)
    theta0 = ParameterPoint(phi=np.array([4.0]), eta=2.0 * np.ones((10, 1)))
    res = fit(dl_model, data, theta0, FitOptions(max_iter=1))
    assert not res.converged
    assert res.iterations == 1
    assert res.score_sup > 0


# ------------------------------------------------------------ drops and caps


def test_eta_cap_drops_divergent_stratum(nm_model):
    rng = np.random.default_rng(40)
    eta0 = np.zeros(6)
    data = nm_simulate(1.0, eta0, 6, 5, rng)
    y = data.y.copy()
    y[2] += 20.0  # stratum mean far beyond the default cap of 15
    doctored = PanelDataset(n=6, m=5, p=0, y=y)
    # Warm start near (not at) the maximizer, so the first full step is
    # accepted and lands the shifted stratum's effect past the cap.
    ybar = doctored.y.mean(axis=1)
    phi0 = np.array([0.8 * float(np.mean((doctored.y - ybar[:, None]) ** 2))])
    theta0 = ParameterPoint(phi=phi0, eta=(ybar - 0.5)[:, None])
    res = fit(nm_model, doctored, theta0)
    assert res.converged
    assert res.dropped_strata == (2,)
    assert 2 not in res.retained
    assert np.isnan(res.theta.eta[2, 0])
    assert np.isfinite(res.theta.eta[res.retained, 0]).all()
    # A generous cap keeps the stratum and reproduces the closed form.
    res_big = fit(nm_model, doctored, theta0, FitOptions(eta_cap=1000.0))
    assert res_big.dropped_strata == ()
    phi_hat, eta_hat = nm_closed_form_mle(doctored)
    assert res_big.theta.phi[0] == pytest.approx(phi_hat, rel=1e-9)
    assert res_big.theta.eta[2, 0] == pytest.approx(eta_hat[2], rel=1e-9)


def test_dl_constant_strata_dropped_before_iterating(dl_model):
    data = make_dl_data(seed=41, n=9, m=7)
    y = data.y.copy()
    y[4] = 1.0
    doctored = PanelDataset(n=9, m=7, p=1, y=y, y_pre=data.y_pre)
    res = estimate(dl_model, doctored)
    assert 4 in res.dropped_strata
    assert np.isnan(res.theta.eta[4, 0])
    assert res.converged
    # The retained-strata fit is unaffected by the doctored stratum's values.
    y2 = y.copy()
    y2[4] = 0.0
    res2 = estimate(dl_model, PanelDataset(n=9, m=7, p=1, y=y2, y_pre=data.y_pre))
    np.testing.assert_allclose(res.theta.phi, res2.theta.phi, atol=1e-12)


def test_all_strata_dropped_raises(dl_model):
    y = np.ones((3, 6))
    y[1] = 0.0
    y[2] = 1.0
    data = PanelDataset(n=3, m=6, p=1, y=y, y_pre=np.zeros((3, 1)))
    theta0 = ParameterPoint(phi=np.zeros(1), eta=np.zeros((3, 1)))
    with pytest.raises(NumericalError, match="all strata dropped"):
        fit(dl_model, data, theta0)
    with pytest.raises(NumericalError, match="all strata dropped"):
        estimate(dl_model, data)


# -------------------------------------------------------------- housekeeping


def test_fit_options_validation():
    with pytest.raises(UsageError):
        FitOptions(tol_score=0.0)
    with pytest.raises(UsageError):
        FitOptions(tol_score=-1.0)
    with pytest.raises(UsageError):
        FitOptions(max_iter=0)
    with pytest.raises(UsageError):
        FitOptions(halving_limit=-1)
    with pytest.raises(UsageError):
        FitOptions(eta_cap=0.0)


def test_theta0_validation(nm_model):
    data = make_nm_data(seed=50, n=4, m=3)
    with pytest.raises(UsageError, match="strata"):
        fit(nm_model, data, ParameterPoint(phi=np.ones(1), eta=np.zeros((5, 1))))
    bad = ParameterPoint(phi=np.array([np.nan]), eta=np.zeros((4, 1)))
    with pytest.raises(UsageError, match="finite"):
        fit(nm_model, data, bad)


def test_assemble_matches_pointwise_sums(dl_model):
    from panelboot.data import assemble_z

    data = make_dl_data(seed=51, n=4, m=5)
    theta = ParameterPoint(phi=np.array([0.7]), eta=0.2 * np.ones((4, 1)))
    b = assemble(dl_model, data, theta, strata=[0, 2, 3])
    s_phi = 0.0
    s_eta = {0: 0.0, 2: 0.0, 3: 0.0}
    for row, i in enumerate([0, 2, 3]):
        for t in range(1, 6):
            z = assemble_z(data, i, t)
            sp, se = dl_model.score_point(theta.phi, theta.eta[i], z)
            s_phi += sp[0]
            s_eta[i] += se[0]
    assert b.s_phi[0] == pytest.approx(s_phi, rel=1e-12, abs=1e-12)
    for row, i in enumerate([0, 2, 3]):
        assert b.s_eta[row, 0] == pytest.approx(s_eta[i], rel=1e-12, abs=1e-12)
    assert b.strata == (0, 2, 3)


def test_trace_defaults_empty_and_warm_start_converges(nm_model):
    data = make_nm_data(seed=52)
    res = estimate(nm_model, data)
    assert res.trace == ()
    warm = fit(nm_model, data, res.theta)
    assert warm.converged and warm.iterations == 0
    assert warm.theta.phi[0] == res.theta.phi[0]


def test_to_dict_roundtrips_nan_rows(dl_model):
    data = make_dl_data(seed=53, n=6, m=6)
    y = data.y.copy()
    y[1] = 0.0
    res = estimate(dl_model, PanelDataset(n=6, m=6, p=1, y=y, y_pre=data.y_pre))
    d = res.to_dict()
    assert set(d) == {
        "phi",
        "eta",
        "converged",
        "iterations",
        "score_sup",
        "dropped_strata",
        "retained",
        "profile_info",
        "loglik",
    }
    assert d["dropped_strata"] == [1]
    assert np.isnan(d["eta"][1][0])
    assert np.isfinite(d["loglik"])
