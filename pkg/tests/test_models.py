"""Model-level checks: derivatives, closed forms, simulators, admissibility."""

import math

import numpy as np
import pytest
from scipy.special import ndtri

from panelboot import (
    DegenerateFitError,
    PanelDataset,
    UsageError,
    delta_hat,
    estimate,
    get_model,
)
from panelboot.models.dynamic_logit import dl_simulate, dl_stationary_init
from panelboot.models.normal_means import (
    nm_bias_corrected,
    nm_closed_form_mle,
    nm_delta_naive_ci,
    nm_delta_spec,
    nm_simulate,
    nm_theta,
)

from conftest import fd_point_errors, make_dl_data, make_nm_data, random_eval_points


# ---------------------------------------------------------------- derivatives


@pytest.mark.parametrize("name", ["normal-means", "dynamic-logit"])
def test_analytic_derivatives_match_finite_differences(name):
    model = get_model(name)
    score_worst = 0.0
    hess_worst = 0.0
    for z, phi, eta in random_eval_points(name, 100, seed=20240501):
        s_err, h_err = fd_point_errors(model, z, phi, eta)
        score_worst = max(score_worst, s_err)
        hess_worst = max(hess_worst, h_err)
    assert score_worst < 1e-6
    assert hess_worst < 1e-5


def test_nm_loglik_point_is_gaussian_density():
    model = get_model("normal-means")
    z = np.array([0.7])
    phi = np.array([1.3])
    eta = np.array([-0.2])
    want = -0.5 * math.log(2 * math.pi * 1.3) - (0.7 + 0.2) ** 2 / (2 * 1.3)
    assert model.loglik_point(phi, eta, z) == pytest.approx(want, rel=1e-14)
    assert model.loglik_point(np.array([-0.5]), eta, z) == -np.inf
    assert model.loglik_point(np.array([0.0]), eta, z) == -np.inf


def test_dl_loglik_point_is_bernoulli_logit():
    model = get_model("dynamic-logit")
    phi = np.array([0.8])
    eta = np.array([-0.3])
    for y, ylag in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        a = -0.3 + 0.8 * ylag
        p = 1.0 / (1.0 + math.exp(-a))
        want = math.log(p if y else 1.0 - p)
        got = model.loglik_point(phi, eta, np.array([float(y), float(ylag)]))
        assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------- closed form


def test_nm_closed_form_matches_direct_formula():
    data = make_nm_data(seed=7, n=9, m=5)
    phi_hat, eta_hat = nm_closed_form_mle(data)
    ybar = data.y.mean(axis=1)
    np.testing.assert_allclose(eta_hat, ybar, rtol=0, atol=0)
    want = np.mean((data.y - ybar[:, None]) ** 2)
    assert phi_hat == pytest.approx(want, rel=1e-14)


def test_nm_closed_form_is_the_maximizer():
    # Perturbing either coordinate lowers the total log likelihood.
    model = get_model("normal-means")
    data = make_nm_data(seed=11, n=6, m=4)
    phi_hat, eta_hat = nm_closed_form_mle(data)
    strata = np.arange(data.n)

    def ll(phi, eta):
        blocks = model.panel_blocks(np.array([phi]), eta[:, None], data, strata)
        return float(np.sum(blocks[0]))

    best = ll(phi_hat, eta_hat)
    assert ll(phi_hat * 1.01, eta_hat) < best
    assert ll(phi_hat * 0.99, eta_hat) < best
    bumped = eta_hat.copy()
    bumped[2] += 0.03
    assert ll(phi_hat, bumped) < best


def test_nm_degenerate_on_constant_strata():
    y = np.tile(np.array([1.5, -0.25, 0.0, 2.0])[:, None], (1, 6))
    data = PanelDataset(n=4, m=6, p=0, y=y)
    with pytest.raises(DegenerateFitError):
        nm_closed_form_mle(data)


def test_nm_fast_fit_agrees_with_closed_form():
    model = get_model("normal-means")
    data = make_nm_data(seed=3)
    phi_hat, eta_hat = nm_closed_form_mle(data)
    phi_f, eta_f = model.fast_fit(data)
    assert phi_f.shape == (1,)
    assert eta_f.shape == (data.n, 1)
    assert phi_f[0] == phi_hat
    np.testing.assert_array_equal(eta_f[:, 0], eta_hat)


def test_nm_bias_corrected():
    # First-order correction (1 + 1/m), not the exact m/(m-1) factor.
    assert nm_bias_corrected(0.9, 10) == pytest.approx(0.99, rel=1e-15)
    assert nm_bias_corrected(1.0, 2) == pytest.approx(1.5, rel=1e-15)


# ----------------------------------------------------------------- simulators


def test_nm_simulate_moments_and_shape():
    rng = np.random.default_rng(99)
    eta0 = np.linspace(-1, 1, 40)
    data = nm_simulate(2.0, eta0, 40, 500, rng)
    assert (data.n, data.m, data.p) == (40, 500, 0)
    np.testing.assert_allclose(data.y.mean(axis=1), eta0, atol=0.35)
    assert np.var(data.y - eta0[:, None]) == pytest.approx(2.0, rel=0.05)


def test_dl_stationary_init_value():
    # Fixed point of p = F(eta + phi) p + F(eta) (1 - p), frozen at (0, 1).
    assert dl_stationary_init(0.0, 1.0) == pytest.approx(0.6502445909457811, abs=1e-15)
    for eta, phi in [(0.3, 0.5), (-1.0, 2.0), (0.0, 0.0)]:
        p = dl_stationary_init(eta, phi)
        f0 = 1.0 / (1.0 + math.exp(-eta))
        f1 = 1.0 / (1.0 + math.exp(-(eta + phi)))
        assert p == pytest.approx(f1 * p + f0 * (1.0 - p), abs=1e-15)
        assert 0.0 < p < 1.0


def test_dl_simulate_deterministic_given_rng():
    a = dl_simulate(0.5, np.zeros(30), 30, 8, rng=np.random.default_rng(5))
    b = dl_simulate(0.5, np.zeros(30), 30, 8, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.y_pre, b.y_pre)
    assert set(np.unique(a.y)) <= {0.0, 1.0}
    assert a.p == 1 and a.y_pre.shape == (30, 1)


def test_dl_simulate_requires_rng():
    with pytest.raises(UsageError, match="rng"):
        dl_simulate(0.5, np.zeros(4), 4, 6)


def test_dl_simulate_init_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(UsageError, match="init"):
        dl_simulate(0.5, np.zeros(4), 4, 6, init="warm", rng=rng)
    with pytest.raises(UsageError, match="0 or 1"):
        dl_simulate(0.5, np.zeros(4), 4, 6, init=0.5, rng=rng)
    fixed = dl_simulate(0.5, np.zeros(4), 4, 6, init=1.0, rng=rng)
    np.testing.assert_array_equal(fixed.y_pre, np.ones((4, 1)))


def test_dl_simulate_transition_frequencies():
    # Long single stratum: empirical transition rates match the logit.
    rng = np.random.default_rng(1234)
    data = dl_simulate(1.0, np.array([-0.5]), 1, 200_000, init=0.0, rng=rng)
    y = data.y[0]
    prev = np.concatenate(([data.y_pre[0, 0]], y[:-1]))
    p01 = y[prev == 0.0].mean()
    p11 = y[prev == 1.0].mean()
    assert p01 == pytest.approx(1 / (1 + math.exp(0.5)), abs=0.005)
    assert p11 == pytest.approx(1 / (1 + math.exp(-0.5)), abs=0.005)


# -------------------------------------------------------------- admissibility


def test_dl_admissibility_drops_constant_strata():
    model = get_model("dynamic-logit")
    data = make_dl_data(seed=2, n=10, m=6)
    y = data.y.copy()
    y[3] = 1.0
    y[7] = 0.0
    doctored = PanelDataset(n=10, m=6, p=1, y=y, y_pre=data.y_pre)
    mask = model.admissibility(doctored)
    want = np.array([0.0 < doctored.y[i].sum() < 6 for i in range(10)])
    np.testing.assert_array_equal(mask, want)
    assert not mask[3] and not mask[7]


def test_nm_admissibility_is_all_true():
    model = get_model("normal-means")
    data = make_nm_data(seed=4, n=7, m=3)
    assert model.admissibility(data).all()


def test_point_admissible_guards_variance_sign():
    model = get_model("normal-means")
    assert model.point_admissible(np.array([0.5]), np.array([0.0]))
    assert not model.point_admissible(np.array([0.0]), np.array([0.0]))
    assert not model.point_admissible(np.array([-1.0]), np.array([0.0]))


# -------------------------------------------------------------- effect spec


def test_nm_delta_spec_matches_mean_squared_effects():
    model = get_model("normal-means")
    data = make_nm_data(seed=21, n=8, m=5)
    result = estimate(model, data)
    spec = nm_delta_spec()
    d = delta_hat(model, data, result, spec)
    want = float(np.mean(result.theta.eta[:, 0] ** 2))
    assert d == pytest.approx(want, rel=1e-13)
    # Pointwise pieces behave as advertised.
    z = np.array([0.0])
    phi = np.array([1.0])
    eta = np.array([0.7])
    assert spec.mu(z, phi, eta) == pytest.approx(0.49)
    assert spec.dmu_dphi(z, phi, eta) == pytest.approx(0.0)
    assert spec.dmu_deta(z, phi, eta) == pytest.approx(np.array([1.4]))


def test_nm_delta_naive_ci_arithmetic():
    lo, hi = nm_delta_naive_ci(0.4, 1.2, 50, 10, 0.95)
    var = (2 * 1.2 / 500) * (2 * 0.4 + 1.2 / 10)
    half = ndtri(0.975) * math.sqrt(var)
    assert lo == pytest.approx(0.4 - half, rel=1e-14)
    assert hi == pytest.approx(0.4 + half, rel=1e-14)
    with pytest.raises(ValueError, match="level"):
        nm_delta_naive_ci(0.4, 1.2, 50, 10, 1.5)


def test_nm_theta_layout():
    theta = nm_theta(0.8, [0.1, -0.2])
    assert theta.phi.shape == (1,)
    assert theta.eta.shape == (2,) or theta.eta.shape == (2, 1)
    assert theta.phi[0] == 0.8


# ------------------------------------------------------------------ registry


def test_get_model_registry():
    nm = get_model("normal-means")
    dl = get_model("dynamic-logit")
    assert nm.name == "normal-means" and (nm.dim_phi, nm.dim_eta) == (1, 1)
    assert dl.name == "dynamic-logit" and dl.p == 1
    with pytest.raises(UsageError, match="unknown model"):
        get_model("probit")
