import math

import numpy as np
import pytest

from survdiag.aft import (AftFit, SingularDesignError, aft_loglik, design_matrix, fit_aft,
                          predict_surv)
from survdiag.data import Dataset, SurvivalRecord
from tests.conftest import GBSG_COVARIATES

FAMILIES = ["weibull", "lognormal", "loglogistic", "exponential"]


def fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * max(1.0, abs(x[j]))
        g[j] = (f(x + e) - f(x - e)) / (2 * e[j])
    return g


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_matches_finite_differences(weibull_data, family):
    X = design_matrix(weibull_data.covariates)
    logt = np.log(weibull_data.times)
    status = weibull_data.status
    k = X.shape[1] + (0 if family == "exponential" else 1)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.normal(0, 0.5, k)
        _, g, H = aft_loglik(x, X, logt, status, family)

        def f(p):
            return aft_loglik(p, X, logt, status, family, derivatives=False)

        fd = fd_gradient(f, x)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))
        fdH = np.column_stack([fd_gradient(lambda p: aft_loglik(p, X, logt, status, family)[1][j], x)
                               for j in range(k)])
        assert np.linalg.norm(H - fdH) <= 1e-5 * max(1.0, np.linalg.norm(fdH))


@pytest.mark.parametrize("family", ["weibull", "lognormal", "loglogistic"])
def test_fit_beats_grid_on_two_parameter_toy(family):
    rng = np.random.default_rng(50)
    t = np.exp(1.5 + 0.6 * np.log(rng.standard_exponential(50)))
    d = Dataset(t, np.ones(50, int))
    fit = fit_aft(d, family)
    assert fit.converged
    X = design_matrix(d.covariates)
    b0 = fit.beta[0] + np.linspace(-1, 1, 101)
    ls = fit.log_sigma + np.linspace(-1, 1, 101)
    grid = max(aft_loglik([a, s], X, np.log(t), d.status, family, derivatives=False)
               for a in b0 for s in ls)
    assert fit.loglik >= grid - 1e-10


def test_weibull_fit_matches_closed_form_exponential_limit():
    # exponential model: intercept MLE is log(sum t / events)
    rng = np.random.default_rng(2)
    t = rng.exponential(3.0, 200)
    status = (rng.random(200) < 0.7).astype(int)
    fit = fit_aft(Dataset(t, status), "exponential")
    assert fit.beta[0] == pytest.approx(math.log(t.sum() / status.sum()), abs=1e-8)
    assert fit.n_params == 1
    assert fit.aic == pytest.approx(-2 * fit.loglik + 2)


def test_recovers_generating_parameters(weibull_data):
    fit = fit_aft(weibull_data, "weibull")
    assert fit.converged and fit.grad_norm < 1e-7
    np.testing.assert_allclose(fit.beta, [1.0, 0.5, -0.3], atol=0.15)
    assert fit.sigma == pytest.approx(0.7, abs=0.1)


def test_three_row_toy_converges():
    fit = fit_aft(Dataset([1.0, 2.0, 3.0], [1, 0, 1]), "weibull")
    assert fit.converged


def test_identical_columns_are_singular():
    x = np.arange(1.0, 7.0)
    d = Dataset(x, np.ones(6, int), np.column_stack([x, x]), ["a", "b"])
    with pytest.raises(SingularDesignError):
        fit_aft(d, "weibull")


def test_survival_examples():
    fit = AftFit.from_params("weibull", [0.0], 1.0)
    assert fit.survival([1.0], np.empty((1, 0)))[0] == pytest.approx(math.exp(-1))
    fit = AftFit.from_params("weibull", [2.0, 1.0], 1 / 1.784, ["x"])
    assert fit.survival([math.e ** 3], [[1.0]])[0] == pytest.approx(math.exp(-1))
    assert predict_surv(fit, SurvivalRecord(math.e ** 3, 1, (1.0,))) == pytest.approx(math.exp(-1))
    s = fit.survival([1.0, 5.0, 50.0], [[0.0], [0.0], [0.0]])
    assert s[0] > s[1] > s[2]


def test_dimension_mismatch():
    fit = AftFit.from_params("weibull", [2.0, 1.0], 0.5, ["x"])
    with pytest.raises(ValueError):
        predict_surv(fit, SurvivalRecord(1.0, 1, (1.0, 2.0)))


@pytest.mark.parametrize("family", FAMILIES)
def test_dict_round_trip(weibull_data, family):
    fit = fit_aft(weibull_data, family)
    back = AftFit.from_dict(fit.to_dict())
    np.testing.assert_array_equal(back.beta, fit.beta)
    assert back.sigma == fit.sigma and back.aic == fit.aic
    np.testing.assert_array_equal(back.survival_of(weibull_data), fit.survival_of(weibull_data))


def test_breast_cancer_reference(gbsg):
    fits = {f: fit_aft(gbsg, f) for f in ["weibull", "lognormal", "loglogistic"]}
    assert all(f.converged for f in fits.values())
    assert fits["weibull"].aic == pytest.approx(5182, abs=2)
    assert fits["lognormal"].aic == pytest.approx(5140, abs=2)
    assert fits["loglogistic"].aic == pytest.approx(5154, abs=2)
    treat = 1 + GBSG_COVARIATES.index("treat")
    assert fits["weibull"].beta[treat] == pytest.approx(0.261, abs=0.01)
    assert fits["weibull"].se[treat] == pytest.approx(0.093, abs=0.005)
