"""Kernel ridge regression: fitting, prediction, risks, eta formula."""

import math

import numpy as np
import pytest

from ikrr.actions import apply_action, parse_action, sample_elements
from ikrr.errors import ConfigurationError
from ikrr.harness import gen_target
from ikrr.kernels import Sobolev, build_kernel
from ikrr.regress import (
    Dataset,
    TargetFunction,
    effective_estimator,
    excess_risk_exact,
    excess_risk_mc,
    fit,
    optimal_eta,
    predict,
    rate_upper_bound,
)
from ikrr.spectra import Torus, enumerate_eigenbasis, uniform_sample

T1 = Torus(1)
TRIV = parse_action(T1, "trivial")
REFL = parse_action(T1, "reflect:0")


def _unit_coefficient_target(lam_band=9.0, index=1):
    basis = enumerate_eigenbasis(T1, lam_band)
    alpha = np.zeros(len(basis.entries))
    alpha[index] = 1.0
    return TargetFunction(T1, basis, alpha, 2.0)


def test_fit_one_point_closed_form():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 4.0)
    c = kernel.eval([0.5], [0.5])
    model = fit(kernel, Dataset([[0.5]], [1.0]), eta=0.3)
    assert model.weights[0] == pytest.approx(1.0 / (c + 0.3), rel=1e-12)
    assert predict(model, np.array([0.5])) == pytest.approx(c / (c + 0.3), rel=1e-12)


def test_fit_huge_eta_shrinks_to_zero():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 25.0)
    X = uniform_sample(T1, 1, 50)
    y = np.sin(X[:, 0])
    small = fit(kernel, Dataset(X, y), eta=1e-3)
    for eta in [1e3, 1e6]:
        model = fit(kernel, Dataset(X, y), eta=eta)
        assert np.abs(model.weights).max() < 1.0 / eta
        assert np.abs(predict(model, X)).max() < 10.0 / eta
    assert np.abs(small.weights).max() > np.abs(model.weights).max()


def test_fit_noiseless_near_interpolation():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 100.0)
    target = gen_target(TRIV, 2.0, 1.0, 100.0, seed=3)
    X = uniform_sample(T1, 2, 20)
    y = target.evaluate(X)
    model = fit(kernel, Dataset(X, y), eta=1e-10)
    assert np.abs(predict(model, X) - y).max() <= 1e-3


def test_fit_validation_and_residual_contract():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    with pytest.raises(ConfigurationError):
        fit(kernel, Dataset(np.zeros((0, 1)), []), eta=0.1)
    with pytest.raises(ConfigurationError):
        fit(kernel, Dataset([[0.1]], [1.0]), eta=0.0)
    X = uniform_sample(T1, 4, 64)
    y = np.cos(X[:, 0])
    model = fit(kernel, Dataset(X, y), eta=1e-6)
    assert model.residual <= 1e-8 * np.abs(y).max()


def test_fit_jitter_retry_on_singular_gram():
    # rank-deficient Gram (duplicated points, basis smaller than n) with a
    # denormal ridge forces the first factorization to fail
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 4.0)
    X = np.zeros((12, 1))
    y = np.ones(12)
    model = fit(kernel, Dataset(X, y), eta=1e-320)
    assert model.jitter_used
    assert model.residual <= 1e-8


def test_predict_zero_weights():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    X = uniform_sample(T1, 5, 10)
    model = fit(kernel, Dataset(X, np.zeros(10)), eta=0.1)
    assert np.abs(predict(model, X)).max() == 0.0


def test_predict_orbit_invariance():
    kernel = build_kernel(T1, REFL, Sobolev(2.0), 100.0)
    target = gen_target(REFL, 2.0, 1.0, 100.0, seed=5)
    X = uniform_sample(T1, 6, 100)
    rng = np.random.default_rng(0)
    y = target.evaluate(X) + 0.3 * rng.standard_normal(100)
    model = fit(kernel, Dataset(X, y, 0.3), eta=1e-3)
    Xc = uniform_sample(T1, 7, 1000)
    fx = predict(model, Xc)
    for tau in sample_elements(REFL, rng, 4):
        ft = predict(model, apply_action(REFL, tau, Xc))
        assert np.abs(ft - fx).max() <= 1e-10 * np.abs(fx).max()


def test_excess_risk_exact_examples():
    target = _unit_coefficient_target()
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    zero_model = fit(kernel, Dataset([[0.0]], [0.0]), eta=1.0)
    assert excess_risk_exact(zero_model, target) == pytest.approx(
        1.0 / (2.0 * math.pi), rel=1e-12
    )
    # coefficients matching the target give zero risk
    matching = effective_estimator(target, kernel, eta=1e-300)
    assert excess_risk_exact(zero_model, matching) <= 1.0 / (2 * math.pi) + 1e-9
    model = fit(kernel, Dataset(uniform_sample(T1, 8, 60), np.zeros(60)), eta=0.5)
    model.beta_inv = np.asarray(kernel.basis.expansion.T @ target.alpha)
    assert excess_risk_exact(model, target) <= 1e-24


def test_excess_risk_out_of_band_warning():
    target = _unit_coefficient_target(lam_band=25.0, index=-1)  # lam = 25 entry
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    model = fit(kernel, Dataset([[0.0]], [0.0]), eta=1.0)
    with pytest.warns(UserWarning):
        risk = excess_risk_exact(model, target)
    assert risk == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)


def test_excess_risk_mc_examples():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    X = uniform_sample(T1, 9, 40)
    target = gen_target(TRIV, 2.0, 1.0, 9.0, seed=11)
    rng = np.random.default_rng(1)
    y = target.evaluate(X) + 0.2 * rng.standard_normal(40)
    model = fit(kernel, Dataset(X, y, 0.2), eta=1e-3)
    # perfect model has zero mc risk
    perfect = fit(kernel, Dataset(X, target.evaluate(X)), eta=1e-10)
    perfect.beta_inv = np.asarray(kernel.basis.expansion.T @ target.alpha)
    assert excess_risk_mc(perfect, target, seed=2, n_test=1000) <= 1e-24
    # n_test=1 is the squared error at the sampled point
    x1 = uniform_sample(T1, 3, 1)
    err = (predict(model, x1)[0] - target.evaluate(x1)[0]) ** 2
    assert excess_risk_mc(model, target, seed=3, n_test=1) == pytest.approx(err, rel=1e-12)
    with pytest.raises(ConfigurationError):
        excess_risk_mc(model, target, seed=3, n_test=0)


def test_exact_vs_mc_within_three_standard_errors():
    rng = np.random.default_rng(42)
    kernel = build_kernel(T1, REFL, Sobolev(2.0), 100.0)
    for trial in range(20):
        n = int(rng.integers(16, 128))
        target = gen_target(REFL, 2.0, 1.0, 100.0, seed=trial)
        X = uniform_sample(T1, 100 + trial, n)
        y = target.evaluate(X) + 0.3 * rng.standard_normal(n)
        model = fit(kernel, Dataset(X, y, 0.3), eta=1e-3)
        exact = excess_risk_exact(model, target)
        n_test = 20_000
        Xt = uniform_sample(T1, 200 + trial, n_test)
        sq = (predict(model, Xt) - target.evaluate(Xt)) ** 2
        mc = float(sq.mean())
        se = float(sq.std(ddof=1)) / math.sqrt(n_test)
        assert abs(exact - mc) <= 3.0 * se + 1e-12


def test_optimal_eta_formula():
    eta = optimal_eta(2.0, 1.0, 1, 2 * math.pi, 1.0, 100, 1.0)
    assert eta == pytest.approx((1.0 / 300.0) ** 0.8, rel=1e-12)
    assert eta == pytest.approx(0.01043, abs=5e-6)


def test_optimal_eta_monotone_in_n():
    etas = [optimal_eta(2.0, 1.0, 1, 2 * math.pi, 1.0, n, 1.0) for n in [10, 100, 1000]]
    assert etas[0] > etas[1] > etas[2]


def test_optimal_eta_norm_homogeneity():
    base = optimal_eta(2.0, 1.0, 1, 2 * math.pi, 1.0, 50, 1.0)
    doubled = optimal_eta(2.0, 1.0, 1, 2 * math.pi, 1.0, 50, math.sqrt(2.0))
    assert doubled == pytest.approx(base * 2 ** (-0.8), rel=1e-12)


def test_optimal_eta_kappa_validation():
    with pytest.raises(ConfigurationError):
        optimal_eta(0.5, 1.0, 1, 2 * math.pi, 1.0, 10, 1.0)  # kappa = 0
    with pytest.raises(ConfigurationError):
        optimal_eta(2.0, 1.5, 1, 2 * math.pi, 1.0, 10, 1.0)


def test_rate_upper_bound_decreases_in_n():
    vals = [rate_upper_bound(2.0, 1.0, 1, math.pi, 0.25, n, 1.0) for n in [10, 100]]
    assert vals[0] > vals[1] > 0


def test_effective_estimator_shrinkage():
    target = _unit_coefficient_target()  # unit coefficient at lambda = 1 (mu = 1)
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 9.0)
    eff = effective_estimator(target, kernel, eta=1.0)
    assert eff.alpha[1] == pytest.approx(0.5, rel=1e-12)
    # eta -> 0 recovers the projection of the target onto the kernel span
    eff0 = effective_estimator(target, kernel, eta=1e-14)
    assert np.abs(eff0.alpha - target.alpha[: len(eff0.alpha)]).max() <= 1e-10


def test_effective_estimator_is_bias_floor():
    kernel = build_kernel(T1, REFL, Sobolev(2.0), 100.0)
    target = gen_target(REFL, 2.0, 1.0, 100.0, seed=21)
    eta = 1e-2
    eff = effective_estimator(target, kernel, eta)
    eff_model = fit(kernel, Dataset(uniform_sample(T1, 1, 4), np.zeros(4)), eta)
    eff_model.beta_inv = np.asarray(kernel.basis.expansion.T @ eff.alpha)
    floor = excess_risk_exact(eff_model, target)
    rng = np.random.default_rng(9)
    ratios = []
    for trial in range(20):
        X = uniform_sample(T1, 300 + trial, 64)
        y = target.evaluate(X) + 0.3 * rng.standard_normal(64)
        model = fit(kernel, Dataset(X, y, 0.3), eta)
        ratios.append(excess_risk_exact(model, target) / floor)
    assert np.median(ratios) >= 0.5


def test_training_mse_monotone_in_eta():
    kernel = build_kernel(T1, TRIV, Sobolev(2.0), 25.0)
    target = gen_target(TRIV, 2.0, 1.0, 25.0, seed=31)
    X = uniform_sample(T1, 17, 80)
    rng = np.random.default_rng(2)
    y = target.evaluate(X) + 0.4 * rng.standard_normal(80)
    losses = []
    for eta in np.geomspace(1e-6, 10.0, 10):
        model = fit(kernel, Dataset(X, y, 0.4), eta)
        losses.append(float(np.mean((predict(model, X) - y) ** 2)))
    assert all(a <= b + 1e-12 for a, b in zip(losses, losses[1:]))


def test_target_function_norm_invariant():
    target = gen_target(REFL, 2.0, 1.5, 50.0, seed=8)
    w = np.maximum(1.0, target.basis.lams**2.0)
    assert float(w @ target.alpha**2) == pytest.approx(1.5**2, abs=1e-10)
    assert target.sobolev_norm == pytest.approx(1.5, rel=1e-12)
    with pytest.raises(ConfigurationError):
        TargetFunction(T1, target.basis, target.alpha, 2.0, sobolev_norm=3.0)
