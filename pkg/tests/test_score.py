import math
import time

import numpy as np
import pytest

from conftest import central_difference
from fshuber.collapsed import CollapsedLikelihoodProblem, PlainLikelihoodProblem
from fshuber.core import CountVector, NuisancePrior
from fshuber.grid import open_grid
from fshuber.models import BinomialModel, TwoComponentBinomialModel, logit_transform
from fshuber.score import (
    FLAT,
    BetaThetaPrior,
    forward_convolve_with_grad,
    log_marginal_score,
    log_posterior_and_score,
)


def _binomial_problem(counts, M, b=1.0, alpha=1.0, a=1.0):
    model = BinomialModel(M)
    return CollapsedLikelihoodProblem(CountVector(counts), NuisancePrior.symmetric(model.m, a=a, b=b, alpha=alpha), model)


def _raw_score(problem, theta):
    # score from un-normalized rows: sum W_R D(R) / sum W_R C(R)
    C, D = forward_convolve_with_grad(problem, theta, renorm=False)
    w = np.exp(problem.log_weights + C.log_index_scale)
    return (D @ w) / (C.mantissas @ w)


class TestForwardConvolveWithGrad:
    def test_empty_sample(self):
        prob = _binomial_problem([0, 0, 0], 2)
        C, D = forward_convolve_with_grad(prob, 0.4)
        np.testing.assert_allclose(C.values(), [1.0])
        np.testing.assert_array_equal(D, np.zeros((1, 1)))

    def test_hand_derivative(self):
        # C(1) = (1 - theta) + theta, constant in theta
        prob = _binomial_problem([1, 1], 1)
        C, D = forward_convolve_with_grad(prob, 0.5)
        assert abs(D[0, 1]) < 1e-15
        np.testing.assert_allclose(C.values(), prob.forward_convolve(0.5).values(), rtol=1e-15)

    def test_entrywise_fd_two_parameter(self):
        rng = np.random.default_rng(5)
        model = TwoComponentBinomialModel(3)
        counts = CountVector(rng.multinomial(10, np.ones(4) / 4))
        prob = CollapsedLikelihoodProblem(counts, NuisancePrior(1.0, 2.0, rng.uniform(0.3, 3.0, 4)), model)
        theta = np.array([0.3, 0.65])
        C, D = forward_convolve_with_grad(prob, theta)
        deriv = D * np.exp(C.log_scale + C.log_index_scale)
        fd = central_difference(lambda t: prob.forward_convolve(t).values(), theta)
        # atol is the difference-quotient noise floor eps * |C| / h (C(0) is theta-free)
        np.testing.assert_allclose(deriv, fd, rtol=1e-6, atol=1e-9)

    def test_matches_forward_convolve(self, example_counts):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m), model)
        C, _ = forward_convolve_with_grad(prob, 0.3)
        np.testing.assert_allclose(C.log_values(), prob.forward_convolve(0.3).log_values(), rtol=1e-13)


class TestLogMarginalScore:
    def test_symmetric_zero(self):
        prob = _binomial_problem([3, 3], 1)
        assert abs(log_marginal_score(prob, 0.5)[0]) < 1e-13

    def test_example_data_fd(self, example_counts):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m, b=1.0), model)
        fd = central_difference(lambda t: prob.loglik(t), 0.30)[0]
        assert log_marginal_score(prob, 0.30)[0] == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("b,alpha", [(1.0, 1.0), (9.0, 0.5), (99.0, 2.0)])
    def test_example_data_grid_fd(self, example_counts, b, alpha):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m, b=b, alpha=alpha), model)
        for t in (0.15, 0.3, 0.45, 0.7):
            fd = central_difference(lambda x: prob.loglik(x), t)[0]
            assert log_marginal_score(prob, t)[0] == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_two_parameter_fd(self):
        rng = np.random.default_rng(9)
        model = TwoComponentBinomialModel(6)
        obs = np.where(rng.random(40) < 0.5, rng.binomial(6, 0.2, 40), rng.binomial(6, 0.7, 40))
        prob = CollapsedLikelihoodProblem(CountVector.from_observations(obs, model.m),
                                          NuisancePrior(1.0, 3.0, np.full(model.m, 0.8)), model)
        for theta in rng.uniform(0.1, 0.9, size=(10, 2)):
            fd = central_difference(prob.loglik, theta)
            np.testing.assert_allclose(log_marginal_score(prob, theta), fd, rtol=1e-6, atol=1e-7)

    def test_plain_problem_fd(self, example_counts):
        plain = PlainLikelihoodProblem(example_counts, BinomialModel(20))
        _, g = plain.loglik_and_score(0.4)
        assert g[0] == pytest.approx(central_difference(plain.loglik, 0.4)[0], rel=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_renorm_off_identical(self, seed):
        rng = np.random.default_rng(seed)
        prob = _binomial_problem(rng.multinomial(12, np.ones(5) / 5), 4, b=rng.uniform(0.5, 5), alpha=rng.uniform(0.3, 3))
        theta = rng.uniform(0.1, 0.9)
        np.testing.assert_allclose(log_marginal_score(prob, theta), _raw_score(prob, theta), rtol=1e-12)

    def test_cost_bounded(self, example_counts):
        # one scalar derivative row costs at most about as much as the likelihood row
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(CountVector(example_counts.counts * 7), NuisancePrior.symmetric(model.m), model)

        def median_time(fn):
            fn()
            ts = []
            for _ in range(5):
                t0 = time.perf_counter()
                fn()
                ts.append(time.perf_counter() - t0)
            return float(np.median(ts))

        t_like = median_time(lambda: prob.loglik(0.3))
        t_score = median_time(lambda: prob.loglik_and_score(0.3))
        assert t_score <= 2 * (model.dim + 1) * t_like


class TestLogPosterior:
    def test_flat_empty(self):
        prob = _binomial_problem([0] * 5, 4)
        for z in (-1.3, 0.0, 2.0):
            lp, g = log_posterior_and_score(prob, FLAT, np.array([z]))
            assert lp == pytest.approx(logit_transform(z)[1], abs=1e-14)
        _, g0 = log_posterior_and_score(prob, FLAT, np.array([0.0]))
        assert abs(g0[0]) < 1e-15

    @pytest.mark.parametrize("prior", [FLAT, BetaThetaPrior(2.0, 3.0)])
    def test_fd_in_z(self, example_counts, prior):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m, b=4.0), model)
        rng = np.random.default_rng(1)
        for z in rng.uniform(-3, 1.5, 10):
            _, g = log_posterior_and_score(prob, prior, np.array([z]))
            fd = central_difference(lambda x: log_posterior_and_score(prob, prior, x)[0], z)[0]
            assert g[0] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_fd_two_parameter(self):
        rng = np.random.default_rng(2)
        model = TwoComponentBinomialModel(5)
        prob = CollapsedLikelihoodProblem(CountVector(rng.multinomial(25, np.ones(6) / 6)), NuisancePrior.symmetric(6), model)
        for z in rng.uniform(-2, 2, size=(10, 2)):
            _, g = log_posterior_and_score(prob, FLAT, z)
            fd = central_difference(lambda x: log_posterior_and_score(prob, FLAT, x)[0], z)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)

    def test_differences_match_grid(self, example_counts):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m), model)
        theta = open_grid(99)[[20, 35]]
        ll = prob.loglik_batch(theta)
        z = np.log(theta) - np.log1p(-theta)
        lp = [log_posterior_and_score(prob, FLAT, np.array([zz]))[0] for zz in z]
        jac = np.log(theta) + np.log1p(-theta)
        assert lp[1] - lp[0] == pytest.approx((ll[1] + jac[1]) - (ll[0] + jac[0]), abs=1e-9)

    def test_score_scale_hook(self, example_counts):
        model = BinomialModel(20)
        prob = CollapsedLikelihoodProblem(example_counts, NuisancePrior.symmetric(model.m), model)
        lp1, g1 = log_posterior_and_score(prob, FLAT, np.array([-0.5]))
        lp0, g0 = log_posterior_and_score(prob, FLAT, np.array([-0.5]), score_scale=0.0)
        assert lp0 == lp1 and np.all(g0 == 0.0) and np.any(g1 != 0.0)


class TestBetaThetaPrior:
    def test_flat(self):
        lp, g = FLAT.logpdf_and_grad(np.array([0.3]))
        assert lp == 0.0 and g[0] == 0.0

    def test_density(self):
        prior = BetaThetaPrior(2.0, 3.0)
        lp, g = prior.logpdf_and_grad(np.array([0.4]))
        assert lp == pytest.approx(math.log(12 * 0.4 * 0.6**2), rel=1e-13)
        assert g[0] == pytest.approx(1 / 0.4 - 2 / 0.6, rel=1e-13)
        np.testing.assert_allclose(prior.logpdf_batch(np.array([0.4, 0.7])),
                                   np.log([12 * 0.4 * 0.36, 12 * 0.7 * 0.09]), rtol=1e-13)

    def test_rejects(self):
        with pytest.raises(ValueError):
            BetaThetaPrior(0.0, 1.0)
