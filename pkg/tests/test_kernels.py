import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from fshuber import _dp_py, kernels
from fshuber.collapsed import CollapsedLikelihoodProblem
from fshuber.core import CountVector, NuisancePrior
from fshuber.models import BinomialModel, TwoComponentBinomialModel

try:
    from fshuber import _dp
except ImportError:  # extension not built
    _dp = None

needs_ext = pytest.mark.skipif(_dp is None, reason="compiled extension not built")


def _inputs(rng, model, n, theta, alpha=1.0):
    x = rng.integers(0, model.m, size=n)
    prob = CollapsedLikelihoodProblem(CountVector.from_observations(x, model.m),
                                      NuisancePrior.symmetric(model.m, alpha=alpha), model)
    theta = np.atleast_1d(theta)
    logp = prob._active_logp(theta)
    dlogp = np.ascontiguousarray(model.log_atom_prob_grads(theta)[:, prob.active])
    pdot = np.ascontiguousarray(model.atom_prob_grads(theta)[:, prob.active])
    return prob, logp, dlogp, pdot


class TestBackendSelection:
    def test_backend_name(self):
        assert kernels.BACKEND in ("cython", "python")
        if _dp is not None:
            assert kernels.BACKEND == "cython"

    def test_env_forces_fallback(self):
        code = "import fshuber.kernels as k; print(k.BACKEND)"
        env = dict(os.environ, FSHUBER_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"


@needs_ext
class TestParity:
    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("alpha", [0.4, 1.0, 2.5])
    def test_forward(self, seed, alpha):
        rng = np.random.default_rng(seed)
        prob, logp, _, _ = _inputs(rng, BinomialModel(6), 40, rng.uniform(0.1, 0.9), alpha)
        E1, s1, q1 = _dp_py.dp_forward(prob._A, prob._offsets, logp, prob._lf)
        E2, s2, q2 = _dp.dp_forward(prob._A, prob._offsets, logp, prob._lf)
        np.testing.assert_allclose(np.log(E1) + s1, np.log(E2) + s2, rtol=0, atol=1e-11)
        assert q1 == pytest.approx(q2, abs=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_forward_grad(self, seed):
        rng = np.random.default_rng(seed)
        model = TwoComponentBinomialModel(5)
        prob, logp, dlogp, pdot = _inputs(rng, model, 30, rng.uniform(0.1, 0.9, 2))
        E1, F1, s1, _ = _dp_py.dp_forward_grad(prob._A, prob._offsets, logp, prob._lf, dlogp, pdot)
        E2, F2, s2, _ = _dp.dp_forward_grad(prob._A, prob._offsets, logp, prob._lf, dlogp, pdot)
        c = np.exp(s1 - s2)
        np.testing.assert_allclose(E1 * c, E2, rtol=1e-11)
        np.testing.assert_allclose(F1 * c, F2, rtol=1e-9, atol=1e-12 * np.abs(F2).max())

    def test_batch(self):
        rng = np.random.default_rng(11)
        prob, _, _, _ = _inputs(rng, BinomialModel(20), 300, 0.3)
        logp = np.ascontiguousarray(prob.model.log_atom_probs_batch(np.linspace(0.05, 0.95, 7))[:, prob.active])
        E1, s1, q1 = _dp_py.dp_forward_batch(prob._A, prob._offsets, logp, prob._lf)
        E2, s2, q2 = _dp.dp_forward_batch(prob._A, prob._offsets, logp, prob._lf)
        with np.errstate(divide="ignore"):
            l1, l2 = np.log(E1) + s1[:, None], np.log(E2) + s2[:, None]
        fin = np.isfinite(l1)
        np.testing.assert_array_equal(fin, np.isfinite(l2))
        np.testing.assert_allclose(l1[fin], l2[fin], rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("backend", [_dp_py] + ([_dp] if _dp is not None else []),
                         ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestKernelContract:
    def test_batch_matches_single(self, backend):
        rng = np.random.default_rng(2)
        prob, _, _, _ = _inputs(rng, BinomialModel(8), 60, 0.5)
        thetas = np.array([0.2, 0.45, 0.8])
        logp = np.ascontiguousarray(prob.model.log_atom_probs_batch(thetas)[:, prob.active])
        E, s, q = backend.dp_forward_batch(prob._A, prob._offsets, logp, prob._lf)
        for g in range(3):
            e1, s1, q1 = backend.dp_forward(prob._A, prob._offsets, logp[g], prob._lf)
            np.testing.assert_allclose(E[g] * np.exp(s[g] - s1), e1, rtol=1e-12, atol=1e-300)
            assert q[g] == pytest.approx(q1, abs=1e-15)

    def test_renorm_off_same_values(self, backend):
        rng = np.random.default_rng(4)
        prob, logp, dlogp, pdot = _inputs(rng, BinomialModel(4), 15, 0.35)
        E1, F1, s1, _ = backend.dp_forward_grad(prob._A, prob._offsets, logp, prob._lf, dlogp, pdot, True)
        E0, F0, s0, _ = backend.dp_forward_grad(prob._A, prob._offsets, logp, prob._lf, dlogp, pdot, False)
        assert s0 == 0.0
        np.testing.assert_allclose(E1 * np.exp(s1), E0, rtol=1e-13)
        np.testing.assert_allclose(F1 * np.exp(s1), F0, rtol=1e-12, atol=1e-14 * np.abs(F0).max())

    def test_zero_probability_atom(self, backend):
        # atom 1 has p = 0: only allocations with r_1 = 0 survive
        # arbitrary unit-max cell factors for N = (1, 2)
        A = np.array([1.0, 1.0, 0.5, 1.0, 1.0])
        offsets = np.array([0, 2, 5], dtype=np.intp)
        lf = np.log([1.0, 1.0, 2.0, 6.0])
        logp = np.array([0.0, -np.inf])
        E, s, logQ = backend.dp_forward(A, offsets, logp, lf)
        vals = E * np.exp(s)
        # p_0 = 1 gives C = [A0 * A1[0], A0[1] * A1[0], 0, 0] and Q = 1, so E = C * R!
        np.testing.assert_allclose(vals, [0.5, 0.5, 0.0, 0.0], atol=1e-15)
        assert logQ == 0.0
