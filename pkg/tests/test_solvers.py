import math

import numpy as np
import pytest
from scipy import optimize

from framedeblur.blurop import BlurOperator
from framedeblur.framelet import FrameOperator
from framedeblur.imgcore import Psf, delta_psf, gaussian_psf
from framedeblur.solvers import (AlphaSolveError, DivergenceError, NsConfig, SolverConfig, Strategy,
                                 build_preconditioner, check_discrepancy, ns_safeguard, pcg,
                                 run_alg4ns, run_lba, run_mlba, solve_alpha)
from framedeblur.spectral import build_spectral, phi_alpha

from oracles import (conv_matrix_bc, frame_matrix, reblur_matrix, soft, symmetrize_small)

N = 8
ITERS = 20


def _collect():
    xs = []

    def cb(info):
        if info.iteration > 0:
            xs.append(info.state.x.ravel().copy())

    return xs, cb


@pytest.fixture(scope="module")
def problem():
    rng = np.random.default_rng(12)
    psf = Psf(rng.random((3, 3)), normalize=True)
    g = 10.0 * rng.random((N, N))
    Wd = frame_matrix(N, 1)
    return psf, g, Wd


def _dense_ops(psf, bc):
    return (conv_matrix_bc(psf.weights, psf.center, N, bc),
            reblur_matrix(psf.weights, psf.center, N, bc))


def _compare(lib_xs, dense_xs, tol):
    assert len(lib_xs) == len(dense_xs) == ITERS
    for a, b in zip(lib_xs, dense_xs):
        np.testing.assert_allclose(a, b, atol=tol, rtol=0)


class TestDenseTranscriptions:
    mu = 0.05

    def _run_dense(self, Ad, corr, Wd, g):
        z = np.zeros(Wd.shape[0])
        r = g.ravel().copy()
        xs = []
        for _ in range(ITERS):
            z = z + Wd @ corr(r)
            x = soft(z, self.mu)
            r = g.ravel() - Ad @ (Wd.T @ x)
            xs.append(x)
        return xs

    def test_lba(self, problem):
        psf, g, Wd = problem
        Ad, _ = _dense_ops(psf, "zero")
        dense = self._run_dense(Ad, lambda r: Ad.T @ r, Wd, g)
        xs, cb = _collect()
        run_lba(BlurOperator(psf, N, bc="zero"), FrameOperator(N, 1), g,
                SolverConfig(mu=self.mu, max_iters=ITERS), callback=cb)
        _compare(xs, dense, 1e-12)

    @pytest.mark.parametrize("strategy", ["bccb", "krylov", "symmetrized", "tikhonov"])
    def test_mlba_zero_bc(self, problem, strategy):
        psf, g, Wd = problem
        alpha = 0.1
        Ad, Adr = _dense_ops(psf, "zero")
        I = np.eye(N * N)
        if strategy == "bccb":
            C = conv_matrix_bc(psf.weights, psf.center, N, "periodic")
            Cr = reblur_matrix(psf.weights, psf.center, N, "periodic")
            P = np.linalg.inv(C @ Cr + alpha * I)
            corr = lambda r: Adr @ (P @ r)  # noqa: E731
        elif strategy == "krylov":
            P = np.linalg.inv(Ad @ Adr + alpha * I)
            corr = lambda r: Adr @ (P @ r)  # noqa: E731
        elif strategy == "symmetrized":
            Q = conv_matrix_bc(symmetrize_small(psf.weights), (1, 1), N, "reflective")
            P = np.linalg.inv(Q @ Q.T + alpha * I)
            corr = lambda r: Adr @ (P @ r)  # noqa: E731
        else:
            C = conv_matrix_bc(psf.weights, psf.center, N, "periodic")
            Cr = reblur_matrix(psf.weights, psf.center, N, "periodic")
            corr = lambda r: Cr @ np.linalg.solve(C @ Cr + alpha * I, r)  # noqa: E731
        dense = self._run_dense(Ad, corr, Wd, g)
        xs, cb = _collect()
        cfg = SolverConfig(mu=self.mu, alpha=alpha, max_iters=ITERS, pcg_tol=1e-14, pcg_cap=10**4)
        run_mlba(BlurOperator(psf, N, bc="zero"), FrameOperator(N, 1), g, cfg, strategy, callback=cb)
        _compare(xs, dense, 1e-11)

    @pytest.mark.parametrize("strategy", ["bccb", "symmetrized", "tikhonov"])
    def test_mlba_antireflective(self, strategy):
        rng = np.random.default_rng(4)
        w = symmetrize_small(rng.random((3, 3)))
        psf = Psf(w)
        g = 10.0 * rng.random((N, N))
        Wd = frame_matrix(N, 1)
        alpha = 0.2
        Ad, Adr = _dense_ops(psf, "antireflective")
        I = np.eye(N * N)
        kind_bc = "reflective" if strategy in ("bccb", "tikhonov") else "antireflective"
        C = conv_matrix_bc(w, (1, 1), N, kind_bc)
        Cr = reblur_matrix(w, (1, 1), N, kind_bc)
        M = C @ Cr + alpha * I
        if strategy == "tikhonov":
            corr = lambda r: Cr @ np.linalg.solve(M, r)  # noqa: E731
        else:
            corr = lambda r: Adr @ np.linalg.solve(M, r)  # noqa: E731
        dense = self._run_dense(Ad, corr, Wd, g)
        xs, cb = _collect()
        run_mlba(BlurOperator(psf, N, bc="antireflective"), FrameOperator(N, 1), g,
                 SolverConfig(mu=self.mu, alpha=alpha, max_iters=ITERS), strategy, callback=cb)
        _compare(xs, dense, 1e-11)

    def test_alg4ns(self, problem):
        # periodic A equals C, so the shrinking alpha_n cannot excite a boundary mismatch
        psf, g, Wd = problem
        Ad, _ = _dense_ops(psf, "periodic")
        C = conv_matrix_bc(psf.weights, psf.center, N, "periodic")
        Cr = reblur_matrix(psf.weights, psf.center, N, "periodic")
        I = np.eye(N * N)
        Cs = build_spectral(psf, N, "fourier")
        cfg = NsConfig(mu=self.mu, max_iters=ITERS)
        delta = 1e-9 * np.linalg.norm(g)

        z = np.zeros(Wd.shape[0])
        r = g.ravel().copy()
        dense, alphas = [], []
        for _ in range(ITERS):
            rn = np.linalg.norm(r)
            qn = max(cfg.q, 2 * cfg.rho + (1 + cfg.rho) / (rn / delta))
            a = solve_alpha(Cs, r, qn * rn)
            # the library root is checked against a dense evaluation of phi
            assert a * np.linalg.norm(np.linalg.solve(C @ Cr + a * I, r)) == pytest.approx(qn * rn, abs=1e-8 * rn)
            alphas.append(a)
            z = z + Wd @ (Cr @ np.linalg.solve(C @ Cr + a * I, r))
            x = soft(z, self.mu)
            r = g.ravel() - Ad @ (Wd.T @ x)
            dense.append(x)
        xs, cb = _collect()
        state = run_alg4ns(BlurOperator(psf, N, bc="periodic"), FrameOperator(N, 1), g, delta, cfg,
                           C=Cs, callback=cb)
        _compare(xs, dense, 1e-11)
        np.testing.assert_allclose([a for _, a in state.history[1:]], alphas, rtol=1e-12)


class TestScalarRecursions:
    def test_zero_observation(self):
        A = BlurOperator(gaussian_psf(3, 1.0), 8)
        W = FrameOperator(8, 1)
        for strategy in Strategy:
            s = run_mlba(A, W, np.zeros((8, 8)), SolverConfig(alpha=0.1), strategy)
            assert s.iterations == 0 and not s.x.any()
        s = run_lba(A, W, np.zeros((8, 8)), SolverConfig())
        assert s.iterations == 0 and s.stopped == "discrepancy"

    def test_lba_identity_is_exact_after_one_step(self):
        g = np.random.default_rng(0).random((8, 8))
        s = run_lba(BlurOperator(delta_psf(), 8), FrameOperator(8, 2), g, SolverConfig(max_iters=30), delta=1e-10)
        assert s.iterations == 1
        np.testing.assert_allclose(s.image, g, atol=1e-13)

    def test_lba_noise_free_residual_decreases(self):
        f = np.random.default_rng(0).random((16, 16))
        A = BlurOperator(gaussian_psf(5, 1.0), 16, bc="periodic")
        s = run_lba(A, FrameOperator(16, 2), A.forward(f), SolverConfig(max_iters=30))
        norms = [h[0] for h in s.history]
        assert len(norms) == 31
        assert all(b < a for a, b in zip(norms, norms[1:]))

    @pytest.mark.parametrize("alpha", [0.01, 0.5, 3.0])
    def test_bccb_identity_contraction(self, alpha):
        g = np.random.default_rng(1).random((8, 8))
        s = run_mlba(BlurOperator(delta_psf(), 8), FrameOperator(8, 1), g,
                     SolverConfig(alpha=alpha, max_iters=3), "bccb")
        norms = np.array([h[0] for h in s.history])
        np.testing.assert_allclose(norms[1:] / norms[:-1], alpha / (1 + alpha), rtol=1e-10)

    def test_alg4ns_identity_recursion(self):
        g = np.random.default_rng(2).random((8, 8))
        cfg = NsConfig(q=0.5, rho=1e-4)
        delta = 1e-3 * np.linalg.norm(g)
        s = run_alg4ns(BlurOperator(delta_psf(), 8), FrameOperator(8, 1), g, delta, cfg)
        rn = np.linalg.norm(g)
        for (r_next, a) in s.history[1:]:
            qn = ns_safeguard(cfg.q, cfg.rho, rn / delta)
            assert a == pytest.approx(qn / (1 - qn), rel=1e-7)
            assert r_next == pytest.approx(qn * rn, rel=1e-7)
            rn = r_next
        assert s.residual_norm <= cfg.tau * delta
        assert s.stopped == "discrepancy"

    def test_alg4ns_immediate_return(self):
        g = np.ones((8, 8))
        s = run_alg4ns(BlurOperator(delta_psf(), 8), FrameOperator(8, 1), g, 10.0, NsConfig())
        assert s.iterations == 0


class TestSolveAlpha:
    def test_identity_half(self):
        C = build_spectral(delta_psf(), 8, "fourier")
        r = np.random.default_rng(0).standard_normal((8, 8))
        assert solve_alpha(C, r, 0.5 * np.linalg.norm(r)) == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("kind", ["fourier", "cosine", "antireflective"])
    def test_random_target_and_bisection(self, kind):
        rng = np.random.default_rng(5)
        for _ in range(10):
            w = symmetrize_small(rng.random((5, 5)))
            C = build_spectral(Psf(w), 8, kind)
            r = rng.standard_normal((8, 8))
            t = 0.9 * np.linalg.norm(r)
            a, evals = solve_alpha(C, r, t, full_output=True)
            assert evals <= 50
            assert abs(phi_alpha(C, a, r) - t) <= 1e-8 * np.linalg.norm(r)
            ref = math.exp(optimize.bisect(lambda u: phi_alpha(C, math.exp(u), r) - t, -40, 40, xtol=1e-13))
            assert a == pytest.approx(ref, rel=1e-6)

    def test_unreachable_target(self):
        C = build_spectral(delta_psf(), 4, "fourier")
        r = np.ones((4, 4))
        with pytest.raises(AlphaSolveError):
            solve_alpha(C, r, np.linalg.norm(r))
        with pytest.raises(AlphaSolveError):
            solve_alpha(C, r, 0.0)


class TestStopping:
    def test_discrepancy(self):
        assert not check_discrepancy(1e-3, 0.0, 1.0)
        assert check_discrepancy(2.5, 2.0, 1.25)
        tau = NsConfig().tau
        assert tau == pytest.approx((1 + 2e-4) / (1 - 2e-4))
        assert not check_discrepancy(1.0005, 1.0, tau)

    def test_safeguard(self):
        for tau_n in (1.0001, 1.5, 10.0, 1e6):
            assert ns_safeguard(0.5, 1e-4, tau_n) >= 0.5
        assert ns_safeguard(0.5, 1e-4, 1e12) == 0.5
        assert ns_safeguard(0.5, 1e-4, 1.0) == pytest.approx(1 + 3e-4)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            SolverConfig(alpha=0.0)
        with pytest.raises(ValueError):
            SolverConfig(gamma=0.9)
        with pytest.raises(ValueError):
            NsConfig(rho=0.5)
        with pytest.raises(ValueError):
            NsConfig(q=1e-4, rho=1e-4)


class TestGuards:
    def test_model_compatibility(self):
        A = BlurOperator(gaussian_psf(3, 1.0), 8, model="rect")
        W = FrameOperator(A.m, 1)
        g = np.ones((8, 8))
        with pytest.raises(ValueError, match="square BC"):
            run_mlba(A, W, g, SolverConfig(), "tikhonov")
        with pytest.raises(ValueError, match="square BC"):
            run_alg4ns(A, W, g, 1.0, NsConfig())

    def test_divergence_guard(self):
        A = BlurOperator(delta_psf(), 16)
        C = build_spectral(gaussian_psf(7, 2.0), 16, "fourier")
        g = np.random.default_rng(0).random((16, 16))
        with pytest.raises(DivergenceError) as exc:
            run_mlba(A, FrameOperator(16, 1), g, SolverConfig(alpha=1e-6, max_iters=50), "bccb", C=C)
        assert exc.value.state.stopped == "diverged"

    def test_shape_checks(self):
        A = BlurOperator(gaussian_psf(3, 1.0), 8)
        with pytest.raises(ValueError):
            run_lba(A, FrameOperator(8, 1), np.ones((7, 7)), SolverConfig())
        with pytest.raises(ValueError):
            run_lba(A, FrameOperator(16, 1), np.ones((8, 8)), SolverConfig())


def test_pcg_exact_on_small_spd():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((10, 10))
    S = M @ M.T + 10 * np.eye(10)
    b = rng.standard_normal(10)
    x, k = pcg(lambda v: S @ v, lambda v: v, b, 1e-14, 100)
    np.testing.assert_allclose(x, np.linalg.solve(S, b), atol=1e-10)
    assert k <= 12
    _, k1 = pcg(lambda v: S @ v, lambda v: np.linalg.solve(S, v), b, 1e-3, 5)
    assert k1 == 1


def test_default_preconditioners():
    psf = Psf(np.random.default_rng(0).random((3, 3)), normalize=True)
    A = BlurOperator(psf, 8, bc="antireflective")
    assert build_preconditioner(A, "alg1").kind.value == "fourier"
    assert build_preconditioner(A, "alg3").kind.value == "antireflective"
    assert build_preconditioner(BlurOperator(psf, 8, bc="zero"), "symmetrized").kind.value == "cosine"
