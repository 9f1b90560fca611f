"""Linearized Bregman iterations for frame-based deblurring.

All schemes share the outer loop::

    z <- z + correction(r),   x <- lam * S_mu(z),   r = g - A W^T x

starting from ``z = x = 0`` and stopped by the discrepancy principle
``||r|| <= gamma * delta``. The correction selects the method:

=================  ===========================================================
``lba``            ``W A^T r`` (plain linearized Bregman)
``bccb``           ``W A^T (C C^T + alpha I)^{-1} r``, ``C`` by DFT or DCT
``krylov``         ``W A^T t``, ``t`` from a few PCG steps on ``(A A^T + alpha I) t = r``
``symmetrized``    ``W A^T (Q Q^T + alpha I)^{-1} r``, ``Q`` from the symmetrized PSF
``tikhonov``       ``W C^T (C C^T + alpha I)^{-1} r``
``alg4ns``         as ``tikhonov`` with ``alpha_n`` re-solved every iteration
=================  ===========================================================
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import optimize

from .blurop import BlurOperator
from .boundary import BoundaryCondition, mask_select
from .framelet import FrameOperator, soft_threshold
from .imgcore import Psf, is_quadrantally_symmetric, psnr, symmetrize_psf
from .spectral import (
    SpectralOperator,
    TransformKind,
    apply_filtered,
    build_spectral,
    phi_alpha,
    solve_shifted,
)

__all__ = [
    "SolverConfig",
    "NsConfig",
    "IterState",
    "IterInfo",
    "Strategy",
    "SolverError",
    "DivergenceError",
    "AlphaSolveError",
    "run_lba",
    "run_mlba",
    "run_alg4ns",
    "solve_alpha",
    "check_discrepancy",
    "ns_safeguard",
    "pcg",
    "default_kind",
    "build_preconditioner",
]

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1.0 + 1e-15


class SolverError(RuntimeError):
    """Numerical failure inside a solver."""


class DivergenceError(SolverError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class AlphaSolveError(SolverError):
    pass


class Strategy(enum.Enum):
    BCCB = "bccb"
    KRYLOV = "krylov"
    SYMMETRIZED = "symmetrized"
    TIKHONOV = "tikhonov"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"alg1": "bccb", "alg2": "krylov", "alg3": "symmetrized", "alg4": "tikhonov",
                   "approx_tikhonov": "tikhonov", "symmetrized_psf": "symmetrized"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown preconditioning strategy {value!r}") from None


@dataclass
class SolverConfig:
    """Parameters of the stationary schemes (Algorithms 1-4 and plain LBA)."""

    mu: float = 0.0
    alpha: float = 0.01
    lam: float = 1.0
    gamma: float = DEFAULT_GAMMA
    max_iters: int = 1000
    pcg_tol: float = 1e-3
    pcg_cap: int = 5

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.max_iters < 1 or self.pcg_cap < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class NsConfig:
    """Parameters of the nonstationary approximated-Tikhonov iteration."""

    mu: float = 0.0
    q: float = 0.5
    rho: float = 1e-4
    newton_tol: float = 1e-8
    newton_max: int = 50
    max_iters: int = 2000

    def __post_init__(self):
        if not 0 < self.rho < 0.5:
            raise ValueError("rho must lie in (0, 1/2)")
        if not 2 * self.rho < self.q < 1:
            raise ValueError("q must lie in (2 rho, 1)")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.max_iters < 1 or self.newton_max < 1:
            raise ValueError("iteration caps must be >= 1")

    @property
    def tau(self) -> float:
        return (1 + 2 * self.rho) / (1 - 2 * self.rho)


@dataclass
class IterState:
    """Solver state after the last completed iteration.

    ``history`` holds ``(residual_norm, alpha_n)`` for iterations ``0..iterations``
    (``alpha_n`` is the parameter used to *reach* that iterate, ``None`` at 0).
    """

    z: np.ndarray
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int = 0
    history: List[Tuple[float, Optional[float]]] = field(default_factory=list)
    betas: List[int] = field(default_factory=list)
    stopped: str = ""
    image: Optional[np.ndarray] = None


class IterInfo(NamedTuple):
    iteration: int
    residual_norm: float
    alpha: Optional[float]
    psnr: Optional[float]
    state: IterState


def check_discrepancy(residual_norm: float, delta: float, factor: float) -> bool:
    """``True`` iff ``residual_norm <= factor * delta``."""
    return residual_norm <= factor * delta


def ns_safeguard(q: float, rho: float, tau_n: float) -> float:
    """``q_n = max(q, 2 rho + (1 + rho) / tau_n)``."""
    return max(q, 2 * rho + (1 + rho) / tau_n)


def default_kind(psf: Psf) -> TransformKind:
    """DCT for quadrantally symmetric PSFs, DFT otherwise."""
    return TransformKind.COSINE if is_quadrantally_symmetric(psf) else TransformKind.FOURIER


def build_preconditioner(A: BlurOperator, strategy, kind=None) -> SpectralOperator:
    """The structured matrix ``C`` (or ``Q``) used by ``strategy`` for operator ``A``."""
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.SYMMETRIZED:
        psf = symmetrize_psf(A.psf)
        if kind is None:
            kind = (TransformKind.ANTIREFLECTIVE if A.bc is BoundaryCondition.ANTIREFLECTIVE
                    else TransformKind.COSINE)
        return build_spectral(psf, A.n, kind)
    return build_spectral(A.psf, A.n, default_kind(A.psf) if kind is None else kind)


def pcg(apply_a: Callable, apply_minv: Callable, b: np.ndarray, tol: float, cap: int):
    """Preconditioned CG from the zero vector.

    Stops after ``cap`` steps or once the preconditioned relative residual
    ``sqrt(r^T M^{-1} r / b^T M^{-1} b)`` drops to ``tol``. Returns the
    approximate solution and the number of steps taken.
    """
    x = np.zeros_like(b)
    r = b.copy()
    z = apply_minv(r)
    rz = float(np.vdot(r, z))
    rz0 = abs(rz)
    if rz0 == 0.0:
        return x, 0
    p = z.copy()
    k = 0
    while k < cap:
        ap = apply_a(p)
        pap = float(np.vdot(p, ap))
        if pap == 0.0:
            break
        step = rz / pap
        x += step * p
        r -= step * ap
        k += 1
        z = apply_minv(r)
        rz_new = float(np.vdot(r, z))
        if math.sqrt(abs(rz_new) / rz0) <= tol:
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, k


def _solve_alpha_unitary(op, r, target, tol, max_evals):
    w, s = op.weights(r)
    rnorm = math.sqrt(float(w.sum()))
    smax = float(s.max())
    if smax == 0.0:
        raise AlphaSolveError("operator spectrum is identically zero")
    evals = 0

    def phi(u):
        nonlocal evals
        evals += 1
        a = math.exp(u)
        damp = a / (s + a)
        wd = w * damp * damp
        val2 = float(wd.sum())
        slope = float(np.sum(wd * (s / (s + a)))) / val2 if val2 > 0 else 0.0
        return math.sqrt(val2), slope

    qt = target / rnorm
    # phi(alpha) >= target at this alpha (spectrum bounded by smax)
    u = math.log(qt * smax / (1.0 - qt))
    lo, hi = -math.inf, math.inf
    logt = math.log(target)
    accepted = None
    while evals < max_evals:
        val, slope = phi(u)
        err = abs(val - target)
        if err <= tol * rnorm:
            # Newton converges quadratically, so polishing well past the
            # requested residual costs one or two evaluations and pins alpha
            # down to near machine precision.
            accepted = u
            if err <= 1e-4 * tol * rnorm or hi - lo <= 1e-13:
                return math.exp(u), evals
        if val > target:
            hi = u
        else:
            lo = u
        f = math.log(val) - logt if val > 0 else -math.inf
        nxt = u - f / slope if slope > 0 and math.isfinite(f) else math.nan
        if not (lo < nxt < hi):
            if math.isfinite(lo) and math.isfinite(hi):
                nxt = 0.5 * (lo + hi)
            elif math.isfinite(hi):
                nxt = hi - max(8.0, 2 * (hi - u) if u < hi else 8.0)
            else:
                nxt = lo + 8.0
        u = nxt
    if accepted is not None:
        return math.exp(accepted), evals
    raise AlphaSolveError(f"alpha solve did not converge in {max_evals} evaluations")


def _solve_alpha_bracketed(op, r, target, tol, max_evals):
    rnorm = float(np.linalg.norm(r))
    evals = 0

    def f(u):
        nonlocal evals
        evals += 1
        return phi_alpha(op, math.exp(u), r) - target

    hi = 0.0
    while f(hi) < 0:
        hi += 5.0
        if evals >= max_evals:
            raise AlphaSolveError("could not bracket alpha from above")
    lo = hi - 5.0
    while f(lo) > 0:
        lo -= 5.0
        if evals >= max_evals:
            raise AlphaSolveError("could not bracket alpha from below")
    u = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=max(max_evals - evals, 1))
    if abs(f(u)) > tol * rnorm:
        raise AlphaSolveError("alpha solve did not reach the requested tolerance")
    return math.exp(u), evals


def solve_alpha(C: SpectralOperator, r, target: float, tol: float = 1e-8,
                max_evals: int = 50, full_output: bool = False):
    """Unique ``alpha > 0`` with ``alpha ||(C C^T + alpha I)^{-1} r|| = target``.

    For the unitary transforms this is a safeguarded Newton iteration on
    ``log phi`` as a function of ``log alpha``, started from the upper bound
    ``alpha <= q ||C||^2 / (1 - q)`` with ``q = target / ||r||``, falling back
    to bisection whenever a step leaves the current bracket. The
    antireflective kind uses Brent's method on the same log scale.

    Returns ``alpha`` or, with ``full_output``, ``(alpha, n_evaluations)``.
    """
    r = np.asarray(r, dtype=np.float64)
    rnorm = float(np.linalg.norm(r))
    if not 0 < target < rnorm:
        raise AlphaSolveError(f"target {target!r} must lie in (0, ||r||={rnorm!r})")
    if C.kind is TransformKind.ANTIREFLECTIVE:
        alpha, evals = _solve_alpha_bracketed(C, r, target, tol, max_evals)
    else:
        alpha, evals = _solve_alpha_unitary(C, r, target, tol, max_evals)
    return (alpha, evals) if full_output else alpha


# --------------------------------------------------------------------------
# outer loop


def _fov(A: BlurOperator, image):
    return mask_select(image, A.mask) if A.model == "rect" else image


def _iterate(A, W, g, mu, lam, correction, stop_factor, delta, max_iters,
             callback=None, reference=None, z0=None):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != A.out_shape:
        raise ValueError(f"observed image has shape {g.shape}, operator expects {A.out_shape}")
    if W.n != A.m:
        raise ValueError(f"frame size {W.n} does not match operator input size {A.m}")
    gnorm = float(np.linalg.norm(g))
    if z0 is None:
        z = np.zeros(W.coeff_shape)
        x = np.zeros(W.coeff_shape)
        r = g.copy()
    else:
        z = np.array(z0, dtype=np.float64).reshape(W.coeff_shape)
        x = lam * soft_threshold(z, mu)
        r = g - A.forward(W.synthesize(x))
    rn = float(np.linalg.norm(r))
    state = IterState(z=z, x=x, residual=r, residual_norm=rn, history=[(rn, None)])

    def notify(alpha_n):
        if callback is None:
            return
        score = None
        if reference is not None:
            score = psnr(reference, _fov(A, W.synthesize(state.x)))
        callback(IterInfo(state.iterations, state.residual_norm, alpha_n, score, state))

    notify(None)
    while not check_discrepancy(state.residual_norm, delta, stop_factor):
        if state.iterations >= max_iters:
            state.stopped = "max_iters"
            break
        dz, alpha_n = correction(state)
        state.z = state.z + dz
        state.x = lam * soft_threshold(state.z, mu)
        state.residual = g - A.forward(W.synthesize(state.x))
        state.residual_norm = float(np.linalg.norm(state.residual))
        state.iterations += 1
        state.history.append((state.residual_norm, alpha_n))
        if state.residual_norm > 10.0 * gnorm:
            state.stopped = "diverged"
            raise DivergenceError(
                f"residual {state.residual_norm:.4g} exceeds 10 ||g|| at iteration {state.iterations}", state)
        notify(alpha_n)
    else:
        state.stopped = "discrepancy"
    state.image = W.synthesize(state.x)
    log.debug("stopped (%s) after %d iterations, ||r|| = %.6g",
              state.stopped, state.iterations, state.residual_norm)
    return state


def run_lba(A: BlurOperator, W: FrameOperator, g, cfg: SolverConfig, delta: float = 0.0,
            callback=None, reference=None) -> IterState:
    """Plain linearized Bregman iteration ``z += K^T (g - K x)``, ``x = lam S_mu(z)``."""

    def correction(state):
        return W.analyze(A.transpose(state.residual)), None

    return _iterate(A, W, g, cfg.mu, cfg.lam, correction, cfg.gamma, delta,
                    cfg.max_iters, callback, reference)


def run_mlba(A: BlurOperator, W: FrameOperator, g, cfg: SolverConfig, precond="bccb",
             delta: float = 0.0, C: Optional[SpectralOperator] = None,
             callback=None, reference=None) -> IterState:
    """Modified linearized Bregman iteration with the preconditioning ``precond``.

    Parameters
    ----------
    A, W : BlurOperator, FrameOperator
    g : ndarray
        Observed ``n x n`` image.
    cfg : SolverConfig
    precond : Strategy or str
        ``"bccb"``, ``"krylov"``, ``"symmetrized"`` or ``"tikhonov"``.
    delta : float
        Noise norm; iterations stop once ``||r|| <= cfg.gamma * delta``.
    C : SpectralOperator, optional
        Structured matrix to use instead of the default for the strategy.
    callback : callable, optional
        Called with an :class:`IterInfo` after every iteration (and at 0).
    reference : ndarray, optional
        True FOV image; enables the PSNR field of :class:`IterInfo`.
    """
    strategy = Strategy.parse(precond)
    alpha = cfg.alpha
    if strategy is Strategy.TIKHONOV and A.model != "bc":
        raise ValueError("the approximated Tikhonov update needs the square BC model")
    if C is None:
        C = build_preconditioner(A, strategy)
    if C.n != A.n:
        raise ValueError(f"preconditioner size {C.n} does not match n={A.n}")

    if strategy is Strategy.TIKHONOV:
        def correction(state):
            return W.analyze(apply_filtered(C, alpha, state.residual)), alpha
    elif strategy is Strategy.KRYLOV:
        def correction(state):
            t, beta = pcg(lambda v: A.normal(v) + alpha * v,
                          lambda v: solve_shifted(C, alpha, v),
                          state.residual, cfg.pcg_tol, cfg.pcg_cap)
            state.betas.append(beta)
            return W.analyze(A.transpose(t)), alpha
    else:
        def correction(state):
            return W.analyze(A.transpose(solve_shifted(C, alpha, state.residual))), alpha

    return _iterate(A, W, g, cfg.mu, cfg.lam, correction, cfg.gamma, delta,
                    cfg.max_iters, callback, reference)


def run_alg4ns(A: BlurOperator, W: FrameOperator, g, delta: float, cfg: NsConfig,
               C: Optional[SpectralOperator] = None, z0=None,
               callback=None, reference=None) -> IterState:
    """Approximated Tikhonov iteration with nonstationary ``alpha_n``.

    While ``||r^n|| > tau delta``: ``tau_n = ||r^n|| / delta``,
    ``q_n = max(q, 2 rho + (1 + rho) / tau_n)``, ``alpha_n`` solves
    ``alpha ||(C C^T + alpha I)^{-1} r^n|| = q_n ||r^n||`` and
    ``z += W C^T (C C^T + alpha_n I)^{-1} r^n``.
    """
    if A.model != "bc":
        raise ValueError("the nonstationary iteration needs the square BC model")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if C is None:
        C = build_preconditioner(A, Strategy.TIKHONOV)

    def correction(state):
        rn = state.residual_norm
        tau_n = rn / delta if delta > 0 else math.inf
        qn = ns_safeguard(cfg.q, cfg.rho, tau_n)
        alpha_n = solve_alpha(C, state.residual, qn * rn, tol=cfg.newton_tol, max_evals=cfg.newton_max)
        return W.analyze(apply_filtered(C, alpha_n, state.residual)), alpha_n

    return _iterate(A, W, g, cfg.mu, 1.0, correction, cfg.tau, delta, cfg.max_iters,
                    callback, reference, z0=z0)
