"""Newton mode finding and the Laplace-approximate marginal log-likelihood.

The latent effect vector u (one entry per distinct compound) has prior
N(0, K).  Writing g(u) = -log f(y|u) - log f(u), the mode u_hat solves

    K^{-1} u - P^T Psi1(u) = 0

where P maps observations to compounds and Psi1/Psi2 collect the per-row
b-term aggregates.  The curvature at the mode, H = K^{-1} - P^T Psi2 P,
gives the approximate marginal log-likelihood

    loglik = loglik_cat(u_hat) - u_hat^T K^{-1} u_hat / 2
             - log|K| / 2 - log|H| / 2,

which approximates log of the integral of f(y|u) f(u) du (the Gaussian
normalization constants cancel against the Laplace volume factor, so this
is directly comparable to Monte-Carlo estimates of the integral).

Because each observation touches exactly one compound, P^T Psi2 P is
diagonal, and all linear algebra stays in the m-dimensional compound
space.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chemspace import ChemicalSpace
from .errors import DataError, IndefiniteHessianError, ModeFailureError
from .kernel import Covariance, KernelSpec, covariance_matrix
from .link import LinkSpec, b_terms, log_interval_prob

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 30


@dataclass
class Dataset:
    """Ordinal observations tied to compounds of a chemical space.

    y holds 1-based class labels in {1..C}; compound_index holds 0-based
    positions into space.compounds.  X may have zero columns.
    """

    y: np.ndarray
    X: np.ndarray
    compound_index: np.ndarray
    space: ChemicalSpace
    C: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=int)
        self.X = np.asarray(self.X, dtype=float)
        self.compound_index = np.asarray(self.compound_index, dtype=int)
        n = self.y.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one observation")
        if self.X.ndim == 1:
            self.X = self.X.reshape(n, 1)
        if self.X.shape[0] != n or self.compound_index.shape[0] != n:
            raise DataError("y, X and compound_index must agree on n")
        if self.C < 2:
            raise DataError("need at least two classes")
        if np.any(self.y < 1) or np.any(self.y > self.C):
            raise DataError(f"labels must lie in 1..{self.C}")
        if np.any(self.compound_index < 0) or np.any(self.compound_index >= self.space.m):
            raise DataError("compound_index out of range")
        present = np.unique(self.y)
        if len(present) < self.C:
            missing = sorted(set(range(1, self.C + 1)) - set(present.tolist()))
            warnings.warn(
                f"classes {missing} have no observations; their intercepts are "
                "weakly identified",
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Ordered intercepts, regression coefficients, kernel and link."""

    alphas: np.ndarray
    beta: np.ndarray
    kernel: KernelSpec
    link: LinkSpec

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.atleast_1d(np.asarray(self.alphas, dtype=float)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if len(self.alphas) >= 2 and np.any(np.diff(self.alphas) <= 0):
            raise ValueError(f"intercepts must be strictly increasing, got {self.alphas}")

    @property
    def n_classes(self) -> int:
        return len(self.alphas) + 1


@dataclass
class LaplaceState:
    """Mode, curvature and byproducts of one Laplace pass."""

    u_hat: np.ndarray
    H: np.ndarray
    H_chol: np.ndarray = field(repr=False)
    psi1: np.ndarray
    psi2: np.ndarray
    loglik: float
    newton_iters: int
    diag_load: float = 0.0

    def solve_H(self, b: np.ndarray) -> np.ndarray:
        return cho_solve((self.H_chol, True), b)

    def logdet_H(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.H_chol))))


def eta(params: ModelParams, data: Dataset, u: np.ndarray, i: int, j: int) -> float:
    """Linear predictor alpha_j + beta.x_i + u at observation i, threshold j.

    j = 0 and j = C return the -inf / +inf sentinels.
    """
    if j == 0:
        return -np.inf
    if j == data.C:
        return np.inf
    if not 1 <= j <= data.C - 1:
        raise ValueError(f"threshold index {j} out of range 0..{data.C}")
    return float(
        params.alphas[j - 1]
        + data.X[i] @ params.beta
        + u[data.compound_index[i]]
    )


def threshold_pairs(
    params: ModelParams, data: Dataset, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (eta_hi, eta_lo) at each row's observed class, with sentinels."""
    offset = data.X @ params.beta + u[data.compound_index]
    alpha_ext = np.concatenate(([-np.inf], params.alphas, [np.inf]))
    hi = alpha_ext[data.y] + offset
    lo = alpha_ext[data.y - 1] + offset
    return hi, lo


def categorical_loglik(params: ModelParams, data: Dataset, u: np.ndarray) -> float:
    """log f(y|u): sum of log interval probabilities at the observed classes."""
    hi, lo = threshold_pairs(params, data, u)
    return float(np.sum(log_interval_prob(params.link, hi, lo)))


def score_and_psi(
    params: ModelParams, data: Dataset, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row b-term aggregates (Psi1, Psi2).

    The gradient of categorical_loglik w.r.t. u is P^T Psi1 and its
    Hessian is P^T diag(Psi2) P.
    """
    hi, lo = threshold_pairs(params, data, u)
    b1, b2 = b_terms(params.link, hi, lo)
    return b1, b2 - b1**2


def project_to_compounds(data: Dataset, values: np.ndarray) -> np.ndarray:
    """P^T values: sum per-row values into their compounds (m-vector)."""
    return np.bincount(data.compound_index, weights=values, minlength=data.space.m)


def _factor_H(H: np.ndarray, link_name: str) -> tuple[np.ndarray, float]:
    """Cholesky of H, with escalating diagonal loading as a fallback.

    Loading can only be needed for links whose Psi2 entries may turn
    positive far in a tail (loglog/cloglog); it is capped at
    1e-6 * trace(H)/m and logged.
    """
    m = H.shape[0]
    trace_scale = float(np.trace(H)) / m
    for load in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            chol, _ = cho_factor(H + load * trace_scale * np.eye(m), lower=True)
        except np.linalg.LinAlgError:
            continue
        if load > 0.0:
            logger.warning(
                "Hessian required diagonal loading %.1e (link=%s); "
                "curvature estimates are approximate",
                load * trace_scale,
                link_name,
            )
        return np.tril(chol), load * trace_scale
    raise IndefiniteHessianError(
        f"curvature matrix not positive definite for link={link_name}"
    )


def find_mode(
    params: ModelParams,
    data: Dataset,
    K: Covariance | None = None,
    u0: np.ndarray | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    trace: list | None = None,
) -> LaplaceState:
    """Damped Newton solve of the mode equation, starting from u0 (default 0).

    Convergence: ||K^{-1} u - P^T Psi1||_inf <= tol * max(1, ||Psi1||_inf).
    Each step is halved (up to 30 times) until g(u) does not increase.
    When ``trace`` is given, (residual, g) is appended per iteration.

    Raises:
        ModeFailureError: no convergence within max_iter iterations.
        IndefiniteHessianError: curvature cannot be factorized at the mode.
    """
    if K is None:
        K = covariance_matrix(params.kernel, data.space)
    m = data.space.m
    Kinv = K.inverse()
    u = np.zeros(m) if u0 is None else np.array(u0, dtype=float)

    def neg_logpost(u_vec: np.ndarray) -> float:
        return -categorical_loglik(params, data, u_vec) + 0.5 * float(
            u_vec @ (Kinv @ u_vec)
        )

    g_u = neg_logpost(u)
    residual = np.inf
    for it in range(max_iter):
        psi1, psi2 = score_and_psi(params, data, u)
        grad = Kinv @ u - project_to_compounds(data, psi1)
        residual = float(np.max(np.abs(grad)))
        scale = max(1.0, float(np.max(np.abs(psi1))))
        if trace is not None:
            trace.append((residual, g_u))
        if residual <= tol * scale:
            H = Kinv - np.diag(project_to_compounds(data, psi2))
            H_chol, load = _factor_H(H, params.link.name)
            logdet_H = 2.0 * float(np.sum(np.log(np.diag(H_chol))))
            loglik = (
                categorical_loglik(params, data, u)
                - 0.5 * float(u @ (Kinv @ u))
                - 0.5 * K.logdet()
                - 0.5 * logdet_H
            )
            return LaplaceState(u, H, H_chol, psi1, psi2, float(loglik), it, load)
        H = Kinv - np.diag(project_to_compounds(data, psi2))
        H_chol, _ = _factor_H(H, params.link.name)
        delta = cho_solve((H_chol, True), -grad)
        if residual <= 1e-5 * scale:
            # Inside the quadratic basin the objective changes by less than
            # its float resolution, so a descent test cannot see progress;
            # take the pure Newton step.
            u = u + delta
            g_u = neg_logpost(u)
            continue
        step = 1.0
        for _ in range(MAX_HALVINGS):
            u_new = u + step * delta
            g_new = neg_logpost(u_new)
            if g_new <= g_u:
                break
            step *= 0.5
        else:
            raise ModeFailureError(
                f"no descent step found after {MAX_HALVINGS} halvings "
                f"(residual {residual:.3e})",
                residual,
            )
        u, g_u = u_new, g_new
    raise ModeFailureError(
        f"Newton did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual,
    )


def approx_loglik(
    params: ModelParams,
    data: Dataset,
    K: Covariance | None = None,
    u0: np.ndarray | None = None,
) -> tuple[float, LaplaceState]:
    """Laplace-approximate log of the marginal likelihood, plus the state."""
    state = find_mode(params, data, K=K, u0=u0)
    return state.loglik, state
