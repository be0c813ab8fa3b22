"""Prediction for untested compounds.

Three layers:

* the GP posterior (mean, variance) of the latent effect u_* given the
  fitted mode and curvature,

      E[u_*|y]   = K_*^T K^{-1} u_hat
      Var[u_*|y] = K_** - K_*^T K^{-1} K_* + K_*^T K^{-1} H^{-1} K^{-1} K_*

* class probabilities as a Gaussian mixture over u_*, evaluated with a
  21-point Gauss-Hermite rule (closed form under the probit link), and

* a variance correction for parameter uncertainty: the gradient of the
  predicted mean w.r.t. the model parameters is obtained by implicit
  differentiation of the mode equation, and its quadratic form in the
  inverse observed information is added to Var[u_*|y].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, roots_hermite

from .chemspace import Fingerprint
from .errors import ConfigError, WrongLinkError
from .fit import FittedModel, natural_jacobian
from .kernel import correlation_dphi, cross_covariance
from .laplace import threshold_pairs
from .link import LinkSpec, b_terms_grad, interval_prob

GH_POINTS = 21

# Node counts escalate with the mixing variance so the quadrature stays
# within 1e-8 of the exact mixture over the whole working range
# (calibrated against the probit closed form and adaptive quadrature).
# The 21-point base rule covers the posterior variances fitted models
# produce; the double-exponential links converge slower in the node count
# because their CDFs blow up doubly exponentially off the real axis.
_GH_BANDS = {
    "symmetric": (((1.2, 21), (3.0, 41), (5.0, 61), (9.0, 101), (25.0, 151)), 201),
    "asymmetric": (((0.3, 21), (1.0, 61), (2.0, 101), (4.0, 201), (7.0, 301), (12.0, 501)), 801),
}

_gh_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _points_for(link_name: str, var: float) -> int:
    kind = "symmetric" if link_name in ("logit", "probit") else "asymmetric"
    bands, top = _GH_BANDS[kind]
    for bound, n in bands:
        if var <= bound:
            return n
    return top


def gauss_hermite_rule(n: int = GH_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights (normalized to sum exactly 1)."""
    if n not in _gh_cache:
        z, w = roots_hermite(n)
        w = w / np.sqrt(np.pi)
        w /= w.sum()
        z.flags.writeable = False
        w.flags.writeable = False
        _gh_cache[n] = (z, w)
    return _gh_cache[n]


@dataclass(frozen=True)
class Prediction:
    """Posterior summary and class distribution for one candidate."""

    mean_u: float
    var_u: float
    var_u_corrected: float
    class_probs: np.ndarray
    method: str
    correction_applied: bool = True


def posterior_u(model: FittedModel, candidate: Fingerprint) -> tuple[float, float]:
    """GP posterior mean and (uncorrected) variance for a candidate compound."""
    k_star, k_ss = cross_covariance(model.params.kernel, model.data.space, candidate)
    a = model.K.solve(k_star)
    mean = float(a @ model.laplace.u_hat)
    var = float(k_ss - k_star @ a + a @ model.laplace.solve_H(a))
    return mean, max(var, 0.0)


def _xbeta(model: FittedModel, x_star) -> float:
    p = model.data.p
    if p == 0:
        return 0.0
    if x_star is None:
        raise ConfigError(f"model has {p} covariate(s); x_star is required")
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x.shape != (p,):
        raise ConfigError(f"x_star must have {p} value(s), got shape {x.shape}")
    return float(x @ model.params.beta)


def mixture_class_probs(
    link: LinkSpec, alphas: np.ndarray, xbeta: float, mu: float, var: float,
    n_points: int | None = None,
) -> np.ndarray:
    """Class probabilities mixed over u_* ~ N(mu, var) by Gauss-Hermite.

    The node count defaults to the variance-calibrated rule; pass
    ``n_points`` to pin it (e.g. for convergence references).
    """
    z, w = gauss_hermite_rule(_points_for(link.name, var) if n_points is None else n_points)
    nodes = mu + np.sqrt(2.0 * max(var, 0.0)) * z
    alpha_ext = np.concatenate(([-np.inf], np.asarray(alphas, dtype=float), [np.inf]))
    C = len(alpha_ext) - 1
    probs = np.empty(C)
    for j in range(1, C + 1):
        pij = interval_prob(link, alpha_ext[j] + xbeta + nodes, alpha_ext[j - 1] + xbeta + nodes)
        probs[j - 1] = float(w @ pij)
    return probs


def class_probabilities(
    model: FittedModel, candidate: Fingerprint, x_star=None
) -> np.ndarray:
    """Predicted distribution over the C classes for one future experiment."""
    mu, var = posterior_u(model, candidate)
    return mixture_class_probs(
        model.params.link, model.params.alphas, _xbeta(model, x_star), mu, var
    )


def probit_closed_form(
    alpha_j: float, alpha_jm1: float, xbeta: float, mu_star: float, var_star: float
) -> float:
    """Exact Gaussian-mixture class probability under the probit link.

    Phi((mu + alpha_j + xbeta)/sqrt(1 + var)) minus the same at alpha_{j-1};
    +-inf sentinels give the boundary classes.
    """
    denom = np.sqrt(1.0 + var_star)
    upper = 1.0 if alpha_j == np.inf else float(ndtr((mu_star + alpha_j + xbeta) / denom))
    lower = 0.0 if alpha_jm1 == -np.inf else float(ndtr((mu_star + alpha_jm1 + xbeta) / denom))
    return upper - lower


def probit_class_probabilities(
    model: FittedModel, candidate: Fingerprint, x_star=None
) -> np.ndarray:
    """All C closed-form class probabilities; requires the probit link."""
    if model.params.link.name != "probit":
        raise WrongLinkError(
            f"closed-form prediction needs the probit link, model uses {model.params.link.name}"
        )
    mu, var = posterior_u(model, candidate)
    xb = _xbeta(model, x_star)
    alpha_ext = np.concatenate(([-np.inf], model.params.alphas, [np.inf]))
    return np.array(
        [
            probit_closed_form(alpha_ext[j], alpha_ext[j - 1], xb, mu, var)
            for j in range(1, model.data.C + 1)
        ]
    )


def mean_gradient_theta(model: FittedModel, candidate: Fingerprint) -> np.ndarray:
    """Gradient of the predicted mean w.r.t. the natural parameters.

    Implicit differentiation of the mode equation: for each parameter,
    solve H du = -d(K^{-1})u_hat + P^T dPsi1, then chain through the
    posterior-mean formula.  Order matches
    (alpha_1..alpha_{C-1}, beta_1..beta_p, sigma2, phi); entries for a
    frozen phi are zero.
    """
    data, params, K, state = model.data, model.params, model.K, model.laplace
    spec = params.kernel
    k_star, _ = cross_covariance(spec, data.space, candidate)
    u_hat = state.u_hat
    v = K.solve(u_hat)
    a = K.solve(k_star)

    hi, lo = threshold_pairs(params, data, u_hat)
    d_hi, d_lo = b_terms_grad(params.link, hi, lo)

    C, p = data.C, data.p
    grad = np.zeros((C - 1) + p + 2)
    pos = 0
    for j in range(1, C):
        dpsi1 = d_hi * (data.y == j) + d_lo * (data.y - 1 == j)
        rhs = np.bincount(data.compound_index, weights=dpsi1, minlength=data.space.m)
        grad[pos] = float(a @ state.solve_H(rhs))
        pos += 1
    for l in range(p):
        dpsi1 = state.psi2 * data.X[:, l]
        rhs = np.bincount(data.compound_index, weights=dpsi1, minlength=data.space.m)
        grad[pos] = float(a @ state.solve_H(rhs))
        pos += 1

    # sigma2: every kernel entry (including jitter) scales linearly.
    dK_v = (K.matrix @ v) / spec.sigma2
    dk = k_star / spec.sigma2
    grad[pos] = float(dk @ v - a @ dK_v + a @ state.solve_H(K.solve(dK_v)))
    pos += 1

    if spec.uses_phi:
        dK = spec.sigma2 * correlation_dphi(spec, data.space.distance)
        dk = spec.sigma2 * correlation_dphi(spec, data.space.distances_to(candidate))
        dK_v = dK @ v
        grad[pos] = float(dk @ v - a @ dK_v + a @ state.solve_H(K.solve(dK_v)))
    return grad


def corrected_variance(model: FittedModel, candidate: Fingerprint) -> tuple[float, bool]:
    """Posterior variance inflated for parameter uncertainty.

    Returns (value, applied).  When the observed information is missing or
    not positive definite the uncorrected variance comes back with
    applied=False.
    """
    _, var = posterior_u(model, candidate)
    if model.info is None or not model.info_available:
        return var, False
    grad_nat = mean_gradient_theta(model, candidate)
    J = natural_jacobian(model.zeta, model.data.C, model.data.p)[:, model.active]
    grad_zeta = J.T @ grad_nat
    correction = float(grad_zeta @ model.info_solve(grad_zeta))
    return var + correction, True


def predict_one(model: FittedModel, candidate: Fingerprint, x_star=None) -> Prediction:
    """Full prediction record for one candidate."""
    mu, var = posterior_u(model, candidate)
    probs = mixture_class_probs(
        model.params.link, model.params.alphas, _xbeta(model, x_star), mu, var
    )
    var_corr, applied = corrected_variance(model, candidate)
    return Prediction(
        mean_u=mu,
        var_u=var,
        var_u_corrected=var_corr,
        class_probs=probs,
        method="quadrature",
        correction_applied=applied,
    )
