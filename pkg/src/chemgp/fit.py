"""Maximum-likelihood fitting over an unconstrained parameterization.

The natural parameters theta = (alpha_1..alpha_{C-1}, beta, sigma2, phi)
map bijectively to

    zeta = (alpha_1, log(alpha_2 - alpha_1), ..., beta, log sigma2, log phi)

and a derivative-free simplex search maximizes the Laplace-approximate
log-likelihood over zeta (the objective runs an inner Newton solve, so no
analytic outer gradient is available).  Families without a scale parameter
keep the phi coordinate frozen rather than optimizing a flat direction.

The observed information is the negative central-difference Hessian of
the approximate log-likelihood at the optimum, over the optimized
coordinates; standard errors map back to the natural scale by the delta
method.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .chemspace import Fingerprint, build_space
from .errors import NumericalError
from .kernel import Covariance, KernelSpec, covariance_matrix
from .laplace import (
    Dataset,
    LaplaceState,
    ModelParams,
    _factor_H,
    approx_loglik,
    categorical_loglik,
    find_mode,
    project_to_compounds,
    score_and_psi,
)
from .link import LinkSpec, link_quantile

logger = logging.getLogger(__name__)

# Objective value handed to the optimizer when a parameter point is
# numerically infeasible (indefinite kernel, mode failure).
PENALTY = 1e10

HESS_STEP_SCALE = 1e-4
TRANSFORM_MAP = (
    "zeta = (alpha1, log successive alpha gaps, beta, log sigma2, log phi); "
    "phi frozen for families without a scale parameter"
)


def to_unconstrained(params: ModelParams) -> np.ndarray:
    """Forward transform; raises ValueError if the intercepts are not increasing."""
    gaps = np.diff(params.alphas)
    if np.any(gaps <= 0):
        raise ValueError(f"intercepts must be strictly increasing, got {params.alphas}")
    return np.concatenate(
        (
            [params.alphas[0]],
            np.log(gaps),
            params.beta,
            [np.log(params.kernel.sigma2), np.log(params.kernel.phi)],
        )
    )


def from_unconstrained(
    vec: np.ndarray, C: int, p: int, family: str, link_name: str
) -> ModelParams:
    """Inverse transform: rebuild ModelParams from a zeta vector."""
    vec = np.asarray(vec, dtype=float)
    if len(vec) != (C - 1) + p + 2:
        raise ValueError(f"expected {(C - 1) + p + 2} coordinates, got {len(vec)}")
    alphas = np.empty(C - 1)
    alphas[0] = vec[0]
    if C > 2:
        alphas[1:] = vec[0] + np.cumsum(np.exp(vec[1 : C - 1]))
    beta = vec[C - 1 : C - 1 + p].copy()
    sigma2 = float(np.exp(vec[-2]))
    phi = float(np.exp(vec[-1]))
    return ModelParams(alphas, beta, KernelSpec(family, sigma2, phi), LinkSpec(link_name))


def natural_jacobian(zeta: np.ndarray, C: int, p: int) -> np.ndarray:
    """d theta / d zeta at zeta; theta ordered (alphas, beta, sigma2, phi)."""
    d = (C - 1) + p + 2
    J = np.zeros((d, d))
    J[: C - 1, 0] = 1.0
    for j in range(1, C - 1):
        J[j:(C - 1), j] = np.exp(zeta[j])
    J[C - 1 : C - 1 + p, C - 1 : C - 1 + p] = np.eye(p)
    J[-2, -2] = np.exp(zeta[-2])
    J[-1, -1] = np.exp(zeta[-1])
    return J


def natural_names(C: int, p: int) -> list[str]:
    return (
        [f"alpha{j}" for j in range(1, C)]
        + [f"beta{l}" for l in range(1, p + 1)]
        + ["sigma2", "phi"]
    )


@dataclass
class FittedModel:
    """Estimated parameters plus everything prediction needs."""

    params: ModelParams
    laplace: LaplaceState
    K: Covariance
    data: Dataset
    zeta: np.ndarray
    active: np.ndarray
    info: np.ndarray | None
    diagnostics: dict
    transform_map: str = TRANSFORM_MAP
    _info_chol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.info is not None and self._info_chol is None:
            try:
                chol, _ = cho_factor(self.info, lower=True)
                self._info_chol = np.tril(chol)
            except np.linalg.LinAlgError:
                self._info_chol = None

    @property
    def info_available(self) -> bool:
        """True when the observed information is positive definite."""
        return self._info_chol is not None

    def info_solve(self, b: np.ndarray) -> np.ndarray:
        if self._info_chol is None:
            raise NumericalError("observed information is singular")
        return cho_solve((self._info_chol, True), b)

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", False))


def default_init(data: Dataset, family: str, link_name: str) -> ModelParams:
    """Empirical starting point: intercepts from cumulative class frequencies."""
    link = LinkSpec(link_name)
    counts = np.bincount(data.y, minlength=data.C + 1)[1 : data.C + 1]
    cum = np.cumsum(counts)[:-1] / data.n
    cum = np.clip(cum, 1.0 / (2 * data.n), 1.0 - 1.0 / (2 * data.n))
    alphas = np.asarray(link_quantile(link, cum), dtype=float).reshape(-1)
    for j in range(1, len(alphas)):  # empty classes give tied frequencies
        if alphas[j] <= alphas[j - 1]:
            alphas[j] = alphas[j - 1] + 1e-3
    return ModelParams(
        alphas, np.zeros(data.p), KernelSpec(family, 1.0, 0.5), link
    )


def _active_mask(C: int, p: int, family: str) -> np.ndarray:
    active = np.ones((C - 1) + p + 2, dtype=bool)
    if not KernelSpec(family).uses_phi:
        active[-1] = False
    return active


class _Objective:
    """Negative approximate log-likelihood over active zeta coordinates.

    Keeps a warm-start mode between evaluations; falls back to a cold
    start when the warm start fails to converge.
    """

    def __init__(self, data: Dataset, zeta_full: np.ndarray, active: np.ndarray,
                 family: str, link_name: str):
        self.data = data
        self.zeta_full = zeta_full.copy()
        self.active = active
        self.family = family
        self.link_name = link_name
        self.warm_u: np.ndarray | None = None
        self.n_evals = 0

    def expand(self, z_active: np.ndarray) -> np.ndarray:
        full = self.zeta_full.copy()
        full[self.active] = z_active
        return full

    def loglik(self, z_active: np.ndarray, warm: bool = True) -> float:
        self.n_evals += 1
        full = np.clip(self.expand(z_active), -30.0, 30.0)
        params = from_unconstrained(full, self.data.C, self.data.p, self.family, self.link_name)
        try:
            K = covariance_matrix(params.kernel, self.data.space)
        except NumericalError:
            return -PENALTY
        for u0 in ((self.warm_u, None) if warm and self.warm_u is not None else (None,)):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    value, state = approx_loglik(params, self.data, K=K, u0=u0)
            except NumericalError:
                continue
            self.warm_u = state.u_hat
            return value if np.isfinite(value) else -PENALTY
        return -PENALTY

    def __call__(self, z_active: np.ndarray) -> float:
        return -self.loglik(z_active)


def _observed_info(obj: _Objective, z_active: np.ndarray) -> np.ndarray:
    """Negative central-difference Hessian of the approximate log-likelihood."""
    d = len(z_active)
    h = HESS_STEP_SCALE * np.maximum(1.0, np.abs(z_active))
    f0 = obj.loglik(z_active)
    info = np.zeros((d, d))

    def at(offsets: dict[int, float]) -> float:
        z = z_active.copy()
        for k, dv in offsets.items():
            z[k] += dv
        return obj.loglik(z)

    for k in range(d):
        fp = at({k: h[k]})
        fm = at({k: -h[k]})
        info[k, k] = -(fp - 2.0 * f0 + fm) / h[k] ** 2
    for k in range(d):
        for l in range(k + 1, d):
            fpp = at({k: h[k], l: h[l]})
            fpm = at({k: h[k], l: -h[l]})
            fmp = at({k: -h[k], l: h[l]})
            fmm = at({k: -h[k], l: -h[l]})
            val = -(fpp - fpm - fmp + fmm) / (4.0 * h[k] * h[l])
            info[k, l] = info[l, k] = val
    return 0.5 * (info + info.T)


def fit_mle(
    data: Dataset,
    kernel_family: str = "gaussian",
    link_name: str = "logit",
    init: ModelParams | None = None,
    *,
    restarts: int = 3,
    seed: int = 0,
    compute_info: bool = True,
    nm_maxiter: int | None = None,
) -> FittedModel:
    """Maximize the approximate log-likelihood by Nelder-Mead with restarts.

    Runs once from ``init`` (or an empirical default) plus ``restarts``
    times from jittered defaults, keeping the best optimum.  Convergence
    is the simplex criterion (objective change < 1e-8 and simplex size
    < 1e-6).  Non-convergence returns the best point found with the
    ``converged`` diagnostic flag cleared.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    base = default_init(data, kernel_family, link_name)
    start = init if init is not None else base
    zeta0 = to_unconstrained(start)
    active = _active_mask(data.C, data.p, kernel_family)
    obj = _Objective(data, zeta0, active, kernel_family, link_name)

    starts = [zeta0[active]]
    zeta_base = to_unconstrained(base)[active]
    for _ in range(restarts):
        starts.append(zeta_base + rng.normal(0.0, 0.3, size=active.sum()))

    d = active.sum()
    if nm_maxiter is None:
        nm_maxiter = 400 * d
    runs = []
    best = None
    for run_idx, z0 in enumerate(starts):
        obj.warm_u = None
        step = 0.02 if (init is not None and run_idx == 0) else 0.25
        simplex = np.vstack([z0] + [z0 + step * e for e in np.eye(d)])
        res = minimize(
            obj,
            z0,
            method="Nelder-Mead",
            options=dict(
                xatol=1e-6,
                fatol=1e-8,
                maxiter=nm_maxiter,
                maxfev=2 * nm_maxiter,
                initial_simplex=simplex,
            ),
        )
        runs.append(
            dict(iters=int(res.nit), fevals=int(res.nfev), objective=float(res.fun),
                 success=bool(res.success))
        )
        if best is None or res.fun < best.fun:
            best = res
            best_idx = run_idx

    zeta_hat = np.clip(obj.expand(best.x), -30.0, 30.0)
    params_hat = from_unconstrained(zeta_hat, data.C, data.p, kernel_family, link_name)
    K_hat = covariance_matrix(params_hat.kernel, data.space)
    state = find_mode(params_hat, data, K=K_hat)

    info = None
    if compute_info and best.fun < PENALTY / 2:
        obj.warm_u = state.u_hat
        info = _observed_info(obj, best.x)

    diagnostics = dict(
        runs=runs,
        best_run=best_idx,
        converged=bool(runs[best_idx]["success"]),
        objective=float(-best.fun),
        seed=seed,
        restarts=restarts,
        n_evals=obj.n_evals,
        fit_seconds=time.perf_counter() - t_start,
    )
    if not runs[best_idx]["success"]:
        logger.warning("optimizer did not converge; returning best point found")
    return FittedModel(
        params=params_hat,
        laplace=state,
        K=K_hat,
        data=data,
        zeta=zeta_hat,
        active=active,
        info=info,
        diagnostics=diagnostics,
    )


def standard_errors(model: FittedModel) -> dict[str, float | None]:
    """Delta-method SDs on the natural scale; None where unavailable."""
    C, p = model.data.C, model.data.p
    names = natural_names(C, p)
    out: dict[str, float | None] = {name: None for name in names}
    if model.info is None or not model.info_available:
        return out
    J = natural_jacobian(model.zeta, C, p)[:, model.active]
    cov = J @ model.info_solve(J.T)
    sds = np.sqrt(np.maximum(np.diag(cov), 0.0))
    active_nat = np.ones(len(names), dtype=bool)
    if not model.params.kernel.uses_phi:
        active_nat[-1] = False
    for i, name in enumerate(names):
        if active_nat[i]:
            out[name] = float(sds[i])
    return out


# ----------------------------------------------------------------------
# Model file round-trip
# ----------------------------------------------------------------------


def save_model(model: FittedModel, path, config: dict | None = None) -> None:
    """Write a JSON model file sufficient to reload and predict exactly."""
    doc = {
        "format": "chemgp-model-v1",
        "config": config or {},
        "seed": model.diagnostics.get("seed"),
        "link": model.params.link.name,
        "kernel": {
            "family": model.params.kernel.family,
            "sigma2": model.params.kernel.sigma2,
            "phi": model.params.kernel.phi,
        },
        "alphas": model.params.alphas.tolist(),
        "beta": model.params.beta.tolist(),
        "C": model.data.C,
        "compound_ids": list(model.data.space.ids),
        "fingerprints": [fp.to_string() for fp in model.data.space.compounds],
        "y": model.data.y.tolist(),
        "X": model.data.X.tolist(),
        "compound_index": model.data.compound_index.tolist(),
        "u_hat": model.laplace.u_hat.tolist(),
        "zeta": model.zeta.tolist(),
        "active": model.active.tolist(),
        "info": None if model.info is None else model.info.tolist(),
        "diagnostics": model.diagnostics,
        "loglik": model.laplace.loglik,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path) -> FittedModel:
    """Rebuild a FittedModel from a model file without refitting.

    The Laplace state is reassembled deterministically at the stored mode,
    so predictions from a loaded model match the in-memory ones exactly.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "chemgp-model-v1":
        raise NumericalError(f"{path}: not a chemgp model file")
    space = build_space(
        [Fingerprint.from_string(s) for s in doc["fingerprints"]],
        ids=doc["compound_ids"],
    )
    X = np.asarray(doc["X"], dtype=float)
    if X.ndim == 1:
        X = X.reshape(len(doc["y"]), -1)
    data = Dataset(
        y=np.asarray(doc["y"]),
        X=X,
        compound_index=np.asarray(doc["compound_index"]),
        space=space,
        C=int(doc["C"]),
    )
    params = ModelParams(
        np.asarray(doc["alphas"]),
        np.asarray(doc["beta"]),
        KernelSpec(doc["kernel"]["family"], doc["kernel"]["sigma2"], doc["kernel"]["phi"]),
        LinkSpec(doc["link"]),
    )
    K = covariance_matrix(params.kernel, space)
    u_hat = np.asarray(doc["u_hat"], dtype=float)
    state = _reassemble_state(params, data, K, u_hat)
    info = None if doc["info"] is None else np.asarray(doc["info"], dtype=float)
    return FittedModel(
        params=params,
        laplace=state,
        K=K,
        data=data,
        zeta=np.asarray(doc["zeta"], dtype=float),
        active=np.asarray(doc["active"], dtype=bool),
        info=info,
        diagnostics=doc.get("diagnostics", {}),
    )


def _reassemble_state(
    params: ModelParams, data: Dataset, K: Covariance, u_hat: np.ndarray
) -> LaplaceState:
    Kinv = K.inverse()
    psi1, psi2 = score_and_psi(params, data, u_hat)
    H = Kinv - np.diag(project_to_compounds(data, psi2))
    H_chol, load = _factor_H(H, params.link.name)
    logdet_H = 2.0 * float(np.sum(np.log(np.diag(H_chol))))
    loglik = (
        categorical_loglik(params, data, u_hat)
        - 0.5 * float(u_hat @ (Kinv @ u_hat))
        - 0.5 * K.logdet()
        - 0.5 * logdet_H
    )
    return LaplaceState(u_hat, H, H_chol, psi1, psi2, float(loglik), 0, load)
