"""Correlation families on the chemical space and the GP covariance matrix.

The exponential and Gaussian families are isotropic kernels evaluated at
the Euclidean metric sqrt(T), so they stay positive definite on any valid
space; both carry a scale parameter phi.  The tanimoto family uses the raw
similarity S (positive definite by construction, no scale parameter), and
the independent family is the no-correlation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chemspace import ChemicalSpace, Fingerprint
from .errors import KernelIndefiniteError

FAMILIES = ("tanimoto", "exponential", "gaussian", "independent")

# Diagonal jitter (relative to sigma2) before Cholesky, and the one retry
# level for nearly-singular similarity structure.
JITTER = 1e-8
JITTER_RETRY = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family with variance sigma2 and scale phi.

    phi is ignored by the tanimoto and independent families.
    """

    family: str
    sigma2: float = 1.0
    phi: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}, expected one of {FAMILIES}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.uses_phi and not self.phi > 0:
            raise ValueError(f"phi must be > 0, got {self.phi}")

    @property
    def uses_phi(self) -> bool:
        return self.family in ("exponential", "gaussian")

    def with_params(self, sigma2: float | None = None, phi: float | None = None) -> "KernelSpec":
        return replace(
            self,
            sigma2=self.sigma2 if sigma2 is None else sigma2,
            phi=self.phi if phi is None else phi,
        )


def correlation(spec: KernelSpec, t):
    """Correlation at Tanimoto distance t in [0, 1]; elementwise on arrays."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"distance outside [0, 1]: {t!r}")
    if spec.family == "exponential":
        out = np.exp(-np.sqrt(arr) / spec.phi)
    elif spec.family == "gaussian":
        out = np.exp(-arr / spec.phi**2)
    elif spec.family == "tanimoto":
        out = 1.0 - arr
    else:  # independent
        out = np.where(arr == 0.0, 1.0, 0.0)
    return out if out.ndim else float(out)


def correlation_dphi(spec: KernelSpec, t):
    """d correlation / d phi, elementwise; zero for families without phi."""
    arr = np.asarray(t, dtype=float)
    if spec.family == "exponential":
        out = np.exp(-np.sqrt(arr) / spec.phi) * np.sqrt(arr) / spec.phi**2
    elif spec.family == "gaussian":
        out = np.exp(-arr / spec.phi**2) * 2.0 * arr / spec.phi**3
    else:
        out = np.zeros_like(arr)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Covariance:
    """Covariance matrix K with its cached (lower) Cholesky factor."""

    spec: KernelSpec
    matrix: np.ndarray
    chol: np.ndarray = field(repr=False)
    jitter: float

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """K^{-1} b via the cached factor."""
        return cho_solve((self.chol, True), b)

    def inverse(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(self.m))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def covariance_matrix(spec: KernelSpec, space: ChemicalSpace) -> Covariance:
    """K[r,s] = sigma2 * correlation(T[r,s]) + jitter on the diagonal.

    Tries Cholesky with jitter 1e-8*sigma2, retries once at 1e-6*sigma2.

    Raises:
        KernelIndefiniteError: factorization fails at both jitter levels.
    """
    base = spec.sigma2 * correlation(spec, space.distance)
    for jitter in (JITTER, JITTER_RETRY):
        K = base + jitter * spec.sigma2 * np.eye(space.m)
        try:
            chol, _ = cho_factor(K, lower=True)
        except np.linalg.LinAlgError:
            continue
        K.flags.writeable = False
        return Covariance(spec, K, np.tril(chol), jitter)
    raise KernelIndefiniteError(
        f"covariance not positive definite for family={spec.family}, phi={spec.phi}"
    )


def cross_covariance(
    spec: KernelSpec, space: ChemicalSpace, candidate: Fingerprint
) -> tuple[np.ndarray, float]:
    """(K_*, K_**): covariances of the training GP with an untested compound.

    K_* has entries sigma2 * correlation(T(c_r, candidate)); K_** = sigma2.
    No jitter is added to K_*.
    """
    t = space.distances_to(candidate)
    return spec.sigma2 * correlation(spec, t), spec.sigma2


