"""Link functions with the derivatives the Laplace machinery needs.

All computation works with the inverse link G: R -> (0,1) (a CDF), its
density G', and G''.  Cumulative class probabilities are G applied to the
linear predictor; interval probabilities are differences of G values at
consecutive thresholds, with -inf/+inf sentinels closing the ends.

The b-terms are the ratios that drive mode finding:

    b'  = (G'(eta_j) - G'(eta_{j-1})) / (G(eta_j) - G(eta_{j-1}))
    b'' = (G''(eta_j) - G''(eta_{j-1})) / (G(eta_j) - G(eta_{j-1}))

with G, G', G'' taking their limit values (0 or 1, and 0) at the
sentinels, which reproduces the one-sided forms for the lowest and
highest classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit as _logit_q, ndtr, ndtri

LINKS = ("logit", "probit", "loglog", "cloglog")

# Probabilities are floored here before any log.
PROB_FLOOR = 1e-300
# Beyond this both-thresholds-in-one-tail point, interval probabilities
# switch to complementary (survival) differences to avoid cancellation.
TAIL_SWITCH = 6.0

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinkSpec:
    """One of the four supported links, by name."""

    name: str

    def __post_init__(self):
        if self.name not in LINKS:
            raise ValueError(f"unknown link {self.name!r}, expected one of {LINKS}")


def _check_finite(eta) -> np.ndarray:
    arr = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"eta must be finite, got {eta!r}")
    return arr


def _cdf(name: str, eta: np.ndarray) -> np.ndarray:
    if name == "logit":
        return expit(eta)
    if name == "probit":
        return ndtr(eta)
    if name == "cloglog":
        return -np.expm1(-np.exp(eta))
    return np.exp(-np.exp(-eta))  # loglog


def _sf(name: str, eta: np.ndarray) -> np.ndarray:
    if name == "logit":
        return expit(-eta)
    if name == "probit":
        return ndtr(-eta)
    if name == "cloglog":
        return np.exp(-np.exp(eta))
    return -np.expm1(-np.exp(-eta))  # loglog


def _pdf(name: str, eta: np.ndarray) -> np.ndarray:
    if name == "logit":
        return expit(eta) * expit(-eta)
    if name == "probit":
        return np.exp(-0.5 * eta**2) / _SQRT_2PI
    if name == "cloglog":
        return np.exp(eta - np.exp(eta))
    return np.exp(-eta - np.exp(-eta))  # loglog


def _dpdf(name: str, eta: np.ndarray) -> np.ndarray:
    if name == "logit":
        F = expit(eta)
        return F * expit(-eta) * (1.0 - 2.0 * F)
    if name == "probit":
        return -eta * np.exp(-0.5 * eta**2) / _SQRT_2PI
    if name == "cloglog":
        return np.exp(eta - np.exp(eta)) * (1.0 - np.exp(eta))
    return np.exp(-eta - np.exp(-eta)) * (np.exp(-eta) - 1.0)  # loglog


def inv_link(spec: LinkSpec, eta):
    """G(eta): the cumulative probability at linear predictor eta."""
    arr = _check_finite(eta)
    out = _cdf(spec.name, arr)
    return out if out.ndim else float(out)


def inv_link_d1(spec: LinkSpec, eta):
    """G'(eta) > 0, the density of the latent noise distribution."""
    arr = _check_finite(eta)
    out = _pdf(spec.name, arr)
    return out if out.ndim else float(out)


def inv_link_d2(spec: LinkSpec, eta):
    """G''(eta)."""
    arr = _check_finite(eta)
    out = _dpdf(spec.name, arr)
    return out if out.ndim else float(out)


def link_quantile(spec: LinkSpec, p):
    """Inverse of inv_link: the eta with G(eta) = p (used for starting values)."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise ValueError(f"quantile argument must be in (0, 1), got {p!r}")
    if spec.name == "logit":
        out = _logit_q(arr)
    elif spec.name == "probit":
        out = ndtri(arr)
    elif spec.name == "cloglog":
        out = np.log(-np.log1p(-arr))
    else:  # loglog
        out = -np.log(-np.log(arr))
    return out if out.ndim else float(out)


def _masked(fn, name: str, eta: np.ndarray) -> np.ndarray:
    """fn evaluated where eta is finite, exact 0 at the +-inf sentinels."""
    out = np.zeros_like(eta)
    finite = np.isfinite(eta)
    if np.any(finite):
        out[finite] = fn(name, eta[finite])
    return out


def _cdf_sentinel(name: str, eta: np.ndarray) -> np.ndarray:
    out = np.where(eta == np.inf, 1.0, 0.0)
    finite = np.isfinite(eta)
    if np.any(finite):
        out[finite] = _cdf(name, eta[finite])
    return out


def _sf_sentinel(name: str, eta: np.ndarray) -> np.ndarray:
    out = np.where(eta == np.inf, 0.0, 1.0)
    finite = np.isfinite(eta)
    if np.any(finite):
        out[finite] = _sf(name, eta[finite])
    return out


def interval_prob(spec: LinkSpec, eta_hi, eta_lo) -> np.ndarray:
    """G(eta_hi) - G(eta_lo), computed stably, elementwise.

    When both thresholds sit in the upper tail the difference is formed
    from survival functions; the result is floored at PROB_FLOOR.
    Sentinels: eta_lo = -inf for the lowest class, eta_hi = +inf for the
    highest.
    """
    scalar = np.ndim(eta_hi) == 0 and np.ndim(eta_lo) == 0
    hi = np.atleast_1d(np.asarray(eta_hi, dtype=float))
    lo = np.atleast_1d(np.asarray(eta_lo, dtype=float))
    hi, lo = np.broadcast_arrays(hi, lo)
    if np.any(lo >= hi):
        raise ValueError("thresholds must satisfy eta_lo < eta_hi")
    direct = _cdf_sentinel(spec.name, hi) - _cdf_sentinel(spec.name, lo)
    upper_tail = np.minimum(hi, lo) > TAIL_SWITCH
    if np.any(upper_tail):
        comp = _sf_sentinel(spec.name, lo) - _sf_sentinel(spec.name, hi)
        direct = np.where(upper_tail, comp, direct)
    out = np.maximum(direct, PROB_FLOOR)
    return float(out[0]) if scalar else out


def b_terms(spec: LinkSpec, eta_j, eta_jm1) -> tuple[np.ndarray, np.ndarray]:
    """(b', b'') for threshold pair (eta_j, eta_jm1); elementwise.

    Raises ValueError unless eta_jm1 < eta_j.
    """
    scalar = np.ndim(eta_j) == 0 and np.ndim(eta_jm1) == 0
    hi = np.atleast_1d(np.asarray(eta_j, dtype=float))
    lo = np.atleast_1d(np.asarray(eta_jm1, dtype=float))
    hi, lo = np.broadcast_arrays(hi, lo)
    denom = interval_prob(spec, hi, lo)
    num1 = _masked(_pdf, spec.name, hi) - _masked(_pdf, spec.name, lo)
    num2 = _masked(_dpdf, spec.name, hi) - _masked(_dpdf, spec.name, lo)
    b1 = num1 / denom
    b2 = num2 / denom
    if scalar:
        return float(b1[0]), float(b2[0])
    return b1, b2


def b_terms_grad(spec: LinkSpec, eta_j, eta_jm1) -> tuple[np.ndarray, np.ndarray]:
    """Partials of b' w.r.t. its two thresholds, elementwise.

    Needed for the implicit differentiation of the mode equation: the
    thresholds move with alpha and beta while the denominator and
    numerator both change.  Sentinel thresholds contribute zero.
    """
    hi = np.atleast_1d(np.asarray(eta_j, dtype=float))
    lo = np.atleast_1d(np.asarray(eta_jm1, dtype=float))
    hi, lo = np.broadcast_arrays(hi, lo)
    denom = interval_prob(spec, hi, lo)
    num1 = _masked(_pdf, spec.name, hi) - _masked(_pdf, spec.name, lo)
    pdf_hi = _masked(_pdf, spec.name, hi)
    pdf_lo = _masked(_pdf, spec.name, lo)
    dpdf_hi = _masked(_dpdf, spec.name, hi)
    dpdf_lo = _masked(_dpdf, spec.name, lo)
    d_hi = (dpdf_hi * denom - num1 * pdf_hi) / denom**2
    d_lo = (-dpdf_lo * denom + num1 * pdf_lo) / denom**2
    # Sentinels are fixed at +-inf; no sensitivity flows through them.
    d_hi[~np.isfinite(hi)] = 0.0
    d_lo[~np.isfinite(lo)] = 0.0
    return d_hi, d_lo


def log_interval_prob(spec: LinkSpec, eta_hi, eta_lo) -> np.ndarray:
    """log(G(eta_hi) - G(eta_lo)) with the same stabilization as interval_prob."""
    return np.log(interval_prob(spec, eta_hi, eta_lo))
