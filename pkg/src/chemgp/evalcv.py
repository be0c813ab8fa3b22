"""Stratified k-fold cross-validation with proper scoring rules.

Folds are stratified per class: roughly 20% of each class's rows land in
each of 5 folds.  Each candidate model is refit on every training fold
(the covariance is rebuilt from the training compounds only) and scored
on the held-out rows by the logarithmic and spherical losses.  Held-out
compounds need not appear in the training fold; they are predicted
through the cross-covariance like any untested compound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .chemspace import build_space
from .errors import StratificationError
from .fit import fit_mle
from .laplace import Dataset
from .link import PROB_FLOOR
from .predict import class_probabilities


def _check_distribution(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise ValueError(f"probability vector expected, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"not a probability distribution: {probs!r}")
    return p


def log_loss(probs: np.ndarray, realized: int) -> float:
    """-log of the probability assigned to the realized class (1-based)."""
    p = _check_distribution(probs)
    if not 1 <= realized <= len(p):
        raise ValueError(f"realized class {realized} out of 1..{len(p)}")
    return float(-np.log(max(p[realized - 1], PROB_FLOOR)))


def spherical_loss(probs: np.ndarray, realized: int) -> float:
    """-p_realized / ||p||_2; always in [-1, 0)."""
    p = _check_distribution(probs)
    if not 1 <= realized <= len(p):
        raise ValueError(f"realized class {realized} out of 1..{len(p)}")
    return float(-p[realized - 1] / np.sqrt(np.sum(p**2)))


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Partition row indices into folds, stratified by class label.

    Per-class fold sizes differ by at most one.  Raises
    StratificationError if any class has fewer rows than folds.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in range(folds)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < folds:
            raise StratificationError(
                f"class {cls} has {len(idx)} observation(s), needs >= {folds}"
            )
        rng.shuffle(idx)
        for f, chunk in enumerate(np.array_split(idx, folds)):
            parts[f].extend(chunk.tolist())
    return [np.sort(np.array(p, dtype=int)) for p in parts]


@dataclass
class CVReport:
    """Per-fold mean losses and fit time for one model descriptor."""

    kernel_family: str
    link_name: str
    fold_log_loss: np.ndarray
    fold_spherical_loss: np.ndarray
    fold_fit_seconds: np.ndarray

    @property
    def log_mean(self) -> float:
        return float(np.mean(self.fold_log_loss))

    @property
    def log_sd(self) -> float:
        return float(np.std(self.fold_log_loss, ddof=1))

    @property
    def spherical_mean(self) -> float:
        return float(np.mean(self.fold_spherical_loss))

    @property
    def spherical_sd(self) -> float:
        return float(np.std(self.fold_spherical_loss, ddof=1))

    @property
    def fit_seconds_mean(self) -> float:
        return float(np.mean(self.fold_fit_seconds))

    def describe(self) -> str:
        return (
            f"{self.link_name} {self.kernel_family}: "
            f"log {self.log_mean:.3f} ({self.log_sd:.3f}), "
            f"spherical {self.spherical_mean:.3f} ({self.spherical_sd:.3f}), "
            f"{self.fit_seconds_mean:.1f}s"
        )


def _training_fold(data: Dataset, train_rows: np.ndarray) -> Dataset:
    """Dataset restricted to train_rows, with its space rebuilt from scratch."""
    ci = data.compound_index[train_rows]
    used = np.unique(ci)
    remap = {old: new for new, old in enumerate(used)}
    space = build_space(
        [data.space.compounds[i] for i in used],
        ids=[data.space.ids[i] for i in used],
    )
    return Dataset(
        y=data.y[train_rows],
        X=data.X[train_rows],
        compound_index=np.array([remap[i] for i in ci]),
        space=space,
        C=data.C,
    )


def cross_validate(
    data: Dataset,
    model_specs: list[tuple[str, str]],
    folds: int = 5,
    seed: int = 0,
    *,
    fit_restarts: int = 3,
) -> list[CVReport]:
    """Fit and score every (kernel_family, link_name) spec on shared folds."""
    test_folds = stratified_folds(data.y, folds, seed)
    all_rows = np.arange(data.n)
    reports = []
    for spec_idx, (family, link_name) in enumerate(model_specs):
        log_means, sph_means, times = [], [], []
        for f, test_rows in enumerate(test_folds):
            train_rows = np.setdiff1d(all_rows, test_rows)
            train = _training_fold(data, train_rows)
            t0 = time.perf_counter()
            model = fit_mle(
                train,
                family,
                link_name,
                restarts=fit_restarts,
                seed=seed + 7919 * spec_idx + f,
                compute_info=False,
            )
            times.append(time.perf_counter() - t0)
            ll, sl = [], []
            for row in test_rows:
                candidate = data.space.compounds[data.compound_index[row]]
                x = data.X[row] if data.p > 0 else None
                probs = class_probabilities(model, candidate, x)
                ll.append(log_loss(probs, int(data.y[row])))
                sl.append(spherical_loss(probs, int(data.y[row])))
            log_means.append(float(np.mean(ll)))
            sph_means.append(float(np.mean(sl)))
        reports.append(
            CVReport(
                kernel_family=family,
                link_name=link_name,
                fold_log_loss=np.array(log_means),
                fold_spherical_loss=np.array(sph_means),
                fold_fit_seconds=np.array(times),
            )
        )
    return reports
