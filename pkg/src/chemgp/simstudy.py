"""Simulation harness: parameter recovery, variance-correction accuracy,
and genetic-search ranking, at configurable scale.

The reference design combines kappa binary features into the full space
of 2^kappa - 1 nonzero fingerprints (or a uniform subsample when fewer
compounds are observed), tests every compound on a shared covariate grid
x_i = (i-1)/10, and draws the latent effects from the true kernel.

Replications are seeded independently through a SeedSequence spawn, so a
study's output is a pure function of its design regardless of execution
order; replications may run in worker processes.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from .chemspace import ChemicalSpace, Fingerprint, build_space
from .discover import GAConfig, exhaustive_best, run_ga
from .errors import ConfigError, DataError
from .fit import FittedModel, fit_mle, natural_names, standard_errors
from .kernel import KernelSpec, covariance_matrix
from .laplace import Dataset, ModelParams
from .link import LinkSpec, inv_link
from .predict import corrected_variance, posterior_u

RANK_BINS = ("1", "2", "3", "4+")


@dataclass(frozen=True)
class SimDesign:
    """One simulation configuration."""

    kappa: int = 5
    m: int | str = "all"
    n_per_compound: int = 11
    C: int = 3
    alphas: tuple[float, ...] = (-1.0, 0.0)
    beta: float = 1.0
    sigma2: float = 0.5
    phi: float = 0.5
    link_name: str = "logit"
    kernel_family: str = "gaussian"
    replications: int = 100
    seed: int = 0
    x_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kappa < 1 or self.kappa > 24:
            raise ConfigError("kappa must be in 1..24 for simulation designs")
        if len(self.alphas) != self.C - 1:
            raise ConfigError(f"need {self.C - 1} intercepts for C={self.C}")
        if self.m != "all":
            total = (1 << self.kappa) - 1
            if not 1 <= int(self.m) <= total:
                raise ConfigError(f"m must be 'all' or in 1..{total}")

    @property
    def true_params(self) -> ModelParams:
        return ModelParams(
            np.asarray(self.alphas),
            np.array([self.beta]),
            KernelSpec(self.kernel_family, self.sigma2, self.phi),
            LinkSpec(self.link_name),
        )

    @property
    def grid(self) -> np.ndarray:
        if self.x_grid is not None:
            return np.asarray(self.x_grid, dtype=float)
        return (np.arange(self.n_per_compound)) / 10.0


def design_space(design: SimDesign, rng: np.random.Generator) -> ChemicalSpace:
    """All 2^kappa - 1 nonzero fingerprints, or a uniform subsample of them."""
    total = (1 << design.kappa) - 1
    if design.m == "all" or int(design.m) == total:
        packs = np.arange(1, total + 1)
    else:
        packs = np.sort(rng.choice(total, size=int(design.m), replace=False) + 1)
    return build_space([Fingerprint(int(c), design.kappa) for c in packs])


def simulate_dataset(
    design: SimDesign,
    rng: np.random.Generator,
    space: ChemicalSpace | None = None,
) -> tuple[Dataset, np.ndarray]:
    """Draw latent effects from the true kernel, then ordinal outcomes.

    Returns the dataset and the simulated per-compound effects.
    """
    if space is None:
        space = design_space(design, rng)
    params = design.true_params
    K = covariance_matrix(params.kernel, space)
    u = K.chol @ rng.standard_normal(space.m)

    grid = design.grid
    m = space.m
    compound_index = np.repeat(np.arange(m), len(grid))
    x = np.tile(grid, m)
    etas = params.alphas[None, :] + design.beta * x[:, None] + u[compound_index][:, None]
    gammas = inv_link(params.link, etas)
    draws = rng.random(len(x))
    y = 1 + np.sum(gammas < draws[:, None], axis=1)
    data = Dataset(
        y=y, X=x.reshape(-1, 1), compound_index=compound_index, space=space, C=design.C
    )
    return data, u


def _rep_seeds(design: SimDesign) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(design.seed).spawn(design.replications)


def _seed_int(ss: np.random.SeedSequence, salt: int = 0) -> int:
    return int(ss.generate_state(salt + 1)[salt])


# ----------------------------------------------------------------------
# Study 1: parameter recovery
# ----------------------------------------------------------------------


@dataclass
class EstimationReport:
    """Per-parameter recovery summary across replications."""

    names: list[str]
    truth: np.ndarray
    estimates: np.ndarray  # (reps, d)
    estimated_sds: np.ndarray  # (reps, d), NaN where unavailable
    n_converged: int = 0

    @property
    def replications(self) -> int:
        return self.estimates.shape[0]

    def mean_estimate(self) -> np.ndarray:
        return np.mean(self.estimates, axis=0)

    def empirical_sd(self) -> np.ndarray:
        return np.std(self.estimates, axis=0, ddof=1)

    def mean_estimated_sd(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.estimated_sds, axis=0)

    def rows(self) -> tuple[list[str], list[list]]:
        header = ["parameter", "true", "mean_estimate", "empirical_sd", "mean_estimated_sd"]
        if self.replications == 0:
            return header, []
        mean_est = self.mean_estimate()
        emp = self.empirical_sd()
        est_sd = self.mean_estimated_sd()
        return header, [
            [self.names[i], self.truth[i], mean_est[i], emp[i], est_sd[i]]
            for i in range(len(self.names))
        ]


def _estimation_rep(
    design: SimDesign, space: ChemicalSpace, ss: np.random.SeedSequence,
    fit_restarts: int,
) -> tuple[np.ndarray, np.ndarray, bool]:
    rng = np.random.default_rng(ss)
    data, _ = simulate_dataset(design, rng, space)
    model = fit_mle(
        data,
        design.kernel_family,
        design.link_name,
        restarts=fit_restarts,
        seed=_seed_int(ss),
    )
    theta = np.concatenate(
        (
            model.params.alphas,
            model.params.beta,
            [model.params.kernel.sigma2, model.params.kernel.phi],
        )
    )
    ses = standard_errors(model)
    sd = np.array([np.nan if ses[n] is None else ses[n] for n in natural_names(design.C, 1)])
    return theta, sd, model.converged


def study_estimation(
    design: SimDesign, *, fit_restarts: int = 3, threads: int = 1
) -> EstimationReport:
    """Table-style parameter-recovery study: fit every simulated dataset."""
    names = natural_names(design.C, 1)
    truth = np.concatenate(
        (design.alphas, [design.beta, design.sigma2, design.phi])
    )
    if design.replications == 0:
        return EstimationReport(names, truth, np.empty((0, len(names))), np.empty((0, len(names))))
    space = design_space(design, np.random.default_rng(design.seed))
    seeds = _rep_seeds(design)
    jobs = [(design, space, ss, fit_restarts) for ss in seeds]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_estimation_rep_star, jobs))
    else:
        results = [_estimation_rep(*job) for job in jobs]
    estimates = np.vstack([r[0] for r in results])
    sds = np.vstack([r[1] for r in results])
    return EstimationReport(
        names, truth, estimates, sds, n_converged=sum(int(r[2]) for r in results)
    )


def _estimation_rep_star(args):
    return _estimation_rep(*args)


# ----------------------------------------------------------------------
# Study 2: prediction-variance accuracy
# ----------------------------------------------------------------------


@dataclass
class VarianceReport:
    """Squared deviation of estimated from empirical prediction variance."""

    uncorrected_msd: float
    corrected_msd: float
    empirical_variance: np.ndarray
    mean_uncorrected: np.ndarray
    mean_corrected: np.ndarray
    n_correction_unavailable: int = 0

    def rows(self) -> tuple[list[str], list[list]]:
        header = ["quantity", "value"]
        return header, [
            ["uncorrected_msd", self.uncorrected_msd],
            ["corrected_msd", self.corrected_msd],
            ["n_correction_unavailable", self.n_correction_unavailable],
        ]


def _variance_rep(
    design: SimDesign, space: ChemicalSpace, ss: np.random.SeedSequence,
    fit_restarts: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    rng = np.random.default_rng(ss)
    data, true_u = simulate_dataset(design, rng, space)
    model = fit_mle(
        data,
        design.kernel_family,
        design.link_name,
        restarts=fit_restarts,
        seed=_seed_int(ss),
    )
    m = space.m
    err = np.empty(m)
    v_unc = np.empty(m)
    v_corr = np.empty(m)
    unavailable = 0
    for r in range(m):
        mean, var = posterior_u(model, space.compounds[r])
        vc, applied = corrected_variance(model, space.compounds[r])
        err[r] = mean - true_u[r]
        v_unc[r] = var
        v_corr[r] = vc
        unavailable += int(not applied)
    return err, v_unc, v_corr, unavailable


def study_variance(
    design: SimDesign, *, fit_restarts: int = 3, threads: int = 1
) -> VarianceReport:
    """Empirical vs estimated prediction variance at the design compounds."""
    if design.replications < 2:
        raise DataError("variance study needs at least 2 replications")
    space = design_space(design, np.random.default_rng(design.seed))
    seeds = _rep_seeds(design)
    jobs = [(design, space, ss, fit_restarts) for ss in seeds]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_variance_rep_star, jobs))
    else:
        results = [_variance_rep(*job) for job in jobs]
    errs = np.vstack([r[0] for r in results])
    v_unc = np.vstack([r[1] for r in results])
    v_corr = np.vstack([r[2] for r in results])
    empirical = np.var(errs, axis=0, ddof=1)
    mean_unc = np.mean(v_unc, axis=0)
    mean_corr = np.mean(v_corr, axis=0)
    return VarianceReport(
        uncorrected_msd=float(np.mean((empirical - mean_unc) ** 2)),
        corrected_msd=float(np.mean((empirical - mean_corr) ** 2)),
        empirical_variance=empirical,
        mean_uncorrected=mean_unc,
        mean_corrected=mean_corr,
        n_correction_unavailable=sum(r[3] for r in results),
    )


def _variance_rep_star(args):
    return _variance_rep(*args)


# ----------------------------------------------------------------------
# Study 3: genetic-search ranking
# ----------------------------------------------------------------------


@dataclass
class GARankReport:
    """How the GA's pick ranks among all candidates under the fitted model."""

    rank_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def rows(self) -> tuple[list[str], list[list]]:
        header = ["criterion"] + list(RANK_BINS)
        return header, [
            [crit] + [counts[b] for b in RANK_BINS]
            for crit, counts in self.rank_counts.items()
        ]


def _rank_bin(rank: int) -> str:
    return str(rank) if rank <= 3 else "4+"


def study_ga(
    design: SimDesign, ga_config: GAConfig, *, fit_restarts: int = 3
) -> GARankReport:
    """Fit each simulated dataset, search with both criteria, rank the pick.

    The rank compares the returned compound against the exhaustive scoring
    of all 2^kappa - 1 candidates under the same fitted model (strictly
    better candidates push the rank down).
    """
    report = GARankReport({c: {b: 0 for b in RANK_BINS} for c in ("min_gp_mean", "top_class_prob")})
    space = design_space(design, np.random.default_rng(design.seed))
    seeds = _rep_seeds(design)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        data, _ = simulate_dataset(design, rng, space)
        model = fit_mle(
            data,
            design.kernel_family,
            design.link_name,
            restarts=fit_restarts,
            seed=_seed_int(ss),
            compute_info=False,
        )
        for crit in ("min_gp_mean", "top_class_prob"):
            cfg = replace(ga_config, fitness=crit, seed=_seed_int(ss.spawn(1)[0]))
            result = run_ga(model, cfg)
            _, _, all_fits = exhaustive_best(model, cfg)
            rank = 1 + int(np.sum(all_fits > result.best_fitness))
            report.rank_counts[crit][_rank_bin(rank)] += 1
    return report


# ----------------------------------------------------------------------
# Minimal SVG boxplots (distribution summaries for the recovery study)
# ----------------------------------------------------------------------


def render_boxplot_svg(
    groups: dict[str, np.ndarray],
    truths: dict[str, float] | None = None,
    title: str = "",
    width: int = 640,
    height: int = 360,
) -> str:
    """Standalone SVG with one box-and-whiskers per group.

    Boxes span the quartiles, whiskers reach the most extreme points
    within 1.5 IQR, outliers are dots, and an x marks each group's true
    value when given.
    """
    pad, top = 48, 36
    labels = list(groups)
    all_vals = np.concatenate([np.asarray(groups[g], dtype=float) for g in labels])
    if truths:
        all_vals = np.concatenate((all_vals, np.array(list(truths.values()), dtype=float)))
    lo, hi = float(np.min(all_vals)), float(np.max(all_vals))
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo

    def ypix(v: float) -> float:
        return top + (height - top - pad) * (hi - v) / span

    slot = (width - 2 * pad) / max(len(labels), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{pad - 8}" y1="{top}" x2="{pad - 8}" y2="{height - pad}" stroke="black"/>',
    ]
    for tick in np.linspace(lo, hi, 5):
        y = ypix(tick)
        parts.append(f'<line x1="{pad - 12}" y1="{y:.1f}" x2="{pad - 8}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{pad - 14}" y="{y + 3:.1f}" text-anchor="end">{tick:.2g}</text>')
    for i, label in enumerate(labels):
        vals = np.sort(np.asarray(groups[label], dtype=float))
        cx = pad + slot * (i + 0.5)
        half = min(22.0, slot * 0.3)
        q1, q2, q3 = np.percentile(vals, [25, 50, 75])
        iqr = q3 - q1
        lo_w = vals[vals >= q1 - 1.5 * iqr][0]
        hi_w = vals[vals <= q3 + 1.5 * iqr][-1]
        parts.append(
            f'<rect x="{cx - half:.1f}" y="{ypix(q3):.1f}" width="{2 * half:.1f}" '
            f'height="{ypix(q1) - ypix(q3):.1f}" fill="none" stroke="black"/>'
        )
        parts.append(f'<line x1="{cx - half:.1f}" y1="{ypix(q2):.1f}" x2="{cx + half:.1f}" y2="{ypix(q2):.1f}" stroke="black" stroke-width="2"/>')
        for wv, qv in ((lo_w, q1), (hi_w, q3)):
            parts.append(f'<line x1="{cx:.1f}" y1="{ypix(qv):.1f}" x2="{cx:.1f}" y2="{ypix(wv):.1f}" stroke="black"/>')
            parts.append(f'<line x1="{cx - half / 2:.1f}" y1="{ypix(wv):.1f}" x2="{cx + half / 2:.1f}" y2="{ypix(wv):.1f}" stroke="black"/>')
        for v in vals[(vals < q1 - 1.5 * iqr) | (vals > q3 + 1.5 * iqr)]:
            parts.append(f'<circle cx="{cx:.1f}" cy="{ypix(v):.1f}" r="2" fill="none" stroke="black"/>')
        if truths and label in truths:
            ty = ypix(truths[label])
            parts.append(
                f'<path d="M {cx - 5:.1f} {ty - 5:.1f} L {cx + 5:.1f} {ty + 5:.1f} '
                f'M {cx - 5:.1f} {ty + 5:.1f} L {cx + 5:.1f} {ty - 5:.1f}" stroke="red" stroke-width="1.5"/>'
            )
        parts.append(f'<text x="{cx:.1f}" y="{height - pad + 16}" text-anchor="middle">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
