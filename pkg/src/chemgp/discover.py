"""Genetic search over fingerprint space for high-efficacy compounds.

The loop is rank selection, single-point suffix crossover, and
single-bit mutation, with fitness supplied by the fitted model: either
the predicted probability of the top class at given experimental
conditions, or the negated GP posterior mean (lower latent effect means
higher top-class probability regardless of conditions).

The evolution loop has no elitism and no duplicate removal, so the
best-fitness history is not guaranteed monotone; both behaviours exist
only as explicitly-flagged extensions.  The reported best compound is
the fittest member evaluated anywhere in the run (the gentle rank
pressure of the selection rule frequently drifts the exact optimum back
out of the final population).  By default the initial population is the
k fittest tested compounds under the same criterion, which is where a
discovery search starts in practice; uniform random initialization is
available via ``init``.

All randomness flows from one seeded counter-based (Philox) stream in a
fixed order: uniform initialization draws (if any), then per generation
the selection draws, per-pair crossover coin and cut index, and
per-member mutation coin and flip index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chemspace import Fingerprint
from .errors import ConfigError
from .fit import FittedModel
from .predict import class_probabilities, posterior_u

FITNESS_MODES = ("top_class_prob", "min_gp_mean")
INIT_MODES = ("fittest_observed", "uniform")


@dataclass(frozen=True)
class GAConfig:
    """Knobs of the genetic search."""

    k: int = 10
    generations: int = 100
    a: float = 10.0
    b: float = 1.0
    p_c: float = 0.8
    p_m: float = 0.1
    fitness: str = "min_gp_mean"
    x_star: tuple[float, ...] | None = None
    seed: int = 0
    feature_mask: tuple[int, ...] | None = None
    init: str = "fittest_observed"
    # Extensions beyond the plain algorithm; both default off.
    elitism: bool = False
    dedupe: bool = False

    def __post_init__(self):
        if self.k < 2 or self.k % 2 != 0:
            raise ConfigError(f"population size must be even and >= 2, got {self.k}")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if not (self.a > 0 and self.b >= 0):
            raise ConfigError(f"selection weights need a > 0, b >= 0, got a={self.a}, b={self.b}")
        for name in ("p_c", "p_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.fitness not in FITNESS_MODES:
            raise ConfigError(f"fitness must be one of {FITNESS_MODES}, got {self.fitness!r}")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}, got {self.init!r}")


@dataclass
class GAResult:
    """Final population with fitness, the best member seen, and telemetry.

    ``best`` is the fittest compound evaluated during the whole run;
    ``final_fitness`` describes the last generation only.
    """

    final_population: list[Fingerprint]
    final_fitness: np.ndarray
    best: Fingerprint
    best_fitness: float
    feature_frequency: np.ndarray
    history: list[float] = field(default_factory=list)


def fitness(model: FittedModel, candidate: Fingerprint, config: GAConfig) -> float:
    """Model-derived fitness; all-zero candidates score -inf."""
    if candidate.is_zero:
        return -np.inf
    if config.fitness == "top_class_prob":
        if model.data.p > 0 and config.x_star is None:
            raise ConfigError("top_class_prob fitness needs x_star in the GA config")
        probs = class_probabilities(model, candidate, config.x_star)
        return float(probs[-1])
    mean, _ = posterior_u(model, candidate)
    return -mean


def ranks_strictly_below(fitnesses: np.ndarray) -> np.ndarray:
    """rho_r = number of members with fitness strictly below member r (ties share)."""
    f = np.asarray(fitnesses, dtype=float)
    return np.array([int(np.sum(f < fr)) for fr in f])


def selection_step(
    population: list[int], fitnesses: np.ndarray, config: GAConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Sample k members with replacement, weight a + b * rank."""
    weights = config.a + config.b * ranks_strictly_below(fitnesses)
    cum = np.cumsum(weights / weights.sum())
    draws = rng.random(len(population))
    picks = np.searchsorted(cum, draws, side="right")
    return [population[int(i)] for i in picks]


def crossover_pair(x: int, y: int, cut: int) -> tuple[int, int]:
    """Swap all bit positions strictly above ``cut`` (1-based feature index)."""
    keep = (1 << cut) - 1
    swap = ~keep
    return (x & keep) | (y & swap), (y & keep) | (x & swap)


def crossover_step(
    population: list[int], kappa: int, config: GAConfig, rng: np.random.Generator
) -> list[int]:
    """Per adjacent pair: with probability p_c cut at lambda ~ U{1..kappa}."""
    out = list(population)
    for r in range(0, len(out) - 1, 2):
        if rng.random() < config.p_c:
            cut = int(rng.integers(1, kappa + 1))
            out[r], out[r + 1] = crossover_pair(out[r], out[r + 1], cut)
    return out


def mutation_step(
    population: list[int], mutable: np.ndarray, config: GAConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Per member: with probability p_m flip one uniformly-chosen mutable bit."""
    out = list(population)
    for r in range(len(out)):
        if rng.random() < config.p_m:
            pos = int(mutable[rng.integers(0, len(mutable))])
            out[r] ^= 1 << pos
    return out


def _uniform_members(
    count: int, mutable: np.ndarray, rng: np.random.Generator
) -> list[int]:
    """Uniform over valid (nonzero) patterns on the mutable positions."""
    pop = []
    for _ in range(count):
        while True:
            bits = rng.integers(0, 2, size=len(mutable))
            packed = 0
            for b, pos in zip(bits, mutable):
                packed |= int(b) << int(pos)
            if packed != 0:
                pop.append(packed)
                break
    return pop


def _initial_population(
    model: FittedModel, config: GAConfig, mutable: np.ndarray,
    rng: np.random.Generator, fit_of,
) -> list[int]:
    if config.init == "uniform":
        return _uniform_members(config.k, mutable, rng)
    # Fittest tested compounds, projected onto the mutable positions;
    # ties break on the packed value so the start is deterministic.
    mask = 0
    for pos in mutable:
        mask |= 1 << int(pos)
    seen: set[int] = set()
    scored = []
    for fp in model.data.space.compounds:
        packed = fp.packed & mask
        if packed == 0 or packed in seen:
            continue
        seen.add(packed)
        scored.append((-fit_of(packed), packed))
    scored.sort()
    pop = [packed for _, packed in scored[: config.k]]
    if len(pop) < config.k:
        pop.extend(_uniform_members(config.k - len(pop), mutable, rng))
    return pop


def run_ga(model: FittedModel, config: GAConfig) -> GAResult:
    """Evolve a population and report the fittest compound evaluated.

    Deterministic for a fixed (model, config): one Philox stream drives
    every draw in the documented order.
    """
    kappa = model.data.space.kappa
    if config.feature_mask is not None:
        mutable = np.unique(np.asarray(config.feature_mask, dtype=int))
        if len(mutable) == 0 or mutable[0] < 0 or mutable[-1] >= kappa:
            raise ConfigError(f"feature_mask must hold indices in 0..{kappa - 1}")
    else:
        mutable = np.arange(kappa)

    rng = np.random.Generator(np.random.Philox(config.seed))
    cache: dict[int, float] = {}

    def fit_of(packed: int) -> float:
        if packed not in cache:
            cache[packed] = fitness(model, Fingerprint(packed, kappa), config)
        return cache[packed]

    population = _initial_population(model, config, mutable, rng, fit_of)
    history: list[float] = []
    best_packed, best_fit = population[0], -np.inf
    for _ in range(config.generations):
        fits = np.array([fit_of(c) for c in population])
        gen_best = int(np.argmax(fits))
        history.append(float(fits[gen_best]))
        if fits[gen_best] > best_fit:
            best_packed, best_fit = population[gen_best], float(fits[gen_best])
        population = selection_step(population, fits, config, rng)
        population = crossover_step(population, kappa, config, rng)
        population = mutation_step(population, mutable, config, rng)
        if config.dedupe:
            population = _replace_duplicates(population, mutable, rng)
        if config.elitism:
            population[0] = best_packed

    fits = np.array([fit_of(c) for c in population])
    gen_best = int(np.argmax(fits))
    if fits[gen_best] > best_fit:
        best_packed, best_fit = population[gen_best], float(fits[gen_best])
    members = [Fingerprint(c, kappa) for c in population]
    freq = np.mean([fp.to_array() for fp in members], axis=0)
    return GAResult(
        final_population=members,
        final_fitness=fits,
        best=Fingerprint(best_packed, kappa),
        best_fitness=best_fit,
        feature_frequency=freq,
        history=history,
    )


def _replace_duplicates(
    population: list[int], mutable: np.ndarray, rng: np.random.Generator
) -> list[int]:
    seen: set[int] = set()
    out = []
    for c in population:
        if c in seen:
            out.extend(_initial_population(1, mutable, rng))
        else:
            seen.add(c)
            out.append(c)
    return out


def exhaustive_best(
    model: FittedModel, config: GAConfig
) -> tuple[Fingerprint, float, np.ndarray]:
    """Score every nonzero fingerprint (only sensible for small kappa).

    Returns (best compound, best fitness, all fitnesses indexed by
    packed value - 1).
    """
    kappa = model.data.space.kappa
    if kappa > 20:
        raise ConfigError(f"exhaustive search over kappa={kappa} is not tractable")
    fits = np.array(
        [fitness(model, Fingerprint(c, kappa), config) for c in range(1, 1 << kappa)]
    )
    best_idx = int(np.argmax(fits))
    return Fingerprint(best_idx + 1, kappa), float(fits[best_idx]), fits
