"""Optimization stack for the angle searches and constraint systems.

Three layers, used in sequence by the solvers: a global differential
evolution pass over the periodic angle landscape, a derivative-free simplex
polish of the best individual, and, where a residual system must be driven
to zero rather than merely minimized, a damped Gauss-Newton refinement.

The DE is written out rather than delegated: the required population rule
(15 per sender site, 1000 per sender site under stress), constant-vs-dithered
mutation factors up to 1.9, and warm-started individuals do not map onto the
knobs of the available library implementations.  It is the plain rand/1/bin
scheme: mutant = a + F (b - c), binomial crossover with one forced
coordinate, greedy selection.  All randomness flows from one counter-based
generator per run, so runs are reproducible from the recorded seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import dual_annealing, minimize

from .states import AsymptoticPTZ
from .transfer import TransferTensor

__all__ = [
    "ResidualForm",
    "DEConfig",
    "ObjectiveSpec",
    "DEResult",
    "PolishResult",
    "RefineResult",
    "CrossValidationReport",
    "NoConvergenceError",
    "residual_S_T",
    "constrained_entries",
    "differential_evolution",
    "local_polish",
    "exact_root_refine",
    "cross_validate_global",
]


class NoConvergenceError(RuntimeError):
    """Refinement diverged; carries the best iterate seen."""

    def __init__(self, message: str, best_x: np.ndarray, best_residual: float):
        super().__init__(message)
        self.best_x = best_x
        self.best_residual = best_residual


class ResidualForm(str, Enum):
    SUM = "sum"
    MAX = "max"


@dataclass(frozen=True)
class DEConfig:
    """Differential-evolution hyperparameters.

    population_size defaults to 15 per sender site in the solvers; the stress
    profile (1000 per sender site, F = 1.9, CR = 0.3) trades speed for basin
    coverage on rugged landscapes.
    """

    population_size: int
    max_generations: int
    crossover_probability: float = 0.7
    mutation_range: Tuple[float, float] = (0.5, 1.0)
    spread_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 4:
            raise ValueError("rand/1/bin needs a population of at least 4")
        if not 0 < self.crossover_probability <= 1:
            raise ValueError(f"crossover probability {self.crossover_probability} outside (0, 1]")
        lo, hi = self.mutation_range
        if not 0 < lo <= hi <= 2:
            raise ValueError(f"mutation range {self.mutation_range} not within (0, 2]")
        if self.max_generations < 1:
            raise ValueError("need at least one generation")

    @classmethod
    def standard(cls, n_sender: int, max_generations: int, seed: int = 0, **kw) -> "DEConfig":
        return cls(population_size=15 * n_sender, max_generations=max_generations,
                   seed=seed, **kw)

    @classmethod
    def stress(cls, n_sender: int, max_generations: int, seed: int = 0, **kw) -> "DEConfig":
        return cls(population_size=1000 * n_sender, max_generations=max_generations,
                   crossover_probability=0.3, mutation_range=(1.9, 1.9),
                   seed=seed, **kw)


@dataclass(frozen=True)
class ObjectiveSpec:
    """What the angle search optimizes and over which box."""

    residual_form: ResidualForm = ResidualForm.MAX
    w1: float = 1.0
    w2: float = 1.0
    reference: Optional[AsymptoticPTZ] = None
    angle_bounds: Tuple[float, float] = (-np.pi, np.pi)

    def __post_init__(self) -> None:
        if self.w1 <= 0 or self.w2 <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "residual_form", ResidualForm(self.residual_form))


def constrained_entries(tensor: TransferTensor) -> np.ndarray:
    """Entries coupling into receiver row/column 1 of the transfer tensor.

    The union of T[0, :, :, :] and T[1:, 0, :, :]; by Hermitian symmetry this
    covers both index placements of the first-row constraint.
    """
    e = tensor.entries
    return np.concatenate([e[0, :, :, :].ravel(), e[1:, 0, :, :].ravel()])


def residual_S_T(tensor: TransferTensor, form: ResidualForm = ResidualForm.MAX) -> float:
    """Aggregate magnitude of the constrained tensor entries."""
    vals = np.abs(constrained_entries(tensor))
    if vals.size == 0:
        return 0.0
    form = ResidualForm(form)
    return float(vals.sum()) if form is ResidualForm.SUM else float(vals.max())


@dataclass
class DEResult:
    best_x: np.ndarray
    best_value: float
    history: np.ndarray  # rows: (generation, best, mean, spread)
    n_generations: int
    n_evaluations: int
    converged: bool
    seed: int


def _distinct_triples(rng: np.random.Generator, pop_size: int) -> np.ndarray:
    """For each individual, three mutually distinct partner indices != self."""
    base = np.arange(pop_size)
    picks = rng.integers(0, pop_size - 1, size=(pop_size, 3))
    picks += picks >= base[:, None]
    while True:
        clash = (
            (picks[:, 0] == picks[:, 1])
            | (picks[:, 0] == picks[:, 2])
            | (picks[:, 1] == picks[:, 2])
        )
        if not clash.any():
            return picks
        redraw = rng.integers(0, pop_size - 1, size=(int(clash.sum()), 3))
        redraw += redraw >= base[clash, None]
        picks[clash] = redraw


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[Tuple[float, float]],
    config: DEConfig,
    batch_objective: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    init_extra: Optional[Sequence[np.ndarray]] = None,
) -> DEResult:
    """rand/1/bin differential evolution over a box.

    batch_objective, if given, must map a (pop, dim) array to a length-pop
    value vector and agree with objective; it only removes Python-loop
    overhead.  init_extra individuals are clipped into the box and replace
    the first rows of the random initial population (warm starts).
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] == 0:
        raise ValueError("bounds must be a nonempty sequence of (low, high) pairs")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(hi <= lo):
        raise ValueError("each bound must satisfy low < high")
    dim = bounds.shape[0]
    pop_size = config.population_size
    rng = np.random.Generator(np.random.Philox(config.seed))

    def evaluate(points: np.ndarray) -> np.ndarray:
        if batch_objective is not None:
            return np.asarray(batch_objective(points), dtype=float)
        return np.array([objective(p) for p in points], dtype=float)

    pop = lo + rng.random((pop_size, dim)) * (hi - lo)
    if init_extra is not None:
        seeds = np.clip(np.asarray(list(init_extra), dtype=float), lo, hi)
        if seeds.size:
            pop[: min(len(seeds), pop_size)] = seeds[:pop_size]
    values = evaluate(pop)
    n_evaluations = pop_size
    history: List[Tuple[float, float, float, float]] = []
    converged = False

    for gen in range(config.max_generations):
        f = rng.uniform(*config.mutation_range)
        abc = _distinct_triples(rng, pop_size)
        mutants = pop[abc[:, 0]] + f * (pop[abc[:, 1]] - pop[abc[:, 2]])
        outside = (mutants < lo) | (mutants > hi)
        if outside.any():
            mutants[outside] = (lo + rng.random((pop_size, dim)) * (hi - lo))[outside]
        cross = rng.random((pop_size, dim)) < config.crossover_probability
        forced = rng.integers(0, dim, size=pop_size)
        cross[np.arange(pop_size), forced] = True
        trials = np.where(cross, mutants, pop)
        trial_values = evaluate(trials)
        n_evaluations += pop_size
        accept = trial_values <= values
        pop[accept] = trials[accept]
        values[accept] = trial_values[accept]
        spread = float(values.std())
        history.append((gen, float(values.min()), float(values.mean()), spread))
        if spread <= config.spread_tol:
            converged = True
            break

    best = int(np.argmin(values))
    return DEResult(
        best_x=pop[best].copy(),
        best_value=float(values[best]),
        history=np.array(history, dtype=float),
        n_generations=len(history),
        n_evaluations=n_evaluations,
        converged=converged,
        seed=config.seed,
    )


@dataclass
class PolishResult:
    x: np.ndarray
    value: float
    n_evaluations: int


def local_polish(
    objective: Callable[[np.ndarray], float],
    seed_point: np.ndarray,
    max_iterations: Optional[int] = None,
) -> PolishResult:
    """Simplex descent from the seed; never returns a worse point."""
    seed_point = np.asarray(seed_point, dtype=float)
    seed_value = float(objective(seed_point))
    options = {"xatol": 1e-12, "fatol": 1e-12}
    if max_iterations is not None:
        options["maxiter"] = max_iterations
    res = minimize(objective, seed_point, method="Nelder-Mead", options=options)
    if res.fun <= seed_value:
        return PolishResult(np.asarray(res.x, dtype=float), float(res.fun),
                            int(res.nfev) + 1)
    return PolishResult(seed_point, seed_value, int(res.nfev) + 1)


@dataclass
class RefineResult:
    x: np.ndarray
    residual_norm: float
    converged: bool
    n_iterations: int


def _jacobian(system: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
              n_residuals: int, h: float) -> np.ndarray:
    jac = np.empty((n_residuals, x.size))
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        jac[:, j] = (system(x + step) - system(x - step)) / (2 * h)
    return jac


def exact_root_refine(
    system: Callable[[np.ndarray], np.ndarray],
    seed: np.ndarray,
    tol: float = 1e-10,
    max_iterations: int = 100,
    fd_step: float = 1e-7,
) -> RefineResult:
    """Drive a real residual vector to zero near an approximate solution.

    Gauss-Newton steps via least squares (valid for square, over-, and
    underdetermined systems; a linear system is solved in one step), falling
    back to Levenberg-Marquardt damping when a plain step fails to improve.
    Ten consecutive iterations without improving the best seen residual is
    treated as divergence.
    """
    x = np.asarray(seed, dtype=float).copy()
    r = np.asarray(system(x), dtype=float)
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    best_x, best_norm = x.copy(), norm
    stall = 0
    for iteration in range(max_iterations):
        if norm < tol:
            return RefineResult(x, norm, True, iteration)
        jac = _jacobian(system, x, r.size, fd_step)
        step, *_ = np.linalg.lstsq(jac, r, rcond=None)
        candidate = x - step
        r_cand = np.asarray(system(candidate), dtype=float)
        cand_norm = float(np.max(np.abs(r_cand)))
        if not np.isfinite(cand_norm) or cand_norm >= norm:
            jtj = jac.T @ jac
            jtr = jac.T @ r
            mu = 1e-8 * max(float(np.trace(jtj)) / max(x.size, 1), 1e-30)
            improved = False
            for _ in range(25):
                try:
                    step = np.linalg.solve(jtj + mu * np.eye(x.size), jtr)
                except np.linalg.LinAlgError:
                    mu *= 10
                    continue
                candidate = x - step
                r_cand = np.asarray(system(candidate), dtype=float)
                cand_norm = float(np.max(np.abs(r_cand)))
                if np.isfinite(cand_norm) and cand_norm < norm:
                    improved = True
                    break
                mu *= 10
            if not improved:
                stall += 1
                if stall >= 10:
                    raise NoConvergenceError(
                        f"no residual decrease for {stall} consecutive iterations "
                        f"(best {best_norm:.3e})", best_x, best_norm)
                continue
        x, r, norm = candidate, r_cand, cand_norm
        if norm < best_norm:
            best_x, best_norm = x.copy(), norm
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                raise NoConvergenceError(
                    f"no residual decrease for {stall} consecutive iterations "
                    f"(best {best_norm:.3e})", best_x, best_norm)
    if best_norm < tol:
        return RefineResult(best_x, best_norm, True, max_iterations)
    return RefineResult(best_x, best_norm, False, max_iterations)


@dataclass
class CrossValidationReport:
    """Best values found by three independent global strategies."""

    de_value: float
    de_x: np.ndarray
    multistart_value: float
    multistart_x: np.ndarray
    annealing_value: float
    annealing_x: np.ndarray
    max_disagreement: float

    def values(self) -> Tuple[float, float, float]:
        return (self.de_value, self.multistart_value, self.annealing_value)


def cross_validate_global(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[Tuple[float, float]],
    config: DEConfig,
    multistart_samples: int = 200,
    multistart_polish_top: int = 5,
) -> CrossValidationReport:
    """Compare DE against multi-start search and simulated annealing.

    All three candidates get the same final simplex polish so the comparison
    measures basin-finding, not polish quality.  Diagnostic only: reports the
    maximal pairwise disagreement of the polished best values.
    """
    bounds = np.asarray(bounds, dtype=float)
    dim = bounds.shape[0]
    if dim > 12:
        raise ValueError(f"cross-validation capped at 12 dimensions, got {dim}")
    lo, hi = bounds[:, 0], bounds[:, 1]
    rng = np.random.Generator(np.random.Philox([config.seed, 0xC0DE]))

    de = differential_evolution(objective, bounds, config)
    de_polished = local_polish(objective, de.best_x)

    samples = lo + rng.random((multistart_samples, dim)) * (hi - lo)
    sample_values = np.array([objective(p) for p in samples])
    order = np.argsort(sample_values)[:multistart_polish_top]
    ms_best: Optional[PolishResult] = None
    for idx in order:
        candidate = local_polish(objective, samples[idx])
        if ms_best is None or candidate.value < ms_best.value:
            ms_best = candidate

    da = dual_annealing(
        objective, bounds=list(map(tuple, bounds)),
        seed=int(rng.integers(0, 2**31 - 1)), maxiter=300,
    )
    da_polished = local_polish(objective, np.asarray(da.x, dtype=float))

    vals = [de_polished.value, ms_best.value, da_polished.value]
    disagreement = float(max(vals) - min(vals))
    return CrossValidationReport(
        de_value=de_polished.value, de_x=de_polished.x,
        multistart_value=ms_best.value, multistart_x=ms_best.x,
        annealing_value=da_polished.value, annealing_x=da_polished.x,
        max_disagreement=disagreement,
    )
