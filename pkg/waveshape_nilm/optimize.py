"""
Differential evolution for classifier model selection.

Two acceptance rules: classic DE adopts each mutant gene with a fixed
recombination rate RR; enhanced DE (EDE) adopts it with probability
of_x / (of_x + of_u), the mutant's fitness relative to its parent.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import ArgumentError, ConfigError, InvariantViolation, NilmError
from .learn import Algorithm, ClassifierParams, SplitDataset, accuracy, train_model
from .utils import derive_seed

logger = logging.getLogger(__name__)

OF_FLOOR = 1e-12
STALL_TOL = 1e-12

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class GeneSpec:
    name: str
    kind: str = "real"
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("int", "real"):
            raise ArgumentError(f"Gene {self.name}: kind must be 'int' or 'real', got {self.kind!r}")
        if not self.lo < self.hi:
            raise ArgumentError(f"Gene {self.name}: bounds ({self.lo}, {self.hi}) need lo < hi")

    @property
    def is_integer(self) -> bool:
        return self.kind == "int"


def bounds(specs: Sequence[GeneSpec]) -> Tuple[np.ndarray, np.ndarray]:
    return np.array([s.lo for s in specs], dtype=float), np.array([s.hi for s in specs], dtype=float)


def clamp(X: np.ndarray, specs: Sequence[GeneSpec]) -> np.ndarray:
    """Clip genes to their bounds and round integer genes to the nearest integer."""
    lo, hi = bounds(specs)
    X = np.clip(X, lo, hi)
    integer = np.array([s.is_integer for s in specs])
    if integer.any():
        X[..., integer] = np.clip(np.rint(X[..., integer]), lo[integer], hi[integer])
    return X


@dataclass
class Population:
    """M individuals x G genes with their objective values."""

    X: np.ndarray
    of: np.ndarray
    specs: Tuple[GeneSpec, ...]
    generation: int = 0

    @property
    def size(self) -> int:
        return len(self.X)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.of))

    @property
    def best_of(self) -> float:
        return float(self.of[self.best_index])

    @property
    def best_genes(self) -> np.ndarray:
        return self.X[self.best_index].copy()


class DeConfig(BaseModel):
    """Differential evolution settings (defaults: 30 individuals, 50 iterations, F = 0.5)."""

    population: int = Field(default=30, ge=1)
    f_scale: float = Field(default=0.5, gt=0.0)
    mode: Literal["ede", "classic"] = "ede"
    rr: float = Field(default=0.9, ge=0.0, le=1.0)
    max_iters: int = Field(default=50, ge=0)
    of_threshold: Optional[float] = None
    stall_iters: int = Field(default=10, ge=1)
    survivor: Literal["replace", "greedy"] = "replace"
    # Objective calls allowed in one run; None means population * (max_iters + 1)
    max_evaluations: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @property
    def evaluation_budget(self) -> int:
        if self.max_evaluations is not None:
            return self.max_evaluations
        return self.population * (self.max_iters + 1)


@dataclass
class DeResult:
    best_genes: np.ndarray
    best_of: float
    history: List[Dict[str, float]]
    n_evaluations: int
    stop_reason: str
    specs: Tuple[GeneSpec, ...] = field(default_factory=tuple)

    def genes_by_name(self) -> Dict[str, float]:
        return {
            s.name: (int(g) if s.is_integer else float(g)) for s, g in zip(self.specs, self.best_genes)
        }


def init_population(specs: Sequence[GeneSpec], size: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = bounds(specs)
    return clamp(lo + rng.random((size, len(specs))) * (hi - lo), specs)


def mutate(pop: Population, f_scale: float, rng: np.random.Generator) -> np.ndarray:
    """
    Mutant matrix U with U_v = X_a + F * (X_b - X_c) for distinct a, b, c != v.

    Genes are clamped to bounds and integer genes rounded.
    """
    m = pop.size
    if m < 4:
        raise ConfigError(f"Mutation needs at least 4 individuals, got {m}")
    if f_scale <= 0:
        raise ArgumentError(f"F must be positive, got {f_scale}")
    U = np.empty_like(pop.X)
    for v in range(m):
        others = rng.choice(m - 1, size=3, replace=False)
        a, b, c = others + (others >= v)
        U[v] = pop.X[a] + f_scale * (pop.X[b] - pop.X[c])
    return clamp(U, pop.specs)


def ede_fitness(of_u: float, of_x: float) -> Tuple[float, float]:
    """
    Relative fitness of a mutant and its parent.

    fit_u = of_x / (of_x + of_u) and fit_x = 1 - fit_u; objective values are
    floored at 1e-12 and an infinite value gets zero fitness.
    """
    if math.isnan(of_u) or math.isnan(of_x) or of_u < 0 or of_x < 0:
        raise ArgumentError(f"Objective values must be non-negative, got {of_u}, {of_x}")
    of_u, of_x = max(of_u, OF_FLOOR), max(of_x, OF_FLOOR)
    if math.isinf(of_u) and math.isinf(of_x):
        fit_u = 0.5
    elif math.isinf(of_u):
        fit_u = 0.0
    elif math.isinf(of_x):
        fit_u = 1.0
    else:
        fit_u = of_x / (of_x + of_u)
    return fit_u, 1.0 - fit_u


def select(
    pop: Population,
    U: np.ndarray,
    of_u: Optional[Sequence[float]],
    rng: np.random.Generator,
    config: DeConfig,
    evaluate: Optional[Callable[[np.ndarray], Optional[float]]] = None,
) -> Population:
    """
    Build the next generation gene by gene.

    Each gene of individual v takes the mutant value when rand < acceptance
    (EDE fitness of the mutant, or RR in classic mode). A changed individual
    gets the mutant's objective value when it took every gene, otherwise it
    is evaluated; classic mode may pass of_u=None and evaluate every trial.
    An evaluate returning None (budget spent) leaves the parent in place.

    With the replace rule every trial is adopted and the previous best is
    restored if it was lost; the greedy rule adopts a trial only if not worse.
    """
    if U.shape != pop.X.shape:
        raise ArgumentError("Mutant matrix does not match the population")
    if of_u is not None:
        of_u = np.asarray(of_u, dtype=float)
        if of_u.shape != pop.of.shape:
            raise ArgumentError("Mutant objective values do not match the population")
    elif config.mode == "ede":
        raise ArgumentError("EDE selection needs the mutants' objective values")

    X = pop.X.copy()
    of = pop.of.copy()
    for v in range(pop.size):
        if config.mode == "ede":
            acceptance = ede_fitness(of_u[v], pop.of[v])[0]
        else:
            acceptance = config.rr
        take = rng.random(X.shape[1]) < acceptance
        if not take.any():
            continue
        trial = np.where(take, U[v], pop.X[v])
        if take.all() and of_u is not None:
            of_trial = float(of_u[v])
        elif evaluate is None:
            raise ArgumentError("A changed individual needs an objective to evaluate it")
        else:
            of_trial = evaluate(trial)
            if of_trial is None:
                continue
        if config.survivor == "replace" or of_trial <= pop.of[v]:
            X[v], of[v] = trial, of_trial

    if config.survivor == "replace" and of.min() > pop.best_of:
        elite = pop.best_index
        X[elite], of[elite] = pop.X[elite], pop.of[elite]
    return Population(X=X, of=of, specs=pop.specs, generation=pop.generation + 1)


def _record(pop: Population) -> Dict[str, float]:
    finite = pop.of[np.isfinite(pop.of)]
    record = {
        "generation": pop.generation,
        "best_of": pop.best_of,
        "mean_of": float(finite.mean()) if len(finite) else math.inf,
    }
    for spec, gene in zip(pop.specs, pop.best_genes):
        record[spec.name] = float(gene)
    return record


def run_de(objective: Objective, specs: Sequence[GeneSpec], config: Optional[DeConfig] = None) -> DeResult:
    """
    Minimize an objective over a box of genes.

    Stops when the best OF drops below of_threshold, when it stays unchanged
    (within 1e-12) for stall_iters generations, after max_iters generations,
    or when the evaluation budget cannot cover another generation's mutants.
    Repeated gene vectors are served from a cache and do not count against
    the budget. Classic mode evaluates only the changed trials; EDE mode
    evaluates every mutant, and mixed trials of several genes only while
    budget remains.

    Args:
        objective: genes -> objective value; non-finite results count as +inf
        specs: gene bounds and integrality
        config: DE settings

    Returns:
        DeResult with the least-OF individual and per-generation history
    """
    config = config or DeConfig()
    specs = tuple(specs)
    if not specs:
        raise ArgumentError("run_de needs at least one gene")
    budget = config.evaluation_budget
    if budget < config.population:
        raise ConfigError(f"Evaluation budget {budget} cannot cover a population of {config.population}")
    rng = np.random.default_rng(config.seed)
    cache: Dict[Tuple[float, ...], float] = {}

    def evaluate(genes: np.ndarray) -> float:
        key = tuple(float(g) for g in genes)
        if key not in cache:
            value = float(objective(np.array(key)))
            cache[key] = value if math.isfinite(value) else math.inf
        return cache[key]

    def evaluate_within_budget(genes: np.ndarray) -> Optional[float]:
        key = tuple(float(g) for g in genes)
        if key not in cache and len(cache) >= budget:
            return None
        return evaluate(genes)

    X = init_population(specs, config.population, rng)
    pop = Population(X=X, of=np.array([evaluate(x) for x in X]), specs=specs)
    history = [_record(pop)]

    def below_threshold() -> bool:
        return config.of_threshold is not None and pop.best_of < config.of_threshold

    stop_reason = "max_iters"
    stall = 0
    if below_threshold():
        stop_reason = "threshold"
    else:
        for _ in range(config.max_iters):
            if len(cache) + config.population > budget:
                stop_reason = "budget"
                break
            previous = pop.best_of
            U = mutate(pop, config.f_scale, rng)
            of_u = None if config.mode == "classic" else np.array([evaluate(u) for u in U])
            pop = select(pop, U, of_u, rng, config, evaluate_within_budget)
            history.append(_record(pop))
            if history[-1]["best_of"] > history[-2]["best_of"]:
                raise InvariantViolation("Best objective increased between generations")
            if below_threshold():
                stop_reason = "threshold"
                break
            same = abs(pop.best_of - previous) <= STALL_TOL or pop.best_of == previous
            stall = stall + 1 if same else 0
            if stall >= config.stall_iters:
                stop_reason = "stall"
                break

    logger.info(
        f"DE stopped ({stop_reason}) at generation {pop.generation}: best OF {pop.best_of:.6g}, "
        f"{len(cache)} evaluations"
    )
    return DeResult(
        best_genes=pop.best_genes,
        best_of=pop.best_of,
        history=history,
        n_evaluations=len(cache),
        stop_reason=stop_reason,
        specs=specs,
    )


def history_frame(result: DeResult) -> pd.DataFrame:
    """Generation-wise best OF, mean OF and best genes."""
    return pd.DataFrame(result.history)


def export_history_csv(result: DeResult, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history_frame(result).to_csv(path, index=False)


def gene_specs_for(algorithm: Union[Algorithm, str]) -> Tuple[GeneSpec, ...]:
    """Search space of a classifier: hidden neurons, momentum constant, or log-scale SVM width and box."""
    algorithm = Algorithm(algorithm)
    n_h = GeneSpec("n_h", "int", 2, 40)
    if algorithm == Algorithm.ANN:
        return (n_h,)
    if algorithm == Algorithm.ANN_EA:
        return (n_h, GeneSpec("ea_m", "real", 0.01, 0.99))
    if algorithm == Algorithm.SVM:
        return (GeneSpec("log10_gamma", "real", -3.0, 2.0), GeneSpec("log10_cbox", "real", -1.0, 3.0))
    raise ArgumentError(f"{algorithm.value} has no tunable genes")


def apply_genes(params: ClassifierParams, specs: Sequence[GeneSpec], genes: Sequence[float]) -> ClassifierParams:
    """Classifier params with gene values substituted."""
    update = {}
    for spec, gene in zip(specs, genes):
        if spec.name == "n_h":
            update["n_h"] = int(round(gene))
        elif spec.name == "ea_m":
            update["ea_m"] = float(gene)
        elif spec.name == "log10_gamma":
            update["svm_gamma"] = float(10.0 ** gene)
        elif spec.name == "log10_cbox":
            update["svm_cbox"] = float(10.0 ** gene)
        else:
            raise ArgumentError(f"Unknown gene {spec.name!r}")
    return params.model_copy(update=update)


@dataclass
class ModelSelection:
    algorithm: Algorithm
    params: ClassifierParams
    result: DeResult

    @property
    def cv_error(self) -> float:
        return self.result.best_of


def cv_error(
    algorithm: Union[Algorithm, str],
    split: SplitDataset,
    params: ClassifierParams,
    seed: int,
) -> float:
    """1 - CV accuracy of a classifier trained with params; training failures count as +inf."""
    try:
        model = train_model(algorithm, split, params, seed)
    except NilmError as e:
        logger.debug(f"Candidate {params} failed: {e}")
        return math.inf
    return 1.0 - accuracy(model, split.cv)


def model_select(
    algorithm: Union[Algorithm, str],
    split: SplitDataset,
    config: Optional[DeConfig] = None,
    params: Optional[ClassifierParams] = None,
) -> ModelSelection:
    """
    Tune classifier hyperparameters by DE on the cross-validation error.

    Every candidate is trained with the same derived seed, so the objective
    is a deterministic function of the genes.

    Args:
        algorithm: ANN, ANN+EA or SVM
        split: data with a non-empty cv set
        config: DE settings
        params: base classifier params the genes override

    Returns:
        ModelSelection with tuned params and the DE result
    """
    algorithm = Algorithm(algorithm)
    config = config or DeConfig()
    params = params or ClassifierParams()
    if len(split.cv) == 0:
        raise ArgumentError("Model selection needs a non-empty cross-validation set")
    specs = gene_specs_for(algorithm)
    train_seed = derive_seed(config.seed, "model-select", algorithm.value)

    def objective(genes: np.ndarray) -> float:
        return cv_error(algorithm, split, apply_genes(params, specs, genes), train_seed)

    result = run_de(objective, specs, config)
    tuned = apply_genes(params, specs, result.best_genes)
    logger.info(f"{algorithm.value} model selection: {result.genes_by_name()} (CV error {result.best_of:.4f})")
    return ModelSelection(algorithm=algorithm, params=tuned, result=result)
