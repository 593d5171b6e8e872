"""Real-coded genetic algorithm that tunes a controller's trapezoids.

A chromosome holds four genes per fuzzy term, laid out by variable order in
the knowledge base, then term order, then p1..p4. With rule-consequent
tuning on, it also carries one integer gene per rule: the index of the
consequent term in the output variable.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import TrainingView
from .files import atomic_write_text
from .inference import DEFAULT_SAMPLES, CompiledController
from .model import Clause, FuzzyController, FuzzyTerm, FuzzyVariable, Rule, TrapezoidShape
from .numfmt import format_number


@dataclass(frozen=True, eq=False)
class Chromosome:
    genes: np.ndarray
    consequents: np.ndarray | None = None

    def __len__(self):
        return len(self.genes)

    def copy(self) -> "Chromosome":
        return Chromosome(self.genes.copy(), None if self.consequents is None else self.consequents.copy())

    def key(self) -> bytes:
        cons = b"" if self.consequents is None else self.consequents.tobytes()
        return self.genes.tobytes() + b"|" + cons

    def __eq__(self, other):
        if not isinstance(other, Chromosome):
            return NotImplemented
        if (self.consequents is None) != (other.consequents is None):
            return False
        same_cons = self.consequents is None or np.array_equal(self.consequents, other.consequents)
        return np.array_equal(self.genes, other.genes) and same_cons


@dataclass(frozen=True, eq=False)
class GeneLayout:
    """Per-gene domain bounds taken from a template controller."""

    lower: np.ndarray
    upper: np.ndarray
    n_out_terms: int = 0
    frozen: np.ndarray | None = None  # genes mutation must leave alone

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @classmethod
    def of(cls, template: FuzzyController, pin_edges: bool = False) -> "GeneLayout":
        """Bounds for ``template``'s genes.

        With ``pin_edges`` the genes that sit exactly on a domain bound in the
        template (shoulders) are frozen, so tuning never opens a gap at the
        edge of a domain where no term fires.
        """
        lo, hi = [], []
        for var in template.variables:
            lo.extend([var.domain_left] * 4 * len(var.terms))
            hi.extend([var.domain_right] * 4 * len(var.terms))
        lo, hi = np.array(lo), np.array(hi)
        frozen = None
        if pin_edges:
            genes = encode(template).genes
            frozen = (genes == lo) | (genes == hi)
        return cls(lo, hi, len(template.output.terms), frozen)


@dataclass(frozen=True)
class EvolutionConfig:
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    generations: int = 10000
    population_size: int = 50
    mutation_sigma: float = 0.05
    tournament_size: int = 2
    elite_count: int = 1
    seed: int = 0
    tune_rule_consequents: bool = False
    pin_domain_edges: bool = True
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        problems = []
        if not 0.0 <= self.crossover_rate <= 1.0:
            problems.append("crossover_rate must be in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            problems.append("mutation_rate must be in [0, 1]")
        if self.generations < 0:
            problems.append("generations must be >= 0")
        if self.population_size < 2:
            problems.append("population_size must be >= 2")
        if not 0 <= self.elite_count < self.population_size:
            problems.append("elite_count must be in [0, population_size)")
        if self.tournament_size < 1:
            problems.append("tournament_size must be >= 1")
        if self.mutation_sigma < 0:
            problems.append("mutation_sigma must be >= 0")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must be an unsigned 64-bit integer")
        if self.samples < 1:
            problems.append("samples must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))


def encode(fc: FuzzyController, with_consequents: bool = False) -> Chromosome:
    genes = np.array([p for var in fc.variables for term in var.terms for p in term.shape.params], dtype=float)
    cons = None
    if with_consequents:
        index = {t: i for i, t in enumerate(fc.output.term_names)}
        cons = np.array([index[r.consequent.term] for r in fc.rules], dtype=np.int64)
    return Chromosome(genes, cons)


def repair(genes: np.ndarray, layout: GeneLayout) -> np.ndarray:
    """Clamp every gene into its domain, then sort each group of four."""
    clamped = np.clip(genes, layout.lower, layout.upper)
    return np.sort(clamped.reshape(-1, 4), axis=1).reshape(-1)


def decode(c: Chromosome, template: FuzzyController) -> FuzzyController:
    """Template with repaired trapezoids (and consequents, if carried) swapped in."""
    layout = GeneLayout.of(template)
    if len(c.genes) != len(layout.lower):
        raise ValueError(f"chromosome has {len(c.genes)} genes, template needs {len(layout.lower)}")
    params = repair(np.asarray(c.genes, dtype=float), layout).reshape(-1, 4)
    variables = []
    row = 0
    for var in template.variables:
        terms = []
        for term in var.terms:
            terms.append(FuzzyTerm(term.name, TrapezoidShape(*params[row]), term.hedge))
            row += 1
        variables.append(FuzzyVariable(var.name, var.kind, var.domain_left, var.domain_right, tuple(terms), var.scale))
    rules = template.rules
    if c.consequents is not None:
        if len(c.consequents) != len(rules):
            raise ValueError(f"chromosome has {len(c.consequents)} consequent genes, template has {len(rules)} rules")
        names = template.output.term_names
        rules = tuple(
            Rule(r.name, r.antecedent, Clause(r.consequent.variable, names[int(k)]), r.connector, r.operator, r.weight)
            for r, k in zip(rules, c.consequents)
        )
    return FuzzyController(tuple(variables), rules, template.settings, template.name, template.ip)


def crossover(a: Chromosome, b: Chromosome, rate: float, rng: np.random.Generator) -> tuple[Chromosome, Chromosome]:
    """Whole-arithmetic blend with one mixing weight per pair.

    Consequent genes, when present, are swapped position-wise with
    probability one half.
    """
    if len(a) != len(b):
        raise ValueError("parents differ in length")
    if rng.random() >= rate:
        return a.copy(), b.copy()
    alpha = rng.random()
    lo = np.minimum(a.genes, b.genes)
    hi = np.maximum(a.genes, b.genes)
    diff = a.genes - b.genes
    # b + alpha*(a - b) is exact when a == b; the clip absorbs rounding drift
    c1 = np.clip(b.genes + alpha * diff, lo, hi)
    c2 = np.clip(a.genes - alpha * diff, lo, hi)
    k1 = k2 = None
    if a.consequents is not None and b.consequents is not None:
        swap = rng.random(len(a.consequents)) < 0.5
        k1 = np.where(swap, b.consequents, a.consequents)
        k2 = np.where(swap, a.consequents, b.consequents)
    return Chromosome(c1, k1), Chromosome(c2, k2)


def mutate(c: Chromosome, rate: float, sigma: float, rng: np.random.Generator, layout: GeneLayout) -> Chromosome:
    """Gaussian perturbation of each gene with probability ``rate``.

    The noise scale is ``sigma`` times the owning domain's width; results are
    clamped back into the domain. Consequent genes are resampled uniformly
    with the same probability.
    """
    hit = rng.random(len(c.genes)) < rate
    if layout.frozen is not None:
        hit &= ~layout.frozen
    noise = rng.standard_normal(len(c.genes)) * (sigma * layout.width)
    genes = np.where(hit, np.clip(c.genes + noise, layout.lower, layout.upper), c.genes)
    cons = c.consequents
    if cons is not None:
        flip = rng.random(len(cons)) < rate
        draws = rng.integers(0, layout.n_out_terms, len(cons))
        cons = np.where(flip, draws, cons)
    return Chromosome(genes, cons)


def _mse(pred: np.ndarray, target: np.ndarray) -> float:
    err = pred - target
    return float(np.mean(err * err))


def fitness(fc: FuzzyController, view: TrainingView, samples: int = DEFAULT_SAMPLES) -> float:
    """Mean squared error of the controller's predictions on ``view``."""
    if len(view) == 0:
        raise ValueError("cannot score a controller on an empty training view")
    pred = CompiledController(fc, view.input_names).predict(view.X, samples)
    return _mse(pred, view.y)


def perturb_controller(fc: FuzzyController, sigma: float, seed: int) -> FuzzyController:
    """Nudge every interior trapezoid parameter by Gaussian noise, then repair.

    Parameters sitting exactly on a domain bound (shoulders such as
    ``[0, 0, 0.4, 0.6]``) stay put, so a controller whose terms cover the
    whole domain still covers it afterwards.
    """
    rng = np.random.default_rng(seed)
    return decode(mutate(encode(fc), 1.0, sigma, rng, GeneLayout.of(fc, pin_edges=True)), fc)


@dataclass
class EvolutionReport:
    best: FuzzyController
    best_history: list[float]
    mean_history: list[float]
    final_mse: float
    seed: int
    config: EvolutionConfig
    best_chromosome: Chromosome = field(repr=False, default=None)

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "best_mse", "mean_mse"])
        for g, (b, m) in enumerate(zip(self.best_history, self.mean_history)):
            w.writerow([g, format_number(b), format_number(m)])
        return buf.getvalue()

    def write_history(self, path) -> None:
        atomic_write_text(path, self.history_csv())

    def config_dict(self) -> dict:
        return asdict(self.config)


class _Scorer:
    def __init__(self, template: FuzzyController, view: TrainingView, samples: int):
        self.compiled = CompiledController(template, view.input_names)
        self.X = self.compiled.clamp(view.X)
        self.y = view.y
        self.samples = samples

    def __call__(self, c: Chromosome) -> float:
        pred = self.compiled.predict(self.X, self.samples, params=c.genes, consequents=c.consequents)
        return _mse(pred, self.y)


def _tournament(fit: np.ndarray, size: int, rng: np.random.Generator) -> int:
    contenders = rng.integers(0, len(fit), size)
    # lowest error wins; ties go to the lower index
    return int(min(contenders, key=lambda i: (fit[i], i)))


def evolve(template: FuzzyController, view: TrainingView, cfg: EvolutionConfig = EvolutionConfig(),
           progress=None) -> EvolutionReport:
    """Generational GA with tournament selection and elitism.

    All randomness comes from one generator seeded with ``cfg.seed`` and is
    drawn only while breeding, never while scoring, so the result is a pure
    function of the template, the view and the config.
    """
    if len(view) == 0:
        raise ValueError("cannot evolve against an empty training view")
    rng = np.random.default_rng(cfg.seed)
    layout = GeneLayout.of(template, cfg.pin_domain_edges)
    score = _Scorer(template, view, cfg.samples)

    seed_chrom = encode(template, cfg.tune_rule_consequents)
    seed_chrom = Chromosome(repair(seed_chrom.genes, layout), seed_chrom.consequents)
    population = [seed_chrom]
    for _ in range(cfg.population_size - 1):
        m = mutate(seed_chrom, cfg.mutation_rate, cfg.mutation_sigma, rng, layout)
        population.append(Chromosome(repair(m.genes, layout), m.consequents))

    cache: dict[bytes, float] = {}

    def evaluate(pop: Sequence[Chromosome]) -> np.ndarray:
        out = np.empty(len(pop))
        for i, c in enumerate(pop):
            k = c.key()
            if k not in cache:
                cache[k] = score(c)
            out[i] = cache[k]
        return out

    fit = evaluate(population)
    best_hist = [float(fit.min())]
    mean_hist = [float(fit.mean())]
    n_children = cfg.population_size - cfg.elite_count

    for gen in range(1, cfg.generations + 1):
        order = sorted(range(len(population)), key=lambda i: (fit[i], i))
        elites = [population[i] for i in order[: cfg.elite_count]]
        children: list[Chromosome] = []
        while len(children) < n_children:
            p1 = population[_tournament(fit, cfg.tournament_size, rng)]
            p2 = population[_tournament(fit, cfg.tournament_size, rng)]
            for child in crossover(p1, p2, cfg.crossover_rate, rng):
                child = mutate(child, cfg.mutation_rate, cfg.mutation_sigma, rng, layout)
                children.append(Chromosome(repair(child.genes, layout), child.consequents))
        population = elites + children[:n_children]
        fit = evaluate(population)
        best_hist.append(float(fit.min()))
        mean_hist.append(float(fit.mean()))
        if len(cache) > 4 * cfg.population_size:
            live = {c.key() for c in population}
            cache = {k: v for k, v in cache.items() if k in live}
        if progress is not None:
            progress(gen, best_hist[-1], mean_hist[-1])

    best_i = min(range(len(population)), key=lambda i: (fit[i], i))
    best = population[best_i]
    return EvolutionReport(
        best=decode(best, template),
        best_history=best_hist,
        mean_history=mean_hist,
        final_mse=float(fit[best_i]),
        seed=cfg.seed,
        config=cfg,
        best_chromosome=best,
    )
