"""Artificial Bee Colony minimizer with seeded, schedule-independent randomness.

Each generation runs an employed phase, an onlooker phase and at most one
scout replacement. Every random draw comes from a generator seeded by
``(seed, generation, phase, index)``, so results do not depend on whether
objective evaluations run serially or concurrently.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, EvaluationError

__all__ = [
    "AbcConfig",
    "FoodSource",
    "AbcHistory",
    "fitness",
    "substream",
    "init_population",
    "candidate_update",
    "onlooker_probabilities",
    "run",
    "run_campaign",
    "campaign_spread",
    "write_campaign",
]

PHASE_INIT = 0
PHASE_EMPLOYED = 1
PHASE_ONLOOKER = 2
PHASE_SCOUT = 3


@dataclass(frozen=True)
class AbcConfig:
    """Optimizer settings.

    Attributes
    ----------
    bounds : sequence of (lo, hi)
        Search box, one pair per dimension.
    colony_size : int
        Employed plus onlooker bees; there are ``colony_size // 2`` food
        sources.
    generations : int
    limit : float or None
        Trials without improvement before a source is abandoned. ``None``
        means ``SN * D``; ``math.inf`` disables scouts.
    seed : int
    positive_u : bool
        Draw the update step from [0, 1] instead of [-1, 1].
    cache : bool
        Reuse the objective value of exactly repeated positions (common once
        sources sit on a clamped bound). Valid for pure objectives only.
    """

    bounds: tuple = ((-5.0, 5.0), (-5.0, 5.0))
    colony_size: int = 50
    generations: int = 100
    limit: float = None
    seed: int = 0
    positive_u: bool = False
    cache: bool = True

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", b)
        if not b:
            raise DomainError("bounds must have at least one dimension")
        for lo, hi in b:
            if not lo <= hi:
                raise DomainError(f"lower bound {lo} exceeds upper bound {hi}")
        if self.colony_size < 4 or self.colony_size % 2:
            raise DomainError("colony_size must be an even integer >= 4")
        if self.generations < 1:
            raise DomainError("generations must be >= 1")
        if self.limit is not None and not self.limit >= 1:
            raise DomainError("limit must be >= 1")

    @property
    def SN(self):
        return self.colony_size // 2

    @property
    def D(self):
        return len(self.bounds)

    @property
    def trial_limit(self):
        return self.SN * self.D if self.limit is None else self.limit

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])


@dataclass
class FoodSource:
    position: np.ndarray
    objective_value: float
    fitness: float
    trial_count: int = 0


@dataclass
class AbcHistory:
    """Best objective and position after initialization and each generation.

    Row 0 is the initial population; row ``g`` follows generation ``g``.
    """

    best_objective: np.ndarray
    best_position: np.ndarray
    evaluations: int
    unique_evaluations: int
    scouts: int
    seed: int
    final_sources: list = field(default_factory=list)

    @property
    def best(self):
        return float(self.best_objective[-1])

    @property
    def best_x(self):
        return self.best_position[-1].copy()

    @property
    def generations(self):
        return len(self.best_objective) - 1

    def to_csv(self, path):
        D = self.best_position.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best_objective"] + [f"best_param_{j + 1}" for j in range(D)])
            for g, (f, x) in enumerate(zip(self.best_objective, self.best_position)):
                w.writerow([g, f"{f:.17g}"] + [f"{v:.17g}" for v in x])


def fitness(obj):
    """``1/(1+obj)`` for ``obj >= 0``, ``1 + |obj|`` otherwise."""
    obj = float(obj)
    return 1.0 / (1.0 + obj) if obj >= 0 else 1.0 + abs(obj)


def substream(seed, generation, phase, index):
    """Independent generator for one ``(generation, phase, index)`` slot."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), generation, phase, index]))


def _draw_u(rng, positive):
    return rng.uniform(0.0, 1.0) if positive else rng.uniform(-1.0, 1.0)


def candidate_update(i, k, j, positions, u, bounds):
    """Move source ``i`` along dimension ``j`` relative to partner ``k``.

    ``x_new[j] = x[i, j] + u (x[i, j] - x[k, j])``, clamped to the bounds.

    Parameters
    ----------
    u : float or numpy.random.Generator
        Step factor, or a generator to draw it from U[-1, 1].
    bounds : sequence of (lo, hi)
    """
    if k == i:
        raise DomainError("partner index must differ from the source index")
    positions = np.asarray(positions, dtype=float)
    if isinstance(u, np.random.Generator):
        u = _draw_u(u, False)
    x = positions[i].copy()
    lo, hi = bounds[j]
    x[j] = min(max(x[j] + u * (x[j] - positions[k, j]), lo), hi)
    return x


def onlooker_probabilities(fits):
    """Selection probabilities proportional to fitness."""
    f = np.asarray([s.fitness if isinstance(s, FoodSource) else s for s in fits], dtype=float)
    if f.size == 0:
        raise DomainError("need at least one source")
    return f / f.sum()


class _Evaluator:
    def __init__(self, objective, cache, executor):
        self.objective = objective
        self.cache = {} if cache else None
        self.map = map if executor is None else executor.map
        self.calls = 0
        self.unique = 0

    def __call__(self, points):
        self.calls += len(points)
        if self.cache is None:
            self.unique += len(points)
            return [self._check(v) for v in self.map(self.objective, points)]
        keys = [p.tobytes() for p in points]
        todo = {}
        for key, p in zip(keys, points):
            if key not in self.cache and key not in todo:
                todo[key] = p
        if todo:
            vals = self.map(self.objective, list(todo.values()))
            for key, v in zip(list(todo), vals):
                self.cache[key] = self._check(v)
            self.unique += len(todo)
        return [self.cache[key] for key in keys]

    @staticmethod
    def _check(v):
        v = float(v)
        if math.isnan(v):
            raise EvaluationError("objective returned NaN")
        return v


def _uniform(cfg, rng):
    return cfg.lower + rng.uniform(0.0, 1.0, cfg.D) * (cfg.upper - cfg.lower)


def init_population(cfg, objective=None, evaluate=None):
    """Seeded uniform initial sources with zero trial counts.

    ``objective`` may be omitted to obtain positions only (values NaN).
    """
    pos = [_uniform(cfg, substream(cfg.seed, 0, PHASE_INIT, i)) for i in range(cfg.SN)]
    if evaluate is None and objective is not None:
        evaluate = _Evaluator(objective, False, None)
    vals = evaluate(pos) if evaluate is not None else [math.nan] * cfg.SN
    return [FoodSource(p, v, fitness(v) if not math.isnan(v) else math.nan) for p, v in zip(pos, vals)]


def _partner(rng, i, n):
    k = int(rng.integers(0, n - 1))
    return k + 1 if k >= i else k


def run(objective, cfg, executor=None, u_override=None):
    """Minimize ``objective`` over the box in ``cfg``.

    Parameters
    ----------
    objective : callable
        Maps a D-vector to a real number; must be pure when ``cfg.cache``
        is set or when evaluations run concurrently.
    cfg : AbcConfig
    executor : concurrent.futures.Executor, optional
        Evaluations of one phase are dispatched through ``executor.map``.
    u_override : float, optional
        Fix the update step (testing hook).

    Returns
    -------
    AbcHistory
    """
    ev = _Evaluator(objective, cfg.cache, executor)
    SN, D = cfg.SN, cfg.D
    sources = init_population(cfg, evaluate=ev)
    best_i = min(range(SN), key=lambda i: sources[i].objective_value)
    best_f = sources[best_i].objective_value
    best_x = sources[best_i].position.copy()
    hist_f = [best_f]
    hist_x = [best_x.copy()]
    scouts = 0

    def track(x, f):
        nonlocal best_f, best_x
        if f < best_f:
            best_f, best_x = f, x.copy()

    def commit(i, x, f):
        s = sources[i]
        if f < s.objective_value:
            sources[i] = FoodSource(x, f, fitness(f), 0)
            track(x, f)
        else:
            s.trial_count += 1

    def step(rng):
        return u_override if u_override is not None else _draw_u(rng, cfg.positive_u)

    for gen in range(1, cfg.generations + 1):
        # employed bees
        snap = np.array([s.position for s in sources])
        cands = []
        for i in range(SN):
            rng = substream(cfg.seed, gen, PHASE_EMPLOYED, i)
            k = _partner(rng, i, SN)
            j = int(rng.integers(0, D))
            cands.append(candidate_update(i, k, j, snap, step(rng), cfg.bounds))
        for i, (x, f) in enumerate(zip(cands, ev(cands))):
            commit(i, x, f)

        # onlooker bees
        prob = onlooker_probabilities(sources)
        cum = np.cumsum(prob)
        snap = np.array([s.position for s in sources])
        picks, cands = [], []
        for n in range(SN):
            rng = substream(cfg.seed, gen, PHASE_ONLOOKER, n)
            i = min(int(np.searchsorted(cum, rng.uniform(0.0, cum[-1]), side="right")), SN - 1)
            k = _partner(rng, i, SN)
            j = int(rng.integers(0, D))
            picks.append(i)
            cands.append(candidate_update(i, k, j, snap, step(rng), cfg.bounds))
        for i, x, f in zip(picks, cands, ev(cands)):
            commit(i, x, f)

        # at most one scout
        over = [i for i in range(SN) if sources[i].trial_count > cfg.trial_limit]
        if over:
            i = max(over, key=lambda q: (sources[q].trial_count, -q))
            x = _uniform(cfg, substream(cfg.seed, gen, PHASE_SCOUT, 0))
            f = ev([x])[0]
            sources[i] = FoodSource(x, f, fitness(f), 0)
            track(x, f)
            scouts += 1

        hist_f.append(best_f)
        hist_x.append(best_x.copy())

    return AbcHistory(np.array(hist_f), np.array(hist_x), ev.calls, ev.unique, scouts,
                      cfg.seed, sources)


def run_campaign(objective, cfg, seeds, executor=None):
    """One :func:`run` per seed; returns the list of histories."""
    return [run(objective, replace(cfg, seed=int(s)), executor) for s in seeds]


def campaign_spread(histories):
    """Relative spread ``(max - min)/|min|`` of the best objectives."""
    f = np.array([h.best for h in histories])
    lo = np.min(f)
    return float((np.max(f) - lo) / abs(lo)) if lo != 0 else float(np.max(f) - lo)


def write_campaign(histories, path_csv, path_table, transform=None, names=None):
    """Write the per-seed table and a transposed text table.

    ``transform`` maps a search vector to reported parameters (for example
    ``(lam, log10 gamma1) -> (lam, gamma1)``); ``names`` labels them.
    """
    transform = transform or (lambda x: tuple(x))
    rows = [(h.seed, h.best, *transform(h.best_x)) for h in histories]
    D = len(rows[0]) - 2
    names = names or [f"param_{j + 1}" for j in range(D)]
    with open(path_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "best_objective"] + [f"best_{n}" for n in names])
        for r in rows:
            w.writerow([r[0]] + [f"{v:.17g}" for v in r[1:]])
    label_w = max(len("Experiment No"), *(len(n) for n in names))
    col_w = 12
    lines = ["Experiment No".ljust(label_w) + "".join(str(i + 1).rjust(col_w) for i in range(len(rows)))]
    lines.append("Objective".ljust(label_w) + "".join(f"{r[1]:.6g}".rjust(col_w) for r in rows))
    for j, n in enumerate(names):
        lines.append(n.ljust(label_w) + "".join(f"{r[2 + j]:.6g}".rjust(col_w) for r in rows))
    lines.append("seed".ljust(label_w) + "".join(str(r[0]).rjust(col_w) for r in rows))
    with open(path_table, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows
