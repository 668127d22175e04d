"""Multi-objective CMA-ES with hypervolume selection (two objectives).

``mu`` single-parent (1+1)-CMA strategies each produce one offspring per
generation.  Parents and offspring are ranked by non-dominated sorting; the
last rank that does not fit entirely is thinned by repeatedly dropping the
point with the smallest hypervolume contribution.  An offspring counts as
successful when it survives selection, which drives the success-rule
step-size control and the rank-one covariance update.

All objectives are minimised.  Hypervolume is exact in two dimensions only.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericError, ValidationError

logger = logging.getLogger(__name__)

RNG_DESCRIPTION = (
    "numpy PCG64; SeedSequence(seed).spawn(mu + 1): stream i drives the "
    "offspring of parent slot i, stream mu drives initialisation"
)


# -- Pareto utilities --------------------------------------------------------

def dominates(f1, f2) -> bool:
    """Strict Pareto dominance for minimisation."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.shape != f2.shape:
        raise ValueError(f"objective vectors differ in length: {f1.shape} vs {f2.shape}")
    return bool(np.all(f1 <= f2) and np.any(f1 < f2))


def _dominance_matrix(f: np.ndarray) -> np.ndarray:
    le = np.all(f[:, None, :] <= f[None, :, :], axis=-1)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=-1)
    return le & lt


def nondominated_sort(points) -> np.ndarray:
    """Pareto rank of every point (0 = non-dominated).

    Rows with non-finite entries share the rank after the last finite one.
    """
    f = np.asarray(points, dtype=float)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D array of objective vectors")
    ranks = np.full(f.shape[0], -1, dtype=int)
    finite = np.all(np.isfinite(f), axis=1)
    idx = np.flatnonzero(finite)
    dom = _dominance_matrix(f[idx])
    counts = dom.sum(axis=0)
    remaining = np.ones(idx.size, dtype=bool)
    rank = 0
    while remaining.any():
        current = remaining & (counts == 0)
        ranks[idx[current]] = rank
        remaining &= ~current
        counts = counts - dom[current].sum(axis=0)
        rank += 1
    ranks[~finite] = rank
    return ranks


def hypervolume_2d(front, ref) -> float:
    """Area dominated by ``front`` and bounded by ``ref``."""
    f = np.asarray(front, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    if f.shape[0] == 0:
        return 0.0
    bad = ~(np.all(f <= ref, axis=1) & np.any(f < ref, axis=1))
    if bad.any():
        raise ValueError(f"point {f[bad][0].tolist()} does not dominate the reference point")
    s = f[np.lexsort((f[:, 1], f[:, 0]))]
    level = np.minimum.accumulate(s[:, 1])
    prev = np.concatenate([[ref[1]], level[:-1]])
    return float(np.sum((ref[0] - s[:, 0]) * np.maximum(prev - s[:, 1], 0.0)))


def hv_contribution(front, i: int, ref) -> float:
    """Hypervolume lost by removing point ``i`` (computed by definition)."""
    f = np.asarray(front, dtype=float).reshape(-1, 2)
    return hypervolume_2d(f, ref) - hypervolume_2d(np.delete(f, i, axis=0), ref)


def hv_contributions(front, ref) -> np.ndarray:
    """All exclusive contributions of a mutually non-dominated 2-D front."""
    f = np.asarray(front, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    order = np.lexsort((f[:, 1], f[:, 0]))
    s = f[order]
    right = np.append(s[1:, 0], ref[0])
    above = np.insert(s[:-1, 1], 0, ref[1])
    out = np.empty(f.shape[0])
    out[order] = (right - s[:, 0]) * (above - s[:, 1])
    return out


def adaptive_reference(f: np.ndarray) -> np.ndarray:
    """Component-wise maximum of the finite rows, pushed out by 10 %."""
    f = np.asarray(f, dtype=float)
    finite = f[np.all(np.isfinite(f), axis=1)]
    if finite.size == 0:
        return np.ones(f.shape[1])
    worst = finite.max(axis=0)
    return worst + 0.1 * np.abs(worst) + 1e-12


class ParetoArchive:
    """Growing set of mutually non-dominated ``(x, f)`` pairs."""

    def __init__(self, labels: Sequence[str] | None = None, reference_point=None):
        self.labels = tuple(labels) if labels is not None else None
        self.reference_point = None if reference_point is None else np.asarray(reference_point, float)
        self._f: np.ndarray | None = None
        self._x: np.ndarray | None = None

    def __len__(self) -> int:
        return 0 if self._f is None else self._f.shape[0]

    @property
    def f(self) -> np.ndarray:
        return np.empty((0, 2)) if self._f is None else self._f

    @property
    def x(self) -> np.ndarray:
        return np.empty((0, 0)) if self._x is None else self._x

    @property
    def entries(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.x, self.f))

    def add(self, x, f) -> bool:
        """Insert unless weakly dominated; evict entries the newcomer dominates."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f = np.asarray(f, dtype=float)
        if not np.all(np.isfinite(f)):
            return False
        if self._f is None:
            self._f, self._x = f[None].copy(), x[None].copy()
            return True
        if np.any(np.all(self._f <= f, axis=1)):
            return False
        keep = ~(np.all(f <= self._f, axis=1) & np.any(f < self._f, axis=1))
        self._f = np.vstack([self._f[keep], f])
        self._x = np.vstack([self._x[keep], x])
        return True

    def update(self, xs, fs) -> int:
        """Batch insertion, equivalent to calling :meth:`add` in order."""
        fs = np.asarray(fs, dtype=float)
        if fs.shape[0] == 0:
            return 0
        xs = np.asarray(xs, dtype=float).reshape(fs.shape[0], -1)
        ok = np.all(np.isfinite(fs), axis=1)
        xs, fs = xs[ok], fs[ok]
        if fs.shape[0] == 0:
            return 0
        if self._f is None:
            self._f, self._x = fs[:1].copy(), xs[:1].copy()
            xs, fs = xs[1:], fs[1:]
            added = 1
        else:
            added = 0
        old = self._f
        # new point rejected if weakly dominated by a stored entry
        accept = ~np.any(np.all(old[:, None, :] <= fs[None, :, :], axis=-1), axis=0)
        le = np.all(fs[:, None, :] <= fs[None, :, :], axis=-1)
        lt = np.any(fs[:, None, :] < fs[None, :, :], axis=-1)
        eq = le & ~lt
        earlier = np.tri(fs.shape[0], k=-1, dtype=bool)
        accept &= ~np.any(le & lt, axis=0)
        accept &= ~np.any(eq & earlier, axis=1)
        new_f, new_x = fs[accept], xs[accept]
        if new_f.shape[0]:
            evicted = np.any(
                np.all(new_f[:, None, :] <= old[None, :, :], axis=-1)
                & np.any(new_f[:, None, :] < old[None, :, :], axis=-1), axis=0)
            self._f = np.vstack([old[~evicted], new_f])
            self._x = np.vstack([self._x[~evicted], new_x])
        return added + int(new_f.shape[0])

    def hypervolume(self, ref=None) -> float:
        ref = self.reference_point if ref is None else np.asarray(ref, dtype=float)
        if ref is None:
            raise ValueError("no reference point given")
        f = self.f
        inside = np.all(f <= ref, axis=1) & np.any(f < ref, axis=1)
        return hypervolume_2d(f[inside], ref)

    def sorted(self) -> ParetoArchive:
        """Copy ordered by the first objective (for stable exports)."""
        out = ParetoArchive(self.labels, self.reference_point)
        if len(self):
            order = np.lexsort(self.f.T[::-1])
            out._f, out._x = self.f[order].copy(), self.x[order].copy()
        return out


def merge_fronts(runs: Iterable[ParetoArchive]) -> ParetoArchive:
    """Pool several archives and keep the mutually non-dominated subset."""
    runs = list(runs)
    labels = {r.labels for r in runs if r.labels is not None}
    if len(labels) > 1:
        raise ValidationError(f"archives carry different objective labels: {sorted(labels)}")
    merged = ParetoArchive(labels.pop() if labels else None)
    for r in runs:
        merged.update(r.x, r.f)
    return merged


def knee_point(front: ParetoArchive, threshold_f1: float) -> tuple[np.ndarray, np.ndarray]:
    """Entry with the smallest second objective among those with ``f1 < threshold_f1``."""
    f = front.f
    if f.shape[0] == 0:
        raise ValueError("empty front")
    ok = np.flatnonzero(f[:, 0] < threshold_f1)
    if ok.size == 0:
        raise ValueError(f"threshold too strict: no entry has f1 < {threshold_f1:g}")
    best = ok[np.argmin(f[ok, 1])]
    return front.x[best], f[best]


# -- strategy state ----------------------------------------------------------

@dataclass(frozen=True)
class StrategyConstants:
    """Step-size and covariance learning rates of the (1+1)-CMA core."""

    d: float
    p_target: float
    c_p: float
    c_c: float
    c_cov: float
    p_thresh: float = 0.44

    @classmethod
    def defaults(cls, dim: int) -> StrategyConstants:
        p_target = 1.0 / (5.0 + math.sqrt(0.5))
        return cls(
            d=1.0 + dim / 2.0,
            p_target=p_target,
            c_p=p_target / (2.0 + p_target),
            c_c=2.0 / (dim + 2.0),
            c_cov=2.0 / (dim**2 + 6.0),
        )


@dataclass
class Individual:
    x: np.ndarray
    sigma: float
    C: np.ndarray
    p_succ_bar: float
    p_c: np.ndarray
    f: np.ndarray | None = None
    penalty: float = 0.0
    _factor: np.ndarray | None = field(default=None, repr=False, compare=False)

    def copy(self) -> Individual:
        return Individual(self.x.copy(), self.sigma, self.C.copy(), self.p_succ_bar,
                          self.p_c.copy(), None if self.f is None else self.f.copy(),
                          self.penalty, self._factor)

    def factor(self) -> np.ndarray:
        """Lower Cholesky factor of ``C``; resets ``C`` to the identity if that fails."""
        if self._factor is None:
            try:
                self._factor = np.linalg.cholesky(self.C)
            except np.linalg.LinAlgError:
                logger.warning("covariance not positive definite; reset to identity")
                self.C = np.eye(self.x.size)
                self.p_c = np.zeros(self.x.size)
                self._factor = np.eye(self.x.size)
        return self._factor


def repair(x: np.ndarray, lower, upper) -> tuple[np.ndarray, float]:
    """Project onto the box; returns the point and the squared repair distance."""
    clipped = np.clip(x, lower, upper)
    return clipped, float(np.sum((x - clipped) ** 2))


def sample_offspring(ind: Individual, rng: np.random.Generator, lower=-np.inf, upper=np.inf):
    """Draw ``x + sigma A z`` with ``A A^T = C``, repaired into the box.

    Returns ``(x_new, repair_sq)``.
    """
    z = rng.standard_normal(ind.x.size)
    return repair(ind.x + ind.sigma * (ind.factor() @ z), lower, upper)


def step_size_multiplier(p_succ_bar: float, k: StrategyConstants) -> float:
    return math.exp((p_succ_bar - k.p_target) / (k.d * (1.0 - k.p_target)))


def update_step_size(ind: Individual, success: bool, k: StrategyConstants) -> None:
    ind.p_succ_bar = (1.0 - k.c_p) * ind.p_succ_bar + k.c_p * float(success)
    ind.sigma *= step_size_multiplier(ind.p_succ_bar, k)


def update_covariance(ind: Individual, step: np.ndarray, k: StrategyConstants) -> None:
    """Rank-one update along the evolution path.

    ``step`` is the mutation divided by the parent's step size.  While the
    success rate is high the path is only decayed, which stops it from
    growing when the step size is already increasing.
    """
    if ind.p_succ_bar < k.p_thresh:
        ind.p_c = (1 - k.c_c) * ind.p_c + math.sqrt(k.c_c * (2 - k.c_c)) * step
        c = (1 - k.c_cov) * ind.C + k.c_cov * np.outer(ind.p_c, ind.p_c)
    else:
        ind.p_c = (1 - k.c_c) * ind.p_c
        c = (1 - k.c_cov) * ind.C + k.c_cov * (
            np.outer(ind.p_c, ind.p_c) + k.c_c * (2 - k.c_c) * ind.C)
    ind.C = 0.5 * (c + c.T)
    ind._factor = None


# -- selection and main loop -------------------------------------------------

def select(f: np.ndarray, mu: int, ref=None) -> np.ndarray:
    """Indices (ascending) of the ``mu`` survivors among the rows of ``f``."""
    f = np.asarray(f, dtype=float)
    ranks = nondominated_sort(f)
    ref = adaptive_reference(f) if ref is None else np.asarray(ref, dtype=float)
    finite = np.all(np.isfinite(f), axis=1)
    chosen: list[int] = []
    for r in range(ranks.max() + 1):
        members = np.flatnonzero(ranks == r)
        if len(chosen) + members.size <= mu:
            chosen.extend(members.tolist())
            continue
        need = mu - len(chosen)
        if finite[members].all():
            members = list(members)
            while len(members) > need:
                contrib = hv_contributions(f[members], ref)
                members.pop(int(np.argmin(contrib)))
        chosen.extend(list(members)[:need])
        break
    return np.sort(np.asarray(chosen, dtype=int))


@dataclass
class MOCMAConfig:
    mu: int = 100
    generations: int = 300
    sigma0: float = 0.6
    lower: float | Sequence[float] = -2 * math.pi
    upper: float | Sequence[float] = 2 * math.pi
    penalty: float = 1.0
    reference_point: Sequence[float] | None = None
    labels: Sequence[str] = ("f1", "f2")

    def __post_init__(self):
        if self.mu < 2:
            raise ValidationError("mu must be at least 2")
        if self.generations < 1:
            raise ValidationError("generations must be at least 1")
        if self.sigma0 <= 0:
            raise ValidationError("sigma0 must be positive")


@dataclass
class EvolveResult:
    population: list[Individual]
    archive: ParetoArchive
    history: list[tuple[int, float, float, float]]
    events: list[dict]
    metadata: dict

    def population_front(self) -> ParetoArchive:
        out = ParetoArchive(self.archive.labels)
        for ind in self.population:
            out.add(ind.x, ind.f)
        return out


def _evaluate(problem, xs, penalties, generation, events, map_fn):
    values = list(map_fn(_safe_call, [problem] * len(xs), xs))
    out = np.empty((len(xs), 2))
    for i, v in enumerate(values):
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != 2 or not np.all(np.isfinite(v)):
            events.append({"generation": generation, "index": i, "event": "non-finite objective"})
            logger.info("generation %d: non-finite objective for candidate %d", generation, i)
            v = np.full(2, np.inf)
        out[i] = v + penalties[i]
    return out


def _safe_call(problem, x):
    try:
        return problem(x)
    except (NumericError, FloatingPointError, ZeroDivisionError):
        return np.full(2, np.inf)


def evolve(
    problem: Callable[[np.ndarray], np.ndarray],
    dim: int,
    config: MOCMAConfig,
    seed: int,
    map_fn: Callable = map,
) -> EvolveResult:
    """Run the optimizer and return final population, archive and history.

    ``map_fn`` may be an ordered parallel map (e.g. ``executor.map``); the
    result does not depend on evaluation order.
    """
    mu = config.mu
    k = StrategyConstants.defaults(dim)
    lower = np.broadcast_to(np.asarray(config.lower, dtype=float), (dim,))
    upper = np.broadcast_to(np.asarray(config.upper, dtype=float), (dim,))
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(seed).spawn(mu + 1)]
    events: list[dict] = []

    x0 = streams[mu].uniform(lower, upper, size=(mu, dim))
    f0 = _evaluate(problem, list(x0), np.zeros(mu), 0, events, map_fn)
    pop = [Individual(x, config.sigma0, np.eye(dim), k.p_target, np.zeros(dim), f)
           for x, f in zip(x0, f0)]
    archive = ParetoArchive(config.labels)
    archive.update(x0, f0)
    hv_ref = (np.asarray(config.reference_point, dtype=float)
              if config.reference_point is not None else adaptive_reference(f0))
    history = [_history_row(0, archive, hv_ref)]

    for g in range(1, config.generations + 1):
        offspring, penalties = [], []
        for i, parent in enumerate(pop):
            x, rep = sample_offspring(parent, streams[i], lower, upper)
            child = parent.copy()
            child.x = x
            child.penalty = config.penalty * rep
            offspring.append(child)
            penalties.append(child.penalty)
        f_off = _evaluate(problem, [c.x for c in offspring], penalties, g, events, map_fn)
        for child, f in zip(offspring, f_off):
            child.f = f

        pool = pop + offspring
        survivors = select(np.vstack([p.f for p in pool]), mu)
        survived = np.zeros(2 * mu, dtype=bool)
        survived[survivors] = True
        for i, (parent, child) in enumerate(zip(pop, offspring)):
            success = bool(survived[mu + i])
            step = (child.x - parent.x) / parent.sigma
            update_step_size(child, success, k)
            if success:
                update_covariance(child, step, k)
            update_step_size(parent, success, k)
        pop = [pool[j] for j in survivors]
        archive.update([c.x for c in offspring], f_off)
        history.append(_history_row(g, archive, hv_ref))

    metadata = {
        "seed": int(seed),
        "dim": dim,
        "config": _jsonable(asdict(config)),
        "constants": asdict(k),
        "rng": RNG_DESCRIPTION,
        "history_reference_point": hv_ref.tolist(),
    }
    return EvolveResult(pop, archive, history, events, metadata)


def _history_row(g, archive, ref):
    f = archive.f
    best = f.min(axis=0) if f.shape[0] else np.full(2, np.nan)
    return (g, archive.hypervolume(ref), float(best[0]), float(best[1]))


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in d]
    if isinstance(d, np.generic):
        return d.item()
    return d
