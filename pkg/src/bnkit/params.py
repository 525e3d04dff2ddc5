"""Parameter estimation: MLE, EM for incomplete data, interval bounds, EMS.

EM's E-step runs one batched junction-tree propagation per iteration over the
distinct record patterns, reading each family's joint posterior off the clique
that contains it. The per-iteration trace LL is the exact observed-data
log-likelihood sum(log P(observed cells of record)), which reduces to the
counted-data formula on complete data and is non-decreasing under exact EM.

EMS adds two steps after each maximization: clamp every parameter into the
interval from the one-time bounds pass over the raw dataset, then renormalize
each row to sum to one. Renormalization may push values back outside their
intervals; the trace records the satisfaction percentage before and after.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MISSING,
    Cpt,
    Dataset,
    EmptyData,
    Network,
    NoObservedData,
    complete_counts,
    ll_from_counts,
    num_parent_configs,
    parent_strides,
)
from .jtree import JunctionTree, build_junction_tree, propagate

BOUND_TOL = 1e-12


# ---------------------------------------------------------------------------
# Dirichlet priors ("imaginary cases")
# ---------------------------------------------------------------------------

@dataclass
class DirichletPrior:
    """Per-parameter pseudo-counts alpha[i][j, k] >= 0."""

    alphas: list[np.ndarray]

    def __post_init__(self):
        for a in self.alphas:
            if (np.asarray(a) < 0).any():
                raise ValueError("Dirichlet pseudo-counts must be non-negative")
        self.alphas = [np.asarray(a, dtype=float) for a in self.alphas]

    @classmethod
    def uniform(cls, net: Network, alpha: float) -> "DirichletPrior":
        return cls(
            [
                np.full((num_parent_configs(net, i), net.cardinality(i)), alpha)
                for i in range(net.n_variables)
            ]
        )

    @classmethod
    def from_imaginary_cases(cls, net: Network, cases: Dataset) -> "DirichletPrior":
        """Tallies of a complete dataset of fabricated records become pseudo-counts."""
        return cls(complete_counts(net, cases))


# ---------------------------------------------------------------------------
# MLE on complete data
# ---------------------------------------------------------------------------

def _normalize_counts(
    net: Network, counts: list[np.ndarray], prior: DirichletPrior | None
) -> tuple[list[Cpt], list[tuple[int, int]]]:
    cpts, uniform_rows = [], []
    for i, n in enumerate(counts):
        total = n + (prior.alphas[i] if prior is not None else 0.0)
        sums = total.sum(axis=1)
        values = np.empty_like(total)
        for j in range(total.shape[0]):
            if sums[j] > 0:
                values[j] = total[j] / sums[j]
            else:
                values[j] = 1.0 / total.shape[1]
                uniform_rows.append((i, j))
        cpts.append(Cpt(i, net.parents(i), values))
    return cpts, uniform_rows


def mle(
    net: Network, d: Dataset, prior: DirichletPrior | None = None
) -> tuple[list[Cpt], list[tuple[int, int]]]:
    """theta[i][j,k] = (N + alpha) / sum_k (N + alpha).

    Returns the fitted CPTs and the list of (variable, row) pairs that had zero
    total mass and were set to the uniform distribution.
    """
    return _normalize_counts(net, complete_counts(net, d), prior)


# ---------------------------------------------------------------------------
# Interval bounds from a single pass over the data
# ---------------------------------------------------------------------------

@dataclass
class BoundTable:
    """Per-parameter probability intervals [min[i][j,k], max[i][j,k]]."""

    mins: list[np.ndarray]
    maxs: list[np.ndarray]

    def __post_init__(self):
        self.mins = [np.asarray(m, dtype=float) for m in self.mins]
        self.maxs = [np.asarray(m, dtype=float) for m in self.maxs]
        for lo, hi in zip(self.mins, self.maxs):
            if (lo < -BOUND_TOL).any() or (hi > 1 + BOUND_TOL).any() or (lo > hi + BOUND_TOL).any():
                raise ValueError("bounds must satisfy 0 <= min <= max <= 1")

    @classmethod
    def vacuous(cls, net: Network) -> "BoundTable":
        shapes = [
            (num_parent_configs(net, i), net.cardinality(i))
            for i in range(net.n_variables)
        ]
        return cls([np.zeros(s) for s in shapes], [np.ones(s) for s in shapes])

    def is_vacuous(self) -> bool:
        return all((lo == 0).all() for lo in self.mins) and all(
            (hi == 1).all() for hi in self.maxs
        )

    def to_dict(self) -> dict:
        return {
            "bounds": [
                {"variable": i, "min": lo.tolist(), "max": hi.tolist()}
                for i, (lo, hi) in enumerate(zip(self.mins, self.maxs))
            ]
        }


def rbe_phase1_bounds(net: Network, d: Dataset) -> BoundTable:
    """One pass over the data producing robust per-parameter intervals.

    For each family row j: records fully observed on the family contribute hard
    counts n[j, k]; records whose observed cells are consistent with config j
    but with the child or a parent missing contribute ambiguous mass m[j],
    counted fully toward the numerator of every max and fully toward no min.
    Unseen rows get the vacuous interval [0, 1].
    """
    mins, maxs = [], []
    for i in range(net.n_variables):
        parents, strides = parent_strides(net, i)
        q, r = num_parent_configs(net, i), net.cardinality(i)
        n = np.zeros((q, r))
        m = np.zeros(q)
        for row in d.rows:
            if row[i] != MISSING and all(row[p] != MISSING for p in parents):
                j = int(sum(row[p] * s for p, s in zip(parents, strides)))
                n[j, row[i]] += 1
                continue
            base = sum(int(row[p]) * int(s) for p, s in zip(parents, strides) if row[p] != MISSING)
            open_strides = [
                (net.cardinality(p), int(s))
                for p, s in zip(parents, strides)
                if row[p] == MISSING
            ]
            for combo in itertools.product(*(range(c) for c, _ in open_strides)):
                j = base + sum(v * s for v, (_, s) in zip(combo, open_strides))
                m[j] += 1
        tot = n.sum(axis=1) + m
        lo = np.zeros((q, r))
        hi = np.ones((q, r))
        seen = tot > 0
        lo[seen] = (n[seen] / tot[seen, None])
        hi[seen] = ((n[seen] + m[seen, None]) / tot[seen, None])
        mins.append(lo)
        maxs.append(hi)
    return BoundTable(mins, maxs)


def bound_satisfaction(cpts: list[Cpt], bounds: BoundTable) -> float:
    """Fraction of parameters with min - tol <= theta <= max + tol."""
    ok = total = 0
    for cpt, lo, hi in zip(cpts, bounds.mins, bounds.maxs):
        inside = (cpt.values >= lo - BOUND_TOL) & (cpt.values <= hi + BOUND_TOL)
        ok += int(inside.sum())
        total += inside.size
    return ok / total if total else 1.0


# ---------------------------------------------------------------------------
# EM / EMS
# ---------------------------------------------------------------------------

@dataclass
class EmIteration:
    ll: float
    bound_satisfaction: float | None = None
    post_clamp_bound_satisfaction: float | None = None


@dataclass
class EmTrace:
    algorithm: str
    iterations: list[EmIteration] = field(default_factory=list)
    converged: bool = False
    wall_time_s: float = 0.0
    uniform_rows: list[tuple[int, int]] = field(default_factory=list)
    degenerate_rows: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def lls(self) -> list[float]:
        return [it.ll for it in self.iterations]

    def to_dict(self, include_timing: bool = True) -> dict:
        its = []
        for it in self.iterations:
            entry: dict = {"ll": it.ll, "bound_satisfaction": it.bound_satisfaction}
            if it.post_clamp_bound_satisfaction is not None:
                entry["post_clamp_bound_satisfaction"] = it.post_clamp_bound_satisfaction
            its.append(entry)
        return {
            "algorithm": self.algorithm,
            "iterations": its,
            "wall_time_s": self.wall_time_s if include_timing else None,
            "converged": self.converged,
        }


def init_cpts(
    net: Network, init: str | list[Cpt] = "dirichlet", seed: int | None = None
) -> list[Cpt]:
    """Starting parameters: 'dirichlet' (per-row Dirichlet(1), seed required),
    'uniform', or explicit CPTs."""
    if isinstance(init, list):
        return [Cpt(c.child, c.parents, c.values.copy()) for c in init]
    if init == "uniform":
        return [
            Cpt(
                i,
                net.parents(i),
                np.full(
                    (num_parent_configs(net, i), net.cardinality(i)),
                    1.0 / net.cardinality(i),
                ),
            )
            for i in range(net.n_variables)
        ]
    if init == "dirichlet":
        if seed is None:
            raise ValueError("dirichlet init requires a seed")
        rng = np.random.default_rng(seed)
        out = []
        for i in range(net.n_variables):
            q, r = num_parent_configs(net, i), net.cardinality(i)
            out.append(Cpt(i, net.parents(i), rng.dirichlet(np.ones(r), size=q)))
        return out
    raise ValueError(f"unknown init {init!r}")


def _patterns(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return np.unique(d.rows, axis=0, return_counts=True)


def _pattern_indicators(net: Network, patterns: np.ndarray) -> dict[int, np.ndarray]:
    n_rec = patterns.shape[0]
    out = {}
    for v in range(net.n_variables):
        col = patterns[:, v]
        ind = np.ones((n_rec, net.cardinality(v)))
        obs = col != MISSING
        if obs.any():
            ind[obs] = 0.0
            ind[np.nonzero(obs)[0], col[obs]] = 1.0
        out[v] = ind
    return out


def expected_counts(
    jt: JunctionTree,
    cpts: list[Cpt],
    patterns: np.ndarray,
    mults: np.ndarray,
    indicators: dict[int, np.ndarray] | None = None,
) -> tuple[list[np.ndarray], float]:
    """E-step: expected family counts and the exact observed-data LL."""
    net = jt.net
    if indicators is None:
        indicators = _pattern_indicators(net, patterns)
    beliefs, log_z, zero = propagate(jt, cpts, indicators, n_records=patterns.shape[0])
    ll = float("-inf") if zero.any() else float((mults * log_z).sum())
    counts = []
    for i in range(net.n_variables):
        c = jt._family_clique[i]
        fam = net.family(i)
        marg = beliefs[c]
        axes = tuple(k + 1 for k, v in enumerate(jt.cliques[c]) if v not in fam)
        if axes:
            marg = marg.sum(axis=axes)
        # axes now (record, *family ascending); move the child axis last
        marg = np.moveaxis(marg, 1 + fam.index(i), -1)
        q, r = num_parent_configs(net, i), net.cardinality(i)
        w = (marg.reshape(patterns.shape[0], q, r) * mults[:, None, None]).sum(axis=0)
        counts.append(w)
    return counts, ll


def _check_observed(net: Network, d: Dataset, prior: DirichletPrior | None) -> None:
    if d.n_records == 0:
        raise EmptyData("cannot learn parameters from an empty dataset")
    for i in range(net.n_variables):
        if (d.rows[:, i] == MISSING).all():
            if prior is None or prior.alphas[i].sum() == 0:
                raise NoObservedData(
                    f"variable {net.variables[i].name!r} is never observed and has no prior"
                )


def em(
    net: Network,
    d: Dataset,
    *,
    init: str | list[Cpt] = "dirichlet",
    seed: int | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
    prior: DirichletPrior | None = None,
) -> tuple[list[Cpt], EmTrace]:
    """Expectation-maximization for a fixed structure.

    Stops when the observed-data LL changes by less than ``tol`` or after
    ``max_iter`` iterations. Complete data is a single exact M-step.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    _check_observed(net, d, prior)
    trace = EmTrace(algorithm="em")
    t0 = time.perf_counter()

    if d.is_complete():
        cpts, trace.uniform_rows = mle(net, d, prior)
        ll = ll_from_counts(complete_counts(net, d), cpts)
        trace.iterations.append(EmIteration(ll=ll))
        trace.converged = True
        trace.wall_time_s = time.perf_counter() - t0
        return cpts, trace

    cpts = init_cpts(net, init, seed)
    jt = build_junction_tree(net.with_cpts(cpts))
    patterns, mults = _patterns(d)
    indicators = _pattern_indicators(net, patterns)

    counts, ll_prev = expected_counts(jt, cpts, patterns, mults, indicators)
    for _ in range(max_iter):
        cpts, uniform = _normalize_counts(net, counts, prior)
        trace.uniform_rows.extend(u for u in uniform if u not in trace.uniform_rows)
        counts, ll = expected_counts(jt, cpts, patterns, mults, indicators)
        trace.iterations.append(EmIteration(ll=ll))
        if abs(ll - ll_prev) < tol:
            trace.converged = True
            break
        ll_prev = ll
    trace.wall_time_s = time.perf_counter() - t0
    return cpts, trace


def _clamp_rows(
    cpts: list[Cpt], bounds: BoundTable
) -> tuple[list[Cpt], list[tuple[int, int]]]:
    """Steps iii and iv: clamp into [min, max], then renormalize each row."""
    out, degenerate = [], []
    for cpt, lo, hi in zip(cpts, bounds.mins, bounds.maxs):
        clamped = np.clip(cpt.values, lo, hi)
        sums = clamped.sum(axis=1)
        values = np.empty_like(clamped)
        for j in range(clamped.shape[0]):
            if sums[j] > 0:
                values[j] = clamped[j] / sums[j]
            else:
                values[j] = 1.0 / clamped.shape[1]
                degenerate.append((cpt.child, j))
        out.append(Cpt(cpt.child, cpt.parents, values))
    return out, degenerate


def _clamp_only(cpts: list[Cpt], bounds: BoundTable) -> list[Cpt]:
    return [
        Cpt(c.child, c.parents, np.clip(c.values, lo, hi))
        for c, lo, hi in zip(cpts, bounds.mins, bounds.maxs)
    ]


def ems(
    net: Network,
    d: Dataset,
    *,
    init: str | list[Cpt] = "dirichlet",
    seed: int | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
    prior: DirichletPrior | None = None,
    bounds: BoundTable | None = None,
    mode: str = "per-iteration",
) -> tuple[list[Cpt], EmTrace]:
    """EM with interval thresholding and renormalization.

    ``per-iteration`` (default) clamps and renormalizes after every
    maximization step; ``post-hoc`` runs plain EM to convergence and applies a
    single clamp + renormalize at the end. Bounds are computed once from the
    raw dataset unless supplied.
    """
    if mode not in ("per-iteration", "post-hoc"):
        raise ValueError(f"unknown mode {mode!r}")
    if bounds is None:
        bounds = rbe_phase1_bounds(net, d)
    _check_observed(net, d, prior)
    trace = EmTrace(algorithm="ems")
    t0 = time.perf_counter()

    if mode == "post-hoc":
        cpts, inner = em(
            net, d, init=init, seed=seed, tol=tol, max_iter=max_iter, prior=prior
        )
        trace.iterations = [
            EmIteration(it.ll, bound_satisfaction=None) for it in inner.iterations
        ]
        trace.converged = inner.converged
        trace.uniform_rows = inner.uniform_rows
        clamped = _clamp_only(cpts, bounds)
        pre_norm = bound_satisfaction(clamped, bounds)
        cpts, trace.degenerate_rows = _clamp_rows(cpts, bounds)
        ll = _observed_ll(net, cpts, d)
        trace.iterations.append(
            EmIteration(
                ll,
                bound_satisfaction=bound_satisfaction(cpts, bounds),
                post_clamp_bound_satisfaction=pre_norm,
            )
        )
        trace.wall_time_s = time.perf_counter() - t0
        return cpts, trace

    cpts = init_cpts(net, init, seed)
    jt = build_junction_tree(net.with_cpts(cpts))
    patterns, mults = _patterns(d)
    indicators = _pattern_indicators(net, patterns)

    counts, ll_prev = expected_counts(jt, cpts, patterns, mults, indicators)
    for _ in range(max_iter):
        m_cpts, uniform = _normalize_counts(net, counts, prior)
        trace.uniform_rows.extend(u for u in uniform if u not in trace.uniform_rows)
        clamped = _clamp_only(m_cpts, bounds)
        pre_norm = bound_satisfaction(clamped, bounds)
        cpts, degenerate = _clamp_rows(m_cpts, bounds)
        trace.degenerate_rows.extend(
            g for g in degenerate if g not in trace.degenerate_rows
        )
        counts, ll = expected_counts(jt, cpts, patterns, mults, indicators)
        trace.iterations.append(
            EmIteration(
                ll,
                bound_satisfaction=bound_satisfaction(cpts, bounds),
                post_clamp_bound_satisfaction=pre_norm,
            )
        )
        if abs(ll - ll_prev) < tol:
            trace.converged = True
            break
        ll_prev = ll
    trace.wall_time_s = time.perf_counter() - t0
    return cpts, trace


def _observed_ll(net: Network, cpts: list[Cpt], d: Dataset) -> float:
    """Exact observed-data log-likelihood of a dataset under given parameters."""
    if d.n_records == 0:
        return 0.0
    jt = build_junction_tree(net.with_cpts(cpts))
    patterns, mults = _patterns(d)
    _, log_z, zero = propagate(
        jt, cpts, _pattern_indicators(net, patterns), n_records=patterns.shape[0]
    )
    return float("-inf") if zero.any() else float((mults * log_z).sum())
