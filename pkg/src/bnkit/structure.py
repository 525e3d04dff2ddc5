"""Structure learning: mutual information, spanning trees, NB/TAN/FAN, and
EM-embedded search (tree rebuilds and greedy hill-climbing).

Scores are BIC computed on expected sufficient statistics: for incomplete data
the current model completes each record exactly (posterior over its missing
cells), and candidate families are scored on the completed counts. The search
and the EM fits share one completion model per round, so every comparison
within a round is consistent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MISSING,
    Cpt,
    Dataset,
    EmptyData,
    Network,
    NoCompletePairs,
    Variable,
    build_network,
    complete_counts,
    ll_from_counts,
)
from .params import (
    EmTrace,
    _pattern_indicators,
    em,
    expected_counts as _jt_expected_counts,
)
from .jtree import JunctionTree, build_junction_tree, propagate as _propagate

#: Smallest expected-score improvement that counts as an improving move.
MIN_GAIN = 1e-6


# ---------------------------------------------------------------------------
# Mutual information from (pairwise-complete) data
# ---------------------------------------------------------------------------

def _joint_counts(d: Dataset, cols: tuple[int, ...]) -> np.ndarray:
    """Counts over the given columns from records complete on all of them."""
    sub = d.rows[:, cols]
    keep = (sub != MISSING).all(axis=1)
    sub = sub[keep]
    dims = tuple(d.variables[c].cardinality for c in cols)
    if sub.shape[0] == 0:
        return np.zeros(dims)
    flat = np.zeros(len(sub), dtype=np.int64)
    for k, c in enumerate(cols):
        flat = flat * dims[k] + sub[:, k]
    return np.bincount(flat, minlength=int(np.prod(dims))).reshape(dims).astype(float)


def _mi_of_joint(joint: np.ndarray) -> float:
    total = joint.sum()
    if total == 0:
        return 0.0
    p = joint / total
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    mask = p > 0
    mi = float((p[mask] * np.log(p[mask] / (px @ py)[mask])).sum())
    return max(mi, 0.0)


def mutual_information(d: Dataset, x: int, y: int) -> float:
    """Empirical MI in nats over records where both columns are observed."""
    joint = _joint_counts(d, (x, y))
    if joint.sum() == 0:
        raise NoCompletePairs(f"no records observe both columns {x} and {y}")
    return _mi_of_joint(joint)


def conditional_mutual_information(d: Dataset, x: int, y: int, c: int) -> float:
    """Empirical CMI(x; y | c) in nats over records observing all three columns."""
    joint = _joint_counts(d, (x, y, c))
    total = joint.sum()
    if total == 0:
        raise NoCompletePairs(f"no records observe columns {x}, {y} and {c}")
    cmi = 0.0
    for k in range(joint.shape[2]):
        stratum = joint[:, :, k]
        n_c = stratum.sum()
        if n_c > 0:
            cmi += (n_c / total) * _mi_of_joint(stratum)
    return max(cmi, 0.0)


def pairwise_mi_matrix(d: Dataset) -> np.ndarray:
    """Symmetric MI weight matrix over all variable pairs (diagonal zero)."""
    n = len(d.variables)
    w = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            w[x, y] = w[y, x] = mutual_information(d, x, y)
    return w


# ---------------------------------------------------------------------------
# Maximum-weight spanning tree, oriented from a root
# ---------------------------------------------------------------------------

def mwst(weights: np.ndarray, root: int = 0) -> list[tuple[int, int]]:
    """Maximum-weight spanning tree, directed away from ``root`` depth-first.

    Deterministic: Kruskal considers edges by descending weight, ties in
    lexicographic (u, v) order; the traversal visits neighbors ascending.
    """
    weights = np.asarray(weights)
    m = weights.shape[0]
    if not (0 <= root < m):
        raise ValueError(f"root {root} out of range")
    pairs = [(u, v) for u in range(m) for v in range(u + 1, m)]
    pairs.sort(key=lambda e: (-weights[e[0], e[1]], e[0], e[1]))
    parent = list(range(m))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    adj: list[list[int]] = [[] for _ in range(m)]
    taken = 0
    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        parent[ru] = rv
        adj[u].append(v)
        adj[v].append(u)
        taken += 1
        if taken == m - 1:
            break

    edges: list[tuple[int, int]] = []
    seen = {root}
    stack = [root]
    while stack:
        u = stack.pop()
        fresh = [v for v in sorted(adj[u]) if v not in seen]
        for v in fresh:
            seen.add(v)
            edges.append((u, v))
        stack.extend(reversed(fresh))
    return edges


# ---------------------------------------------------------------------------
# Classifier structures
# ---------------------------------------------------------------------------

def naive_bayes(class_index: int, feature_indices: list[int]) -> list[tuple[int, int]]:
    """One edge class -> feature per feature, nothing else."""
    if class_index in feature_indices:
        raise ValueError("class variable cannot be a feature")
    return [(class_index, f) for f in sorted(feature_indices)]


def _feature_tree(
    d: Dataset, class_index: int, features: list[int]
) -> tuple[list[tuple[int, int]], dict[tuple[int, int], float]]:
    m = len(features)
    w = np.zeros((m, m))
    cmis: dict[tuple[int, int], float] = {}
    for a in range(m):
        for b in range(a + 1, m):
            cmi = conditional_mutual_information(d, features[a], features[b], class_index)
            w[a, b] = w[b, a] = cmi
            cmis[(features[a], features[b])] = cmi
    class_mi = [mutual_information(d, f, class_index) for f in features]
    root_local = int(np.argmax(class_mi))
    tree_local = mwst(w, root_local)
    tree = [(features[u], features[v]) for u, v in tree_local]
    return tree, cmis


def tan(d: Dataset, class_index: int) -> list[tuple[int, int]]:
    """Tree-augmented naive Bayes structure.

    Feature-feature edges form the maximum-weight spanning tree under
    class-conditional mutual information, rooted at the feature with maximal
    MI against the class; every feature also gets the class as a parent.
    """
    features = [i for i in range(len(d.variables)) if i != class_index]
    if len(features) < 2:
        raise ValueError("TAN needs at least 2 feature variables")
    tree, _ = _feature_tree(d, class_index, features)
    return naive_bayes(class_index, features) + tree


def fan(d: Dataset, class_index: int, tau: float = 0.01) -> list[tuple[int, int]]:
    """Forest-augmented naive Bayes: TAN with feature edges of CMI < tau removed."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    features = [i for i in range(len(d.variables)) if i != class_index]
    if len(features) < 2:
        raise ValueError("FAN needs at least 2 feature variables")
    tree, cmis = _feature_tree(d, class_index, features)
    kept = [
        (u, v)
        for u, v in tree
        if cmis.get((u, v), cmis.get((v, u), 0.0)) >= tau
    ]
    return naive_bayes(class_index, features) + kept


# ---------------------------------------------------------------------------
# Expected sufficient statistics under a completion model
# ---------------------------------------------------------------------------

def _batch_joint(net: Network, rows: np.ndarray) -> np.ndarray:
    """Vectorized factorized joint probability of complete assignment rows."""
    p = np.ones(rows.shape[0])
    for i in range(net.n_variables):
        parents = net.parents(i)
        j = np.zeros(rows.shape[0], dtype=np.int64)
        for t, par in enumerate(parents):
            j = j * net.cardinality(par) + rows[:, par]
        p = p * net.cpts[i].values[j, rows[:, i]]
    return p


@dataclass
class CompletionBasis:
    """Per-pattern exact posteriors over each record pattern's missing cells."""

    net: Network
    patterns: np.ndarray
    mults: np.ndarray
    # (missing vars, joint posterior table); None for patterns whose missing
    # set is too large to materialize, handled by clamped propagation instead
    posteriors: list[tuple[tuple[int, ...], np.ndarray] | None]
    jt: JunctionTree | None = None
    indicators: dict[int, np.ndarray] | None = None
    log_evidence: np.ndarray | None = None

    @property
    def n_records(self) -> float:
        return float(self.mults.sum())

    @property
    def oversized(self) -> list[int]:
        return [k for k, p in enumerate(self.posteriors) if p is None]


def completion_basis(
    net: Network, d: Dataset, config_cap: int = 2**16
) -> CompletionBasis:
    patterns, mults = np.unique(d.rows, axis=0, return_counts=True)
    posteriors: list[tuple[tuple[int, ...], np.ndarray] | None] = []
    for row in patterns:
        miss = tuple(int(v) for v in np.nonzero(row == MISSING)[0])
        dims = tuple(net.cardinality(v) for v in miss)
        size = int(np.prod(dims)) if miss else 1
        if size > config_cap:
            posteriors.append(None)
            continue
        if not miss:
            posteriors.append((miss, np.ones(())))
            continue
        grid = np.array(list(itertools.product(*(range(c) for c in dims))), dtype=np.int64)
        full = np.tile(row, (size, 1))
        full[:, list(miss)] = grid
        probs = _batch_joint(net, full)
        total = probs.sum()
        table = (probs / total if total > 0 else np.zeros_like(probs)).reshape(dims)
        posteriors.append((miss, table))
    basis = CompletionBasis(net, patterns, mults, posteriors)
    if basis.oversized:
        basis.jt = build_junction_tree(net)
        basis.indicators = _pattern_indicators(net, patterns)
        _, basis.log_evidence, _ = _propagate(
            basis.jt, net.cpts, basis.indicators, patterns.shape[0]
        )
    return basis


def _oversized_family_counts(
    basis: CompletionBasis, fam: tuple[int, ...], dims: tuple[int, ...]
) -> np.ndarray:
    """Exact expected counts for the patterns with unmaterializable posteriors.

    For each family configuration, one batched propagation with the family
    clamped yields P(config, observed)/P(observed) per pattern; configurations
    conflicting with a pattern's observed cells zero out automatically.
    """
    big = basis.oversized
    net = basis.net
    table = np.zeros(dims)
    sub = {v: ind[big] for v, ind in basis.indicators.items()}
    base_log_z = basis.log_evidence[big]
    weights = basis.mults[big]
    for config in itertools.product(*(range(c) for c in dims)):
        clamped = dict(sub)
        for v, val in zip(fam, config):
            one_hot = np.zeros((len(big), net.cardinality(v)))
            one_hot[:, val] = 1.0
            clamped[v] = sub[v] * one_hot
        _, log_z, zero = _propagate(basis.jt, net.cpts, clamped, len(big))
        w = np.where(zero, 0.0, np.exp(log_z - base_log_z))
        table[config] = float((w * weights).sum())
    return table


def expected_family_table(
    basis: CompletionBasis, child: int, parents: tuple[int, ...]
) -> np.ndarray:
    """Expected counts (q, r) for an arbitrary candidate family."""
    net = basis.net
    fam = tuple(sorted((child,) + tuple(parents)))
    dims = tuple(net.cardinality(v) for v in fam)
    table = np.zeros(dims)
    for row, mult, entry in zip(basis.patterns, basis.mults, basis.posteriors):
        if entry is None:
            continue
        miss, post = entry
        fam_miss = [v for v in fam if v in miss]
        if fam_miss:
            axes = tuple(k for k, v in enumerate(miss) if v not in fam)
            marg = post.sum(axis=axes) if axes else post
        else:
            marg = np.array(float(mult))
        idx = tuple(
            slice(None) if row[v] == MISSING else int(row[v]) for v in fam
        )
        table[idx] += marg * mult if fam_miss else float(mult)
    if basis.oversized:
        table += _oversized_family_counts(basis, fam, dims)
    # sorted-family axes -> (parent configs, child states)
    table = np.moveaxis(table, fam.index(child), -1)
    q = int(np.prod([net.cardinality(p) for p in sorted(parents)])) if parents else 1
    return table.reshape(q, net.cardinality(child))


def expected_pairwise_mi(basis: CompletionBasis) -> np.ndarray:
    """MI weight matrix from expected pairwise counts under the completion model."""
    net = basis.net
    n = net.n_variables
    w = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            joint = expected_family_table(basis, y, (x,))
            w[x, y] = w[y, x] = _mi_of_joint(joint)
    return w


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def _family_dim(net_vars: list[Variable], child: int, parents: tuple[int, ...]) -> int:
    q = 1
    for p in parents:
        q *= net_vars[p].cardinality
    return q * (net_vars[child].cardinality - 1)


def _family_loglik(counts: np.ndarray) -> float:
    """sum N log(N / rowsum) with 0 log 0 = 0 (MLE-at-counts log-likelihood)."""
    row = counts.sum(axis=1, keepdims=True)
    mask = counts > 0
    return float((counts[mask] * np.log(counts[mask] / np.broadcast_to(row, counts.shape)[mask])).sum())


def _family_score(
    basis: CompletionBasis, child: int, parents: tuple[int, ...], log_n: float
) -> float:
    counts = expected_family_table(basis, child, tuple(sorted(parents)))
    dim = _family_dim(basis.net.variables, child, tuple(parents))
    return _family_loglik(counts) - 0.5 * dim * log_n


def bic_score(net: Network, d: Dataset, cpts: list[Cpt] | None = None) -> float:
    """BIC = LL - (dim/2) log N for the fitted parameters.

    On incomplete data the LL term is the counted-data formula evaluated on
    expected counts under the fitted parameters (one exact E-step).
    """
    if d.n_records == 0:
        raise EmptyData("BIC of an empty dataset is undefined")
    cpts = cpts if cpts is not None else net.cpts
    if d.is_complete():
        ll = ll_from_counts(complete_counts(net, d), cpts)
    else:
        jt = build_junction_tree(net.with_cpts(cpts))
        patterns, mults = np.unique(d.rows, axis=0, return_counts=True)
        counts, _ = _jt_expected_counts(jt, cpts, patterns, mults)
        ll = ll_from_counts(counts, cpts)
    dim = sum(
        _family_dim(net.variables, i, net.parents(i)) for i in range(net.n_variables)
    )
    return ll - 0.5 * dim * math.log(d.n_records)


# ---------------------------------------------------------------------------
# EM-embedded search
# ---------------------------------------------------------------------------

@dataclass
class StructureCandidate:
    """A learned structure with fitted parameters, score, and provenance."""

    edges: list[tuple[int, int]]
    cpts: list[Cpt]
    score: float
    provenance: dict = field(default_factory=dict)
    trace: EmTrace | None = None

    def network(self, variables: list[Variable]) -> Network:
        net = build_network(variables, self.edges)
        return net.with_cpts(self.cpts)


def _is_dag(n: int, edges: set[tuple[int, int]]) -> bool:
    indeg = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for p, c in edges:
        indeg[c] += 1
        children[p].append(c)
    ready = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return seen == n


def _fit(
    d: Dataset,
    edges: set[tuple[int, int]] | list[tuple[int, int]],
    seed: int,
    init: str | list[Cpt],
    tol: float,
    max_iter: int,
) -> tuple[Network, list[Cpt], EmTrace]:
    net = build_network(d.variables, edges)
    cpts, trace = em(net, d, init=init, seed=seed, tol=tol, max_iter=max_iter)
    return net.with_cpts(cpts), cpts, trace


def _observed_bic(net: Network, trace: EmTrace, n_records: float) -> float:
    """Exact observed-data BIC of an EM fit (the trace's final LL minus the
    dimension penalty). Candidate decisions use expected-statistics scores;
    this is the quantity each accepted refit provably improves."""
    dim = sum(
        _family_dim(net.variables, i, net.parents(i)) for i in range(net.n_variables)
    )
    return trace.lls[-1] - 0.5 * dim * math.log(n_records)


def mwst_em(
    d: Dataset,
    root: int = 0,
    seed: int = 0,
    max_rounds: int = 10,
    em_tol: float = 1e-4,
    em_max_iter: int = 50,
) -> StructureCandidate:
    """Alternate EM parameter fits with spanning-tree rebuilds.

    Each round fits the current tree by EM, completes the data under the fit,
    recomputes pairwise MI from the expected counts, and rebuilds the tree.
    Stops when the tree is unchanged or after ``max_rounds``.
    """
    if d.n_records == 0:
        raise EmptyData("cannot learn a structure from an empty dataset")
    edges: list[tuple[int, int]] = []
    rounds = 0
    net, cpts, trace = _fit(d, edges, seed, "dirichlet", em_tol, em_max_iter)
    while rounds < max_rounds:
        rounds += 1
        basis = completion_basis(net, d)
        tree = mwst(expected_pairwise_mi(basis), root)
        if sorted(tree) == sorted(edges):
            break
        edges = tree
        net, cpts, trace = _fit(d, edges, seed, "dirichlet", em_tol, em_max_iter)
    score = _observed_bic(net, trace, d.n_records)
    return StructureCandidate(
        edges=sorted(edges),
        cpts=cpts,
        score=score,
        provenance={"algorithm": "mwst-em", "root": root, "seed": seed, "rounds": rounds},
        trace=trace,
    )


def _neighbor_moves(
    n: int, edges: set[tuple[int, int]], max_parents: int
) -> list[tuple[str, tuple[int, int]]]:
    """Candidate single-edge edits in deterministic order: delete, reverse, add."""
    moves: list[tuple[str, tuple[int, int]]] = []
    n_parents = {i: sum(1 for _, c in edges if c == i) for i in range(n)}
    for u, v in sorted(edges):
        moves.append(("delete", (u, v)))
    for u, v in sorted(edges):
        if n_parents[u] < max_parents and _is_dag(n, (edges - {(u, v)}) | {(v, u)}):
            moves.append(("reverse", (u, v)))
    for u in range(n):
        for v in range(n):
            if u == v or (u, v) in edges or (v, u) in edges:
                continue
            if n_parents[v] < max_parents and _is_dag(n, edges | {(u, v)}):
                moves.append(("add", (u, v)))
    return moves


def _apply_move(
    edges: set[tuple[int, int]], move: tuple[str, tuple[int, int]]
) -> set[tuple[int, int]]:
    op, (u, v) = move
    if op == "delete":
        return edges - {(u, v)}
    if op == "reverse":
        return (edges - {(u, v)}) | {(v, u)}
    return edges | {(u, v)}


def sem(
    d: Dataset,
    init_edges: list[tuple[int, int]] | None = None,
    init_params: list[Cpt] | None = None,
    seed: int = 0,
    max_moves: int = 50,
    max_parents: int = 4,
    em_tol: float = 1e-4,
    em_max_iter: int = 50,
) -> StructureCandidate:
    """Greedy structural search with EM inside each step.

    Starts from a chain (or the given structure), scores single-edge edits by
    expected-statistics BIC under the current completion, accepts the best
    strictly improving edit, refits by EM, and repeats until a local optimum
    or ``max_moves``.
    """
    if d.n_records == 0:
        raise EmptyData("cannot learn a structure from an empty dataset")
    n = len(d.variables)
    if init_edges is None:
        init_edges = [(i, i + 1) for i in range(n - 1)]
    edges = set(init_edges)
    log_n = math.log(d.n_records)

    net, cpts, trace = _fit(
        d, edges, seed, init_params if init_params is not None else "dirichlet",
        em_tol, em_max_iter,
    )
    basis = completion_basis(net, d)
    parents = {i: tuple(sorted(p for p, c in edges if c == i)) for i in range(n)}
    fam_scores = {i: _family_score(basis, i, parents[i], log_n) for i in range(n)}
    score = _observed_bic(net, trace, d.n_records)
    score_sequence = [score]

    moves = 0
    while moves < max_moves:
        best_gain, best_move = MIN_GAIN, None
        for move in _neighbor_moves(n, edges, max_parents):
            op, (u, v) = move
            changed = [v] if op in ("delete", "add") else [u, v]
            new_edges = _apply_move(edges, move)
            gain = 0.0
            for i in changed:
                new_parents = tuple(sorted(p for p, c in new_edges if c == i))
                gain += _family_score(basis, i, new_parents, log_n) - fam_scores[i]
            if gain > best_gain:
                best_gain, best_move = gain, move
        if best_move is None:
            break
        edges = _apply_move(edges, best_move)
        moves += 1
        # warm-start the refit from the completed-count estimates
        warm = [
            Cpt(
                i,
                tuple(sorted(p for p, c in edges if c == i)),
                _mle_rows(expected_family_table(basis, i, tuple(sorted(p for p, c in edges if c == i)))),
            )
            for i in range(n)
        ]
        net, cpts, trace = _fit(d, edges, seed, warm, em_tol, em_max_iter)
        basis = completion_basis(net, d)
        parents = {i: tuple(sorted(p for p, c in edges if c == i)) for i in range(n)}
        fam_scores = {i: _family_score(basis, i, parents[i], log_n) for i in range(n)}
        score = _observed_bic(net, trace, d.n_records)
        score_sequence.append(score)

    return StructureCandidate(
        edges=sorted(edges),
        cpts=cpts,
        score=score,
        provenance={
            "algorithm": "sem",
            "seed": seed,
            "moves": moves,
            "score_sequence": score_sequence,
        },
        trace=trace,
    )


def _mle_rows(counts: np.ndarray) -> np.ndarray:
    sums = counts.sum(axis=1, keepdims=True)
    out = np.where(sums > 0, counts / np.where(sums > 0, sums, 1.0), 1.0 / counts.shape[1])
    return out


def sem_plus_t(
    d: Dataset,
    root: int = 0,
    seed: int = 0,
    max_moves: int = 50,
    max_parents: int = 4,
    em_tol: float = 1e-4,
    em_max_iter: int = 50,
) -> StructureCandidate:
    """Greedy structural search initialized from the EM-fitted spanning tree."""
    tree = mwst_em(d, root=root, seed=seed, em_tol=em_tol, em_max_iter=em_max_iter)
    out = sem(
        d,
        init_edges=tree.edges,
        init_params=tree.cpts,
        seed=seed,
        max_moves=max_moves,
        max_parents=max_parents,
        em_tol=em_tol,
        em_max_iter=em_max_iter,
    )
    out.provenance["algorithm"] = "sem+t"
    out.provenance["tree_score"] = tree.score
    return out
