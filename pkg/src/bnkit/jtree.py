"""Exact inference: junction tree, enumeration oracle, and the argmax rule.

Construction is the standard pipeline (moralize, min-fill triangulation,
maximum-spanning clique tree) with fully deterministic tie-breaking so that a
given network always yields the same tree. Message passing is two-pass
Shafer-Shenoy from a fixed root (clique 0), in linear probability space with
per-message normalization; normalizer logs are accumulated so the evidence
probability is still available exactly.

All propagation code carries a leading "record" axis, so one pass can process
a whole batch of evidence rows at once. Inference queries are a batch of one;
the EM E-step in :mod:`bnkit.params` batches every distinct record pattern.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Assignment,
    Cpt,
    Network,
    StateSpaceTooLarge,
    TargetInEvidence,
    joint_probability,
    validate_network,
)


@dataclass
class Posterior:
    """Distribution over one variable's states given the evidence used."""

    variable: int
    probs: np.ndarray
    evidence: Assignment
    zero_evidence: bool = False


@dataclass
class Separator:
    a: int
    b: int
    variables: tuple[int, ...]
    table: np.ndarray | None = None


@dataclass
class JunctionTree:
    net: Network
    cliques: list[tuple[int, ...]]
    separators: list[Separator]
    calibrated: bool = False
    clique_tables: list[np.ndarray] | None = None

    # message schedule and table-alignment metadata, fixed at build time
    _root: int = 0
    _neighbors: list[list[int]] = field(default_factory=list)
    _collect_order: list[tuple[int, int]] = field(default_factory=list)  # (child, parent)
    _sep_vars: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    _family_clique: list[int] = field(default_factory=list)
    _injection_clique: list[int] = field(default_factory=list)

    def clique_shape(self, c: int) -> tuple[int, ...]:
        return tuple(self.net.cardinality(v) for v in self.cliques[c])

    def containing_clique(self, v: int) -> int:
        return self._injection_clique[v]


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _moral_adjacency(net: Network) -> list[set[int]]:
    n = net.n_variables
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        fam = net.family(i)
        for a in fam:
            for b in fam:
                if a != b:
                    adj[a].add(b)
    return adj


def _min_fill_cliques(adj: list[set[int]]) -> list[frozenset[int]]:
    """Eliminate by min-fill (ties: lowest index); return elimination cliques."""
    n = len(adj)
    work = [set(s) for s in adj]
    alive = set(range(n))
    cliques = []
    while alive:
        best, best_fill = None, None
        for v in sorted(alive):
            nbrs = [u for u in work[v] if u in alive]
            fill = sum(
                1
                for a, b in itertools.combinations(nbrs, 2)
                if b not in work[a]
            )
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        nbrs = [u for u in work[best] if u in alive]
        cliques.append(frozenset([best, *nbrs]))
        for a, b in itertools.combinations(nbrs, 2):
            work[a].add(b)
            work[b].add(a)
        alive.remove(best)
    return cliques


def build_junction_tree(net: Network) -> JunctionTree:
    """Build a deterministic junction tree satisfying running intersection."""
    validate_network(net)
    elim = _min_fill_cliques(_moral_adjacency(net))

    # Maximal cliques only, lexicographic order for stable indices.
    maximal = []
    for i, c in enumerate(elim):
        if any(c < other for other in elim):
            continue
        if any(c == other for other in elim[:i]):
            continue
        maximal.append(tuple(sorted(c)))
    cliques = sorted(maximal)

    # Maximum-weight spanning tree over separator sizes (Kruskal, deterministic).
    m = len(cliques)
    candidates = sorted(
        (a, b)
        for a in range(m)
        for b in range(a + 1, m)
    )
    candidates.sort(key=lambda e: -len(set(cliques[e[0]]) & set(cliques[e[1]])))
    parent = list(range(m))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    separators: list[Separator] = []
    neighbors: list[list[int]] = [[] for _ in range(m)]
    for a, b in candidates:
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        parent[ra] = rb
        sep = tuple(sorted(set(cliques[a]) & set(cliques[b])))
        separators.append(Separator(a, b, sep))
        neighbors[a].append(b)
        neighbors[b].append(a)
        if len(separators) == m - 1:
            break

    jt = JunctionTree(net=net, cliques=cliques, separators=separators)
    jt._neighbors = [sorted(ns) for ns in neighbors]
    for s in separators:
        jt._sep_vars[(s.a, s.b)] = s.variables
        jt._sep_vars[(s.b, s.a)] = s.variables

    # BFS from the fixed root gives the two-pass schedule.
    jt._root = 0
    order, seen = [0], {0}
    for c in order:
        for nb in jt._neighbors[c]:
            if nb not in seen:
                seen.add(nb)
                order.append(nb)
    tree_parent = {0: None}
    for c in order:
        for nb in jt._neighbors[c]:
            if nb not in tree_parent:
                tree_parent[nb] = c
    jt._collect_order = [(c, tree_parent[c]) for c in reversed(order) if tree_parent[c] is not None]

    jt._family_clique = [
        next(ci for ci, cl in enumerate(cliques) if set(net.family(i)) <= set(cl))
        for i in range(net.n_variables)
    ]
    jt._injection_clique = [
        next(ci for ci, cl in enumerate(cliques) if i in cl)
        for i in range(net.n_variables)
    ]
    return jt


# ---------------------------------------------------------------------------
# Batched propagation (Shafer-Shenoy, leading record axis)
# ---------------------------------------------------------------------------

def _clique_potentials(jt: JunctionTree, cpts: list[Cpt], n_records: int) -> list[np.ndarray]:
    # products of the assigned family tables, without the record axis;
    # the result is broadcast to (n_records, ...) views, so callers must not
    # mutate potentials in place
    pots = [np.ones(jt.clique_shape(c)) for c in range(len(jt.cliques))]
    for i in range(jt.net.n_variables):
        c = jt._family_clique[i]
        cvars = jt.cliques[c]
        cpt = cpts[i]
        fam = jt.net.family(i)
        # (q, r) -> axes (parents ascending..., child) -> sorted family order
        dims = [jt.net.cardinality(p) for p in cpt.parents] + [jt.net.cardinality(i)]
        table = cpt.values.reshape(dims)
        table = np.moveaxis(table, -1, fam.index(i))
        shape = tuple(
            jt.net.cardinality(v) if v in fam else 1 for v in cvars
        )
        pots[c] = pots[c] * table.reshape(shape)
    return [np.broadcast_to(p[None], (n_records, *p.shape)) for p in pots]


def _expand(msg: np.ndarray, sep: tuple[int, ...], cvars: tuple[int, ...], net: Network) -> np.ndarray:
    shape = tuple(net.cardinality(v) if v in sep else 1 for v in cvars)
    return msg.reshape((msg.shape[0], *shape))


def _marginalize(table: np.ndarray, cvars: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    axes = tuple(k + 1 for k, v in enumerate(cvars) if v not in keep)
    return table.sum(axis=axes) if axes else table


def _normalize_records(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = table.reshape(table.shape[0], -1).sum(axis=1)
    safe = np.where(z > 0, z, 1.0)
    out = table / safe.reshape((-1,) + (1,) * (table.ndim - 1))
    return out, z


def propagate(
    jt: JunctionTree,
    cpts: list[Cpt] | None = None,
    indicators: dict[int, np.ndarray] | None = None,
    n_records: int = 1,
) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Run two-pass message passing.

    ``indicators`` maps a variable index to an (n_records, r_v) likelihood
    array (rows of one-hots for hard evidence, ones for unobserved).

    Returns ``(beliefs, log_z, zero_mask)`` where ``beliefs[c]`` is the
    normalized joint P(clique vars | evidence) per record, ``log_z`` the
    per-record log evidence probability (-inf where impossible), and
    ``zero_mask`` flags impossible records.
    """
    net = jt.net
    cpts = cpts if cpts is not None else net.cpts
    psi = _clique_potentials(jt, cpts, n_records)
    if indicators:
        for v, ind in indicators.items():
            c = jt._injection_clique[v]
            cvars = jt.cliques[c]
            psi[c] = psi[c] * _expand(ind, (v,), cvars, net)

    msgs: dict[tuple[int, int], np.ndarray] = {}
    logs: dict[tuple[int, int], np.ndarray] = {}

    def send(src: int, dst: int) -> None:
        cvars = jt.cliques[src]
        prod = psi[src]
        acc = np.zeros(n_records)
        for nb in jt._neighbors[src]:
            if nb == dst:
                continue
            prod = prod * _expand(msgs[(nb, src)], jt._sep_vars[(nb, src)], cvars, net)
            acc = acc + logs[(nb, src)]
        raw = _marginalize(prod, cvars, jt._sep_vars[(src, dst)])
        msgs[(src, dst)], z = _normalize_records(raw)
        with np.errstate(divide="ignore"):
            logs[(src, dst)] = acc + np.log(z)

    for child, par in jt._collect_order:
        send(child, par)
    root = jt._root
    root_prod = psi[root]
    root_log = np.zeros(n_records)
    for nb in jt._neighbors[root]:
        root_prod = root_prod * _expand(msgs[(nb, root)], jt._sep_vars[(nb, root)], jt.cliques[root], net)
        root_log = root_log + logs[(nb, root)]
    _, z_root = _normalize_records(root_prod)
    with np.errstate(divide="ignore"):
        log_z = root_log + np.log(z_root)
    zero_mask = ~np.isfinite(log_z)

    for child, par in reversed(jt._collect_order):
        send(par, child)

    beliefs = []
    for c, cvars in enumerate(jt.cliques):
        prod = psi[c]
        for nb in jt._neighbors[c]:
            prod = prod * _expand(msgs[(nb, c)], jt._sep_vars[(nb, c)], cvars, net)
        beliefs.append(_normalize_records(prod)[0])
    return beliefs, log_z, zero_mask


def evidence_indicators(net: Network, evidence: Assignment, n_records: int = 1) -> dict[int, np.ndarray]:
    out = {}
    for v, val in evidence.items():
        ind = np.zeros((n_records, net.cardinality(v)))
        ind[:, val] = 1.0
        out[v] = ind
    return out


def calibrate(jt: JunctionTree) -> None:
    """Populate clique and separator marginal tables (no evidence)."""
    beliefs, _, _ = propagate(jt)
    jt.clique_tables = [b[0] for b in beliefs]
    for s in jt.separators:
        s.table = _marginalize(beliefs[s.a], jt.cliques[s.a], s.variables)[0]
    jt.calibrated = True


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def query_posterior(jt: JunctionTree, evidence: Assignment, target: int) -> Posterior:
    """Exact P(target | evidence); ``zero_evidence`` flags P(evidence) = 0."""
    if target in evidence:
        raise TargetInEvidence(f"target variable {target} is in the evidence")
    inds = evidence_indicators(jt.net, evidence)
    beliefs, _, zero = propagate(jt, indicators=inds)
    r = jt.net.cardinality(target)
    if bool(zero[0]):
        return Posterior(target, np.zeros(r), dict(evidence), zero_evidence=True)
    c = jt._injection_clique[target]
    marg = _marginalize(beliefs[c], jt.cliques[c], (target,))[0]
    return Posterior(target, marg / marg.sum(), dict(evidence))


def enumerate_posterior(
    net: Network, evidence: Assignment, target: int, cap: int = 2**20
) -> Posterior:
    """Brute-force oracle: sum the factorized joint over all completions."""
    if target in evidence:
        raise TargetInEvidence(f"target variable {target} is in the evidence")
    free = [i for i in range(net.n_variables) if i not in evidence]
    size = 1
    for i in free:
        size *= net.cardinality(i)
        if size > cap:
            raise StateSpaceTooLarge(f"enumeration needs > {cap} assignments")
    probs = np.zeros(net.cardinality(target))
    x = dict(evidence)
    for combo in itertools.product(*(range(net.cardinality(i)) for i in free)):
        for i, val in zip(free, combo):
            x[i] = val
        probs[x[target]] += joint_probability(net, x)
    total = probs.sum()
    if total == 0:
        return Posterior(target, probs, dict(evidence), zero_evidence=True)
    return Posterior(target, probs / total, dict(evidence))


def classify(jt: JunctionTree, evidence: Assignment, decision: int) -> tuple[int | None, Posterior]:
    """Argmax of the decision-node posterior; ties go to the lowest state index.

    On zero-probability evidence the prediction is ``None`` and the posterior
    carries the ``zero_evidence`` flag.
    """
    post = query_posterior(jt, evidence, decision)
    if post.zero_evidence:
        return None, post
    return int(np.argmax(post.probs)), post
