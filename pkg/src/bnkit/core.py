"""Discrete Bayesian networks: variables, CPTs, datasets, and the factorized joint.

Conventions used throughout the package:

- Variables are referenced by their index in ``Network.variables``.
- A CPT row is indexed by the parent configuration ``j``: parents are taken in
  ascending variable-index order and the LAST parent varies fastest (mixed-radix
  encoding).
- Logarithms are natural (nats).
- Missing dataset cells are stored as ``MISSING`` (-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

MISSING = -1

#: Tolerance for CPT row normalization checks.
ROW_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class BnError(Exception):
    """Base class for all toolkit errors."""


class CycleDetected(BnError):
    """The edge set is not acyclic. Carries one offending cycle."""

    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        super().__init__(f"cycle detected: {' -> '.join(map(str, self.cycle))}")


class ShapeMismatch(BnError):
    pass


class RowNotNormalized(BnError):
    def __init__(self, variable: int, row: int, total: float):
        self.variable = variable
        self.row = row
        self.total = total
        super().__init__(
            f"CPT row for variable {variable}, parent config {row} sums to {total!r}"
        )


class MissingParentValue(BnError):
    pass


class PartialAssignment(BnError):
    pass


class IncompleteData(BnError):
    """Raised by complete-data operations; directs the caller to EM."""


class ParseError(BnError):
    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{message}" + (f" (at {location})" if location else ""))


class StateSpaceTooLarge(BnError):
    pass


class TargetInEvidence(BnError):
    pass


class NoObservedData(BnError):
    pass


class NoCompletePairs(BnError):
    pass


class EmptyData(BnError):
    pass


class EmptyTestSet(BnError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    """A named discrete variable with an ordered list of state labels."""

    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise ValueError(f"variable {self.name!r} needs >= 2 states")
        if len(set(self.states)) != len(self.states):
            raise ValueError(f"variable {self.name!r} has duplicate state labels")

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise KeyError(f"unknown state {label!r} for variable {self.name!r}") from None


@dataclass
class Cpt:
    """Conditional probability table for one variable.

    ``values`` has shape (q, r): one row per parent configuration, one column
    per child state. Parents are stored in ascending variable-index order.
    """

    child: int
    parents: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.parents = tuple(self.parents)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ShapeMismatch(f"CPT for variable {self.child} must be 2-D")

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]


# Evidence / instantiation carrier: variable index -> state index.
Assignment = dict[int, int]


@dataclass
class Network:
    """A DAG over discrete variables plus one CPT per variable.

    Treated as immutable after construction; all operations are re-entrant.
    """

    variables: list[Variable]
    edges: frozenset[tuple[int, int]]
    cpts: list[Cpt]

    def __post_init__(self):
        self.variables = list(self.variables)
        self.edges = frozenset((int(p), int(c)) for p, c in self.edges)
        self.cpts = list(self.cpts)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique within a network")
        self._parents = [
            tuple(sorted(p for p, c in self.edges if c == i))
            for i in range(len(self.variables))
        ]
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def parents(self, i: int) -> tuple[int, ...]:
        return self._parents[i]

    def children(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(c for p, c in self.edges if p == i))

    def cardinality(self, i: int) -> int:
        return self.variables[i].cardinality

    def index_of(self, name: str) -> int:
        return self._index[name]

    def with_cpts(self, cpts: Sequence[Cpt]) -> "Network":
        """Copy of this network with replaced parameters (same structure)."""
        return Network(self.variables, self.edges, list(cpts))

    def family(self, i: int) -> tuple[int, ...]:
        """The set {i} U parents(i), ascending."""
        return tuple(sorted((i,) + self._parents[i]))


def build_network(
    variables: Sequence[Variable],
    edges: Iterable[tuple[int, int]],
    tables: Sequence[np.ndarray | Sequence[Sequence[float]]] | None = None,
) -> Network:
    """Assemble a network, deriving each CPT's parent tuple from the edge set.

    ``tables[i]`` is the (q_i, r_i) row-major table for variable i; when omitted
    every CPT is uniform.
    """
    edges = frozenset((int(p), int(c)) for p, c in edges)
    cpts = []
    for i, var in enumerate(variables):
        parents = tuple(sorted(p for p, c in edges if c == i))
        q = 1
        for p in parents:
            q *= variables[p].cardinality
        r = var.cardinality
        if tables is None or tables[i] is None:
            values = np.full((q, r), 1.0 / r)
        else:
            values = np.asarray(tables[i], dtype=float).reshape(q, r)
        cpts.append(Cpt(i, parents, values))
    return Network(list(variables), edges, cpts)


@dataclass
class Dataset:
    """Records of discrete values over a network's variable schema.

    ``rows`` is an int array of shape (n_records, n_variables); missing cells
    hold ``MISSING``.
    """

    variables: list[Variable]
    rows: np.ndarray

    def __post_init__(self):
        self.variables = list(self.variables)
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, len(self.variables))
        if rows.ndim != 2 or rows.shape[1] != len(self.variables):
            raise ShapeMismatch(
                f"dataset rows have shape {rows.shape}, expected (*, {len(self.variables)})"
            )
        cards = np.array([v.cardinality for v in self.variables])
        if rows.size and ((rows < MISSING).any() or (rows >= cards[None, :]).any()):
            raise ShapeMismatch("dataset contains out-of-range state indices")
        self.rows = rows

    @property
    def n_records(self) -> int:
        return self.rows.shape[0]

    def is_complete(self) -> bool:
        return not (self.rows == MISSING).any()

    def missing_fraction(self) -> float:
        if self.rows.size == 0:
            return 0.0
        return float((self.rows == MISSING).mean())


# ---------------------------------------------------------------------------
# Graph checks
# ---------------------------------------------------------------------------

def topological_order(net: Network) -> list[int]:
    """Kahn's algorithm, lowest index first. Raises CycleDetected."""
    n = net.n_variables
    indeg = [len(net.parents(i)) for i in range(n)]
    children: list[list[int]] = [[] for _ in range(n)]
    for p, c in sorted(net.edges):
        children[p].append(c)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order: list[int] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        changed = False
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    if len(order) != n:
        raise CycleDetected(_find_cycle(net, [i for i in range(n) if i not in set(order)]))
    return order


def _find_cycle(net: Network, remaining: list[int]) -> list[int]:
    # Every remaining node has a parent among the remaining; walk until repeat.
    rem = set(remaining)
    v = min(rem)
    seen: list[int] = []
    while v not in seen:
        seen.append(v)
        v = min(p for p in net.parents(v) if p in rem)
    start = seen.index(v)
    cycle = seen[start:] + [v]
    cycle.reverse()  # parent walk found it backwards
    return cycle


def validate_network(net: Network) -> None:
    """Accept iff the graph is a DAG, CPT shapes are consistent, and every
    CPT row sums to 1 within ROW_SUM_TOL. Raises the first violation found."""
    topological_order(net)
    if len(net.cpts) != net.n_variables:
        raise ShapeMismatch(
            f"{len(net.cpts)} CPTs for {net.n_variables} variables"
        )
    for i in range(net.n_variables):
        cpt = net.cpts[i]
        if cpt.child != i:
            raise ShapeMismatch(f"CPT at position {i} is for variable {cpt.child}")
        if cpt.parents != net.parents(i):
            raise ShapeMismatch(
                f"CPT parents {cpt.parents} for variable {i} do not match "
                f"graph parents {net.parents(i)}"
            )
        q = 1
        for p in cpt.parents:
            q *= net.cardinality(p)
        r = net.cardinality(i)
        if cpt.values.shape != (q, r):
            raise ShapeMismatch(
                f"CPT for variable {i} has shape {cpt.values.shape}, expected {(q, r)}"
            )
        sums = cpt.values.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        bad |= (cpt.values < 0).any(axis=1) | (cpt.values > 1 + ROW_SUM_TOL).any(axis=1)
        if bad.any():
            j = int(np.argmax(bad))
            raise RowNotNormalized(i, j, float(sums[j]))


# ---------------------------------------------------------------------------
# Parent-configuration indexing (mixed radix, last parent fastest)
# ---------------------------------------------------------------------------

def parent_strides(net: Network, i: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Parents of i (ascending) and their mixed-radix strides."""
    parents = net.parents(i)
    strides = np.ones(len(parents), dtype=np.int64)
    for t in range(len(parents) - 2, -1, -1):
        strides[t] = strides[t + 1] * net.cardinality(parents[t + 1])
    return parents, strides


def parent_config_index(net: Network, i: int, assignment: Mapping[int, int]) -> int:
    """Mixed-radix index of i's parent configuration in ``assignment``."""
    parents, strides = parent_strides(net, i)
    j = 0
    for p, s in zip(parents, strides):
        if p not in assignment:
            raise MissingParentValue(f"no value for parent {p} of variable {i}")
        j += int(assignment[p]) * int(s)
    return j


def parent_config_assignment(net: Network, i: int, j: int) -> Assignment:
    """Inverse of parent_config_index: config j -> parent assignment."""
    parents, strides = parent_strides(net, i)
    out: Assignment = {}
    for p, s in zip(parents, strides):
        out[p] = int(j // s)
        j = int(j % s)
    return out


def num_parent_configs(net: Network, i: int) -> int:
    q = 1
    for p in net.parents(i):
        q *= net.cardinality(p)
    return q


# ---------------------------------------------------------------------------
# Joint probability, counts, log-likelihood
# ---------------------------------------------------------------------------

def joint_probability(net: Network, x: Mapping[int, int]) -> float:
    """Product of p(V_i | parents(V_i)) over all variables for a total assignment."""
    if len(x) != net.n_variables:
        raise PartialAssignment(f"assignment covers {len(x)} of {net.n_variables} variables")
    p = 1.0
    for i in range(net.n_variables):
        j = parent_config_index(net, i, x)
        p *= float(net.cpts[i].values[j, x[i]])
    return p


def complete_counts(net: Network, d: Dataset) -> list[np.ndarray]:
    """Exact tallies N[i][j, k] from a complete dataset."""
    if not d.is_complete():
        raise IncompleteData("dataset has missing cells; use EM-based learning")
    counts = []
    for i in range(net.n_variables):
        parents, strides = parent_strides(net, i)
        q = num_parent_configs(net, i)
        r = net.cardinality(i)
        if d.n_records == 0:
            counts.append(np.zeros((q, r)))
            continue
        j = np.zeros(d.n_records, dtype=np.int64)
        for p, s in zip(parents, strides):
            j += d.rows[:, p] * s
        flat = np.bincount(j * r + d.rows[:, i], minlength=q * r)
        counts.append(flat.reshape(q, r).astype(float))
    return counts


def ll_from_counts(counts: Sequence[np.ndarray], cpts: Sequence[Cpt]) -> float:
    """Sum of N[i][j,k] * log theta[i][j,k] with 0*log 0 = 0.

    Returns -inf when some counted cell has zero probability (log-zero flag,
    not an exception; learning code treats it as the worst score).
    """
    total = 0.0
    for n, cpt in zip(counts, cpts):
        theta = cpt.values
        pos = n > 0
        if (theta[pos] == 0).any():
            return float("-inf")
        total += float((n[pos] * np.log(theta[pos])).sum())
    return total


def log_likelihood(net: Network, d: Dataset) -> float:
    """Complete-data log-likelihood in nats (may be -inf, never raises on zeros)."""
    return ll_from_counts(complete_counts(net, d), net.cpts)
