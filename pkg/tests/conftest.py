"""Shared builders for randomized tests. Everything is seeded and deterministic."""

from __future__ import annotations

import numpy as np
import pytest

from bnkit.core import Dataset, Network, Variable, build_network


def make_variables(cards: list[int], prefix: str = "V") -> list[Variable]:
    return [
        Variable(f"{prefix}{i}", tuple(f"s{k}" for k in range(c)))
        for i, c in enumerate(cards)
    ]


def random_network(
    rng: np.random.Generator,
    n_max: int = 8,
    card_max: int = 3,
    edge_prob: float = 0.4,
    n_min: int = 1,
) -> Network:
    """Random DAG with Dirichlet(1) CPT rows; edges respect index order."""
    n = int(rng.integers(n_min, n_max + 1))
    cards = [int(c) for c in rng.integers(2, card_max + 1, size=n)]
    variables = make_variables(cards)
    edges = {
        (i, j)
        for j in range(1, n)
        for i in range(j)
        if rng.random() < edge_prob
    }
    net = build_network(variables, edges)
    tables = []
    for i in range(n):
        q = net.cpts[i].values.shape[0]
        tables.append(rng.dirichlet(np.ones(cards[i]), size=q))
    return build_network(variables, edges, tables)


def random_evidence(rng: np.random.Generator, net: Network, max_vars: int | None = None) -> dict[int, int]:
    n = net.n_variables
    k = int(rng.integers(0, (max_vars or n) + 1))
    chosen = rng.choice(n, size=min(k, n), replace=False)
    return {int(v): int(rng.integers(0, net.cardinality(int(v)))) for v in chosen}


@pytest.fixture
def rng():
    return np.random.default_rng(20110914)


# Worked two-node chain used in several modules: P(A=1)=0.5,
# P(B=1|A=0)=0.3, P(B=1|A=1)=0.8.
@pytest.fixture
def bayes_chain() -> Network:
    variables = make_variables([2, 2], prefix="")
    variables = [Variable("A", ("a0", "a1")), Variable("B", ("b0", "b1"))]
    return build_network(
        variables,
        [(0, 1)],
        [np.array([[0.5, 0.5]]), np.array([[0.7, 0.3], [0.2, 0.8]])],
    )
