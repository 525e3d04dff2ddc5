"""Synthetic data generation and the evaluation harness.

The brain-tumor example network covers the 30-variable diagnostic schema with
a four-level layering: the 8-state decision node at the top, three radiological
/ clinical aggregate nodes under it, five state-summary nodes below those, and
21 observable characteristics at the leaves. Arcs run in the generative
direction (diagnosis -> findings) so the decision node's prior is exactly the
published class-frequency table; the layering is illustrative, not normative.
Non-class CPTs are seeded-random since no reference tables exist.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    MISSING,
    Dataset,
    EmptyTestSet,
    IncompleteData,
    Network,
    Variable,
    build_network,
    joint_probability,
    topological_order,
)
from .jtree import build_junction_tree, classify
from .params import DirichletPrior, EmTrace, em, ems, mle


# ---------------------------------------------------------------------------
# Forward sampling and MCAR masking
# ---------------------------------------------------------------------------

def forward_sample(net: Network, n: int, seed: int) -> Dataset:
    """Ancestral sampling in topological order; deterministic per seed."""
    rng = np.random.default_rng(seed)
    rows = np.zeros((n, net.n_variables), dtype=np.int64)
    for i in topological_order(net):
        parents = net.parents(i)
        j = np.zeros(n, dtype=np.int64)
        for p in parents:
            j = j * net.cardinality(p) + rows[:, p]
        cum = np.cumsum(net.cpts[i].values[j], axis=1)
        u = rng.random(n)
        rows[:, i] = np.minimum(
            (u[:, None] >= cum).sum(axis=1), net.cardinality(i) - 1
        )
    return Dataset(net.variables, rows)


def mask_mcar(
    d: Dataset,
    rate: float,
    seed: int,
    exempt: Sequence[int] = (),
    per_column_rates: dict[int, float] | None = None,
) -> Dataset:
    """Hide each cell independently with the given probability.

    Observed values are never altered, only replaced by MISSING. Columns in
    ``exempt`` are left fully observed; ``per_column_rates`` overrides the
    global rate per column.
    """
    if not (0 <= rate < 1):
        raise ValueError("missingness rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    rates = np.full(len(d.variables), rate)
    for c, r in (per_column_rates or {}).items():
        rates[c] = r
    rates[list(exempt)] = 0.0
    mask = rng.random(d.rows.shape) < rates[None, :]
    rows = d.rows.copy()
    rows[mask] = MISSING
    return Dataset(d.variables, rows)


@dataclass
class GeneratorSpec:
    """Recipe for one synthetic dataset: size, missingness, and seed."""

    n: int
    missing_rate: float = 0.0
    seed: int = 0
    exempt: tuple[str, ...] = ()
    per_variable_rates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.missing_rate < 1):
            raise ValueError("missingness rate must be in [0, 1)")


def generate(net: Network, spec: GeneratorSpec) -> Dataset:
    d = forward_sample(net, spec.n, spec.seed)
    exempt = [net.index_of(name) for name in spec.exempt]
    overrides = {net.index_of(k): v for k, v in spec.per_variable_rates.items()}
    if spec.missing_rate == 0 and not overrides:
        return d
    return mask_mcar(d, spec.missing_rate, spec.seed + 1, exempt, overrides)


# ---------------------------------------------------------------------------
# The brain-tumor example schema
# ---------------------------------------------------------------------------

#: Published class frequencies (%) for the 8 decision states; state 7 is 0.
TUMOR_CLASS_FREQUENCIES = (16.66, 11.11, 31.94, 9.72, 2.77, 22.22, 0.0, 5.58)

_TUMOR_STATES: dict[str, tuple[str, ...]] = {
    "DT": tuple(f"Tumeur {k}" for k in range(1, 9)),
    # aggregate levels
    "EM": ("normal", "suspect", "pathologique"),
    "EDT": ("normal", "suspect", "pathologique"),
    "EDA": ("normal", "suspect", "pathologique"),
    "EPC": ("normal", "suspect", "pathologique"),
    "EPS": ("normal", "suspect", "pathologique"),
    "EDE": ("normal", "suspect", "pathologique"),
    "EDL": ("normal", "suspect", "pathologique"),
    "ES": ("normal", "suspect", "pathologique"),
    # observable characteristics
    "AG": ("jeune", "adulte", "age"),
    "SX": ("M", "F"),
    "DM": ("rien", "notable"),
    "MA": ("absent", "present"),
    "PI": ("absent", "present"),
    "CK": ("absente", "presente"),
    "CL": ("absente", "presente"),
    "ECC": ("absent", "present"),
    "Ems": ("absent", "present"),
    "Poe": ("absent", "present"),
    "HM": ("absente", "presente"),
    "CP": ("solide", "kystique", "mixte"),
    "IPC": ("faible", "moyenne", "forte"),
    "TPC": ("homogene", "heterogene", "annulaire"),
    "PST1": ("hypo", "iso", "hyper"),
    "PST2": ("hypo", "iso", "hyper"),
    "SG": ("hemispherique", "central", "posterieur"),
    "LT": ("intra-axiale", "extra-axiale"),
    "LTT": ("nette", "floue"),
    "NT": ("unique", "multiple"),
    "TT": ("petite", "moyenne", "grande"),
}

_TUMOR_LAYERS: dict[str, tuple[str, ...]] = {
    "DT": ("EM", "EDT", "EDA"),
    "EM": ("EPC", "EPS"),
    "EDT": ("EDE", "EDL"),
    "EDA": ("ES",),
    "EPC": ("IPC", "TPC"),
    "EPS": ("PST1", "PST2"),
    "EDE": ("ECC", "Ems", "Poe", "HM", "CL", "CK"),
    "EDL": ("SG", "LT", "LTT", "NT", "TT", "CP"),
    "ES": ("AG", "SX", "DM", "MA", "PI"),
}

TUMOR_DECISION = "DT"

#: The "assessed state" nodes a consultation typically pins down; used as the
#: default evidence set in the documented experiment preset.
TUMOR_ASSESSED_NODES = ("EM", "EDT", "EDA", "EPC", "EPS", "EDE", "EDL", "ES")


def tumor_class_prior(epsilon: float = 1e-6) -> tuple[np.ndarray, list[str]]:
    """Class prior from the published frequencies, zero entries smoothed.

    Returns the normalized prior and the labels of the smoothed states.
    """
    raw = np.array(TUMOR_CLASS_FREQUENCIES, dtype=float)
    prior = raw / raw.sum()
    smoothed = [f"Tumeur {k + 1}" for k in np.nonzero(prior == 0)[0]]
    prior[prior == 0] = epsilon
    return prior / prior.sum(), smoothed


def tumor_schema(
    seed: int = 0, concentrations: tuple[float, float, float] = (0.1, 0.15, 2.0)
) -> tuple[Network, dict]:
    """The 30-variable diagnostic example network.

    ``concentrations`` are the symmetric Dirichlet parameters used to draw CPT
    rows per layer (aggregates under the decision node, state summaries,
    observable characteristics). The defaults give each tumor class a
    near-deterministic signature on the aggregate nodes, noisy relays below
    them, and weakly informative observables, which keeps the classification
    problem learnable at the 60-record scale of the documented experiments.
    Returns the network and a report dict (decision node, smoothed prior
    states, layer assignment).
    """
    names = sorted(_TUMOR_STATES)
    variables = [Variable(n, _TUMOR_STATES[n]) for n in names]
    index = {n: i for i, n in enumerate(names)}
    edges = [
        (index[p], index[c]) for p, kids in _TUMOR_LAYERS.items() for c in kids
    ]
    aggregates = {index[c] for c in _TUMOR_LAYERS[TUMOR_DECISION]}
    summaries = {
        index[c]
        for p in _TUMOR_LAYERS[TUMOR_DECISION]
        for c in _TUMOR_LAYERS[p]
    }
    rng = np.random.default_rng(seed)
    prior, smoothed = tumor_class_prior()

    net = build_network(variables, edges)
    tables = []
    for i, var in enumerate(variables):
        q = net.cpts[i].values.shape[0]
        if var.name == TUMOR_DECISION:
            tables.append(prior[None, :])
            continue
        conc = (
            concentrations[0]
            if i in aggregates
            else concentrations[1] if i in summaries else concentrations[2]
        )
        tables.append(rng.dirichlet(np.full(var.cardinality, conc), size=q))
    net = build_network(variables, edges, tables)
    info = {
        "decision": TUMOR_DECISION,
        "smoothed_states": smoothed,
        "layers": {p: list(kids) for p, kids in _TUMOR_LAYERS.items()},
        "seed": seed,
    }
    return net, info


# ---------------------------------------------------------------------------
# Evaluation harness
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Metrics for one train/classify run.

    ``confusion[t][p]`` counts classified test records with true state t and
    predicted state p; records hitting zero-probability evidence are counted
    in ``zero_evidence`` (and as incorrect) but not in the confusion matrix.
    """

    algorithm: str
    structure_id: str
    seed: int | None
    precision: float
    n_correct: int
    n_test: int
    iterations: int
    converged: bool
    wall_time_s: float
    ll_trace: list[float]
    bound_satisfaction_trace: list[float | None]
    confusion: list[list[int]]
    zero_evidence: int

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "algorithm": self.algorithm,
            "structure": self.structure_id,
            "seed": self.seed,
            "precision": self.precision,
            "n_correct": self.n_correct,
            "n_test": self.n_test,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time_s": self.wall_time_s if include_timing else None,
            "ll_trace": self.ll_trace,
            "bound_satisfaction_trace": self.bound_satisfaction_trace,
            "confusion": self.confusion,
            "zero_evidence": self.zero_evidence,
        }


def evaluate(
    net: Network,
    train: Dataset,
    test: Dataset,
    decision: int,
    evidence_vars: Sequence[int] | None = None,
    algo: str = "ems",
    mode: str = "per-iteration",
    seed: int | None = 0,
    tol: float = 1e-6,
    max_iter: int = 200,
    prior: DirichletPrior | None = None,
    structure_id: str = "model",
) -> ExperimentReport:
    """Fit parameters on the training set, classify the test set.

    ``evidence_vars`` defaults to every variable except the decision node;
    each test record's observed cells among them become the evidence.
    """
    if test.n_records == 0:
        raise EmptyTestSet("no test records")
    if (test.rows[:, decision] == MISSING).any():
        raise IncompleteData("every test record must observe the decision label")
    t0 = time.perf_counter()

    if algo == "mle":
        cpts, _ = mle(net, train, prior)
        trace = EmTrace(algorithm="mle", converged=True)
    elif algo == "em":
        cpts, trace = em(net, train, seed=seed, tol=tol, max_iter=max_iter, prior=prior)
    elif algo == "ems":
        cpts, trace = ems(
            net, train, seed=seed, tol=tol, max_iter=max_iter, prior=prior, mode=mode
        )
    else:
        raise ValueError(f"unknown algorithm {algo!r}")

    fitted = net.with_cpts(cpts)
    jt = build_junction_tree(fitted)
    if evidence_vars is None:
        evidence_vars = [i for i in range(net.n_variables) if i != decision]

    r = net.cardinality(decision)
    confusion = np.zeros((r, r), dtype=int)
    correct = 0
    zero = 0
    for row in test.rows:
        ev = {
            int(v): int(row[v])
            for v in evidence_vars
            if row[v] != MISSING and v != decision
        }
        pred, post = classify(jt, ev, decision)
        truth = int(row[decision])
        if pred is None:
            zero += 1
            continue
        confusion[truth, pred] += 1
        if pred == truth:
            correct += 1

    return ExperimentReport(
        algorithm=algo,
        structure_id=structure_id,
        seed=seed,
        precision=correct / test.n_records,
        n_correct=correct,
        n_test=test.n_records,
        iterations=trace.n_iterations,
        converged=trace.converged,
        wall_time_s=time.perf_counter() - t0,
        ll_trace=trace.lls,
        bound_satisfaction_trace=[it.bound_satisfaction for it in trace.iterations],
        confusion=confusion.tolist(),
        zero_evidence=zero,
    )


def bayes_optimal_prediction(net: Network, evidence: dict[int, int], decision: int) -> int:
    """Brute-force Bayes rule for complete evidence: argmax_k of the joint."""
    if len(evidence) != net.n_variables - 1:
        raise ValueError("bayes_optimal_prediction needs complete evidence")
    scores = []
    for k in range(net.cardinality(decision)):
        x = dict(evidence)
        x[decision] = k
        scores.append(joint_probability(net, x))
    return int(np.argmax(scores))


def bayes_rate(
    net: Network,
    test: Dataset,
    decision: int,
    evidence_vars: Sequence[int] | None = None,
) -> float:
    """Precision of the generating model itself on the test data.

    With the default (complete) evidence the argmax is a plain joint-product;
    for an evidence subset the exact posterior comes from the junction tree.
    """
    if test.n_records == 0:
        raise EmptyTestSet("no test records")
    correct = 0
    if evidence_vars is None:
        for row in test.rows:
            ev = {int(v): int(row[v]) for v in range(net.n_variables) if v != decision}
            if bayes_optimal_prediction(net, ev, decision) == int(row[decision]):
                correct += 1
    else:
        jt = build_junction_tree(net)
        for row in test.rows:
            ev = {int(v): int(row[v]) for v in evidence_vars if v != decision}
            pred, _ = classify(jt, ev, decision)
            if pred == int(row[decision]):
                correct += 1
    return correct / test.n_records


# ---------------------------------------------------------------------------
# Run comparison exports
# ---------------------------------------------------------------------------

SUMMARY_COLUMNS = (
    "algorithm",
    "structure",
    "seed",
    "precision",
    "iterations",
    "converged",
    "final_ll",
    "zero_evidence",
)

SERIES_COLUMNS = ("run", "iteration", "ll", "bound_satisfaction")


def compare_runs(reports: Sequence[ExperimentReport]) -> dict:
    """Stable comparison table plus per-iteration series for external plotting."""
    ordered = sorted(
        reports, key=lambda r: (r.algorithm, r.structure_id, r.seed if r.seed is not None else -1)
    )
    summary = []
    series = []
    for r in ordered:
        run_id = f"{r.algorithm}:{r.structure_id}:{r.seed}"
        summary.append(
            {
                "algorithm": r.algorithm,
                "structure": r.structure_id,
                "seed": r.seed,
                "precision": r.precision,
                "iterations": r.iterations,
                "converged": r.converged,
                "final_ll": r.ll_trace[-1] if r.ll_trace else None,
                "zero_evidence": r.zero_evidence,
            }
        )
        for t, ll in enumerate(r.ll_trace, start=1):
            sat = r.bound_satisfaction_trace[t - 1]
            series.append(
                {"run": run_id, "iteration": t, "ll": ll, "bound_satisfaction": sat}
            )
    return {"summary": summary, "series": series}


def _csv_lines(rows: list[dict], columns: tuple[str, ...]) -> str:
    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v) if isinstance(v, float) else str(v)

    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def summary_csv(comparison: dict) -> str:
    return _csv_lines(comparison["summary"], SUMMARY_COLUMNS)


def series_csv(comparison: dict) -> str:
    return _csv_lines(comparison["series"], SERIES_COLUMNS)
