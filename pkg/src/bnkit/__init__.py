"""Discrete Bayesian-network toolkit for diagnosis support.

Exact junction-tree inference, parameter learning from incomplete data
(EM and its interval-thresholded extension), structure learning, synthetic
data generation, and an evaluation harness with CLI and HTTP front ends.
"""

from .core import (
    MISSING,
    Assignment,
    BnError,
    Cpt,
    Dataset,
    Network,
    Variable,
    build_network,
    complete_counts,
    joint_probability,
    log_likelihood,
    parent_config_assignment,
    parent_config_index,
    topological_order,
    validate_network,
)
from .io import (
    dataset_from_csv,
    dataset_to_csv,
    load_dataset,
    load_network,
    network_from_json,
    network_to_json,
    save_dataset,
    save_network,
)
from .jtree import (
    JunctionTree,
    Posterior,
    build_junction_tree,
    classify,
    enumerate_posterior,
    query_posterior,
)
from .params import (
    BoundTable,
    DirichletPrior,
    EmTrace,
    bound_satisfaction,
    em,
    ems,
    mle,
    rbe_phase1_bounds,
)
from .structure import (
    StructureCandidate,
    bic_score,
    conditional_mutual_information,
    fan,
    mutual_information,
    mwst,
    mwst_em,
    naive_bayes,
    sem,
    sem_plus_t,
    tan,
)
from .evalgen import (
    ExperimentReport,
    GeneratorSpec,
    bayes_rate,
    compare_runs,
    evaluate,
    forward_sample,
    generate,
    mask_mcar,
    tumor_schema,
)

__version__ = "0.1.0"
