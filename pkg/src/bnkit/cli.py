"""Command-line front end: validation, inference, learning, generation, serving.

Every subcommand prints one JSON document to stdout (or to ``--out FILE``) and
exits 0 on success, 2 on validation errors, 3 on runtime errors. Seeded
invocations are byte-reproducible; wall-clock timings are emitted as null
unless ``--timings`` is passed, so that reproducibility holds by default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import Assignment, BnError, Network, validate_network
from .evalgen import GeneratorSpec, evaluate, generate
from .jtree import build_junction_tree, classify, query_posterior
from .params import DirichletPrior, rbe_phase1_bounds
from .structure import (
    fan,
    mwst,
    mwst_em,
    naive_bayes,
    pairwise_mi_matrix,
    sem,
    sem_plus_t,
    tan,
)


def _parse_evidence(net: Network, text: str | None) -> Assignment:
    ev: Assignment = {}
    if not text:
        return ev
    for pair in text.split(","):
        if "=" not in pair:
            raise BnError(f"evidence item {pair!r} is not var=state")
        name, label = pair.split("=", 1)
        i = _var_index(net, name)
        try:
            ev[i] = net.variables[i].state_index(label)
        except KeyError as exc:
            raise BnError(str(exc.args[0])) from None
    return ev


def _var_index(net: Network, name: str) -> int:
    try:
        return net.index_of(name)
    except KeyError:
        raise BnError(f"unknown variable {name!r}") from None


def _emit(doc: dict, out: str | None) -> None:
    text = io.dumps_canonical(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_validate(args) -> dict:
    net = io.load_network(args.model)
    validate_network(net)
    return {"ok": True, "variables": net.n_variables, "edges": len(net.edges)}


def _posterior_doc(net: Network, post) -> dict:
    return {
        "target": net.variables[post.variable].name,
        "states": list(net.variables[post.variable].states),
        "probs": [float(p) for p in post.probs],
        "evidence": {
            net.variables[v].name: net.variables[v].states[s]
            for v, s in sorted(post.evidence.items())
        },
        "zero_evidence": post.zero_evidence,
    }


def _cmd_infer(args) -> dict:
    net = io.load_network(args.model)
    jt = build_junction_tree(net)
    ev = _parse_evidence(net, args.evidence)
    post = query_posterior(jt, ev, _var_index(net, args.target))
    return _posterior_doc(net, post)


def _cmd_classify(args) -> dict:
    net = io.load_network(args.model)
    jt = build_junction_tree(net)
    ev = _parse_evidence(net, args.evidence)
    decision = _var_index(net, args.decision)
    pred, post = classify(jt, ev, decision)
    doc = _posterior_doc(net, post)
    doc["prediction"] = None if pred is None else net.variables[decision].states[pred]
    return doc


def _cmd_learn_params(args) -> dict:
    from .params import EmTrace, em, ems, mle

    net = io.load_network(args.structure)
    data = io.load_dataset(args.data, net.variables)
    prior = None
    if args.prior:
        cases = io.load_dataset(args.prior, net.variables)
        prior = DirichletPrior.from_imaginary_cases(net, cases)

    if args.algo == "mle":
        cpts, uniform_rows = mle(net, data, prior)
        trace = EmTrace(algorithm="mle", converged=True, uniform_rows=uniform_rows)
        trace.iterations = []
    elif args.algo == "em":
        cpts, trace = em(
            net, data, seed=args.seed, tol=args.tol, max_iter=args.max_iter, prior=prior
        )
    else:
        cpts, trace = ems(
            net,
            data,
            seed=args.seed,
            tol=args.tol,
            max_iter=args.max_iter,
            prior=prior,
            mode=args.mode,
        )
    fitted = net.with_cpts(cpts)
    return {
        "model": io.network_to_dict(fitted),
        "trace": trace.to_dict(include_timing=args.timings),
    }


def _cmd_bounds(args) -> dict:
    net = io.load_network(args.structure)
    data = io.load_dataset(args.data, net.variables)
    return rbe_phase1_bounds(net, data).to_dict()


def _cmd_learn_structure(args) -> dict:
    from .core import build_network
    from .params import em as em_fit, mle as mle_fit

    variables = io.load_network(args.schema).variables if args.schema else None
    data = io.load_dataset(args.data, variables)
    n = len(data.variables)
    names = [v.name for v in data.variables]

    def name_index(name: str) -> int:
        if name not in names:
            raise BnError(f"unknown variable {name!r}")
        return names.index(name)

    root = None
    if args.root is not None:
        root = name_index(args.root)
    elif args.algo in ("mwst", "mwst-em", "sem+t"):
        root = int(np.random.default_rng(args.seed).integers(n))

    provenance: dict = {"algorithm": args.algo, "seed": args.seed}
    if args.algo in ("nb", "tan", "fan"):
        if args.klass is None:
            raise BnError(f"--class is required for {args.algo}")
        c = name_index(args.klass)
        if args.algo == "nb":
            edges = naive_bayes(c, [i for i in range(n) if i != c])
        elif args.algo == "tan":
            edges = tan(data, c)
        else:
            edges = fan(data, c, args.tau)
            provenance["tau"] = args.tau
        provenance["class"] = args.klass
        candidate = None
    elif args.algo == "mwst":
        edges = mwst(pairwise_mi_matrix(data), root)
        provenance["root"] = names[root]
        candidate = None
    elif args.algo == "mwst-em":
        candidate = mwst_em(data, root=root, seed=args.seed)
        provenance["root"] = names[root]
    elif args.algo == "sem":
        candidate = sem(data, seed=args.seed)
    elif args.algo == "sem+t":
        candidate = sem_plus_t(data, root=root, seed=args.seed)
        provenance["root"] = names[root]
    else:  # pragma: no cover - argparse restricts choices
        raise BnError(f"unknown algorithm {args.algo!r}")

    if candidate is None:
        structure = build_network(data.variables, edges)
        if data.is_complete():
            cpts, _ = mle_fit(structure, data)
        else:
            cpts, _ = em_fit(structure, data, seed=args.seed)
        fitted = structure.with_cpts(cpts)
        provenance["score"] = None
        provenance["rounds"] = None
    else:
        fitted = candidate.network(data.variables)
        keep_root = provenance.get("root")
        provenance.update(candidate.provenance)
        if keep_root is not None:
            provenance["root"] = keep_root
        provenance["score"] = candidate.score
        provenance.setdefault("rounds", provenance.pop("moves", None))
    return {"model": io.network_to_dict(fitted), "provenance": provenance}


def _cmd_generate(args) -> dict:
    doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    net = io.load_network(doc["model"])
    spec = GeneratorSpec(
        n=int(doc["n"]),
        missing_rate=float(doc.get("missing_rate", 0.0)),
        seed=int(doc["seed"]),
        exempt=tuple(doc.get("exempt", ())),
        per_variable_rates=dict(doc.get("per_variable_rates", {})),
    )
    data = generate(net, spec)
    csv_text = io.dataset_to_csv(data)
    out_path = doc.get("out")
    result = {
        "records": data.n_records,
        "missing_fraction": data.missing_fraction(),
        "written": None,
        "csv": None,
    }
    if out_path:
        Path(out_path).write_text(csv_text, encoding="utf-8")
        result["written"] = str(out_path)
    else:
        result["csv"] = csv_text
    return result


def _cmd_evaluate(args) -> dict:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    net = io.load_network(doc["model"])
    train = io.load_dataset(doc["train"], net.variables)
    test = io.load_dataset(doc["test"], net.variables)
    decision = _var_index(net, doc["decision"])
    evidence_vars = None
    if "evidence" in doc:
        evidence_vars = [_var_index(net, v) for v in doc["evidence"]]
    prior = None
    if doc.get("prior"):
        prior = DirichletPrior.from_imaginary_cases(
            net, io.load_dataset(doc["prior"], net.variables)
        )
    report = evaluate(
        net,
        train,
        test,
        decision,
        evidence_vars=evidence_vars,
        algo=doc.get("algo", "ems"),
        mode=doc.get("mode", "per-iteration"),
        seed=doc.get("seed", 0),
        tol=float(doc.get("tol", 1e-6)),
        max_iter=int(doc.get("max_iter", 200)),
        prior=prior,
        structure_id=doc.get("structure_id", "model"),
    )
    return report.to_dict(include_timing=args.timings)


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service import create_app

    net = io.load_network(args.model)
    app = create_app(net, decision=args.decision, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"ok": True}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bnkit",
        description="Discrete Bayesian-network toolkit: inference, learning, evaluation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="check a model file")
    sp.add_argument("model")
    sp.set_defaults(func=_cmd_validate)

    sp = sub.add_parser("infer", help="posterior of a target variable")
    sp.add_argument("model")
    sp.add_argument("--evidence", default="", help="comma-separated var=state pairs")
    sp.add_argument("--target", required=True)
    sp.set_defaults(func=_cmd_infer)

    sp = sub.add_parser("classify", help="argmax state of a decision variable")
    sp.add_argument("model")
    sp.add_argument("--evidence", default="")
    sp.add_argument("--decision", required=True)
    sp.set_defaults(func=_cmd_classify)

    sp = sub.add_parser("learn-params", help="fit CPTs on a dataset")
    sp.add_argument("structure")
    sp.add_argument("data")
    sp.add_argument("--algo", choices=("mle", "em", "ems"), default="em")
    sp.add_argument("--mode", choices=("per-iteration", "post-hoc"), default="per-iteration")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--prior", help="CSV of imaginary cases used as pseudo-counts")
    sp.add_argument("--timings", action="store_true", help="include wall-clock times")
    sp.set_defaults(func=_cmd_learn_params)

    sp = sub.add_parser("bounds", help="interval bounds from a one-pass data scan")
    sp.add_argument("structure")
    sp.add_argument("data")
    sp.set_defaults(func=_cmd_bounds)

    sp = sub.add_parser("learn-structure", help="learn a structure from data")
    sp.add_argument("data")
    sp.add_argument(
        "--algo",
        choices=("nb", "tan", "fan", "mwst", "mwst-em", "sem", "sem+t"),
        required=True,
    )
    sp.add_argument("--class", dest="klass", help="class variable (nb/tan/fan)")
    sp.add_argument("--tau", type=float, default=0.01, help="CMI filter threshold (fan)")
    sp.add_argument("--root", help="tree root variable; default: seeded random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument(
        "--schema",
        help="model file supplying variable states when the CSV alone cannot",
    )
    sp.set_defaults(func=_cmd_learn_structure)

    sp = sub.add_parser("generate", help="sample a synthetic dataset")
    sp.add_argument("--spec", required=True, help="generator spec JSON")
    sp.set_defaults(func=_cmd_generate)

    sp = sub.add_parser("evaluate", help="train, classify a test set, report metrics")
    sp.add_argument("--config", required=True, help="experiment config JSON")
    sp.add_argument("--timings", action="store_true")
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("serve", help="start the diagnosis HTTP service")
    sp.add_argument("model")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--decision", default="DT")
    sp.add_argument("--ui", help="directory of built panel files to serve at /")
    sp.set_defaults(func=_cmd_serve)

    for sp in sub.choices.values():
        sp.add_argument("--out", help="write the JSON result here instead of stdout")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = args.out
    try:
        doc = args.func(args)
    except BnError as exc:
        _emit({"error": type(exc).__name__, "detail": str(exc)}, None)
        return 2
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        _emit({"error": type(exc).__name__, "detail": str(exc)}, None)
        return 3
    _emit(doc, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
