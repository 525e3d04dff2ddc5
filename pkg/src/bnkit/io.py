"""Normative file formats: model JSON and dataset CSV.

Model JSON::

    {"variables": [{"name": ..., "states": [...]}, ...],
     "edges": [[parent, child], ...],
     "cpts": [{"child": i, "parents": [...], "rows": [[...], ...]}, ...]}

Row order is the parent-configuration order defined in :mod:`bnkit.core`
(parents ascending, last parent fastest). Dataset CSV: header row holds
variable names, cells hold state labels, missing cells hold ``?``.

Both formats are canonical: ``serialize(deserialize(text)) == text`` for any
canonically formatted input.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import (
    MISSING,
    ROW_SUM_TOL,
    Cpt,
    Dataset,
    Network,
    ParseError,
    Variable,
)

MISSING_TOKEN = "?"

# Characters that would break the line-oriented CSV format.
_CSV_FORBIDDEN = (",", "\n", "\r", '"')


def dumps_canonical(obj: Any) -> str:
    """Canonical JSON text: 2-space indent, UTF-8 characters, trailing newline."""
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Model JSON
# ---------------------------------------------------------------------------

# Rows whose float sum is this close to 1 are treated as already normalized
# and kept bit-for-bit; renormalizing them would break round-trip stability.
_EXACT_SUM_TOL = 1e-12


def _canonical_row(row: np.ndarray) -> np.ndarray:
    """Renormalize a row unless its float sum is already 1 within ulps."""
    s = row.sum()
    if abs(s - 1.0) <= _EXACT_SUM_TOL:
        return row
    return row / s


def network_to_dict(net: Network) -> dict:
    return {
        "variables": [
            {"name": v.name, "states": list(v.states)} for v in net.variables
        ],
        "edges": [[p, c] for p, c in sorted(net.edges)],
        "cpts": [
            {
                "child": cpt.child,
                "parents": list(cpt.parents),
                "rows": [
                    [float(x) for x in _canonical_row(row.copy())]
                    for row in cpt.values
                ],
            }
            for cpt in net.cpts
        ],
    }


def network_to_json(net: Network) -> str:
    return dumps_canonical(network_to_dict(net))


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    try:
        raw_vars = doc["variables"]
        raw_edges = doc["edges"]
        raw_cpts = doc["cpts"]
    except KeyError as exc:
        raise ParseError(f"missing top-level key {exc.args[0]!r}") from None

    variables = []
    for idx, rv in enumerate(raw_vars):
        loc = f"variables[{idx}]"
        try:
            variables.append(Variable(str(rv["name"]), tuple(str(s) for s in rv["states"])))
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", loc) from None
        except ValueError as exc:
            raise ParseError(str(exc), loc) from None

    edges = set()
    n = len(variables)
    for idx, e in enumerate(raw_edges):
        loc = f"edges[{idx}]"
        if len(e) != 2:
            raise ParseError("edge must be a [parent, child] pair", loc)
        p, c = int(e[0]), int(e[1])
        if not (0 <= p < n and 0 <= c < n):
            raise ParseError(f"edge {e} out of range", loc)
        edges.add((p, c))

    if len(raw_cpts) != n:
        raise ParseError(f"{len(raw_cpts)} cpts for {n} variables", "cpts")
    cpts = []
    for idx, rc in enumerate(raw_cpts):
        loc = f"cpts[{idx}]"
        try:
            child = int(rc["child"])
            parents = tuple(int(p) for p in rc["parents"])
            rows = np.asarray(rc["rows"], dtype=float)
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", loc) from None
        except (TypeError, ValueError):
            raise ParseError("malformed cpt table", loc) from None
        if rows.ndim != 2:
            raise ParseError("cpt rows must be a rectangular 2-D table", loc)
        cpts.append(Cpt(child, parents, _renormalize_rows(rows, idx)))

    return Network(variables, frozenset(edges), cpts)


def _renormalize_rows(rows: np.ndarray, variable: int) -> np.ndarray:
    """Renormalize rows within ROW_SUM_TOL; reject anything worse.

    Rows already summing to 1 within ulps (the canonical form written by
    serialization) pass through untouched, so round-trips are bit-stable.
    """
    sums = rows.sum(axis=1)
    off = np.abs(sums - 1.0)
    if (off > ROW_SUM_TOL).any() or (rows < 0).any():
        j = int(np.argmax(off + (rows < 0).any(axis=1)))
        raise ParseError(
            f"cpt row {j} sums to {sums[j]!r}", f"cpts[{variable}].rows[{j}]"
        )
    return np.where(off[:, None] <= _EXACT_SUM_TOL, rows, rows / sums[:, None])


def network_from_json(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
    try:
        return network_from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc)) from None


def load_network(path: str | Path) -> Network:
    return network_from_json(Path(path).read_text(encoding="utf-8"))


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(network_to_json(net), encoding="utf-8")


# ---------------------------------------------------------------------------
# Dataset CSV
# ---------------------------------------------------------------------------

def dataset_to_csv(d: Dataset) -> str:
    for v in d.variables:
        for tok in (v.name, *v.states):
            if tok == MISSING_TOKEN or any(ch in tok for ch in _CSV_FORBIDDEN):
                raise ParseError(f"label {tok!r} not representable in dataset CSV")
    lines = [",".join(v.name for v in d.variables)]
    for row in d.rows:
        lines.append(
            ",".join(
                MISSING_TOKEN if cell == MISSING else d.variables[col].states[cell]
                for col, cell in enumerate(row)
            )
        )
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str, variables: Sequence[Variable] | None = None) -> Dataset:
    """Parse a dataset CSV.

    With ``variables`` given, the header must match their names and every cell
    must be one of the declared state labels. Without a schema the variables
    are inferred: states are the sorted distinct observed labels per column.
    """
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ParseError("empty dataset file")
    names = lines[0].split(",")
    cells = []
    for rno, line in enumerate(lines[1:], start=2):
        row = line.split(",")
        if len(row) != len(names):
            raise ParseError(
                f"expected {len(names)} cells, found {len(row)}", f"row {rno}"
            )
        cells.append(row)

    if variables is None:
        variables = []
        for col, name in enumerate(names):
            labels = sorted({row[col] for row in cells} - {MISSING_TOKEN})
            if len(labels) < 2:
                raise ParseError(
                    f"column {name!r} has {len(labels)} distinct observed labels; "
                    "need >= 2 to infer a schema",
                    f"column {col}",
                )
            variables.append(Variable(name, tuple(labels)))
    else:
        variables = list(variables)
        expected = [v.name for v in variables]
        if names != expected:
            raise ParseError(f"header {names} does not match schema {expected}", "row 1")

    lookup = [{s: k for k, s in enumerate(v.states)} for v in variables]
    rows = np.full((len(cells), len(variables)), MISSING, dtype=np.int64)
    for rno, row in enumerate(cells):
        for col, tok in enumerate(row):
            if tok == MISSING_TOKEN:
                continue
            try:
                rows[rno, col] = lookup[col][tok]
            except KeyError:
                raise ParseError(
                    f"unknown state label {tok!r} for variable {variables[col].name!r}",
                    f"row {rno + 2}, column {col}",
                ) from None
    return Dataset(variables, rows)


def load_dataset(path: str | Path, variables: Sequence[Variable] | None = None) -> Dataset:
    return dataset_from_csv(Path(path).read_text(encoding="utf-8"), variables)


def save_dataset(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(d), encoding="utf-8")
