"""Line-delimited dataset files and JSON fit reports.

A dataset file starts with one JSON header line declaring the representation
shape, either ``{"dim": D}`` or ``{"length": L, "vocab": V, "alphabet": S}``
where ``S`` is a string of V distinct characters mapping tokens to vocabulary
columns.  Every following line is one record::

    {"id": "...", "derivation": "(a b)", "repr": [..flat floats..]}
    {"id": "...", "derivation": "(a b)", "tokens": "jjjj"}

with exactly one of ``repr`` (row-major flattened values) or ``tokens`` (a
hard code, one character per position).  Floats are serialized with Python's
shortest round-trip representation, so re-reading a file reproduces values
bit-exactly.
"""

from __future__ import annotations

import json
import string
from pathlib import Path

import numpy as np

from .derivation import DerivationSyntaxError, format_derivation, parse_derivation
from .solver import Dataset, FitConfig, PrimitiveTable, Record, TreReport
from .space import (
    CodeShape,
    LinearComposition,
    Shape,
    VectorShape,
    as_representation,
    is_hard_code,
)


class DatasetFormatError(ValueError):
    """Malformed dataset file; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def default_alphabet(vocab: int) -> str:
    pool = string.ascii_lowercase + string.ascii_uppercase + string.digits
    if vocab > len(pool):
        raise ValueError(f"no default alphabet for vocab {vocab}; supply one")
    return pool[:vocab]


def _dump_line(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def write_dataset(path: str | Path, dataset: Dataset,
                  alphabet: str | None = None) -> None:
    """Write a dataset file; hard one-hot code datasets use tokens form."""
    lines = dataset_to_lines(dataset, alphabet)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def dataset_to_lines(dataset: Dataset, alphabet: str | None = None) -> list[str]:
    shape = dataset.shape
    if isinstance(shape, VectorShape):
        lines = [_dump_line({"dim": shape.dim})]
        tokens_form = False
    else:
        if alphabet is None:
            alphabet = default_alphabet(shape.vocab)
        if len(alphabet) != shape.vocab or len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet must contain vocab distinct characters")
        lines = [_dump_line({"length": shape.length, "vocab": shape.vocab,
                             "alphabet": alphabet})]
        tokens_form = all(is_hard_code(r.representation) for r in dataset.records)
    for rec in dataset.records:
        row = {"id": rec.id, "derivation": format_derivation(rec.derivation)}
        if tokens_form:
            row["tokens"] = "".join(
                alphabet[int(r.argmax())] for r in rec.representation)
        else:
            row["repr"] = rec.representation.ravel().tolist()
        lines.append(_dump_line(row))
    return lines


def read_dataset(path: str | Path) -> tuple[Dataset, str | None]:
    """Parse a dataset file; returns the dataset and the declared alphabet
    (None for vector-shaped data).  Raises DatasetFormatError with the
    offending 1-based line number."""
    text = Path(path).read_text(encoding="utf-8")
    raw_lines = [ln for ln in text.splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not numbered:
        raise DatasetFormatError(1, "empty dataset file")

    header_no, header_line = numbered[0]
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(header_no, f"invalid JSON header: {e}") from None
    shape, alphabet = _parse_header(header_no, header)

    records: list[Record] = []
    seen_ids: set[str] = set()
    for line_no, line in numbered[1:]:
        records.append(_parse_record(line_no, line, shape, alphabet, seen_ids))
    if not records:
        raise DatasetFormatError(header_no, "dataset file has a header but no records")
    return Dataset(tuple(records), shape), alphabet


def _parse_header(line_no: int, header) -> tuple[Shape, str | None]:
    if not isinstance(header, dict):
        raise DatasetFormatError(line_no, "header must be a JSON object")
    if "dim" in header:
        if set(header) != {"dim"}:
            raise DatasetFormatError(line_no, "vector header declares only 'dim'")
        dim = header["dim"]
        if not isinstance(dim, int) or dim < 1:
            raise DatasetFormatError(line_no, "'dim' must be a positive integer")
        return VectorShape(dim), None
    if set(header) == {"length", "vocab", "alphabet"}:
        length, vocab, alphabet = header["length"], header["vocab"], header["alphabet"]
        if not (isinstance(length, int) and length >= 1
                and isinstance(vocab, int) and vocab >= 1):
            raise DatasetFormatError(
                line_no, "'length' and 'vocab' must be positive integers")
        if (not isinstance(alphabet, str) or len(alphabet) != vocab
                or len(set(alphabet)) != vocab):
            raise DatasetFormatError(
                line_no, "'alphabet' must be a string of vocab distinct characters")
        return CodeShape(length, vocab), alphabet
    raise DatasetFormatError(
        line_no, "header must declare either {dim} or {length, vocab, alphabet}")


def _parse_record(line_no: int, line: str, shape: Shape, alphabet: str | None,
                  seen_ids: set[str]) -> Record:
    def fail(message: str):
        raise DatasetFormatError(line_no, message)

    try:
        row = json.loads(line)
    except json.JSONDecodeError as e:
        fail(f"invalid JSON record: {e}")
    if not isinstance(row, dict):
        fail("record must be a JSON object")
    if not isinstance(row.get("id"), str) or not row["id"]:
        fail("record needs a non-empty string 'id'")
    rid = row["id"]
    if rid in seen_ids:
        fail(f"duplicate record id {rid!r}")
    seen_ids.add(rid)
    if not isinstance(row.get("derivation"), str):
        fail("record needs a 'derivation' string")
    try:
        deriv = parse_derivation(row["derivation"])
    except DerivationSyntaxError as e:
        fail(f"bad derivation: {e}")

    has_repr = "repr" in row
    has_tokens = "tokens" in row
    if has_repr == has_tokens:
        fail("record needs exactly one of 'repr' or 'tokens'")
    if has_tokens:
        if not isinstance(shape, CodeShape):
            fail("'tokens' records require a {length, vocab, alphabet} header")
        tokens = row["tokens"]
        if not isinstance(tokens, str) or len(tokens) != shape.length:
            fail(f"'tokens' must be a string of length {shape.length}")
        matrix = np.zeros(shape.array_shape())
        for pos, ch in enumerate(tokens):
            col = alphabet.find(ch)
            if col < 0:
                fail(f"token {ch!r} not in declared alphabet")
            matrix[pos, col] = 1.0
        return Record(rid, matrix, deriv)

    values = row["repr"]
    expected = int(np.prod(shape.array_shape()))
    if (not isinstance(values, list)
            or not all(isinstance(v, (int, float)) for v in values)):
        fail("'repr' must be a flat list of numbers")
    if len(values) != expected:
        fail(f"'repr' has {len(values)} values, expected {expected}")
    try:
        arr = as_representation(
            np.asarray(values, dtype=np.float64).reshape(shape.array_shape()))
    except ValueError as e:
        fail(str(e))
    return Record(rid, arr, deriv)


# -- fit reports ---------------------------------------------------------------


def config_echo(config: FitConfig, **extra) -> dict:
    comp = config.composition
    echo = {
        "distance": config.distance.kind,
        "composition": getattr(comp, "kind", "unknown"),
        "learn_composition": config.learn_composition,
        "learning_rate": config.learning_rate,
        "steps": config.steps,
        "seed": config.seed,
        "init_scale": config.init_scale,
        "convergence_tol": config.convergence_tol,
        "restarts": config.effective_restarts,
    }
    echo.update(extra)
    return echo


def _shape_header(shape: Shape, alphabet: str | None) -> dict:
    if isinstance(shape, VectorShape):
        return {"dim": shape.dim}
    return {"length": shape.length, "vocab": shape.vocab,
            "alphabet": alphabet or default_alphabet(shape.vocab)}


def report_to_dict(report: TreReport, config: FitConfig, shape: Shape,
                   alphabet: str | None = None, **config_extra) -> dict:
    out = {
        "config": config_echo(config, **config_extra),
        "shape": _shape_header(shape, alphabet),
        "aggregate_tre": report.aggregate,
        "per_datum_tre": dict(report.per_datum),
        "primitives": {
            sym.name: value.ravel().tolist()
            for sym, value in report.table.entries.items()
        },
        "diagnostics": {
            "steps_run": report.steps_run,
            "final_objective": report.final_objective,
            "converged": report.converged,
            "messages": list(report.diagnostics),
        },
    }
    params = report.table.composition_params
    if params is not None:
        out["composition_params"] = {
            "left_weights": params.left_weights.tolist(),
            "right_weights": params.right_weights.tolist(),
        }
    return out


def render_report(report_dict: dict) -> str:
    return json.dumps(report_dict, indent=2) + "\n"


def write_report(path: str | Path, report_dict: dict) -> None:
    Path(path).write_text(render_report(report_dict), encoding="utf-8")


def load_report(path: str | Path) -> tuple[dict, PrimitiveTable, Shape]:
    """Re-ingest a report: parsed JSON plus the learned table, ready for
    re-evaluation against the original dataset."""
    from .derivation import Symbol

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    header = data["shape"]
    if "dim" in header:
        shape: Shape = VectorShape(header["dim"])
    else:
        shape = CodeShape(header["length"], header["vocab"])
    entries = {
        Symbol(name): np.asarray(values, dtype=np.float64).reshape(shape.array_shape())
        for name, values in data["primitives"].items()
    }
    params = None
    if "composition_params" in data:
        cp = data["composition_params"]
        params = LinearComposition(
            np.asarray(cp["left_weights"], dtype=np.float64),
            np.asarray(cp["right_weights"], dtype=np.float64),
        )
    return data, PrimitiveTable(entries, params), shape
