"""
Model & experiment documents
────────────────────────────
Both are UTF-8 JSON objects checked against a schema that rejects unknown
fields. Decoding problems become ParseError (with line / column), schema and
structural problems become SchemaError naming the offending field.

Model document:
  {"states": [...], "n_cons": n, "xi": [[...]], "base_measure": [...],
   "rates": [{"from": [s1, s2], "to": [s1', s2'], "rate": r}],
   "name": ..., "reflection": [...], "parity": [...]}         (last three optional)
"""

import json
import logging
from pathlib import Path

from jsonschema import Draft202012Validator

from spinflux_cli.engines.builtins import bricklayer_model, builtin_model, leroux_model
from spinflux_cli.engines.harness import ExperimentSpec
from spinflux_cli.engines.model import SpinModel
from spinflux_cli.errors import ParseError, SchemaError

logger = logging.getLogger(__name__)

BUILTINS = ("leroux", "bricklayer")

_LABEL_PAIR = {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["states", "n_cons", "xi", "base_measure", "rates"],
    "properties": {
        "name": {"type": "string"},
        "states": {"type": "array", "items": {"type": "string"}, "minItems": 3},
        "n_cons": {"type": "integer", "minimum": 1},
        "xi": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 1}},
        "base_measure": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "rates": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to", "rate"],
                "properties": {
                    "from": _LABEL_PAIR,
                    "to": _LABEL_PAIR,
                    "rate": {"type": "number", "minimum": 0},
                },
            },
        },
        "reflection": {"type": "array", "items": {"type": "string"}},
        "parity": {"type": "array", "items": {"enum": [-1, 1]}},
    },
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "initial", "t", "sizes"],
    "properties": {
        "model": {"type": "string"},
        "parameters": {"type": "object", "additionalProperties": {"type": "number"}},
        "initial": {"type": "string"},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1},
        "block": {"type": ["string", "integer"]},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "pde": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cells": {"type": "integer", "minimum": 8},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"rows": {"type": "string"}, "summary": {"type": "string"}},
        },
    },
}


def _decode(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None


def _check(document, schema: dict) -> None:
    errors = sorted(Draft202012Validator(schema).iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        error = errors[0]
        field = "/".join(str(p) for p in error.absolute_path) or "<document>"
        raise SchemaError(field, error.message)


# ─── models ─────────────────────────────────────────────────────────────────

def parse_model(text: str) -> SpinModel:
    document = _decode(text)
    _check(document, MODEL_SCHEMA)

    states = document["states"]
    xi = document["xi"]
    if len(xi) != len(states):
        raise SchemaError("xi", f"expected {len(states)} rows, got {len(xi)}")
    for k, row in enumerate(xi):
        if len(row) != document["n_cons"]:
            raise SchemaError(f"xi/{k}", f"expected {document['n_cons']} entries, got {len(row)}")
    if len(document["base_measure"]) != len(states):
        raise SchemaError("base_measure", f"expected {len(states)} entries, got {len(document['base_measure'])}")

    reflection = None
    if "reflection" in document:
        lookup = {label: k for k, label in enumerate(states)}
        try:
            reflection = tuple(lookup[label] for label in document["reflection"])
        except KeyError as exc:
            raise SchemaError("reflection", f"unknown state {exc.args[0]!r}") from None
        if len(reflection) != len(states):
            raise SchemaError("reflection", "one image per state is required")

    return SpinModel.from_labels(
        states=states,
        xi=xi,
        base_measure=document["base_measure"],
        transitions=[(entry["from"], entry["to"], entry["rate"]) for entry in document["rates"]],
        name=document.get("name", "custom"),
        reflection=reflection,
        parity=tuple(document["parity"]) if "parity" in document else None,
    )


def load_model(path) -> SpinModel:
    path = Path(path)
    model = parse_model(path.read_text(encoding="utf-8"))
    logger.info("loaded model %s from %s (%d states, n=%d)", model.name, path, model.n_states, model.n_cons)
    return model


def model_document(model: SpinModel) -> dict:
    document = {
        "name": model.name,
        "states": list(model.states),
        "n_cons": model.n_cons,
        "xi": model.xi.tolist(),
        "base_measure": model.base_measure.tolist(),
        "rates": [
            {"from": [model.states[a], model.states[b]], "to": [model.states[c], model.states[d]], "rate": rate}
            for (a, b, c, d), rate in sorted(model.rate_lookup.items())
        ],
    }
    if model.reflection is not None:
        document["reflection"] = [model.states[k] for k in model.reflection]
        document["parity"] = list(model.parity)
    return document


def dump_model(model: SpinModel) -> str:
    return json.dumps(model_document(model), indent=2)


def save_model(model: SpinModel, path) -> None:
    Path(path).write_text(dump_model(model) + "\n", encoding="utf-8")


def resolve_model(reference: str, parameters: dict | None = None, base_dir=None) -> SpinModel:
    """A built-in name (optionally with parameters) or a path to a model document."""
    if reference in BUILTINS:
        if not parameters:
            return builtin_model(reference)
        return leroux_model(**parameters) if reference == "leroux" else bricklayer_model(**parameters)
    if parameters:
        raise SchemaError("parameters", "only built-in models take parameters")
    path = Path(reference)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_model(path)


# ─── experiments ────────────────────────────────────────────────────────────

def parse_experiment(text: str, base_dir=None) -> ExperimentSpec:
    document = _decode(text)
    _check(document, EXPERIMENT_SCHEMA)
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    pde = document.get("pde", {})
    outputs = document.get("outputs", {})
    return ExperimentSpec(
        model=resolve_model(document["model"], document.get("parameters"), base_dir),
        model_ref=document["model"],
        parameters=dict(document.get("parameters") or {}),
        initial=document["initial"],
        t=float(document["t"]),
        sizes=tuple(document["sizes"]),
        block=str(document.get("block", "sqrt")),
        replicas=int(document.get("replicas", 8)),
        seed=int(document.get("seed", 0)),
        pde_cells=int(pde.get("cells", 1024)),
        cfl=float(pde.get("cfl", 0.45)),
        rows_path=base_dir / outputs["rows"] if "rows" in outputs else None,
        summary_path=base_dir / outputs["summary"] if "summary" in outputs else None,
    )


def load_experiment(path) -> ExperimentSpec:
    path = Path(path)
    return parse_experiment(path.read_text(encoding="utf-8"), base_dir=path.parent)
