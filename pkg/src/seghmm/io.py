"""File formats: model JSON, counting-spec JSON, observation/path CSV,
and the compact constraint expressions used by the command line.

Floats are serialized with repr (shortest round-trip form), so written
files re-parse to bit-identical doubles.
"""
from __future__ import annotations

import json

import numpy as np

from .counting import CountingSpec
from .kseg import SegmentConstraint
from .model import CategoricalEmission, GaussianEmission, HmmModel

__all__ = [
    "load_model",
    "save_model",
    "load_observations",
    "save_observations",
    "load_path",
    "save_path",
    "load_counting_spec",
    "save_counting_spec",
    "parse_constraint",
    "format_constraint",
]


def model_to_dict(model: HmmModel) -> dict:
    emissions = []
    for dist in model.emissions:
        if isinstance(dist, GaussianEmission):
            emissions.append({"type": "gaussian", "mean": dist.mean, "variance": dist.variance})
        else:
            emissions.append({"type": "categorical", "probs": [float(p) for p in dist.probs]})
    return {
        "num_states": model.num_states,
        "initial": [float(p) for p in model.initial],
        "transition": [[float(p) for p in row] for row in model.transition],
        "emissions": emissions,
    }


def model_from_dict(doc: dict) -> HmmModel:
    emissions = []
    for entry in doc["emissions"]:
        kind = entry.get("type")
        if kind == "gaussian":
            emissions.append(GaussianEmission(float(entry["mean"]), float(entry["variance"])))
        elif kind == "categorical":
            emissions.append(CategoricalEmission(np.asarray(entry["probs"], dtype=np.float64)))
        else:
            raise ValueError(f"unknown emission type {kind!r}")
    model = HmmModel(
        initial=np.asarray(doc["initial"], dtype=np.float64),
        transition=np.asarray(doc["transition"], dtype=np.float64),
        emissions=tuple(emissions),
    )
    declared = doc.get("num_states")
    if declared is not None and int(declared) != model.num_states:
        raise ValueError(f"num_states is {declared} but {model.num_states} states are defined")
    return model


def save_model(model: HmmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> HmmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_observations(values, path) -> None:
    """One observation per line under a single `value` header line."""
    arr = np.asarray(values)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("value\n")
        if np.issubdtype(arr.dtype, np.integer):
            for v in arr:
                fh.write(f"{int(v)}\n")
        else:
            for v in arr:
                fh.write(f"{float(v)!r}\n")


def load_observations(path) -> np.ndarray:
    """Reads one observation per line; tolerates one optional `value` header.

    Returns a float array; symbol sequences coerce to integers when paired
    with a categorical model.
    """
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh):
            text = raw.strip()
            if not text:
                continue
            try:
                out.append(float(text))
            except ValueError:
                if lineno == 0 and text.lower() == "value":
                    continue
                raise ValueError(f"{path}: line {lineno + 1} is not a number: {text!r}")
    if not out:
        raise ValueError(f"{path}: no observations found")
    return np.asarray(out, dtype=np.float64)


def save_path(states, path) -> None:
    arr = np.asarray(states, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for v in arr:
            fh.write(f"{int(v)}\n")


def load_path(path) -> np.ndarray:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh):
            text = raw.strip()
            if not text:
                continue
            try:
                out.append(int(text))
            except ValueError:
                raise ValueError(f"{path}: line {lineno + 1} is not a state index: {text!r}")
    if not out:
        raise ValueError(f"{path}: no states found")
    return np.asarray(out, dtype=np.int64)


def spec_to_dict(spec: CountingSpec) -> dict:
    doc = {"mode": spec.mode}
    if spec.mode == "generalized":
        doc["mu"] = list(spec.mu)
        doc["C"] = [list(row) for row in spec.C]
    if spec.has_excursions:
        doc["null_set"] = sorted(spec.null_states)
    doc["absorb_at"] = spec.absorb_at
    return doc


def spec_from_dict(doc: dict) -> CountingSpec:
    mode = doc.get("mode")
    absorb_at = doc.get("absorb_at")
    if mode == "standard":
        return CountingSpec.standard(absorb_at=absorb_at)
    if mode == "generalized":
        return CountingSpec.generalized(doc["mu"], doc["C"], absorb_at=absorb_at)
    if mode == "excursion":
        return CountingSpec.excursion(doc["null_set"], absorb_at=absorb_at)
    if mode == "restricted_excursion":
        return CountingSpec.restricted_excursion(doc["null_set"], absorb_at=absorb_at)
    raise ValueError(f"unknown counting mode {mode!r}")


def save_counting_spec(spec: CountingSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)
        fh.write("\n")


def load_counting_spec(path) -> CountingSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def parse_constraint(text: str) -> SegmentConstraint:
    """Parse "exact:K", "atmost:K", "range:K1:K2", or "greater:K"."""
    parts = str(text).strip().split(":")
    kind = parts[0]
    try:
        args = [int(p) for p in parts[1:]]
    except ValueError:
        raise ValueError(f"malformed constraint expression {text!r}")
    if kind == "exact" and len(args) == 1:
        return SegmentConstraint.exactly(args[0])
    if kind == "atmost" and len(args) == 1:
        return SegmentConstraint.at_most(args[0])
    if kind == "range" and len(args) == 2:
        return SegmentConstraint.count_range(args[0], args[1])
    if kind == "greater" and len(args) == 1:
        return SegmentConstraint.greater_than(args[0])
    raise ValueError(f"malformed constraint expression {text!r}")


def format_constraint(constraint: SegmentConstraint) -> str:
    if constraint.kind == "exact":
        return f"exact:{constraint.lo}"
    if constraint.kind == "atmost":
        return f"atmost:{constraint.hi}"
    if constraint.kind == "range":
        return f"range:{constraint.lo}:{constraint.hi}"
    return f"greater:{constraint.hi - 1}"
