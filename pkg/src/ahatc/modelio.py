"""JSON model files. Rationals are written as canonical ``"num/den"`` strings."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .core import (
    ACTIVATIONS,
    AffineMap,
    AhaLayer,
    AhatError,
    AhatModel,
    FeedForwardNet,
    format_rational,
    parse_rational,
)

FORMAT_VERSION = 1

_KNOWN = {
    "format",
    "alphabet",
    "embedding",
    "constant_pe",
    "layers",
    "uses_end_marker",
    "end_marker",
    "projection_deleted",
    "nonneg_output",
    "source",
    "language",
}


class ModelFormatError(AhatError, ValueError):
    pass


def _vec_out(v) -> list:
    return [format_rational(x) for x in v]


def _vec_in(data, where: str) -> tuple:
    if not isinstance(data, list):
        raise ModelFormatError(f"{where}: expected an array")
    try:
        return tuple(parse_rational(x) if isinstance(x, str) else _bad(x) for x in data)
    except ValueError as exc:
        raise ModelFormatError(f"{where}: {exc}") from None


def _bad(x):
    raise ValueError(f"rational must be a \"num/den\" string, got {x!r}")


def _affine_out(m: AffineMap) -> dict:
    return {"matrix": [_vec_out(r) for r in m.matrix], "offset": _vec_out(m.offset), "in_dim": m.in_dim}


def _affine_in(data, where: str) -> AffineMap:
    if not isinstance(data, dict) or "matrix" not in data or "offset" not in data:
        raise ModelFormatError(f"{where}: expected {{matrix, offset}}")
    rows = [_vec_in(r, f"{where}.matrix[{i}]") for i, r in enumerate(data["matrix"])]
    offset = _vec_in(data["offset"], f"{where}.offset")
    in_dim = data.get("in_dim")
    if in_dim is None:
        if not rows:
            raise ModelFormatError(f"{where}: in_dim is required for an empty matrix")
        in_dim = len(rows[0])
    try:
        return AffineMap.from_dense(rows, offset, in_dim)
    except AhatError as exc:
        raise ModelFormatError(f"{where}: {exc}") from None


def model_to_dict(model: AhatModel, extra: dict | None = None) -> dict:
    out: dict[str, Any] = {
        "format": FORMAT_VERSION,
        "alphabet": list(model.alphabet),
        "embedding": {a: _vec_out(model.embedding[a]) for a in model.symbols},
        "constant_pe": _vec_out(model.constant_pe) if model.constant_pe is not None else None,
        "layers": [
            {
                "query": _affine_out(layer.query),
                "key": _affine_out(layer.key),
                "value": _affine_out(layer.value),
                "net": [dict(_affine_out(m), activation=act) for m, act in layer.net.layers],
            }
            for layer in model.layers
        ],
        "uses_end_marker": model.uses_end_marker,
        "end_marker": model.end_marker,
        "projection_deleted": sorted(model.projection_deleted),
        "nonneg_output": model.nonneg_output,
    }
    if model.source is not None:
        out["source"] = dict(model.source)
    if extra:
        out.update(extra)
    return out


def model_from_dict(data: dict) -> AhatModel:
    if not isinstance(data, dict):
        raise ModelFormatError("a model file must hold a JSON object")
    if "positional_encoding" in data:
        raise ModelFormatError("position-dependent encodings are not supported; use constant_pe")
    unknown = set(data) - _KNOWN
    if unknown:
        raise ModelFormatError(f"unknown fields {sorted(unknown)}")
    for key in ("alphabet", "embedding", "layers", "uses_end_marker"):
        if key not in data:
            raise ModelFormatError(f"missing field {key!r}")
    emb = data["embedding"]
    if not isinstance(emb, dict):
        raise ModelFormatError("embedding must map letters to vectors")
    embedding = {a: _vec_in(v, f"embedding[{a}]") for a, v in emb.items()}
    pe = data.get("constant_pe")
    layers = []
    for i, ld in enumerate(data["layers"]):
        where = f"layers[{i}]"
        try:
            net_layers = []
            for j, nd in enumerate(ld["net"]):
                act = nd.get("activation")
                if act not in ACTIVATIONS:
                    raise ModelFormatError(f"{where}.net[{j}]: activation must be one of {ACTIVATIONS}")
                net_layers.append((_affine_in(nd, f"{where}.net[{j}]"), act))
            layers.append(
                AhaLayer(
                    _affine_in(ld["query"], f"{where}.query"),
                    _affine_in(ld["key"], f"{where}.key"),
                    _affine_in(ld["value"], f"{where}.value"),
                    FeedForwardNet(tuple(net_layers)),
                )
            )
        except KeyError as exc:
            raise ModelFormatError(f"{where}: missing {exc}") from None
        except ModelFormatError:
            raise
        except AhatError as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
    try:
        return AhatModel(
            alphabet=tuple(data["alphabet"]),
            embedding=embedding,
            layers=tuple(layers),
            uses_end_marker=bool(data["uses_end_marker"]),
            end_marker=data.get("end_marker"),
            constant_pe=_vec_in(pe, "constant_pe") if pe is not None else None,
            projection_deleted=frozenset(data.get("projection_deleted", ())),
            nonneg_output=bool(data.get("nonneg_output", False)),
            source=data.get("source"),
        )
    except ModelFormatError:
        raise
    except AhatError as exc:
        raise ModelFormatError(str(exc)) from None


def dumps_model(model: AhatModel, extra: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, extra), indent=1)


def loads_model(text: str) -> AhatModel:
    return model_from_dict(json.loads(text))


def save_model(model: AhatModel, path, extra: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, extra) + "\n")


def load_model(path) -> AhatModel:
    return loads_model(Path(path).read_text())
