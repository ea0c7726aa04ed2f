"""Reading and writing datasets (CSV) and fitted models (JSON)."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import IO, Union

import numpy as np

from .model import TOL_FEAS, Dataset, EstimatorConfig, InvalidInput, PwlModel

MODEL_SCHEMA = "cvxreg-model/1"

PathOrFile = Union[str, os.PathLike, IO[str]]


class DataFormatError(InvalidInput):
    """A file could not be parsed; the message says where."""


def _open(target, mode):
    if hasattr(target, "read") or hasattr(target, "write"):
        return target, False
    return open(target, mode, newline="", encoding="utf-8"), True


def read_dataset(source: PathOrFile) -> Dataset:
    """Parse ``x1,...,xd,y`` (optionally with a leading ``tag`` column)."""
    fh, own = _open(source, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    name = getattr(source, "name", source)
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{name}: empty file")
    header = [h.strip() for h in rows[0]]
    tagged = bool(header) and header[0].lower() == "tag"
    cols = header[1:] if tagged else header
    if len(cols) < 2 or cols[-1].lower() != "y":
        raise DataFormatError(f"{name}, line 1: header must be x1,...,xd,y "
                              f"(optionally led by tag), got {','.join(header)}")
    xcols = tuple(cols[:-1])
    width = len(header)
    x, y, tags = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataFormatError(f"{name}, line {lineno}: expected {width} fields, got {len(row)}")
        if tagged:
            tags.append(row[0].strip())
            row = row[1:]
        vals = []
        for col, cell in zip(cols, row):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(f"{name}, line {lineno}, column {col}: "
                                      f"not a number: {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise DataFormatError(f"{name}, line {lineno}, column {col}: non-finite value")
            vals.append(v)
        x.append(vals[:-1])
        y.append(vals[-1])
    if not y:
        raise DataFormatError(f"{name}: no data rows")
    return Dataset(np.array(x), np.array(y), xcols, tuple(tags) if tagged else None)


def write_dataset(data: Dataset, sink: PathOrFile, extra: dict | None = None) -> None:
    """Write a dataset with full precision; ``extra`` maps column name -> values."""
    fh, own = _open(sink, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        xcols = list(data.columns or [f"x{k + 1}" for k in range(data.d)])
        extra = extra or {}
        header = (["tag"] if data.tags is not None else []) + xcols + ["y"] + list(extra)
        w.writerow(header)
        extra_cols = [np.asarray(v, dtype=float).reshape(data.n, -1) for v in extra.values()]
        for i in range(data.n):
            row = [data.tags[i]] if data.tags is not None else []
            row += [format_float(v) for v in data.x[i]]
            row.append(format_float(data.y[i]))
            for col in extra_cols:
                row += [format_float(v) for v in col[i]]
            w.writerow(row)
    finally:
        if own:
            fh.close()


def format_float(v: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return f"{float(v):.17g}"


# --------------------------------------------------------------------------
# Models


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(u) for u in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def model_to_dict(model: PwlModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "variant": _jsonable(model.config.to_dict()),
        "monotone": bool(model.config.monotone),
        "min_norm_refinement": bool(model.config.min_norm_refinement),
        "pieces": [{"value": float(v), "beta": b.tolist(), "anchor": a.tolist()}
                   for v, b, a in zip(model.values, model.betas, model.anchors)],
        "fit_stats": _jsonable(model.fit_stats),
    }


def save_model(model: PwlModel, sink: PathOrFile) -> None:
    """Write ``model`` as JSON. Floats are written in shortest round-trip form."""
    fh, own = _open(sink, "w")
    try:
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=False)
        fh.write("\n")
    finally:
        if own:
            fh.close()


def _field(doc, key, where, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise DataFormatError(f"{where}: missing field {key!r}")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise DataFormatError(f"{where}.{key}: expected {kind.__name__}")
    return val


def _vector(val, where):
    if not isinstance(val, list) or not val:
        raise DataFormatError(f"{where}: expected a non-empty list of numbers")
    out = []
    for k, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DataFormatError(f"{where}[{k}]: expected a number, got {v!r}")
        out.append(float(v))
    return out


def model_from_dict(doc: dict, validate: bool = True) -> PwlModel:
    if not isinstance(doc, dict):
        raise DataFormatError("model document: expected a JSON object")
    schema = _field(doc, "schema", "model")
    if schema != MODEL_SCHEMA:
        raise DataFormatError(f"model.schema: unsupported schema {schema!r}")
    variant = _field(doc, "variant", "model", dict)
    _field(variant, "name", "model.variant", str)
    monotone = _field(doc, "monotone", "model", bool)
    refine = doc.get("min_norm_refinement")
    if refine is not None and not isinstance(refine, bool):
        raise DataFormatError("model.min_norm_refinement: expected bool")
    try:
        config = EstimatorConfig.from_dict(variant, monotone=monotone, min_norm_refinement=refine)
    except (InvalidInput, TypeError) as exc:
        raise DataFormatError(f"model.variant: {exc}") from None
    pieces = _field(doc, "pieces", "model", list)
    if not pieces:
        raise DataFormatError("model.pieces: at least one piece required")
    values, betas, anchors = [], [], []
    for i, p in enumerate(pieces):
        where = f"model.pieces[{i}]"
        v = _field(p, "value", where)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DataFormatError(f"{where}.value: expected a number")
        values.append(float(v))
        betas.append(_vector(_field(p, "beta", where), f"{where}.beta"))
        anchors.append(_vector(_field(p, "anchor", where), f"{where}.anchor"))
        if len(betas[-1]) != len(betas[0]) or len(anchors[-1]) != len(betas[0]):
            raise DataFormatError(f"{where}: beta/anchor length differs from piece 0")
    stats = doc.get("fit_stats", {})
    if not isinstance(stats, dict):
        raise DataFormatError("model.fit_stats: expected an object")
    model = PwlModel(np.array(values), np.array(betas), np.array(anchors), config, dict(stats))
    config.check_dim(model.d)
    if validate:
        model.check(TOL_FEAS)
    return model


def load_model(source: PathOrFile, validate: bool = True) -> PwlModel:
    """Read a model written by :func:`save_model`.

    Raises :class:`DataFormatError` naming the offending field, and
    :class:`~cvxreg.model.ConvexityViolation` (with the first violated pair)
    when the pieces are not a convex max-affine fit.
    """
    fh, own = _open(source, "r")
    try:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"model document: invalid JSON at line {exc.lineno}, "
                                  f"column {exc.colno}: {exc.msg}") from None
    finally:
        if own:
            fh.close()
    return model_from_dict(doc, validate=validate)
