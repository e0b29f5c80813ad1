"""JSON dataset format: strict parsing and canonical emission.

Arrays are objects ``{"shape": [...], "real": [...], "imag": [...]}`` with
row-major flat data; ``imag`` is present only for complex arrays.  Integer
index lists are plain JSON lists.  Grid charts store shape, spacing and
origin instead of coordinates.  Unknown fields are errors.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .calculus import ConnectionData
from .cover import Chart, Cover, Overlap, grid_chart, point_chart
from .gerbe import Band, TransitionFamily
from .model import SCHEMA, Dataset, DiracSpec, FiberSpec
from .sections import PartitionOfUnity

__all__ = ["ParseError", "parse", "loads", "to_json_obj", "dumps", "canonical_json", "save"]


class ParseError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# -- canonical JSON ----------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def canonical_json(obj: Any) -> str:
    """Sorted keys, floats at 17 significant digits, no whitespace variation."""
    parts: list[str] = []

    def emit(o):
        if o is None or isinstance(o, (bool, np.bool_)):
            parts.append(json.dumps(None if o is None else bool(o)))
        elif isinstance(o, (int, np.integer)):
            parts.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            parts.append(_fmt_float(float(o)))
        elif isinstance(o, str):
            parts.append(json.dumps(o, ensure_ascii=False))
        elif isinstance(o, dict):
            parts.append("{")
            for n, k in enumerate(sorted(o, key=str)):
                if n:
                    parts.append(",")
                parts.append(json.dumps(str(k), ensure_ascii=False))
                parts.append(":")
                emit(o[k])
            parts.append("}")
        elif isinstance(o, (list, tuple)):
            parts.append("[")
            for n, v in enumerate(o):
                if n:
                    parts.append(",")
                emit(v)
            parts.append("]")
        elif isinstance(o, np.ndarray):
            emit(o.tolist())
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj)
    return "".join(parts)


# -- encoding ------------------------------------------------------------------------------

def _arr(a) -> dict:
    a = np.asarray(a)
    out = {"shape": list(a.shape), "real": np.real(a).astype(float).ravel().tolist()}
    if np.iscomplexobj(a):
        out["imag"] = np.imag(a).astype(float).ravel().tolist()
    return out


def _opt(a):
    return None if a is None else _arr(a)


def _chart_obj(ch: Chart) -> dict:
    if ch.is_grid:
        out = {"id": ch.id, "kind": "grid", "shape": list(ch.shape), "spacing": list(ch.spacing),
               "origin": list(ch.origin)}
    else:
        out = {"id": ch.id, "kind": "points", "coords": _arr(ch.coords)}
    out["volume"] = _arr(ch.volume)
    if ch.frame_scale is not None:
        out["frame_scale"] = _arr(ch.frame_scale)
    return out


def _chain_obj(tf: TransitionFamily) -> dict:
    ids = [c.id for c in tf.cover.charts]
    return {"name": tf.name, "fiber_dim": tf.fiber_dim,
            "values": [{"pair": [ids[i], ids[j]], "matrices": _arr(v)} for (i, j), v in sorted(tf.values.items())]}


def _conn_obj(c: ConnectionData) -> dict:
    return {"kind": c.kind, "fiber_dim": c.fiber_dim,
            "values": {ch.id: _arr(w) for ch, w in zip(c.cover.charts, c.values) if w is not None}}


def to_json_obj(ds: Dataset) -> dict:
    cov = ds.cover
    ids = [c.id for c in cov.charts]
    per_chart = lambda vals: {ids[c]: _arr(v) for c, v in enumerate(vals) if v is not None}
    overlaps = []
    for (i, j), ov in sorted(cov.overlaps.items()):
        o = {"pair": [ids[i], ids[j]], "idx_i": ov.idx_i.tolist(), "idx_j": ov.idx_j.tolist(),
             "component": ov.component.tolist()}
        if ov.jacobian is not None:
            o["jacobian"] = _arr(ov.jacobian)
        overlaps.append(o)
    fiber = {"module_dim": ds.fiber.module_dim, "complex": ds.fiber.complex, "kind": ds.fiber.kind,
             "generators": None if ds.fiber.generators is None else [_arr(e) for e in ds.fiber.generators],
             "grading": _opt(ds.fiber.grading)}
    out = {
        "schema": SCHEMA,
        "name": ds.name,
        "description": ds.description,
        "cover": {"charts": [_chart_obj(c) for c in cov.charts], "overlaps": overlaps},
        "transitions": _chain_obj(ds.transitions),
        "band": {"generator": _arr(ds.band.generator), "order": ds.band.order},
        "fiber": fiber,
        "metric": _opt(ds.metric),
        "connection": None if ds.connection is None else _conn_obj(ds.connection),
        "levi_civita": None if ds.levi_civita is None else _conn_obj(ds.levi_civita),
        "scalar_curvature": None if ds.scalar_curvature is None else per_chart(ds.scalar_curvature),
        "frames": None if ds.frames is None else _chain_obj(ds.frames),
        "sections": {k: per_chart(v) for k, v in ds.sections.items()},
        "partitions": {k: {"conforming": p.conforming, "weights": {ids[c]: _arr(w) for c, w in p.weights.items()}}
                       for k, p in ds.partitions.items()},
        "dirac": None if ds.dirac is None else {
            "wilson": ds.dirac.wilson, "wilson_mass": _opt(ds.dirac.wilson_mass),
            "symmetrize": ds.dirac.symmetrize, "overlap_mass": ds.dirac.overlap_mass,
            "overlap_wilson": ds.dirac.overlap_wilson},
        "flat": ds.flat,
        "lifting": ds.lifting,
        "expect": ds.expect,
        "tolerances": ds.tolerances,
    }
    return out


def dumps(ds: Dataset) -> str:
    return canonical_json(to_json_obj(ds))


def save(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps(ds) + "\n", encoding="utf-8")


# -- decoding ------------------------------------------------------------------------------

class _Reader:
    def __init__(self, obj: Any, path: str = "$"):
        self.obj, self.path = obj, path

    def fail(self, msg: str, sub: str = ""):
        raise ParseError(self.path + sub, msg)

    def obj_with(self, required: set[str], optional: set[str] = frozenset()) -> dict:
        if not isinstance(self.obj, dict):
            self.fail("expected an object")
        unknown = sorted(set(self.obj) - required - set(optional))
        if unknown:
            self.fail(f"unknown field {unknown[0]!r}", f".{unknown[0]}")
        missing = sorted(required - set(self.obj))
        if missing:
            self.fail(f"missing field {missing[0]!r}")
        return self.obj

    def at(self, key) -> "_Reader":
        sub = f"[{key}]" if isinstance(key, int) else f".{key}"
        if isinstance(key, int):
            if not isinstance(self.obj, list) or key >= len(self.obj):
                self.fail("index out of range", sub)
        elif not isinstance(self.obj, dict) or key not in self.obj:
            self.fail("missing field", sub)
        return _Reader(self.obj[key], self.path + sub)

    def get(self, key, default=None) -> "_Reader | None":
        if isinstance(self.obj, dict) and self.obj.get(key) is not None:
            return self.at(key)
        return default

    def items(self):
        if not isinstance(self.obj, dict):
            self.fail("expected an object")
        return [(k, self.at(k)) for k in self.obj]

    def list(self) -> list["_Reader"]:
        if not isinstance(self.obj, list):
            self.fail("expected a list")
        return [self.at(k) for k in range(len(self.obj))]

    def typed(self, kind, name: str):
        if kind is float and isinstance(self.obj, int) and not isinstance(self.obj, bool):
            return float(self.obj)
        if not isinstance(self.obj, kind) or (kind is int and isinstance(self.obj, bool)):
            self.fail(f"expected {name}")
        return self.obj

    def str(self) -> str:
        return self.typed(str, "a string")

    def int(self) -> int:
        return self.typed(int, "an integer")

    def float(self) -> float:
        return self.typed(float, "a number")

    def bool(self) -> bool:
        return self.typed(bool, "a boolean")

    def ints(self) -> np.ndarray:
        v = self.obj
        if not isinstance(v, list) or any(not isinstance(x, int) or isinstance(x, bool) for x in v):
            self.fail("expected a list of integers")
        return np.asarray(v, dtype=np.int64)

    def array(self, shape: tuple | None = None) -> np.ndarray:
        o = self.obj_with({"shape", "real"}, {"imag"})
        shp = self.at("shape").ints()
        if np.any(shp < 0):
            self.fail("negative dimension", ".shape")
        n = int(np.prod(shp)) if shp.size else 1
        parts = []
        for key in ("real", "imag"):
            if key not in o:
                continue
            data = o[key]
            if not isinstance(data, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in data):
                self.fail("array data must be a list of numbers", f".{key}")
            if len(data) != n:
                self.fail(f"array has {len(data)} entries, shape {shp.tolist()} needs {n}", f".{key}")
            parts.append(np.asarray(data, dtype=float).reshape(tuple(shp)))
        if len(parts) == 1:
            a = parts[0]
        else:
            a = np.empty(parts[0].shape, dtype=complex)
            a.real, a.imag = parts

        if shape is not None and a.shape != tuple(shape):
            self.fail(f"array shape {a.shape}, expected {tuple(shape)}")
        return a


_TOP_REQUIRED = {"schema", "name", "cover", "transitions", "band"}
_TOP_OPTIONAL = {"description", "fiber", "metric", "connection", "levi_civita", "scalar_curvature", "frames",
                 "sections", "partitions", "dirac", "flat", "lifting", "expect", "tolerances"}


def _chart(r: _Reader) -> Chart:
    kind = r.obj.get("kind") if isinstance(r.obj, dict) else None
    if kind == "grid":
        r.obj_with({"id", "kind", "shape", "spacing", "origin", "volume"}, {"frame_scale"})
        shape = tuple(r.at("shape").ints().tolist())
        spacing = [x.float() for x in r.at("spacing").list()]
        origin = [x.float() for x in r.at("origin").list()]
        if not (len(shape) == len(spacing) == len(origin)):
            r.fail("shape, spacing and origin differ in length")
        npts = int(np.prod(shape))
        vol = r.at("volume").array((npts,))
        fs = r.get("frame_scale")
        return grid_chart(r.at("id").str(), shape, spacing, origin, vol, None if fs is None else fs.array((npts,)))
    if kind == "points":
        r.obj_with({"id", "kind", "coords", "volume"}, {"frame_scale"})
        coords = r.at("coords").array()
        if coords.ndim != 2:
            r.fail("coords must be (npts, dim)", ".coords")
        ch = point_chart(r.at("id").str(), coords, r.at("volume").array((coords.shape[0],)))
        fs = r.get("frame_scale")
        if fs is not None:
            ch = Chart(ch.id, ch.coords, ch.volume, frame_scale=fs.array((coords.shape[0],)))
        return ch
    r.fail(f"unknown chart kind {kind!r}", ".kind")


def _pair(r: _Reader, ids: dict[str, int]) -> tuple[int, int]:
    p = r.list()
    if len(p) != 2:
        r.fail("a pair needs two chart ids")
    out = []
    for x in p:
        name = x.str()
        if name not in ids:
            x.fail(f"dangling chart reference {name!r}")
        out.append(ids[name])
    if out[0] >= out[1]:
        r.fail("pairs list the lower chart first")
    return out[0], out[1]


def _cover(r: _Reader) -> Cover:
    r.obj_with({"charts", "overlaps"})
    charts = [_chart(c) for c in r.at("charts").list()]
    ids = {c.id: k for k, c in enumerate(charts)}
    if len(ids) != len(charts):
        r.fail("duplicate chart ids", ".charts")
    overlaps = {}
    for o in r.at("overlaps").list():
        o.obj_with({"pair", "idx_i", "idx_j", "component"}, {"jacobian"})
        i, j = _pair(o.at("pair"), ids)
        if (i, j) in overlaps:
            o.fail("overlap listed twice")
        ii, jj, comp = o.at("idx_i").ints(), o.at("idx_j").ints(), o.at("component").ints()
        jac = o.get("jacobian")
        dim = charts[j].dim
        jac = None if jac is None else jac.array((ii.size, charts[i].dim, dim))
        overlaps[(i, j)] = Overlap(i, j, ii, jj, comp, jac)
    try:
        return Cover(charts, overlaps)
    except ValueError as exc:
        r.fail(str(exc))


def _chain(r: _Reader, cover: Cover) -> TransitionFamily:
    r.obj_with({"fiber_dim", "values"}, {"name"})
    ids = {c.id: k for k, c in enumerate(cover.charts)}
    d = r.at("fiber_dim").int()
    vals = {}
    for v in r.at("values").list():
        v.obj_with({"pair", "matrices"})
        key = _pair(v.at("pair"), ids)
        if key not in cover.overlaps:
            v.fail("transition given for a pair without overlap", ".pair")
        vals[key] = v.at("matrices").array((cover.overlaps[key].size, d, d))
    name = r.get("name")
    try:
        return TransitionFamily(cover, d, vals, name.str() if name else "chain")
    except ValueError as exc:
        r.fail(str(exc))


def _per_chart(r: _Reader, cover: Cover, trailing: tuple = ()) -> list:
    ids = {c.id: k for k, c in enumerate(cover.charts)}
    out = [None] * len(cover.charts)
    for name, sub in r.items():
        if name not in ids:
            sub.fail(f"dangling chart reference {name!r}")
        c = ids[name]
        a = sub.array()
        if a.shape[:1] != (cover.charts[c].size,) or (trailing and a.shape[1:] != trailing):
            sub.fail(f"array shape {a.shape} does not fit chart {name}")
        out[c] = a
    return out


def _connection(r: _Reader, cover: Cover) -> ConnectionData:
    r.obj_with({"kind", "fiber_dim", "values"})
    d = r.at("fiber_dim").int()
    kind = r.at("kind").str()
    n = cover.charts[0].dim
    vals = _per_chart(r.at("values"), cover, (n, d, d))
    try:
        return ConnectionData(cover, vals, d, kind)
    except ValueError as exc:
        r.fail(str(exc))


def _fiber(r: _Reader) -> FiberSpec:
    r.obj_with(set(), {"module_dim", "complex", "kind", "generators", "grading"})
    s = r.at("module_dim").int() if "module_dim" in r.obj else 1
    gens = r.get("generators")
    gens = None if gens is None else [g.array((s, s)) for g in gens.list()]
    gr = r.get("grading")
    return FiberSpec(s, r.at("complex").bool() if "complex" in r.obj else False,
                     r.at("kind").str() if "kind" in r.obj else "vector", gens,
                     None if gr is None else gr.array((s, s)))


def _dirac(r: _Reader, s: int) -> DiracSpec:
    r.obj_with(set(), {"wilson", "wilson_mass", "symmetrize", "overlap_mass", "overlap_wilson"})
    spec = DiracSpec()
    for key in ("wilson", "overlap_mass", "overlap_wilson"):
        if key in r.obj:
            setattr(spec, key, r.at(key).float())
    if "symmetrize" in r.obj:
        spec.symmetrize = r.at("symmetrize").bool()
    m = r.get("wilson_mass")
    spec.wilson_mass = None if m is None else m.array((s, s))
    return spec


def _plain(r: _Reader, kind: str):
    """expect / tolerances: JSON values, numbers only for tolerances."""
    if not isinstance(r.obj, dict):
        r.fail("expected an object")
    if kind == "tolerances":
        out = {}
        for k, sub in r.items():
            out[k] = sub.obj if isinstance(sub.obj, int) and not isinstance(sub.obj, bool) else sub.float()
        return out
    return dict(r.obj)


def from_json_obj(obj: Any) -> Dataset:
    r = _Reader(obj)
    r.obj_with(_TOP_REQUIRED, _TOP_OPTIONAL)
    schema = r.at("schema").str()
    if schema != SCHEMA:
        r.fail(f"schema {schema!r} is not {SCHEMA!r}", ".schema")
    cover = _cover(r.at("cover"))
    chain = _chain(r.at("transitions"), cover)
    b = r.at("band")
    b.obj_with({"generator", "order"})
    try:
        band = Band(b.at("generator").array((chain.fiber_dim, chain.fiber_dim)), b.at("order").int())
    except ValueError as exc:
        b.fail(str(exc))
    fiber = _fiber(r.at("fiber")) if r.get("fiber") else FiberSpec()
    ds = Dataset(r.at("name").str(), cover, chain, band, fiber)
    if r.get("description"):
        ds.description = r.at("description").str()
    if r.get("metric"):
        ds.metric = r.at("metric").array((chain.fiber_dim, chain.fiber_dim))
    if r.get("connection"):
        ds.connection = _connection(r.at("connection"), cover)
    if r.get("levi_civita"):
        ds.levi_civita = _connection(r.at("levi_civita"), cover)
    if r.get("scalar_curvature"):
        ds.scalar_curvature = _per_chart(r.at("scalar_curvature"), cover)
        if any(v is None for v in ds.scalar_curvature):
            r.fail("scalar curvature must be given on every chart", ".scalar_curvature")
    if r.get("frames"):
        ds.frames = _chain(r.at("frames"), cover)
    if r.get("sections"):
        for name, sub in r.at("sections").items():
            ds.sections[name] = _per_chart(sub, cover)
    if r.get("partitions"):
        for name, sub in r.at("partitions").items():
            sub.obj_with({"weights"}, {"conforming"})
            w = _per_chart(sub.at("weights"), cover, ())
            conf = sub.at("conforming").bool() if "conforming" in sub.obj else True
            ds.partitions[name] = PartitionOfUnity({c: np.real(v) for c, v in enumerate(w) if v is not None}, conf)
    if r.get("dirac"):
        ds.dirac = _dirac(r.at("dirac"), fiber.module_dim)
    if r.get("flat"):
        ds.flat = r.at("flat").bool()
    if r.get("lifting"):
        ds.lifting = r.at("lifting").str()
        from .datasets import LIFTINGS

        if ds.lifting not in LIFTINGS:
            r.fail(f"unknown lifting recipe {ds.lifting!r}", ".lifting")
    if r.get("expect"):
        ds.expect = _plain(r.at("expect"), "expect")
    if r.get("tolerances"):
        ds.tolerances = _plain(r.at("tolerances"), "tolerances")
    return ds


def loads(text: str, source: str = "<string>") -> Dataset:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("$", f"malformed JSON in {source} (line {exc.lineno}, column {exc.colno}): {exc.msg}")
    return from_json_obj(obj)


def parse(path: str | Path) -> Dataset:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError("$", f"cannot read {p}: {exc.strerror}")
    return loads(text, str(p))
