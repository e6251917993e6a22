"""Declared Morse-Smale data: critical points, signed flow counts and cup
integrals, plus a small JSON file format and the built-in worked examples.

Orientation convention.  Each unstable manifold carries a fixed orientation
and the moduli spaces are oriented by ``[U(q)] = [M(q,p)][U(p)]``.  Under this
convention ``partial C(a) = C(da) + (-1)^ell C(a) partial`` for any form ``a``,
which for closed ``omega`` is the anticommutation checked by :func:`validate`.
The built-in signs are fixed so the induced maps on cohomology agree with the
classical cup products on the sphere and the torus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from conemorse.complex_core import ChainMapPair, ComplexError, InvalidConeData, NilpotencyError
from conemorse.linalg_q import RationalMatrix

SCHEMA_VERSION = 1


class MorseDataError(ValueError):
    """Malformed dataset file."""


class ValidationError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class CriticalPoint:
    id: str
    index: int
    value: Fraction | float | None = None


@dataclass(frozen=True)
class MorseData:
    manifold_dim: int
    ell: int
    points: tuple[CriticalPoint, ...]
    boundary: Mapping[tuple[str, str], Fraction] = field(default_factory=dict)
    cup: Mapping[tuple[str, str], Fraction] = field(default_factory=dict)
    name: str = ""
    notes: str = ""

    def points_of_index(self, k: int) -> list[CriticalPoint]:
        return [p for p in self.points if p.index == k]

    @property
    def mu(self) -> dict[int, int]:
        return {k: len(self.points_of_index(k)) for k in range(self.manifold_dim + 1)}


def _assemble(data: MorseData, entries: Mapping[tuple[str, str], Fraction], shift: int) -> dict[int, RationalMatrix]:
    pos = {}
    for k in range(data.manifold_dim + 1):
        for i, p in enumerate(data.points_of_index(k)):
            pos[p.id] = i
    mats = {}
    for k in range(data.manifold_dim + 1 - shift):
        src = data.points_of_index(k)
        dst = data.points_of_index(k + shift)
        rows = [[Fraction(0)] * len(src) for _ in dst]
        for (q, p), coef in entries.items():
            if p in pos and q in pos and _index(data, p) == k:
                rows[pos[q]][pos[p]] = Fraction(coef)
        mats[k] = RationalMatrix.from_rows(rows, cols=len(src))
    return mats


def _index(data: MorseData, pid: str) -> int:
    for p in data.points:
        if p.id == pid:
            return p.index
    raise KeyError(pid)


def validate(data: MorseData) -> ChainMapPair:
    """Assemble the boundary and cup matrices and check both identities.

    Basis order in each degree is the order in which points are declared.
    """
    ids = [p.id for p in data.points]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValidationError("duplicate id", dup)
    for p in data.points:
        if not 0 <= p.index <= data.manifold_dim:
            raise ValidationError("grading violation", f"point {p.id} has index {p.index} outside [0, {data.manifold_dim}]")
    if data.ell < 0:
        raise ValidationError("grading violation", f"ell = {data.ell} is negative")
    known = set(ids)
    for label, entries, gap in (("boundary", data.boundary, 1), ("cup", data.cup, data.ell)):
        for (q, p) in entries:
            for pid in (q, p):
                if pid not in known:
                    raise ValidationError("unknown point", f"{label} entry ({q}, {p}) names unknown point {pid}")
            if _index(data, q) != _index(data, p) + gap:
                raise ValidationError(
                    "grading violation",
                    f"{label} entry ({q}, {p}) joins indices {_index(data, p)} -> {_index(data, q)}, expected a gap of {gap}",
                )

    dims = tuple(len(data.points_of_index(k)) for k in range(data.manifold_dim + 1))
    partial = _assemble(data, data.boundary, 1)
    cone = _assemble(data, data.cup, data.ell)
    pair = ChainMapPair(dims, partial, cone, data.ell)

    for k in range(data.manifold_dim - 1):
        sq = pair.d(k + 1) @ pair.d(k)
        if not sq.is_zero():
            i, j = next((i, j) for i in range(sq.rows) for j in range(sq.cols) if sq[i, j] != 0)
            q = data.points_of_index(k + 2)[i].id
            p = data.points_of_index(k)[j].id
            raise ValidationError("nilpotency violation", f"(partial^2)({q}, {p}) = {sq[i, j]}")
    try:
        pair.check()
    except InvalidConeData as exc:
        raise ValidationError("anticommutation violation", str(exc)) from exc
    except (NilpotencyError, ComplexError) as exc:  # pragma: no cover - caught above
        raise ValidationError("invalid data", str(exc)) from exc
    return pair


# -- built-in datasets -------------------------------------------------------

_BUILTIN_NOTES = {
    "s2_height_area": (
        "Height function on the round 2-sphere, omega the area form normalised to total area 1. "
        "The only cup coefficient is the integral of omega over the closure of U(max), the whole sphere."
    ),
    "t2_cos_dx": (
        "f = cos(2 pi x) + cos(2 pi y) on the unit flat torus: min m=(1/2,1/2), saddles s_x=(0,1/2) "
        "(unstable along x) and s_y=(1/2,0) (unstable along y), max M=(0,0); the two flow lines between "
        "each pair cancel so partial = 0.  omega = dx.  Unstable manifolds are oriented along +x, +y and "
        "dx^dy, so [dx] <-> s_x, [dy] <-> s_y, [dx^dy] <-> M, giving cup(s_x, m) = 1 and cup(M, s_y) = 1."
    ),
    "t2_cos_zero": "Same Morse data as t2_cos_dx with omega = 0 (degree 1), so the cup map vanishes.",
}


def builtin(name: str) -> MorseData:
    if name == "s2_height_area":
        points = (CriticalPoint("min", 0, Fraction(-1)), CriticalPoint("max", 2, Fraction(1)))
        return MorseData(2, 2, points, {}, {("max", "min"): Fraction(1)}, name, _BUILTIN_NOTES[name])
    if name in ("t2_cos_dx", "t2_cos_zero"):
        points = (
            CriticalPoint("m", 0, Fraction(-2)),
            CriticalPoint("s_x", 1, Fraction(0)),
            CriticalPoint("s_y", 1, Fraction(0)),
            CriticalPoint("M", 2, Fraction(2)),
        )
        cup = {("s_x", "m"): Fraction(1), ("M", "s_y"): Fraction(1)} if name == "t2_cos_dx" else {}
        return MorseData(2, 1, points, {}, cup, name, _BUILTIN_NOTES[name])
    raise KeyError(f"unknown builtin dataset {name!r}; choose from {sorted(BUILTINS)}")


BUILTINS = ("s2_height_area", "t2_cos_dx", "t2_cos_zero")


# -- file format -------------------------------------------------------------

def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def to_dict(data: MorseData) -> dict:
    def value(v):
        if v is None:
            return None
        return _fmt(v) if isinstance(v, Fraction) else float(v)

    def entries(m):
        return [{"to": q, "from": p, "coefficient": _fmt(Fraction(c))} for (q, p), c in m.items()]

    return {
        "schema_version": SCHEMA_VERSION,
        "name": data.name,
        "notes": data.notes,
        "manifold_dim": data.manifold_dim,
        "ell": data.ell,
        "points": [{"id": p.id, "index": p.index, "value": value(p.value)} for p in data.points],
        "boundary": entries(data.boundary),
        "cup": entries(data.cup),
    }


def _rational(raw, where: str) -> Fraction:
    if isinstance(raw, bool) or not isinstance(raw, (str, int)):
        raise MorseDataError(f"{where}: expected a 'num/den' string, got {raw!r}")
    try:
        return Fraction(str(raw).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise MorseDataError(f"{where}: bad rational {raw!r} ({exc})") from None


def _require(obj: dict, key: str, types, where: str):
    if key not in obj:
        raise MorseDataError(f"{where}: missing field '{key}'")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, types):
        raise MorseDataError(f"{where}.{key}: expected {getattr(types, '__name__', types)}, got {val!r}")
    return val


def from_dict(doc) -> MorseData:
    """Parse a decoded document.  No validation beyond field types and
    unique ids; call :func:`validate` for the algebraic checks."""
    if not isinstance(doc, dict):
        raise MorseDataError("top level: expected an object")
    version = _require(doc, "schema_version", int, "top level")
    if version != SCHEMA_VERSION:
        raise MorseDataError(f"schema_version: unsupported version {version}")
    m = _require(doc, "manifold_dim", int, "top level")
    ell = _require(doc, "ell", int, "top level")
    raw_points = _require(doc, "points", list, "top level")
    points = []
    seen = set()
    for i, rp in enumerate(raw_points):
        where = f"points[{i}]"
        if not isinstance(rp, dict):
            raise MorseDataError(f"{where}: expected an object")
        pid = _require(rp, "id", str, where)
        if pid in seen:
            raise MorseDataError(f"{where}.id: duplicate point id {pid!r}")
        seen.add(pid)
        idx = _require(rp, "index", int, where)
        raw_val = rp.get("value")
        if raw_val is None:
            val = None
        elif isinstance(raw_val, float):
            val = raw_val
        else:
            val = _rational(raw_val, f"{where}.value")
        points.append(CriticalPoint(pid, idx, val))

    def entries(key):
        out = {}
        for i, e in enumerate(doc.get(key, [])):
            where = f"{key}[{i}]"
            if not isinstance(e, dict):
                raise MorseDataError(f"{where}: expected an object")
            q = _require(e, "to", str, where)
            p = _require(e, "from", str, where)
            if (q, p) in out:
                raise MorseDataError(f"{where}: repeated entry ({q}, {p})")
            out[(q, p)] = _rational(e.get("coefficient"), f"{where}.coefficient")
        return out

    return MorseData(m, ell, tuple(points), entries("boundary"), entries("cup"),
                     str(doc.get("name", "")), str(doc.get("notes", "")))


def save(data: MorseData, path) -> None:
    Path(path).write_text(json.dumps(to_dict(data), indent=2) + "\n")


def load(path) -> MorseData:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MorseDataError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return from_dict(doc)
    except MorseDataError as exc:
        raise MorseDataError(f"{path}: {exc}") from None
