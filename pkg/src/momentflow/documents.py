"""Bracket documents (JSON, 1-based indices) and the report writer.

A document looks like::

    {"n": 3, "field": "real", "name": "heisenberg3",
     "entries": [{"i": 1, "j": 2, "k": 3, "c": 1}]}

Complex scalars are written as ``[re, im]``.  All floats are written with 17
significant digits so that parse(serialize(doc)) == doc exactly.
"""
from dataclasses import dataclass, field
import hashlib
import json
import math

import numpy as np

from .bracket_rep import Bracket

FIELDS = ("real", "complex")
_TOP_KEYS = {"n", "field", "entries", "name", "metadata"}


class DocumentError(ValueError):
    """Malformed bracket document; ``where`` is a line or a field path."""

    def __init__(self, message, where=""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class NonFiniteValue(ValueError):
    pass


@dataclass(frozen=True)
class BracketDocument:
    n: int
    field: str
    entries: tuple                   # ((i, j, k, c), ...) 1-based
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def bracket(self):
        return Bracket.from_entries(self.n, self.entries, complex_=self.field == "complex")

    @classmethod
    def from_bracket(cls, mu, name="", metadata=None, tol=0.0):
        entries = []
        for i, j, k, c in mu.entries(tol):
            c = complex(c) if mu.is_complex else float(c)
            entries.append((i, j, k, c))
        return cls(mu.n, "complex" if mu.is_complex else "real", tuple(entries),
                   name, dict(metadata or {}))


# -- writing -------------------------------------------------------------------

def format_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise NonFiniteValue(f"non-finite number {x!r} cannot be written")
    if x == 0.0:
        return "0.0" if math.copysign(1.0, x) > 0 else "-0.0"
    s = f"{x:.17g}"
    if "." not in s and "e" not in s and "inf" not in s:
        s += ".0"
    return s


def dumps(obj, indent=2, _level=0):
    """Deterministic JSON text: floats at 17 significant digits, keys in given order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (complex, np.complexfloating)):
        return f"[{format_float(obj.real)}, {format_float(obj.imag)}]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [dumps(v, indent, _level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def serialize_document(doc):
    lines = ["{", f'  "n": {doc.n},', f'  "field": {json.dumps(doc.field)},']
    if doc.name:
        lines.append(f'  "name": {json.dumps(doc.name, ensure_ascii=False)},')
    if doc.metadata:
        meta = ", ".join(f"{json.dumps(k)}: {json.dumps(v, ensure_ascii=False)}"
                         for k, v in doc.metadata.items())
        lines.append(f'  "metadata": {{{meta}}},')
    rows = []
    for i, j, k, c in doc.entries:
        c = dumps(complex(c)) if doc.field == "complex" else format_float(c)
        rows.append(f'    {{"i": {i}, "j": {j}, "k": {k}, "c": {c}}}')
    if rows:
        lines.append('  "entries": [\n' + ",\n".join(rows) + "\n  ]")
    else:
        lines.append('  "entries": []')
    lines.append("}")
    return "\n".join(lines) + "\n"


def document_digest(doc):
    return "sha256:" + hashlib.sha256(serialize_document(doc).encode("utf-8")).hexdigest()


def dump_document(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_document(doc))


# -- reading -------------------------------------------------------------------

def _no_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise DocumentError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _index(value, where, n):
    if isinstance(value, bool) or not isinstance(value, int):
        raise DocumentError("index must be an integer", where)
    if not 1 <= value <= n:
        raise DocumentError(f"index {value} outside 1..{n}", where)
    return value


def _scalar(value, where, complex_):
    if complex_:
        if isinstance(value, list):
            if len(value) != 2:
                raise DocumentError("complex scalar must be [re, im]", where)
            re, im = (_scalar(v, f"{where}[{t}]", False) for t, v in enumerate(value))
            return complex(re, im)
        return complex(_scalar(value, where, False), 0.0)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError("scalar must be a number" + (" ([re, im] needs field 'complex')"
                                                          if isinstance(value, list) else ""), where)
    value = float(value)
    if not math.isfinite(value):
        raise DocumentError("scalar must be finite", where)
    return value


def parse_document(text, source="<string>"):
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates,
                         parse_constant=lambda c: float(c))
    except DocumentError as exc:
        raise DocumentError(str(exc), source) from None
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON: {exc.msg}", f"{source}:{exc.lineno}:{exc.colno}") from None
    if not isinstance(raw, dict):
        raise DocumentError("top level must be an object", source)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise DocumentError(f"unknown keys {sorted(unknown)}", source)
    for key in ("n", "entries"):
        if key not in raw:
            raise DocumentError(f"missing required field {key!r}", source)
    n = raw["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise DocumentError("n must be an integer >= 2", f"{source}: n")
    fld = raw.get("field", "real")
    if fld not in FIELDS:
        raise DocumentError(f"field must be one of {FIELDS}", f"{source}: field")
    name = raw.get("name", "")
    if not isinstance(name, str):
        raise DocumentError("name must be a string", f"{source}: name")
    metadata = raw.get("metadata", {})
    if not isinstance(metadata, dict) or not all(isinstance(v, str) for v in metadata.values()):
        raise DocumentError("metadata must map strings to strings", f"{source}: metadata")
    entries_raw = raw["entries"]
    if not isinstance(entries_raw, list):
        raise DocumentError("entries must be a list", f"{source}: entries")

    seen = {}
    entries = []
    for t, e in enumerate(entries_raw):
        where = f"{source}: entries[{t}]"
        if not isinstance(e, dict):
            raise DocumentError("entry must be an object {i, j, k, c}", where)
        missing = {"i", "j", "k", "c"} - set(e)
        extra = set(e) - {"i", "j", "k", "c"}
        if missing or extra:
            raise DocumentError(f"entry keys must be exactly i, j, k, c (missing {sorted(missing)}, "
                                f"unexpected {sorted(extra)})", where)
        i = _index(e["i"], f"{where}.i", n)
        j = _index(e["j"], f"{where}.j", n)
        k = _index(e["k"], f"{where}.k", n)
        if not i < j:
            raise DocumentError(f"need i < j, got i = {i}, j = {j}", where)
        key = (i, j, k)
        if key in seen:
            raise DocumentError(f"duplicate entry (i, j, k) = {key}, first at entries[{seen[key]}]", where)
        seen[key] = t
        entries.append((i, j, k, _scalar(e["c"], f"{where}.c", fld == "complex")))
    return BracketDocument(n, fld, tuple(entries), name, dict(metadata))


def load_document(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DocumentError(f"cannot read: {exc.strerror}", str(path)) from None
    except UnicodeDecodeError:
        raise DocumentError("file is not UTF-8", str(path)) from None
    return parse_document(text, str(path))
