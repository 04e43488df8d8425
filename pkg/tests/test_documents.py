import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentflow import catalog
from momentflow.bracket_rep import Bracket
from momentflow.documents import (
    BracketDocument, DocumentError, NonFiniteValue, document_digest, dumps, format_float,
    load_document, parse_document, serialize_document,
)

from conftest import random_bracket

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def documents(draw):
    n = draw(st.integers(2, 5))
    field = draw(st.sampled_from(["real", "complex"]))
    triples = [(i, j, k) for i in range(1, n + 1) for j in range(i + 1, n + 1) for k in range(1, n + 1)]
    chosen = draw(st.lists(st.sampled_from(triples), unique=True, max_size=8))
    entries = []
    for i, j, k in chosen:
        c = draw(finite)
        if field == "complex":
            c = complex(c, draw(finite))
        entries.append((i, j, k, c))
    name = draw(st.text(max_size=12))
    meta = draw(st.dictionaries(st.text(min_size=1, max_size=5), st.text(max_size=8), max_size=2))
    return BracketDocument(n, field, tuple(entries), name, meta)


@settings(max_examples=200, deadline=None)
@given(documents())
def test_round_trip(doc):
    text = serialize_document(doc)
    back = parse_document(text)
    assert back == doc
    assert serialize_document(back) == text
    assert document_digest(back) == document_digest(doc)


@settings(max_examples=200, deadline=None)
@given(finite)
def test_float_format_is_exact(x):
    assert float(format_float(x)) == x
    assert json.loads(format_float(x)) == x


def test_format_float_rejects_non_finite():
    with pytest.raises(NonFiniteValue):
        format_float(float("nan"))
    with pytest.raises(NonFiniteValue):
        dumps({"x": float("inf")})


def test_dumps_is_deterministic():
    obj = {"b": [1.0, 2, None, True], "a": {"z": np.float64(0.1), "c": 1 + 2j}, "e": np.eye(2)}
    assert dumps(obj) == dumps(obj)
    assert json.loads(dumps(obj)) == {"b": [1.0, 2, None, True], "a": {"z": 0.1, "c": [1.0, 2.0]},
                                      "e": [[1.0, 0.0], [0.0, 1.0]]}


def test_from_bracket(rng):
    mu = random_bracket(3, rng)
    doc = BracketDocument.from_bracket(mu, name="r")
    assert parse_document(serialize_document(doc)).bracket() == mu
    cmu = random_bracket(3, rng, complex_=True)
    assert parse_document(serialize_document(BracketDocument.from_bracket(cmu))).bracket() == cmu


def _err(text):
    with pytest.raises(DocumentError) as info:
        parse_document(text, "doc.json")
    return str(info.value)


def test_syntax_error_has_position():
    msg = _err('{"n": 3,\n "field": "real" "entries": []}')
    assert "doc.json:2:" in msg


@pytest.mark.parametrize("text,where", [
    ('{"n": 3, "field": "real", "entries": [{"i": 1, "j": 2, "k": 4, "c": 1.0}]}', "entries[0].k"),
    ('{"n": 3, "field": "real", "entries": [{"i": 2, "j": 1, "k": 3, "c": 1.0}]}', "entries[0]"),
    ('{"n": 3, "field": "real", "entries": [{"i": 1, "j": 2, "k": 3, "c": 1.0},'
     ' {"i": 1, "j": 2, "k": 3, "c": 2.0}]}', "entries[1]"),
    ('{"n": 3, "field": "quaternion", "entries": []}', "field"),
    ('{"n": 1, "field": "real", "entries": []}', "n"),
    ('{"n": 3, "field": "real", "entries": [], "colour": 1}', "colour"),
    ('{"n": 3, "field": "real", "entries": [{"i": 1, "j": 2, "k": 3, "c": "x"}]}', "entries[0].c"),
    ('{"n": 3, "field": "real", "entries": [{"i": 1, "j": 2, "k": 3, "c": NaN}]}', "entries[0].c"),
    ('{"n": 3, "n": 4, "field": "real", "entries": []}', "n"),
])
def test_semantic_errors_name_the_field(text, where):
    assert where in _err(text)


def test_empty_document():
    assert "doc.json" in _err("")


def test_load_document(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(serialize_document(BracketDocument(3, "real", ((1, 2, 3, 1.0),), "h")))
    assert load_document(p).bracket() == Bracket.from_entries(3, [(1, 2, 3, 1.0)])
    with pytest.raises(DocumentError):
        load_document(tmp_path / "missing.json")


def test_catalog():
    names = catalog.catalog_names()
    assert {"heisenberg3", "so3", "sl2r", "free2step3"} <= set(names)
    for name in names:
        doc = catalog.load_catalog(name)
        assert doc.name == name
        assert doc.bracket().n == doc.n
    assert [s for s, _ in catalog.select("catalog:so3,sl2r")] == ["catalog:so3", "catalog:sl2r"]
    assert len(catalog.select("catalog")) == len(names)
    with pytest.raises(DocumentError):
        catalog.select("catalog:nope")
