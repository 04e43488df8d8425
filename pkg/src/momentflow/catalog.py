"""Built-in bracket catalog shipped as JSON documents."""
from importlib import resources

from .documents import DocumentError, parse_document

PREFIX = "catalog"


def catalog_names():
    root = resources.files(__package__).joinpath("catalog")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_catalog(name):
    path = resources.files(__package__).joinpath("catalog", f"{name}.json")
    if not path.is_file():
        raise DocumentError(f"unknown catalog entry {name!r}; known: {', '.join(catalog_names())}",
                            f"{PREFIX}:{name}")
    return parse_document(path.read_text(encoding="utf-8"), f"{PREFIX}:{name}")


def is_catalog_selector(target):
    return target == PREFIX or target.startswith(PREFIX + ":")


def select(target):
    """Documents for ``catalog`` (everything) or ``catalog:a,b``, as (source, doc) pairs."""
    names = catalog_names() if target == PREFIX else [s for s in target.split(":", 1)[1].split(",") if s]
    return [(f"{PREFIX}:{name}", load_catalog(name)) for name in names]
