"""Interchange formats: canonical pathway documents and article corpora.

The on-disk pathway document ("pathforge/1") is a documented stand-in for
the downstream authoring tool's proprietary schema; everything
format-specific lives here so a real adapter can be added without touching
the core model.

Canonical serialization: UTF-8, LF, sorted object keys, nodes in id order,
edges in (from, answer, to) order, trailing newline. Exporting the same
pathway twice yields identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Union

from .errors import (
    DuplicateArticleId,
    InvalidPathway,
    MalformedArticle,
    MalformedDocument,
    StructurallyInvalid,
    UnsupportedVersion,
)
from .model import (
    Answer,
    Article,
    Difficulty,
    Edge,
    Node,
    NodeKind,
    Origin,
    Pathway,
    build_pathway,
)
from .validation import validate_structure

SCHEMA_VERSION = "pathforge/1"


def canonical_json_bytes(payload: dict) -> bytes:
    return (json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n").encode("utf-8")


def pathway_to_document(pathway: Pathway, article: Article) -> dict:
    nodes = []
    for n in sorted(pathway.nodes, key=lambda n: n.id):
        entry = {
            "id": n.id,
            "kind": n.kind.value,
            "text": n.text,
            "is_default": n.is_default,
        }
        if n.citation_span is not None:
            entry["citation_span"] = [n.citation_span[0], n.citation_span[1]]
        nodes.append(entry)
    edges = [
        {"from": e.from_id, "answer": e.answer.value, "to": e.to_id}
        for e in sorted(pathway.edges, key=Edge.sort_key)
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "article": {"id": article.id, "source": article.source, "text": article.text},
        "pathway": {
            "id": pathway.id,
            "origin": pathway.origin.value,
            "root": pathway.root,
            "nodes": nodes,
            "edges": edges,
        },
    }


def export_pathway(pathway: Pathway, article: Article) -> bytes:
    """Canonical document bytes for a valid pathway."""
    violations = validate_structure(pathway.nodes, pathway.edges, pathway.root)
    if violations:
        raise InvalidPathway("cannot export an invalid pathway", violations=violations)
    for n in pathway.nodes:
        if n.citation_span is not None and n.citation_span[1] > len(article.text):
            raise InvalidPathway(
                f"citation_span of node {n.id!r} exceeds the article length")
    return canonical_json_bytes(pathway_to_document(pathway, article))


def _expect(value, expected_type, path: str):
    if not isinstance(value, expected_type) or isinstance(value, bool) and expected_type is not bool:
        raise MalformedDocument(
            f"expected {expected_type.__name__} at {path}", json_path=path)
    return value


def _get(mapping: dict, key: str, expected_type, path: str):
    if key not in mapping:
        raise MalformedDocument(f"missing key {key!r} at {path}", json_path=f"{path}.{key}")
    return _expect(mapping[key], expected_type, f"{path}.{key}")


def import_pathway(data: Union[bytes, str]) -> tuple[Pathway, Article]:
    """Parse document bytes back into (Pathway, Article).

    Total: any input yields a typed error (MalformedDocument,
    UnsupportedVersion, StructurallyInvalid) rather than a crash. Key
    order need not be canonical; unknown keys are ignored.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not valid UTF-8: {exc}", json_path="$") from None
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc.msg} at offset {exc.pos}", json_path="$") from None
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level value must be an object", json_path="$")

    version = _get(doc, "schema_version", str, "$")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersion(f"unsupported schema_version {version!r}")

    article_obj = _get(doc, "article", dict, "$")
    try:
        article = Article(
            id=_get(article_obj, "id", str, "$.article"),
            source=_get(article_obj, "source", str, "$.article"),
            text=_get(article_obj, "text", str, "$.article"),
        )
    except ValueError as exc:
        raise MalformedDocument(str(exc), json_path="$.article") from None

    pathway_obj = _get(doc, "pathway", dict, "$")
    origin_raw = _get(pathway_obj, "origin", str, "$.pathway")
    try:
        origin = Origin(origin_raw)
    except ValueError:
        raise MalformedDocument(
            f"origin must be one of {[o.value for o in Origin]}, got {origin_raw!r}",
            json_path="$.pathway.origin") from None

    nodes: list[Node] = []
    seen_ids: set[str] = set()
    raw_nodes = _get(pathway_obj, "nodes", list, "$.pathway")
    for i, raw in enumerate(raw_nodes):
        path = f"$.pathway.nodes[{i}]"
        node_obj = _expect(raw, dict, path)
        kind_raw = _get(node_obj, "kind", str, path)
        try:
            kind = NodeKind(kind_raw)
        except ValueError:
            raise MalformedDocument(
                f"kind must be one of {[k.value for k in NodeKind]}, got {kind_raw!r}",
                json_path=f"{path}.kind") from None
        span = None
        if "citation_span" in node_obj:
            raw_span = _expect(node_obj["citation_span"], list, f"{path}.citation_span")
            if len(raw_span) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw_span):
                raise MalformedDocument(
                    "citation_span must be a pair of integers", json_path=f"{path}.citation_span")
            if not (0 <= raw_span[0] < raw_span[1] <= len(article.text)):
                raise MalformedDocument(
                    "citation_span out of bounds for the article text",
                    json_path=f"{path}.citation_span")
            span = (raw_span[0], raw_span[1])
        is_default = node_obj.get("is_default", False)
        _expect(is_default, bool, f"{path}.is_default")
        try:
            node = Node(
                id=_get(node_obj, "id", str, path),
                kind=kind,
                text=_get(node_obj, "text", str, path),
                is_default=is_default,
                citation_span=span,
            )
        except ValueError as exc:
            raise MalformedDocument(str(exc), json_path=path) from None
        if node.id in seen_ids:
            raise MalformedDocument(f"duplicate node id {node.id!r}", json_path=f"{path}.id")
        seen_ids.add(node.id)
        nodes.append(node)

    edges: list[Edge] = []
    raw_edges = _get(pathway_obj, "edges", list, "$.pathway")
    for i, raw in enumerate(raw_edges):
        path = f"$.pathway.edges[{i}]"
        edge_obj = _expect(raw, dict, path)
        answer_raw = _get(edge_obj, "answer", str, path)
        try:
            ans = Answer(answer_raw)
        except ValueError:
            raise MalformedDocument(
                f"answer must be one of {[a.value for a in Answer]}, got {answer_raw!r}",
                json_path=f"{path}.answer") from None
        edges.append(Edge(
            from_id=_get(edge_obj, "from", str, path),
            answer=ans,
            to_id=_get(edge_obj, "to", str, path),
        ))

    result = build_pathway(
        pathway_id=_get(pathway_obj, "id", str, "$.pathway"),
        article_id=article.id,
        origin=origin,
        root=_get(pathway_obj, "root", str, "$.pathway"),
        nodes=nodes,
        edges=edges,
    )
    if not isinstance(result, Pathway):
        raise StructurallyInvalid("document encodes an invalid pathway", violations=result)
    return result, article


def write_atomic(path: Union[str, Path], data: bytes) -> None:
    """Write via temp file + rename so readers never observe partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _article_from_dict(obj: dict, origin_name: str) -> Article:
    if not isinstance(obj, dict):
        raise MalformedArticle(f"{origin_name}: article entry must be an object")
    try:
        difficulty = Difficulty(obj.get("difficulty", "Unrated"))
    except ValueError:
        raise MalformedArticle(
            f"{origin_name}: difficulty must be one of {[d.value for d in Difficulty]}") from None
    try:
        minutes = obj.get("authoring_minutes")
        return Article(
            id=obj["id"],
            source=obj.get("source", ""),
            text=obj["text"],
            difficulty=difficulty,
            authoring_minutes=float(minutes) if minutes is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedArticle(f"{origin_name}: {exc}") from None


def load_corpus(path: Union[str, Path]) -> list[Article]:
    """Read a corpus directory (one JSON object per article) or a single
    JSON array file. Articles come back in id order; duplicate ids fail."""
    path = Path(path)
    entries: list[tuple[str, dict]] = []
    if path.is_dir():
        for file in sorted(path.glob("*.json")):
            try:
                obj = json.loads(file.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise MalformedArticle(f"{file.name}: {exc}") from None
            entries.append((file.name, obj))
    else:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedArticle(f"{path.name}: {exc}") from None
        if not isinstance(data, list):
            raise MalformedArticle(f"{path.name}: corpus file must hold a JSON array")
        entries = [(f"{path.name}[{i}]", obj) for i, obj in enumerate(data)]

    articles: dict[str, Article] = {}
    for origin_name, obj in entries:
        article = _article_from_dict(obj, origin_name)
        if article.id in articles:
            raise DuplicateArticleId(f"article id {article.id!r} appears more than once")
        articles[article.id] = article
    return [articles[i] for i in sorted(articles)]
