"""Pathway graph model: question/conclusion nodes linked by yes/no edges.

A pathway is a rooted DAG. Questions branch on Yes/No, conclusions are
terminal. Values are immutable after construction; build_pathway() is the
only sanctioned constructor and either returns a Pathway or the complete
list of structural violations, never an exception.
"""

from __future__ import annotations

import heapq
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, Union

from .errors import CycleDetected, UnknownNode


class Difficulty(str, Enum):
    EASY = "Easy"
    NORMAL = "Normal"
    HARD = "Hard"
    UNRATED = "Unrated"


class NodeKind(str, Enum):
    QUESTION = "Question"
    CONCLUSION = "Conclusion"


class Answer(str, Enum):
    YES = "Yes"
    NO = "No"


class Origin(str, Enum):
    AUTOMATIC = "Automatic"
    MANUAL = "Manual"


DEFAULT_CONCLUSION_TEXT = "The rule does not apply."


@dataclass(frozen=True)
class Article:
    """A legislative text unit; char_count is always derived from text."""

    id: str
    source: str
    text: str
    difficulty: Difficulty = Difficulty.UNRATED
    authoring_minutes: Optional[float] = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("article text must be non-empty")
        if self.authoring_minutes is not None and self.authoring_minutes < 0:
            raise ValueError("authoring_minutes must be non-negative")

    @property
    def char_count(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class Node:
    """A question (criterion phrased as a yes/no question) or a conclusion.

    is_default marks a "rule does not apply" conclusion and is rejected on
    questions. citation_span, when present, is a (start, end) character
    range into the source article; the upper bound is checked where the
    article is available (import/export), not here.
    """

    id: str
    kind: NodeKind
    text: str
    is_default: bool = False
    citation_span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        object.__setattr__(self, "id", unicodedata.normalize("NFC", self.id))
        if not self.id:
            raise ValueError("node id must be non-empty")
        if not self.text.strip():
            raise ValueError("node text must be non-empty")
        if self.kind is NodeKind.QUESTION and self.is_default:
            raise ValueError("is_default is meaningful only for conclusions")
        if self.citation_span is not None:
            start, end = self.citation_span
            if not (0 <= start < end):
                raise ValueError("citation_span must satisfy 0 <= start < end")
            object.__setattr__(self, "citation_span", (int(start), int(end)))


@dataclass(frozen=True)
class Edge:
    """Directed yes/no link from a question to its successor."""

    from_id: str
    answer: Answer
    to_id: str

    def __post_init__(self):
        object.__setattr__(self, "from_id", unicodedata.normalize("NFC", self.from_id))
        object.__setattr__(self, "to_id", unicodedata.normalize("NFC", self.to_id))

    def sort_key(self) -> tuple[str, str, str]:
        return (self.from_id, self.answer.value, self.to_id)


def _node_sort_key(node: Node) -> tuple[str, str, str, bool]:
    return (node.id, node.kind.value, node.text, node.is_default)


@dataclass(frozen=True)
class Pathway:
    """A validated pathway. Use build_pathway(); direct construction skips
    the structural checks and only normalizes ordering."""

    id: str
    article_id: str
    origin: Origin
    root: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    generation_seconds: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "root", unicodedata.normalize("NFC", self.root))
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=_node_sort_key)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=Edge.sort_key)))

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _successor_map(self) -> dict[str, dict[Answer, str]]:
        out: dict[str, dict[Answer, str]] = {n.id: {} for n in self.nodes}
        for e in self.edges:
            out.setdefault(e.from_id, {})[e.answer] = e.to_id
        return out

    def node(self, node_id: str) -> Node:
        try:
            return self.node_map[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node {node_id!r}") from None

    def successors(self, node_id: str) -> dict[Answer, str]:
        """Yes/No successor map for a question; empty for a conclusion."""
        self.node(node_id)
        return dict(self._successor_map.get(node_id, {}))

    @property
    def question_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind is NodeKind.QUESTION)

    @property
    def conclusion_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind is NodeKind.CONCLUSION)


def build_pathway(
    pathway_id: str,
    article_id: str,
    origin: Origin,
    root: str,
    nodes: Iterable[Node],
    edges: Iterable[Edge],
    generation_seconds: Optional[float] = None,
) -> Union[Pathway, list]:
    """Construct a Pathway, or return the complete list of ValidationErrors.

    Total on arbitrary graphs: never raises for shape defects. Nodes that
    share an id collapse to the first occurrence after a stable sort
    (callers feeding untrusted data should reject duplicates upstream;
    parse/import boundaries do).
    """
    from .validation import validate_structure  # local import breaks the cycle

    unique: dict[str, Node] = {}
    for node in sorted(set(nodes), key=_node_sort_key):
        unique.setdefault(node.id, node)
    node_list = list(unique.values())
    edge_list = sorted(set(edges), key=Edge.sort_key)

    violations = validate_structure(node_list, edge_list, root)
    if violations:
        return violations
    return Pathway(
        id=pathway_id,
        article_id=article_id,
        origin=origin,
        root=root,
        nodes=tuple(node_list),
        edges=tuple(edge_list),
        generation_seconds=generation_seconds,
    )


def topological_order(pathway: Pathway) -> list[str]:
    """Node ids with every edge pointing forward; root first, ties broken
    lexicographically. Raises CycleDetected on cyclic input."""
    return toposort_ids(
        [n.id for n in pathway.nodes],
        [(e.from_id, e.to_id) for e in pathway.edges],
    )


def toposort_ids(node_ids: list[str], arcs: list[tuple[str, str]]) -> list[str]:
    """Kahn's algorithm with a lexicographic tie-break heap.

    Works on raw id/arc lists so the validator can reuse it before a
    Pathway exists. Arcs referencing unknown ids are ignored.
    """
    ids = set(node_ids)
    indegree = {i: 0 for i in ids}
    out: dict[str, list[str]] = {i: [] for i in ids}
    for a, b in arcs:
        if a in ids and b in ids:
            out[a].append(b)
            indegree[b] += 1
    heap = [i for i in ids if indegree[i] == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        current = heapq.heappop(heap)
        order.append(current)
        for nxt in sorted(out[current]):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, nxt)
    if len(order) != len(ids):
        raise CycleDetected("graph contains a cycle")
    return order
