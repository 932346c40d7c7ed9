"""Structural validation and lint analysis for pathways.

Validation errors are hard failures of the graph contract (they block
export). Lint warnings flag reviewable suspicions: conclusions reached by
denying the antecedent, node text not grounded in the article, criteria
hiding inside conclusion text, and weak article coverage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

from .errors import EmptyText
from .model import Answer, Article, Edge, Node, NodeKind, Pathway

DEFAULT_GROUNDING_THRESHOLD = 0.6
DEFAULT_COVERAGE_THRESHOLD = 0.5

# Conditional markers that suggest a criterion was folded into a conclusion.
CONDITIONAL_MARKERS = {
    "en": ["if", "when", "unless", "provided that"],
    "fr": ["si", "lorsque", "quand", "à moins que", "pourvu que"],
}


class ErrorCode(str, Enum):
    CYCLE = "Cycle"
    MULTIPLE_ROOTS = "MultipleRoots"
    DISCONNECTED = "Disconnected"
    MISSING_BRANCH = "MissingBranch"
    DUPLICATE_BRANCH = "DuplicateBranch"
    CONCLUSION_WITH_OUT_EDGES = "ConclusionWithOutEdges"
    DANGLING_EDGE = "DanglingEdge"
    ROOT_IS_CONCLUSION = "RootIsConclusion"
    TOO_FEW_NODES = "TooFewNodes"


class WarningCode(str, Enum):
    POSSIBLE_DENIAL_OF_ANTECEDENT = "PossibleDenialOfAntecedent"
    UNGROUNDED_NODE = "UngroundedNode"
    CRITERION_IN_CONCLUSION = "CriterionInConclusion"
    LOW_ARTICLE_COVERAGE = "LowArticleCoverage"


Location = Union[str, Edge]


def location_json(location: Location):
    if isinstance(location, Edge):
        return {"edge": {"from": location.from_id, "answer": location.answer.value, "to": location.to_id}}
    return {"node": location}


@dataclass(frozen=True)
class ValidationError:
    code: ErrorCode
    location: Location
    message: str

    def to_json_dict(self) -> dict:
        return {"code": self.code.value, "location": location_json(self.location), "message": self.message}


@dataclass(frozen=True)
class LintWarning:
    code: WarningCode
    location: Location
    message: str
    score: Optional[float] = None

    def to_json_dict(self) -> dict:
        out = {"code": self.code.value, "location": location_json(self.location), "message": self.message}
        if self.score is not None:
            out["score"] = self.score
        return out


@dataclass
class ValidationReport:
    pathway_id: str
    errors: list[ValidationError] = field(default_factory=list)
    warnings: list[LintWarning] = field(default_factory=list)
    grounding: dict[str, float] = field(default_factory=dict)
    article_coverage: float = 0.0

    def is_valid(self) -> bool:
        return not self.errors

    def to_json_dict(self) -> dict:
        return {
            "pathway_id": self.pathway_id,
            "errors": [e.to_json_dict() for e in self.errors],
            "warnings": [w.to_json_dict() for w in self.warnings],
            "grounding": dict(sorted(self.grounding.items())),
            "article_coverage": self.article_coverage,
            "is_valid": self.is_valid(),
        }


def validate_structure(nodes: Iterable[Node], edges: Iterable[Edge], root: str) -> list[ValidationError]:
    """Return every structural violation in the graph; empty iff valid.

    Total on arbitrary input: dangling references, cycles, duplicate ids
    and malformed shapes all come back as errors, never exceptions.
    """
    node_list = list(nodes)
    edge_list = sorted(set(edges), key=Edge.sort_key)
    node_map: dict[str, Node] = {}
    for node in node_list:
        node_map.setdefault(node.id, node)

    errors: list[ValidationError] = []

    if len(node_map) < 2:
        errors.append(ValidationError(
            ErrorCode.TOO_FEW_NODES, root,
            f"pathway has {len(node_map)} node(s); at least one question and one conclusion required"))

    if root not in node_map:
        errors.append(ValidationError(
            ErrorCode.DANGLING_EDGE, root, f"root references unknown node {root!r}"))
    elif node_map[root].kind is NodeKind.CONCLUSION:
        errors.append(ValidationError(
            ErrorCode.ROOT_IS_CONCLUSION, root, f"root {root!r} is a conclusion; it must be a question"))

    for e in edge_list:
        missing = [i for i in (e.from_id, e.to_id) if i not in node_map]
        if missing:
            errors.append(ValidationError(
                ErrorCode.DANGLING_EDGE, e,
                f"edge references unknown node(s) {', '.join(repr(m) for m in missing)}"))

    resolved = [e for e in edge_list if e.from_id in node_map and e.to_id in node_map]

    errors.extend(_cycle_errors(node_map, resolved, root))

    out_by_node: dict[str, list[Edge]] = {i: [] for i in node_map}
    indegree: dict[str, int] = {i: 0 for i in node_map}
    for e in edge_list:
        if e.from_id in node_map:
            out_by_node[e.from_id].append(e)
    for e in resolved:
        indegree[e.to_id] += 1

    for node_id in sorted(node_map):
        node = node_map[node_id]
        outgoing = out_by_node[node_id]
        if node.kind is NodeKind.QUESTION:
            for answer in (Answer.YES, Answer.NO):
                count = sum(1 for e in outgoing if e.answer is answer)
                if count == 0:
                    errors.append(ValidationError(
                        ErrorCode.MISSING_BRANCH, node_id,
                        f"question {node_id!r} has no {answer.value} branch"))
                elif count > 1:
                    errors.append(ValidationError(
                        ErrorCode.DUPLICATE_BRANCH, node_id,
                        f"question {node_id!r} has {count} {answer.value} branches"))
        elif outgoing:
            errors.append(ValidationError(
                ErrorCode.CONCLUSION_WITH_OUT_EDGES, node_id,
                f"conclusion {node_id!r} has {len(outgoing)} outgoing edge(s)"))

    reachable = _reachable_from(root, node_map, resolved)
    for node_id in sorted(node_map):
        if node_id in reachable:
            continue
        node = node_map[node_id]
        if node.kind is NodeKind.QUESTION and indegree[node_id] == 0:
            errors.append(ValidationError(
                ErrorCode.MULTIPLE_ROOTS, node_id,
                f"question {node_id!r} is a second starting point (in-degree 0, not the root)"))
        else:
            errors.append(ValidationError(
                ErrorCode.DISCONNECTED, node_id,
                f"node {node_id!r} is not reachable from the root"))

    return errors


def _reachable_from(root: str, node_map: dict[str, Node], edges: Sequence[Edge]) -> set[str]:
    if root not in node_map:
        return set()
    out: dict[str, list[str]] = {i: [] for i in node_map}
    for e in edges:
        out[e.from_id].append(e.to_id)
    seen = {root}
    stack = [root]
    while stack:
        for nxt in out[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _cycle_errors(node_map: dict[str, Node], edges: Sequence[Edge], root: str) -> list[ValidationError]:
    """One Cycle error per back edge found by a deterministic DFS.

    Starts at the root (when known), then remaining nodes in id order;
    successors visit in (answer, target) order so the reported edge is
    stable across runs.
    """
    out: dict[str, list[Edge]] = {i: [] for i in node_map}
    for e in edges:
        out[e.from_id].append(e)
    for lst in out.values():
        lst.sort(key=Edge.sort_key)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {i: WHITE for i in node_map}
    errors: list[ValidationError] = []

    starts = ([root] if root in node_map else []) + sorted(node_map)
    for start in starts:
        if color[start] != WHITE:
            continue
        # (node, iterator over outgoing edges)
        stack: list[tuple[str, int]] = [(start, 0)]
        color[start] = GRAY
        while stack:
            current, idx = stack[-1]
            if idx < len(out[current]):
                stack[-1] = (current, idx + 1)
                edge = out[current][idx]
                target = edge.to_id
                if color[target] == GRAY:
                    errors.append(ValidationError(
                        ErrorCode.CYCLE, edge,
                        f"edge {edge.from_id!r} -{edge.answer.value}-> {edge.to_id!r} closes a cycle"))
                elif color[target] == WHITE:
                    color[target] = GRAY
                    stack.append((target, 0))
            else:
                color[current] = BLACK
                stack.pop()
    return errors


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def content_tokens(text: str) -> set[str]:
    """Lowercased unicode-alphanumeric tokens of length >= 3."""
    return {t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 3}


def grounding_score(node_text: str, article_text: str) -> float:
    """Fraction of the node's content tokens found in the article.

    A node with no content tokens scores 1.0 (nothing to ground).
    """
    if not node_text.strip() or not article_text.strip():
        raise EmptyText("grounding_score requires non-empty texts")
    node_tokens = content_tokens(node_text)
    if not node_tokens:
        return 1.0
    article_tokens = content_tokens(article_text)
    return len(node_tokens & article_tokens) / len(node_tokens)


def article_coverage(pathway: Pathway, article: Article) -> float:
    """Fraction of the article's content tokens appearing in any node text."""
    article_tokens = content_tokens(article.text)
    if not article_tokens:
        return 1.0
    union: set[str] = set()
    for node in pathway.nodes:
        union |= content_tokens(node.text)
    return len(article_tokens & union) / len(article_tokens)


def _marker_pattern(markers: Sequence[str]) -> re.Pattern:
    alts = "|".join(re.escape(m) for m in sorted(markers, key=len, reverse=True))
    return re.compile(rf"\b(?:{alts})\b", re.IGNORECASE | re.UNICODE)


def lint(
    pathway: Pathway,
    article: Article,
    grounding_threshold: float = DEFAULT_GROUNDING_THRESHOLD,
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    conditional_markers: Optional[Sequence[str]] = None,
) -> list[LintWarning]:
    """Lint a structurally valid pathway against its source article."""
    markers = list(conditional_markers) if conditional_markers is not None else (
        CONDITIONAL_MARKERS["en"] + CONDITIONAL_MARKERS["fr"])
    marker_re = _marker_pattern(markers)
    warnings: list[LintWarning] = []

    for edge in pathway.edges:
        if edge.answer is not Answer.NO:
            continue
        target = pathway.node_map.get(edge.to_id)
        if target is not None and target.kind is NodeKind.CONCLUSION and not target.is_default:
            warnings.append(LintWarning(
                WarningCode.POSSIBLE_DENIAL_OF_ANTECEDENT, edge,
                f"No-branch of {edge.from_id!r} asserts a substantive conclusion "
                f"{edge.to_id!r}; absence of a criterion should not imply a consequence"))

    for node in pathway.nodes:
        # Default conclusions carry injected boilerplate, not model output.
        if node.is_default:
            continue
        score = grounding_score(node.text, article.text)
        if score < grounding_threshold:
            warnings.append(LintWarning(
                WarningCode.UNGROUNDED_NODE, node.id,
                f"node {node.id!r} text is weakly grounded in the article",
                score=score))

    for node in pathway.nodes:
        if node.kind is not NodeKind.CONCLUSION:
            continue
        match = marker_re.search(node.text)
        if match:
            warnings.append(LintWarning(
                WarningCode.CRITERION_IN_CONCLUSION, node.id,
                f"conclusion {node.id!r} contains conditional marker {match.group(0)!r}"))

    coverage = article_coverage(pathway, article)
    if coverage < coverage_threshold:
        warnings.append(LintWarning(
            WarningCode.LOW_ARTICLE_COVERAGE, pathway.root,
            "pathway covers little of the article text",
            score=coverage))

    return warnings


def build_report(
    pathway: Pathway,
    article: Optional[Article] = None,
    grounding_threshold: float = DEFAULT_GROUNDING_THRESHOLD,
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    conditional_markers: Optional[Sequence[str]] = None,
) -> ValidationReport:
    """Full report for an already-built pathway: errors, lints, grounding."""
    errors = validate_structure(pathway.nodes, pathway.edges, pathway.root)
    report = ValidationReport(pathway_id=pathway.id, errors=errors)
    if article is not None:
        report.grounding = {n.id: grounding_score(n.text, article.text) for n in pathway.nodes}
        report.article_coverage = article_coverage(pathway, article)
        if not errors:
            report.warnings = lint(
                pathway, article,
                grounding_threshold=grounding_threshold,
                coverage_threshold=coverage_threshold,
                conditional_markers=conditional_markers)
    return report
