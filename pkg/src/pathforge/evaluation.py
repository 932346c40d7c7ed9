"""Evaluation harness: pathway matching, corpus statistics, manual-rating
summaries, and the blinded A/B comparison protocol.

structural_match decides labeled-DAG isomorphism by exhaustive search over
kind-respecting bijections (pathways are desk-scale, <= 12 nodes), pairing
nodes by token-overlap similarity. The blind protocol assigns A/B labels
with a deterministic seeded coin, renders both pathways with all origin
metadata stripped, and re-attributes preferences only after an
irreversible unblinding step.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import permutations
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ProtocolError, TooLarge, TrialIncomplete, UnknownArticle
from .model import Article, Difficulty, NodeKind, Origin, Pathway, topological_order
from .validation import content_tokens

MATCH_NODE_LIMIT = 12
DEFAULT_TEXT_SIMILARITY_THRESHOLD = 0.5


def dice_similarity(left: set[str], right: set[str]) -> float:
    if not left and not right:
        return 1.0
    return 2 * len(left & right) / (len(left) + len(right))


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    witness: Optional[dict[str, str]] = None  # node id in a -> node id in b

    def __bool__(self) -> bool:
        return self.matched


def structural_match(
    a: Pathway,
    b: Pathway,
    text_similarity_threshold: float = DEFAULT_TEXT_SIMILARITY_THRESHOLD,
) -> MatchResult:
    """True iff some kind-respecting bijection maps a onto b, preserving
    every edge with its answer label, root to root, with paired node texts
    at least `text_similarity_threshold` Dice-similar. Returns the witness
    bijection when matched."""
    if len(a.nodes) > MATCH_NODE_LIMIT or len(b.nodes) > MATCH_NODE_LIMIT:
        raise TooLarge(
            f"structural_match is exhaustive and capped at {MATCH_NODE_LIMIT} nodes")

    a_questions = sorted(n.id for n in a.nodes if n.kind is NodeKind.QUESTION)
    b_questions = sorted(n.id for n in b.nodes if n.kind is NodeKind.QUESTION)
    a_conclusions = sorted(n.id for n in a.nodes if n.kind is NodeKind.CONCLUSION)
    b_conclusions = sorted(n.id for n in b.nodes if n.kind is NodeKind.CONCLUSION)
    if (len(a_questions) != len(b_questions)
            or len(a_conclusions) != len(b_conclusions)
            or len(a.edges) != len(b.edges)):
        return MatchResult(False)

    tokens_a = {n.id: content_tokens(n.text) for n in a.nodes}
    tokens_b = {n.id: content_tokens(n.text) for n in b.nodes}

    def similar(na: str, nb: str) -> bool:
        return dice_similarity(tokens_a[na], tokens_b[nb]) >= text_similarity_threshold

    # Root must map to root (both are questions in a valid pathway).
    if not similar(a.root, b.root):
        return MatchResult(False)
    a_other_q = [q for q in a_questions if q != a.root]
    b_other_q = [q for q in b_questions if q != b.root]

    b_edge_set = {(e.from_id, e.answer, e.to_id) for e in b.edges}

    for q_perm in permutations(b_other_q):
        mapping = {a.root: b.root}
        mapping.update(zip(a_other_q, q_perm))
        if not all(similar(na, nb) for na, nb in zip(a_other_q, q_perm)):
            continue
        for c_perm in permutations(b_conclusions):
            if not all(similar(na, nb) for na, nb in zip(a_conclusions, c_perm)):
                continue
            full = dict(mapping)
            full.update(zip(a_conclusions, c_perm))
            if all((full[e.from_id], e.answer, full[e.to_id]) in b_edge_set for e in a.edges):
                return MatchResult(True, witness=full)
    return MatchResult(False)


def _mean(values: Sequence[float]) -> Optional[float]:
    values = [v for v in values if v is not None]
    if not values:
        return None
    return sum(values) / len(values)


def _fmt2(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def _pct(count: int, total: int) -> str:
    return f"{(100.0 * count / total if total else 0.0):.1f}"


@dataclass(frozen=True)
class StatsRow:
    difficulty: Difficulty
    n: int
    mean_chars: Optional[float]
    mean_manual_minutes: Optional[float]
    mean_auto_seconds: Optional[float]
    mean_manual_nodes: Optional[float]
    mean_auto_nodes: Optional[float]

    def cells(self) -> list[str]:
        return [
            self.difficulty.value,
            str(self.n),
            _fmt2(self.mean_chars),
            _fmt2(self.mean_manual_minutes),
            _fmt2(self.mean_auto_seconds),
            _fmt2(self.mean_manual_nodes),
            _fmt2(self.mean_auto_nodes),
        ]


STATS_HEADERS = ["Difficulty", "N", "Chars", "Manual min", "Auto sec", "Manual nodes", "Auto nodes"]
_STATS_WIDTHS = [10, 4, 8, 10, 8, 12, 10]


def _stats_line(cells: Sequence[str]) -> str:
    parts = [f"{cells[0]:<{_STATS_WIDTHS[0]}}"]
    parts += [f"{c:>{w}}" for c, w in zip(cells[1:], _STATS_WIDTHS[1:])]
    return "  ".join(parts).rstrip()


@dataclass
class ArticleStats:
    rows: list[StatsRow]

    def render(self) -> str:
        lines = [_stats_line(STATS_HEADERS)]
        lines += [_stats_line(row.cells()) for row in self.rows]
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = [",".join(STATS_HEADERS)]
        lines += [",".join(row.cells()) for row in self.rows]
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "rows": [
                {
                    "difficulty": r.difficulty.value,
                    "n": r.n,
                    "mean_chars": r.mean_chars,
                    "mean_manual_minutes": r.mean_manual_minutes,
                    "mean_auto_seconds": r.mean_auto_seconds,
                    "mean_manual_nodes": r.mean_manual_nodes,
                    "mean_auto_nodes": r.mean_auto_nodes,
                }
                for r in self.rows
            ]
        }


def aggregate_article_stats(articles: Sequence[Article],
                            pathways: Sequence[Pathway]) -> ArticleStats:
    """Difficulty-grouped means over the corpus and its pathways.

    Easy/Normal/Hard rows always render (N=0 with blank means when empty);
    an Unrated row appears only when unrated articles exist.
    """
    by_id = {a.id: a for a in articles}
    for p in pathways:
        if p.article_id not in by_id:
            raise UnknownArticle(f"pathway {p.id!r} references unknown article {p.article_id!r}")

    rows: list[StatsRow] = []
    difficulties = [Difficulty.EASY, Difficulty.NORMAL, Difficulty.HARD]
    if any(a.difficulty is Difficulty.UNRATED for a in articles):
        difficulties.append(Difficulty.UNRATED)
    for difficulty in difficulties:
        group = [a for a in articles if a.difficulty is difficulty]
        ids = {a.id for a in group}
        manual = [p for p in pathways if p.article_id in ids and p.origin is Origin.MANUAL]
        automatic = [p for p in pathways if p.article_id in ids and p.origin is Origin.AUTOMATIC]
        rows.append(StatsRow(
            difficulty=difficulty,
            n=len(group),
            mean_chars=_mean([a.char_count for a in group]),
            mean_manual_minutes=_mean([a.authoring_minutes for a in group]),
            mean_auto_seconds=_mean([p.generation_seconds for p in automatic]),
            mean_manual_nodes=_mean([len(p.nodes) for p in manual]),
            mean_auto_nodes=_mean([len(p.nodes) for p in automatic]),
        ))
    return ArticleStats(rows=rows)


class OverallRating(str, Enum):
    CORRECT = "Correct"
    SLIGHT_ADJUSTMENT = "SlightAdjustment"
    STARTING_POINT = "StartingPoint"
    USELESS = "Useless"


OVERALL_LABELS = {
    OverallRating.CORRECT: "Correct",
    OverallRating.SLIGHT_ADJUSTMENT: "Slight Adjustment Necessary",
    OverallRating.STARTING_POINT: "Starting Point",
    OverallRating.USELESS: "Useless",
}


@dataclass(frozen=True)
class ManualRating:
    pathway_id: str
    rater_id: str
    textual_accuracy: bool
    completeness: bool
    no_hallucination: bool
    matching: bool
    overall: OverallRating
    comments: str = ""

    def to_json_dict(self) -> dict:
        return {
            "pathway_id": self.pathway_id,
            "rater_id": self.rater_id,
            "textual_accuracy": self.textual_accuracy,
            "completeness": self.completeness,
            "no_hallucination": self.no_hallucination,
            "matching": self.matching,
            "overall": self.overall.value,
            "comments": self.comments,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ManualRating":
        return cls(
            pathway_id=obj["pathway_id"],
            rater_id=obj["rater_id"],
            textual_accuracy=bool(obj["textual_accuracy"]),
            completeness=bool(obj["completeness"]),
            no_hallucination=bool(obj["no_hallucination"]),
            matching=bool(obj["matching"]),
            overall=OverallRating(obj["overall"]),
            comments=obj.get("comments", ""),
        )


RATING_CRITERIA = [
    ("textual_accuracy", "Textual Accuracy"),
    ("completeness", "Completeness"),
    ("no_hallucination", "No Hallucination"),
    ("matching", "Matching"),
]


@dataclass
class RatingsSummary:
    total: int
    criteria: dict[str, tuple[int, int]]  # label -> (yes, no)
    overall: dict[OverallRating, int]

    def criterion_cell(self, label: str) -> str:
        yes, no = self.criteria[label]
        return f"Yes {yes} ({_pct(yes, self.total)}%) / No {no} ({_pct(no, self.total)}%)"

    def overall_cell(self) -> str:
        parts = []
        for rating in OverallRating:
            count = self.overall.get(rating, 0)
            parts.append(f"{OVERALL_LABELS[rating]} {count} ({_pct(count, self.total)}%)")
        return " / ".join(parts)

    def render(self) -> str:
        lines = [f"Ratings: {self.total}"]
        for _, label in RATING_CRITERIA:
            lines.append(f"{label:<18} {self.criterion_cell(label)}")
        lines.append(f"{'Overall Rating':<18} {self.overall_cell()}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "criteria": {
                label: {"yes": yes, "no": no}
                for label, (yes, no) in self.criteria.items()
            },
            "overall": {r.value: self.overall.get(r, 0) for r in OverallRating},
        }


def summarize_ratings(ratings: Sequence[ManualRating]) -> RatingsSummary:
    total = len(ratings)
    criteria: dict[str, tuple[int, int]] = {}
    for attr, label in RATING_CRITERIA:
        yes = sum(1 for r in ratings if getattr(r, attr))
        criteria[label] = (yes, total - yes)
    overall = {rating: sum(1 for r in ratings if r.overall is rating) for rating in OverallRating}
    return RatingsSummary(total=total, criteria=criteria, overall=overall)


def check_rating_unique(existing: Iterable[ManualRating], new: ManualRating) -> None:
    for r in existing:
        if r.pathway_id == new.pathway_id and r.rater_id == new.rater_id:
            raise ProtocolError(
                f"rater {new.rater_id!r} already rated pathway {new.pathway_id!r}")


@dataclass(frozen=True)
class ComparisonRecord:
    """An automatic pathway paired with its manual counterpart, with the
    automated proxy metrics attached. Ratings accumulate separately."""

    article_id: str
    automatic: str  # pathway id
    manual: str
    grounding_mean: float
    article_coverage: float
    node_count: int
    generation_seconds: Optional[float]
    structural_match: bool
    ratings: tuple[ManualRating, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "automatic": self.automatic,
            "manual": self.manual,
            "auto_metrics": {
                "grounding_mean": self.grounding_mean,
                "article_coverage": self.article_coverage,
                "node_count": self.node_count,
                "generation_seconds": self.generation_seconds,
            },
            "structural_match": self.structural_match,
            "ratings": [r.to_json_dict() for r in self.ratings],
        }


def compare_pathways(
    automatic: Pathway,
    manual: Pathway,
    article: Article,
    text_similarity_threshold: float = DEFAULT_TEXT_SIMILARITY_THRESHOLD,
    ratings: Sequence[ManualRating] = (),
) -> ComparisonRecord:
    """Build the automatic-vs-manual record for one article."""
    if automatic.origin is not Origin.AUTOMATIC:
        raise ValueError(f"pathway {automatic.id!r} is not of automatic origin")
    if manual.origin is not Origin.MANUAL:
        raise ValueError(f"pathway {manual.id!r} is not of manual origin")
    for pathway in (automatic, manual):
        if pathway.article_id != article.id:
            raise UnknownArticle(
                f"pathway {pathway.id!r} does not reference article {article.id!r}")
    from .validation import article_coverage as coverage_of
    from .validation import grounding_score
    scores = [grounding_score(n.text, article.text) for n in automatic.nodes]
    return ComparisonRecord(
        article_id=article.id,
        automatic=automatic.id,
        manual=manual.id,
        grounding_mean=sum(scores) / len(scores),
        article_coverage=coverage_of(automatic, article),
        node_count=len(automatic.nodes),
        generation_seconds=automatic.generation_seconds,
        structural_match=structural_match(
            automatic, manual, text_similarity_threshold=text_similarity_threshold).matched,
        ratings=tuple(ratings),
    )


BLIND_QUESTIONS = (
    "Which Pathway is better overall?",
    "Which Pathway Better Reflects the Content of the Law?",
    "Which Pathway Better Reflects the Logical Structure of the Law?",
)
OVERALL_QUESTION = BLIND_QUESTIONS[0]


class BlindChoice(str, Enum):
    A = "A"
    B = "B"
    EQUIVALENT = "Equivalent"


class Preference(str, Enum):
    AUTOMATIC = "Automatic"
    EQUIVALENT = "Equivalent"
    MANUAL = "Manual"


def automatic_gets_label_a(seed: int, trial_id: str) -> bool:
    """Deterministic fair coin for the A/B assignment."""
    digest = hashlib.sha256(f"{seed}:{trial_id}".encode("utf-8")).digest()
    return digest[0] % 2 == 0


@dataclass(frozen=True)
class BlindTrial:
    trial_id: str
    article_id: str
    automatic_pathway_id: str
    manual_pathway_id: str
    assignment_seed: int
    label_a: str  # pathway id shown as "A"
    label_b: str
    responses: tuple[tuple[str, BlindChoice], ...] = ()
    unblinded: bool = False
    unblinded_at: Optional[str] = None

    def response_for(self, question: str) -> Optional[BlindChoice]:
        for q, choice in self.responses:
            if q == question:
                return choice
        return None

    def is_complete(self) -> bool:
        return all(self.response_for(q) is not None for q in BLIND_QUESTIONS)

    def to_json_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "article_id": self.article_id,
            "automatic_pathway_id": self.automatic_pathway_id,
            "manual_pathway_id": self.manual_pathway_id,
            "assignment_seed": self.assignment_seed,
            "label_a": self.label_a,
            "label_b": self.label_b,
            "responses": [{"question": q, "choice": c.value} for q, c in self.responses],
            "unblinded": self.unblinded,
            "unblinded_at": self.unblinded_at,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BlindTrial":
        return cls(
            trial_id=obj["trial_id"],
            article_id=obj["article_id"],
            automatic_pathway_id=obj["automatic_pathway_id"],
            manual_pathway_id=obj["manual_pathway_id"],
            assignment_seed=int(obj["assignment_seed"]),
            label_a=obj["label_a"],
            label_b=obj["label_b"],
            responses=tuple(
                (row["question"], BlindChoice(row["choice"])) for row in obj.get("responses", [])),
            unblinded=bool(obj.get("unblinded", False)),
            unblinded_at=obj.get("unblinded_at"),
        )


def blind_pair(article_id: str, automatic_id: str, manual_id: str, seed: int,
               trial_id: Optional[str] = None) -> BlindTrial:
    """Create a trial with a deterministic A/B assignment from (seed, trial_id)."""
    trial_id = trial_id or f"trial-{article_id}"
    auto_is_a = automatic_gets_label_a(seed, trial_id)
    return BlindTrial(
        trial_id=trial_id,
        article_id=article_id,
        automatic_pathway_id=automatic_id,
        manual_pathway_id=manual_id,
        assignment_seed=seed,
        label_a=automatic_id if auto_is_a else manual_id,
        label_b=manual_id if auto_is_a else automatic_id,
    )


def record_blind_response(trial: BlindTrial, question: str, choice: BlindChoice) -> BlindTrial:
    """Record (or revise) one answer; rejected once the trial is unblinded."""
    if trial.unblinded:
        raise ProtocolError(f"trial {trial.trial_id!r} is unblinded; responses are frozen")
    if question not in BLIND_QUESTIONS:
        raise ProtocolError(f"unknown blind-test question {question!r}")
    kept = tuple((q, c) for q, c in trial.responses if q != question)
    return replace(trial, responses=kept + ((question, choice),))


def unblind_trial(trial: BlindTrial, timestamp: Optional[str] = None) -> BlindTrial:
    """Irreversibly reveal the trial. Idempotent on already-unblinded trials."""
    if trial.unblinded:
        return trial
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    return replace(trial, unblinded=True, unblinded_at=stamp)


def render_anonymous_pathway(pathway: Pathway) -> dict:
    """Origin-free rendering for blind presentation.

    Node ids are renamed positionally (topological order) so id
    conventions cannot hint at how the pathway was produced; origin,
    pathway/article ids and generation timing are stripped.
    """
    order = topological_order(pathway)
    position = {node_id: i for i, node_id in enumerate(order)}
    rename = {node_id: f"b{i + 1}" for node_id, i in position.items()}
    nodes = [
        {
            "id": rename[n.id],
            "kind": n.kind.value,
            "text": n.text,
            "is_default": n.is_default,
        }
        for n in sorted(pathway.nodes, key=lambda n: position[n.id])
    ]
    edges = sorted(
        (
            {"from": rename[e.from_id], "answer": e.answer.value, "to": rename[e.to_id]}
            for e in pathway.edges
        ),
        key=lambda e: (e["from"], e["answer"], e["to"]),
    )
    return {"root": rename[pathway.root], "nodes": nodes, "edges": edges}


def render_blind_presentation(trial: BlindTrial, pathways: Mapping[str, Pathway],
                              article: Article) -> dict:
    """What a rater sees: article text plus pathways "A" and "B", redacted."""
    return {
        "trial_id": trial.trial_id,
        "article_text": article.text,
        "questions": list(BLIND_QUESTIONS),
        "pathways": {
            "A": render_anonymous_pathway(pathways[trial.label_a]),
            "B": render_anonymous_pathway(pathways[trial.label_b]),
        },
    }


def _attribute(trial: BlindTrial, choice: BlindChoice) -> Preference:
    if choice is BlindChoice.EQUIVALENT:
        return Preference.EQUIVALENT
    chosen = trial.label_a if choice is BlindChoice.A else trial.label_b
    return Preference.AUTOMATIC if chosen == trial.automatic_pathway_id else Preference.MANUAL


@dataclass(frozen=True)
class BlindReportRow:
    question: str
    automatic: int
    equivalent: int
    manual: int

    @property
    def total(self) -> int:
        return self.automatic + self.equivalent + self.manual

    def cell(self) -> str:
        t = self.total
        return (f"{self.automatic} ({_pct(self.automatic, t)}%) / "
                f"{self.equivalent} ({_pct(self.equivalent, t)}%) / "
                f"{self.manual} ({_pct(self.manual, t)}%)")


@dataclass(frozen=True)
class DifficultyPreferenceRow:
    difficulty: Difficulty
    automatic: int
    equivalent: int
    manual: int

    @property
    def total(self) -> int:
        return self.automatic + self.equivalent + self.manual

    def cell(self) -> str:
        t = self.total
        return f"{_pct(self.automatic, t)}/{_pct(self.equivalent, t)}/{_pct(self.manual, t)}"


@dataclass
class BlindReport:
    rows: list[BlindReportRow]
    by_difficulty: list[DifficultyPreferenceRow]

    def render(self) -> str:
        width = max(len(r.question) for r in self.rows) + 2
        lines = ["Blind test (automatic / equivalent / manual)"]
        lines += [f"{r.question:<{width}}{r.cell()}" for r in self.rows]
        if self.by_difficulty:
            lines.append("Overall preference by difficulty (% automatic/equivalent/manual)")
            lines += [
                f"{r.difficulty.value:<10}{r.cell()}  (N={r.total})"
                for r in self.by_difficulty
            ]
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "questions": [
                {
                    "question": r.question,
                    "automatic": r.automatic,
                    "equivalent": r.equivalent,
                    "manual": r.manual,
                }
                for r in self.rows
            ],
            "by_difficulty": [
                {
                    "difficulty": r.difficulty.value,
                    "automatic": r.automatic,
                    "equivalent": r.equivalent,
                    "manual": r.manual,
                }
                for r in self.by_difficulty
            ],
        }


def blind_report(trials: Sequence[BlindTrial],
                 difficulties: Optional[Mapping[str, Difficulty]] = None) -> BlindReport:
    """Tables for the blind test: per-question preference counts, plus the
    overall-question split by article difficulty when difficulties are given."""
    for trial in trials:
        if not trial.unblinded:
            raise TrialIncomplete(f"trial {trial.trial_id!r} is not unblinded")
        if not trial.is_complete():
            raise TrialIncomplete(f"trial {trial.trial_id!r} is missing responses")

    rows = []
    for question in BLIND_QUESTIONS:
        counts = {p: 0 for p in Preference}
        for trial in trials:
            counts[_attribute(trial, trial.response_for(question))] += 1
        rows.append(BlindReportRow(
            question=question,
            automatic=counts[Preference.AUTOMATIC],
            equivalent=counts[Preference.EQUIVALENT],
            manual=counts[Preference.MANUAL],
        ))

    by_difficulty: list[DifficultyPreferenceRow] = []
    if difficulties is not None:
        for trial in trials:
            if trial.article_id not in difficulties:
                raise UnknownArticle(
                    f"trial {trial.trial_id!r} references unknown article {trial.article_id!r}")
        present = [Difficulty.EASY, Difficulty.NORMAL, Difficulty.HARD]
        if any(difficulties[t.article_id] is Difficulty.UNRATED for t in trials):
            present.append(Difficulty.UNRATED)
        for difficulty in present:
            counts = {p: 0 for p in Preference}
            for trial in trials:
                if difficulties[trial.article_id] is difficulty:
                    counts[_attribute(trial, trial.response_for(OVERALL_QUESTION))] += 1
            by_difficulty.append(DifficultyPreferenceRow(
                difficulty=difficulty,
                automatic=counts[Preference.AUTOMATIC],
                equivalent=counts[Preference.EQUIVALENT],
                manual=counts[Preference.MANUAL],
            ))
    return BlindReport(rows=rows, by_difficulty=by_difficulty)
