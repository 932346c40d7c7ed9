"""Filesystem persistence for the service: documents plus jsonl record logs.

Layout under data_dir:
    articles/           corpus (one JSON object per article)
    pathways/<id>.json  canonical PathwayDocument bytes
    pathways/<id>.version  optimistic-concurrency counter
    sessions/<id>.json  serialized interview sessions
    ratings.jsonl       manual ratings, append-only
    trials.jsonl        blind trials, rewritten atomically on update

Writes go through a process-wide lock plus temp-file/rename, so concurrent
readers always see complete documents and failed saves change nothing.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional
from urllib.parse import quote, unquote

from .config import ToolConfig
from .engine import InterviewSession, load_session
from .errors import Conflict, MissingPathway, UnknownArticle, UnknownSession, UnknownTrial
from .evaluation import BlindTrial, ManualRating, check_rating_unique
from .io_formats import export_pathway, import_pathway, load_corpus, write_atomic
from .model import Article, Pathway


def _safe_name(identifier: str) -> str:
    return quote(identifier, safe="")


class FileStore:
    def __init__(self, config: ToolConfig):
        self.config = config
        self.root = Path(config.data_dir)
        self._lock = threading.RLock()
        for sub in ("articles", "pathways", "sessions"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- articles ----------------------------------------------------------

    def list_articles(self) -> list[Article]:
        return load_corpus(self.root / "articles")

    def get_article(self, article_id: str) -> Article:
        for article in self.list_articles():
            if article.id == article_id:
                return article
        raise UnknownArticle(f"unknown article {article_id!r}")

    def add_article(self, article: Article) -> None:
        payload = {
            "id": article.id,
            "source": article.source,
            "text": article.text,
            "difficulty": article.difficulty.value,
        }
        if article.authoring_minutes is not None:
            payload["authoring_minutes"] = article.authoring_minutes
        path = self.root / "articles" / f"{_safe_name(article.id)}.json"
        with self._lock:
            write_atomic(path, (json.dumps(payload, ensure_ascii=False, sort_keys=True,
                                           indent=2) + "\n").encode("utf-8"))

    # -- pathways ----------------------------------------------------------

    def _pathway_path(self, pathway_id: str) -> Path:
        return self.root / "pathways" / f"{_safe_name(pathway_id)}.json"

    def _version_path(self, pathway_id: str) -> Path:
        return self.root / "pathways" / f"{_safe_name(pathway_id)}.version"

    def pathway_ids(self) -> list[str]:
        ids = [
            unquote(p.name[:-len(".json")])
            for p in (self.root / "pathways").glob("*.json")
        ]
        return sorted(ids)

    def pathway_version(self, pathway_id: str) -> int:
        path = self._version_path(pathway_id)
        if not path.is_file():
            return 0
        return int(path.read_text(encoding="utf-8").strip() or 0)

    def get_pathway(self, pathway_id: str) -> tuple[Pathway, Article, int]:
        path = self._pathway_path(pathway_id)
        if not path.is_file():
            raise MissingPathway(f"unknown pathway {pathway_id!r}")
        pathway, article = import_pathway(path.read_bytes())
        return pathway, article, self.pathway_version(pathway_id)

    def get_pathway_document(self, pathway_id: str) -> tuple[dict, int]:
        path = self._pathway_path(pathway_id)
        if not path.is_file():
            raise MissingPathway(f"unknown pathway {pathway_id!r}")
        return json.loads(path.read_text(encoding="utf-8")), self.pathway_version(pathway_id)

    def save_pathway(self, pathway: Pathway, article: Article,
                     expected_version: Optional[int] = None) -> int:
        """Store canonical bytes; bump version. A failed save (validation or
        stale version) leaves the stored document untouched."""
        data = export_pathway(pathway, article)  # validates before any write
        with self._lock:
            current = self.pathway_version(pathway.id)
            if expected_version is not None and expected_version != current:
                raise Conflict(
                    f"pathway {pathway.id!r} is at version {current}, not {expected_version}")
            write_atomic(self._pathway_path(pathway.id), data)
            write_atomic(self._version_path(pathway.id), str(current + 1).encode("utf-8"))
            return current + 1

    # -- sessions ----------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{_safe_name(session_id)}.json"

    def save_session(self, session: InterviewSession) -> None:
        with self._lock:
            write_atomic(
                self._session_path(session.id),
                (json.dumps(session.to_json_dict(), ensure_ascii=False, sort_keys=True,
                            indent=2) + "\n").encode("utf-8"))

    def get_session(self, session_id: str) -> InterviewSession:
        path = self._session_path(session_id)
        if not path.is_file():
            raise UnknownSession(f"unknown session {session_id!r}")
        data = json.loads(path.read_text(encoding="utf-8"))
        pathway, _, _ = self.get_pathway(data["pathway_id"])
        return load_session(pathway, data)

    def update_session(self, session: InterviewSession, expected_version: int) -> None:
        """Serialize concurrent writers: stale expected versions are rejected."""
        with self._lock:
            current = self.get_session(session.id)
            if current.version != expected_version:
                raise Conflict(
                    f"session {session.id!r} is at version {current.version}, "
                    f"not {expected_version}")
            self.save_session(session)

    # -- ratings -----------------------------------------------------------

    @property
    def ratings_path(self) -> Path:
        return self.root / "ratings.jsonl"

    def list_ratings(self) -> list[ManualRating]:
        if not self.ratings_path.is_file():
            return []
        lines = self.ratings_path.read_text(encoding="utf-8").splitlines()
        return [ManualRating.from_json_dict(json.loads(line)) for line in lines if line.strip()]

    def append_rating(self, rating: ManualRating) -> None:
        with self._lock:
            check_rating_unique(self.list_ratings(), rating)
            with self.ratings_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rating.to_json_dict(), ensure_ascii=False,
                                    sort_keys=True) + "\n")

    # -- blind trials ------------------------------------------------------

    @property
    def trials_path(self) -> Path:
        return self.root / "trials.jsonl"

    def list_trials(self) -> list[BlindTrial]:
        return read_trials(self.trials_path)

    def get_trial(self, trial_id: str) -> BlindTrial:
        for trial in self.list_trials():
            if trial.trial_id == trial_id:
                return trial
        raise UnknownTrial(f"unknown trial {trial_id!r}")

    def upsert_trial(self, trial: BlindTrial) -> None:
        """Replace (or append) one trial; unblinded trials never re-blind."""
        with self._lock:
            trials = self.list_trials()
            for existing in trials:
                if existing.trial_id == trial.trial_id and existing.unblinded and not trial.unblinded:
                    raise Conflict(f"trial {trial.trial_id!r} is unblinded; cannot re-blind")
            kept = [t for t in trials if t.trial_id != trial.trial_id]
            write_trials(self.trials_path, kept + [trial])


def read_trials(path: Path) -> list[BlindTrial]:
    if not Path(path).is_file():
        return []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [BlindTrial.from_json_dict(json.loads(line)) for line in lines if line.strip()]


def write_trials(path: Path, trials: list[BlindTrial]) -> None:
    payload = "".join(
        json.dumps(t.to_json_dict(), ensure_ascii=False, sort_keys=True) + "\n"
        for t in sorted(trials, key=lambda t: t.trial_id))
    write_atomic(Path(path), payload.encode("utf-8"))
