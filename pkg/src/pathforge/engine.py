"""Interview engine: walk a validated pathway by answering yes/no.

Sessions are immutable values; answer/undo return new sessions. State is
event-sourced: only the answer history is authoritative, current position
and status are always derived by replay.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

from .errors import InvalidPathway, NothingToUndo, SessionConcluded, UnknownNode
from .model import Answer, NodeKind, Pathway
from .validation import validate_structure


class SessionStatus(str, Enum):
    IN_PROGRESS = "InProgress"
    CONCLUDED = "Concluded"


@dataclass(frozen=True)
class TraceRow:
    question_text: str
    answer: Answer
    next_text: str


@dataclass(frozen=True)
class InterviewSession:
    id: str
    pathway_id: str
    current: str
    history: tuple[tuple[str, Answer], ...]
    status: SessionStatus
    version: int = 0
    started_at: float = 0.0
    updated_at: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "pathway_id": self.pathway_id,
            "history": [{"node": n, "answer": a.value} for n, a in self.history],
            "version": self.version,
        }


def _replay(pathway: Pathway, history: tuple[tuple[str, Answer], ...]) -> str:
    current = pathway.root
    for node_id, ans in history:
        if node_id != current:
            raise UnknownNode(f"history step {node_id!r} does not match position {current!r}")
        successors = pathway.successors(current)
        if ans not in successors:
            raise UnknownNode(f"no {ans.value} branch at {current!r}")
        current = successors[ans]
    return current


def _status_at(pathway: Pathway, node_id: str) -> SessionStatus:
    kind = pathway.node(node_id).kind
    return SessionStatus.CONCLUDED if kind is NodeKind.CONCLUSION else SessionStatus.IN_PROGRESS


def start(
    pathway: Pathway,
    session_id: Optional[str] = None,
    clock: Callable[[], float] = time.time,
) -> InterviewSession:
    """Open a session at the pathway root. Rejects invalid pathways."""
    violations = validate_structure(pathway.nodes, pathway.edges, pathway.root)
    if violations:
        raise InvalidPathway("pathway is structurally invalid", violations=violations)
    now = clock()
    return InterviewSession(
        id=session_id or uuid.uuid4().hex,
        pathway_id=pathway.id,
        current=pathway.root,
        history=(),
        status=SessionStatus.IN_PROGRESS,
        version=0,
        started_at=now,
        updated_at=now,
    )


def answer(pathway: Pathway, session: InterviewSession, ans: Answer,
           clock: Callable[[], float] = time.time) -> InterviewSession:
    """Advance along the Yes/No branch of the current question."""
    if session.status is SessionStatus.CONCLUDED:
        raise SessionConcluded(f"session {session.id} already reached a conclusion")
    nxt = pathway.successors(session.current)[ans]
    return replace(
        session,
        current=nxt,
        history=session.history + ((session.current, ans),),
        status=_status_at(pathway, nxt),
        version=session.version + 1,
        updated_at=clock(),
    )


def undo(pathway: Pathway, session: InterviewSession,
         clock: Callable[[], float] = time.time) -> InterviewSession:
    """Remove the last answer and move back to the question it answered."""
    if not session.history:
        raise NothingToUndo(f"session {session.id} has no answers to undo")
    node_id, _ = session.history[-1]
    return replace(
        session,
        current=node_id,
        history=session.history[:-1],
        status=SessionStatus.IN_PROGRESS,
        version=session.version + 1,
        updated_at=clock(),
    )


def trace(pathway: Pathway, session: InterviewSession) -> list[TraceRow]:
    """Human-readable replay of how the current node was reached."""
    rows: list[TraceRow] = []
    for node_id, ans in session.history:
        successors = pathway.successors(node_id)
        rows.append(TraceRow(
            question_text=pathway.node(node_id).text,
            answer=ans,
            next_text=pathway.node(successors[ans]).text,
        ))
    return rows


def load_session(pathway: Pathway, data: dict,
                 clock: Callable[[], float] = time.time) -> InterviewSession:
    """Rebuild a session from its serialized {id, pathway_id, history, version}
    form by replaying the history against the pathway."""
    history = tuple((row["node"], Answer(row["answer"])) for row in data["history"])
    current = _replay(pathway, history)
    now = clock()
    return InterviewSession(
        id=data["id"],
        pathway_id=data["pathway_id"],
        current=current,
        history=history,
        status=_status_at(pathway, current),
        version=int(data.get("version", len(history))),
        started_at=now,
        updated_at=now,
    )
