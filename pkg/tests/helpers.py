"""Shared test utilities: deterministic pathway generators and corruptors.

corrupt_graph injects exactly one kind of structural defect into a valid
pathway; codes marked "exact" below produce that violation and nothing
else, the rest may orphan other nodes as a side effect (the assertion is
containment there).
"""

from __future__ import annotations

import random
from typing import Optional

from pathforge.model import Answer, Article, Edge, Node, NodeKind, Origin, Pathway, build_pathway
from pathforge.validation import ErrorCode


def make_minimal_pathway(pathway_id: str = "p-min", article_id: str = "a-min") -> Pathway:
    """One question, Yes to a substantive conclusion, No to the default."""
    nodes = [
        Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
        Node("c1", NodeKind.CONCLUSION, "The lessee may obtain the resiliation of the lease."),
        Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
    ]
    edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
    pathway = build_pathway(pathway_id, article_id, Origin.MANUAL, "q1", nodes, edges)
    assert isinstance(pathway, Pathway)
    return pathway


def make_minimal_article(article_id: str = "a-min") -> Article:
    return Article(
        id=article_id,
        source="Fixture act, s. 1",
        text=("The lessee may obtain the resiliation of the lease if the rent "
              "payment is more than three weeks late."),
    )


def make_chain_pathway(question_count: int, pathway_id: str = "p-chain",
                       article_id: str = "a-chain") -> Pathway:
    """Yes-chain of questions; every No goes to the default conclusion."""
    nodes = []
    edges = []
    for i in range(question_count):
        qid = f"q{i + 1:02d}"
        nodes.append(Node(qid, NodeKind.QUESTION, f"Does condition {i + 1} hold?"))
        if i + 1 < question_count:
            edges.append(Edge(qid, Answer.YES, f"q{i + 2:02d}"))
        else:
            edges.append(Edge(qid, Answer.YES, "c-yes"))
        edges.append(Edge(qid, Answer.NO, "c-def"))
    nodes.append(Node("c-yes", NodeKind.CONCLUSION, "All conditions hold."))
    nodes.append(Node("c-def", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True))
    pathway = build_pathway(pathway_id, article_id, Origin.MANUAL, "q01", nodes, edges)
    assert isinstance(pathway, Pathway)
    return pathway


def random_valid_pathway(
    rng: random.Random,
    question_count: Optional[int] = None,
    conclusion_count: Optional[int] = None,
    pathway_id: str = "p-rand",
    article_id: str = "a-rand",
    origin: Origin = Origin.MANUAL,
    node_count: Optional[int] = None,
) -> Pathway:
    """Valid pathway with rng-driven branching.

    Questions after the first attach to a random dangling branch, so every
    shape from a chain to a near-complete tree can come out. Conclusions
    then absorb the remaining dangling branches, each used at least once.
    """
    if node_count is not None:
        assert node_count >= 2
        if node_count == 2:
            q, c = 1, 1
        else:
            q = rng.randint(max(1, (node_count - 1) // 2), node_count - 1)
            c = node_count - q
            while c > q + 1:  # conclusions cannot outnumber dangling branches
                q += 1
                c -= 1
    else:
        q = question_count if question_count is not None else rng.randint(1, 5)
        c = conclusion_count if conclusion_count is not None else rng.randint(1, q + 1)
    assert 1 <= c <= q + 1

    questions = [f"q{i + 1:02d}" for i in range(q)]
    conclusions = [f"c{i + 1:02d}" for i in range(c)]
    edges: list[Edge] = []
    pending: list[tuple[str, Answer]] = [(questions[0], Answer.YES), (questions[0], Answer.NO)]
    for qid in questions[1:]:
        frm, ans = pending.pop(rng.randrange(len(pending)))
        edges.append(Edge(frm, ans, qid))
        pending.append((qid, Answer.YES))
        pending.append((qid, Answer.NO))
    rng.shuffle(pending)
    for i, (frm, ans) in enumerate(pending):
        target = conclusions[i] if i < c else rng.choice(conclusions)
        edges.append(Edge(frm, ans, target))

    nodes = [Node(qid, NodeKind.QUESTION, f"Does criterion {qid} apply?") for qid in questions]
    nodes += [Node(cid, NodeKind.CONCLUSION, f"Outcome {cid} follows.") for cid in conclusions]
    pathway = build_pathway(pathway_id, article_id, origin, questions[0], nodes, edges)
    assert isinstance(pathway, Pathway), pathway
    return pathway


def corrupt_graph(pathway: Pathway, code: ErrorCode, rng: random.Random):
    """Inject one defect; returns (nodes, edges, root)."""
    nodes = list(pathway.nodes)
    edges = list(pathway.edges)
    root = pathway.root
    questions = [n.id for n in nodes if n.kind is NodeKind.QUESTION]
    conclusions = [n.id for n in nodes if n.kind is NodeKind.CONCLUSION]

    if code is ErrorCode.CYCLE:
        qid = rng.choice(questions)
        victim = rng.choice([e for e in edges if e.from_id == qid])
        edges.remove(victim)
        edges.append(Edge(victim.from_id, victim.answer, root))
    elif code is ErrorCode.MULTIPLE_ROOTS:  # exact
        targets = rng.sample([n.id for n in nodes], k=min(2, len(nodes)))
        nodes.append(Node("zq-extra", NodeKind.QUESTION, "Is there a second entry point?"))
        edges.append(Edge("zq-extra", Answer.YES, targets[0]))
        edges.append(Edge("zq-extra", Answer.NO, targets[-1]))
    elif code is ErrorCode.DISCONNECTED:  # exact
        nodes.append(Node("zc-island", NodeKind.CONCLUSION, "An unreachable outcome."))
    elif code is ErrorCode.MISSING_BRANCH:
        candidates = [e for e in edges if _indegree(edges, e.to_id) >= 2
                      and e.from_id in questions]
        victim = rng.choice(candidates) if candidates else rng.choice(
            [e for e in edges if e.from_id in questions])
        edges.remove(victim)
    elif code is ErrorCode.DUPLICATE_BRANCH:  # exact
        qid = rng.choice(questions)
        nodes.append(Node("zc-dup", NodeKind.CONCLUSION, "A duplicated branch outcome."))
        edges.append(Edge(qid, rng.choice([Answer.YES, Answer.NO]), "zc-dup"))
    elif code is ErrorCode.CONCLUSION_WITH_OUT_EDGES:  # exact
        cid = rng.choice(conclusions)
        nodes.append(Node("zc-next", NodeKind.CONCLUSION, "An outcome after an outcome."))
        edges.append(Edge(cid, Answer.YES, "zc-next"))
    elif code is ErrorCode.DANGLING_EDGE:
        candidates = [e for e in edges if _indegree(edges, e.to_id) >= 2]
        victim = rng.choice(candidates) if candidates else rng.choice(edges)
        edges.remove(victim)
        edges.append(Edge(victim.from_id, victim.answer, "zz-ghost"))
    elif code is ErrorCode.ROOT_IS_CONCLUSION:
        flipped = [
            Node(n.id, NodeKind.CONCLUSION, n.text) if n.id == root else n
            for n in nodes
        ]
        nodes = flipped
    elif code is ErrorCode.TOO_FEW_NODES:
        nodes = [Node("q-only", NodeKind.QUESTION, "Is this the only node?")]
        edges = []
        root = "q-only"
    else:
        raise AssertionError(f"no corruptor for {code}")
    return nodes, edges, root


def _indegree(edges: list[Edge], node_id: str) -> int:
    return sum(1 for e in edges if e.to_id == node_id)
