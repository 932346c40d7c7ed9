import random

import pytest

from pathforge.errors import EmptyText
from pathforge.model import Answer, Article, Edge, Node, NodeKind, Origin, Pathway, build_pathway
from pathforge.validation import (
    ErrorCode,
    WarningCode,
    article_coverage,
    build_report,
    content_tokens,
    grounding_score,
    lint,
    validate_structure,
)

from helpers import corrupt_graph, make_minimal_article, make_minimal_pathway, random_valid_pathway


def codes(errors):
    return {e.code for e in errors}


class TestValidateStructure:
    def test_valid_minimal_is_clean(self, minimal_pathway):
        assert validate_structure(minimal_pathway.nodes, minimal_pathway.edges, "q1") == []

    def test_two_cycle_located_at_back_edge(self):
        nodes = [
            Node("q1", NodeKind.QUESTION, "First?"),
            Node("q2", NodeKind.QUESTION, "Second?"),
            Node("c1", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [
            Edge("q1", Answer.YES, "q2"),
            Edge("q1", Answer.NO, "c1"),
            Edge("q2", Answer.YES, "q1"),
            Edge("q2", Answer.NO, "c2"),
        ]
        errors = validate_structure(nodes, edges, "q1")
        assert [e.code for e in errors] == [ErrorCode.CYCLE]
        assert errors[0].location == Edge("q2", Answer.YES, "q1")

    def test_question_with_only_yes_edge(self):
        nodes = [
            Node("q1", NodeKind.QUESTION, "First?"),
            Node("c1", NodeKind.CONCLUSION, "Done."),
        ]
        errors = validate_structure(nodes, [Edge("q1", Answer.YES, "c1")], "q1")
        assert [e.code for e in errors] == [ErrorCode.MISSING_BRANCH]
        assert errors[0].location == "q1"

    def test_isolated_conclusion_is_disconnected_only(self, minimal_pathway):
        nodes = list(minimal_pathway.nodes) + [Node("c9", NodeKind.CONCLUSION, "Marooned.")]
        errors = validate_structure(nodes, minimal_pathway.edges, "q1")
        assert [(e.code, e.location) for e in errors] == [(ErrorCode.DISCONNECTED, "c9")]

    def test_extra_root_question_is_multiple_roots_only(self, minimal_pathway):
        nodes = list(minimal_pathway.nodes) + [Node("q9", NodeKind.QUESTION, "Another start?")]
        edges = list(minimal_pathway.edges) + [
            Edge("q9", Answer.YES, "c1"),
            Edge("q9", Answer.NO, "c2"),
        ]
        errors = validate_structure(nodes, edges, "q1")
        assert [(e.code, e.location) for e in errors] == [(ErrorCode.MULTIPLE_ROOTS, "q9")]

    def test_root_is_conclusion(self):
        nodes = [
            Node("c0", NodeKind.CONCLUSION, "Nothing to ask."),
            Node("c1", NodeKind.CONCLUSION, "Unreached."),
        ]
        errors = validate_structure(nodes, [], "c0")
        got = codes(errors)
        assert ErrorCode.ROOT_IS_CONCLUSION in got

    def test_unknown_root_reported_as_dangling(self, minimal_pathway):
        errors = validate_structure(minimal_pathway.nodes, minimal_pathway.edges, "missing")
        assert ErrorCode.DANGLING_EDGE in codes(errors)

    def test_too_few_nodes(self):
        errors = validate_structure([Node("q1", NodeKind.QUESTION, "Only?")], [], "q1")
        assert ErrorCode.TOO_FEW_NODES in codes(errors)

    def test_conclusion_with_out_edges(self, minimal_pathway):
        edges = list(minimal_pathway.edges) + [Edge("c1", Answer.YES, "c2")]
        errors = validate_structure(minimal_pathway.nodes, edges, "q1")
        assert codes(errors) == {ErrorCode.CONCLUSION_WITH_OUT_EDGES}

    def test_duplicate_branch(self, minimal_pathway):
        nodes = list(minimal_pathway.nodes) + [Node("c3", NodeKind.CONCLUSION, "Extra.")]
        edges = list(minimal_pathway.edges) + [Edge("q1", Answer.YES, "c3")]
        errors = validate_structure(nodes, edges, "q1")
        assert codes(errors) == {ErrorCode.DUPLICATE_BRANCH}


class TestSeededDefects:
    @pytest.mark.parametrize("code", list(ErrorCode))
    def test_each_code_detected_in_corrupted_pathways(self, code):
        rng = random.Random(hash(code.value) % (2**32))
        for _ in range(20):
            q = rng.randint(2, 5)
            pathway = random_valid_pathway(rng, question_count=q,
                                           conclusion_count=rng.randint(2, min(4, q + 1)))
            nodes, edges, root = corrupt_graph(pathway, code, rng)
            errors = validate_structure(nodes, edges, root)
            assert code in codes(errors), (code, nodes, edges, root)

    @pytest.mark.parametrize("code", [
        ErrorCode.MULTIPLE_ROOTS,
        ErrorCode.DISCONNECTED,
        ErrorCode.DUPLICATE_BRANCH,
        ErrorCode.CONCLUSION_WITH_OUT_EDGES,
    ])
    def test_exact_codes_produce_only_the_seeded_defect(self, code):
        rng = random.Random(99)
        for _ in range(20):
            pathway = random_valid_pathway(rng, question_count=3, conclusion_count=2)
            nodes, edges, root = corrupt_graph(pathway, code, rng)
            errors = validate_structure(nodes, edges, root)
            assert codes(errors) == {code}

    def test_validator_agrees_with_build_pathway(self):
        rng = random.Random(4242)
        for i in range(100):
            pathway = random_valid_pathway(rng)
            if i % 2:
                code = rng.choice(list(ErrorCode))
                nodes, edges, root = corrupt_graph(pathway, code, rng)
            else:
                nodes, edges, root = list(pathway.nodes), list(pathway.edges), pathway.root
            errors = validate_structure(nodes, edges, root)
            built = build_pathway("p", "a", Origin.MANUAL, root, nodes, edges)
            assert (errors == []) == isinstance(built, Pathway)


class TestGroundingScore:
    def test_verbatim_substring_scores_one(self, minimal_article):
        assert grounding_score("the rent payment is more than three weeks late",
                               minimal_article.text) == 1.0

    def test_disjoint_vocabulary_scores_zero(self, minimal_article):
        assert grounding_score("porcupines navigate submarine corridors",
                               minimal_article.text) == 0.0

    def test_hand_counted_four_fifths(self):
        # node tokens {rent, payment, three, weeks, late}; article lacks "three"
        node_text = "rent payment three weeks late"
        article_text = "The rent payment was several weeks late."
        assert content_tokens(node_text) == {"rent", "payment", "three", "weeks", "late"}
        assert grounding_score(node_text, article_text) == pytest.approx(4 / 5)

    def test_zero_content_tokens_scores_one(self):
        assert grounding_score("is it so", "anything at all here") == 1.0

    def test_empty_text_rejected(self):
        with pytest.raises(EmptyText):
            grounding_score("", "article")
        with pytest.raises(EmptyText):
            grounding_score("node", "  ")

    def test_case_and_punctuation_invariance(self):
        base = grounding_score("rent payment late", "The rent, payment was LATE.")
        assert base == grounding_score("RENT payment LATE!", "the rent payment was late")
        assert base == 1.0

    def test_monotone_in_article_growth(self):
        rng = random.Random(11)
        words = ["rent", "payment", "weeks", "late", "lease", "notice", "tenant"]
        for _ in range(50):
            node_text = " ".join(rng.sample(words, 4))
            article = " ".join(rng.sample(words, 3))
            grown = article + " " + " ".join(rng.sample(words, 2))
            assert grounding_score(node_text, grown) >= grounding_score(node_text, article)


class TestArticleCoverage:
    def test_full_quote_covers_everything(self, minimal_pathway, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, minimal_article.text),
            Node("c1", NodeKind.CONCLUSION, "Done covering."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        pathway = build_pathway("p", "a", Origin.MANUAL, "q1",
                                nodes, minimal_pathway.edges)
        assert article_coverage(pathway, minimal_article) == 1.0

    def test_hand_counted_six_tenths(self):
        # 10 distinct content tokens; the pathway quotes exactly 6 of them.
        article = Article(
            id="a", source="s",
            text="alpha bravo charlie delta echo foxtrot golf hotel india juliett")
        assert len(content_tokens(article.text)) == 10
        nodes = [
            Node("q1", NodeKind.QUESTION, "alpha bravo charlie?"),
            Node("c1", NodeKind.CONCLUSION, "delta echo foxtrot."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a", Origin.MANUAL, "q1", nodes, edges)
        # default conclusion adds {the, rule, does, not, apply}: none in the article
        assert article_coverage(pathway, article) == pytest.approx(6 / 10)

    def test_disjoint_overlap_is_zero(self, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, "zulu yankee xray?"),
            Node("c1", NodeKind.CONCLUSION, "whiskey victor uniform."),
            Node("c2", NodeKind.CONCLUSION, "tango sierra.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a", Origin.MANUAL, "q1", nodes, edges)
        assert article_coverage(pathway, minimal_article) == 0.0


class TestLint:
    def test_clean_minimal_pathway_is_lint_silent(self, minimal_pathway, minimal_article):
        assert lint(minimal_pathway, minimal_article) == []

    def test_no_edge_to_substantive_conclusion_flags_denial(self, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
            Node("c1", NodeKind.CONCLUSION, "The lessee may obtain the resiliation of the lease."),
            Node("c2", NodeKind.CONCLUSION, "The lease may not be resiliated by the lessee."),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-min", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, minimal_article)
        denial = [w for w in warnings if w.code is WarningCode.POSSIBLE_DENIAL_OF_ANTECEDENT]
        assert len(denial) == 1
        assert denial[0].location == Edge("q1", Answer.NO, "c2")

    def test_conditional_marker_in_conclusion(self, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
            Node("c1", NodeKind.CONCLUSION,
                 "The lessee is liable if the rent payment is late."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-min", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, minimal_article)
        assert WarningCode.CRITERION_IN_CONCLUSION in {w.code for w in warnings}

    def test_marker_must_be_whole_word(self, minimal_article):
        # "notify" contains "if" but is not a conditional marker
        nodes = [
            Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
            Node("c1", NodeKind.CONCLUSION, "The lessee must notify the lessor of the lease."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-min", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, minimal_article,
                        grounding_threshold=0.0, coverage_threshold=0.0)
        assert WarningCode.CRITERION_IN_CONCLUSION not in {w.code for w in warnings}

    def test_ungrounded_node_carries_score(self, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
            Node("c1", NodeKind.CONCLUSION, "Penguins waddle across frozen tundra."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-min", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, minimal_article, coverage_threshold=0.0)
        ungrounded = [w for w in warnings if w.code is WarningCode.UNGROUNDED_NODE]
        assert [w.location for w in ungrounded] == ["c1"]
        assert ungrounded[0].score == 0.0

    def test_low_coverage_warning(self, minimal_article):
        nodes = [
            Node("q1", NodeKind.QUESTION, "Is the rent payment more than three weeks late?"),
            Node("c1", NodeKind.CONCLUSION, "The lessee may obtain the resiliation of the lease."),
            Node("c2", NodeKind.CONCLUSION, "The rule does not apply.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-min", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, minimal_article, coverage_threshold=1.01)
        low = [w for w in warnings if w.code is WarningCode.LOW_ARTICLE_COVERAGE]
        assert len(low) == 1
        assert low[0].score is not None

    def test_french_markers(self):
        article = Article(
            id="a-fr", source="CCQ",
            text="Le locataire peut obtenir la résiliation du bail lorsque le loyer est en retard.")
        nodes = [
            Node("q1", NodeKind.QUESTION, "Le loyer est-il en retard?"),
            Node("c1", NodeKind.CONCLUSION,
                 "Le locataire peut obtenir la résiliation du bail si le loyer est en retard."),
            Node("c2", NodeKind.CONCLUSION, "La règle ne s'applique pas.", is_default=True),
        ]
        edges = [Edge("q1", Answer.YES, "c1"), Edge("q1", Answer.NO, "c2")]
        pathway = build_pathway("p", "a-fr", Origin.AUTOMATIC, "q1", nodes, edges)
        warnings = lint(pathway, article)
        assert WarningCode.CRITERION_IN_CONCLUSION in {w.code for w in warnings}


class TestBuildReport:
    def test_report_for_valid_pathway(self, minimal_pathway, minimal_article):
        report = build_report(minimal_pathway, minimal_article)
        assert report.is_valid()
        assert report.warnings == []
        assert set(report.grounding) == {"q1", "c1", "c2"}
        assert report.article_coverage > 0.5

    def test_report_serializes(self, minimal_pathway, minimal_article):
        payload = build_report(minimal_pathway, minimal_article).to_json_dict()
        assert payload["is_valid"] is True
        assert payload["pathway_id"] == minimal_pathway.id
