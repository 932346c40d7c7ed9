import dataclasses
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from pathforge.config import ToolConfig
from pathforge.extraction import ProviderConfig, ProviderKind
from pathforge.io_formats import export_pathway
from pathforge.model import Origin
from pathforge.service import create_app
from pathforge.store import FileStore
from pathforge.validation import build_report

from helpers import make_minimal_article, make_minimal_pathway

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def store(tmp_path):
    config = ToolConfig(
        provider=ProviderConfig(provider_kind=ProviderKind.MOCK_FIXTURE,
                                store_dir=FIXTURES / "responses"),
        data_dir=tmp_path / "data",
        blind_seed=7,
    )
    store = FileStore(config)
    article = make_minimal_article()
    store.add_article(article)
    manual = make_minimal_pathway(pathway_id="man-1")
    store.save_pathway(manual, article)
    auto = dataclasses.replace(make_minimal_pathway(pathway_id="auto-1"),
                               origin=Origin.AUTOMATIC)
    store.save_pathway(auto, article)
    return store


@pytest.fixture
def client(store):
    app = create_app(store.config, store=store)
    return TestClient(app)


def get_data(response, status=200):
    assert response.status_code == status, response.text
    body = response.json()
    assert body["ok"] is True
    return body["data"]


def get_error(response, status):
    assert response.status_code == status, response.text
    body = response.json()
    assert body["ok"] is False
    return body["error"]


class TestArticles:
    def test_list(self, client):
        data = get_data(client.get("/api/articles"))
        assert [a["id"] for a in data] == ["a-min"]
        assert data[0]["char_count"] == len(make_minimal_article().text)

    def test_get(self, client):
        data = get_data(client.get("/api/articles/a-min"))
        assert data["text"] == make_minimal_article().text

    def test_unknown_is_404(self, client):
        error = get_error(client.get("/api/articles/none"), 404)
        assert error["code"] == "UnknownArticle"


class TestPathways:
    def test_list(self, client):
        data = get_data(client.get("/api/pathways"))
        assert {p["id"] for p in data} == {"man-1", "auto-1"}

    def test_get_document_with_version(self, client):
        data = get_data(client.get("/api/pathways/man-1"))
        assert data["version"] == 1
        assert data["document"]["pathway"]["id"] == "man-1"

    def test_put_roundtrip_bumps_version(self, client):
        data = get_data(client.get("/api/pathways/man-1"))
        document = data["document"]
        document["pathway"]["nodes"][0]["text"] = \
            "The lessee may obtain the resiliation of the lease today."
        updated = get_data(client.put("/api/pathways/man-1", json={
            "document": document, "version": data["version"]}))
        assert updated["version"] == 2
        assert updated["report"]["is_valid"] is True

    def test_put_with_stale_version_conflicts(self, client):
        data = get_data(client.get("/api/pathways/man-1"))
        payload = {"document": data["document"], "version": data["version"]}
        get_data(client.put("/api/pathways/man-1", json=payload))
        error = get_error(client.put("/api/pathways/man-1", json=payload), 409)
        assert error["code"] == "Conflict"

    def test_put_cycle_rejected_422_and_unchanged(self, client):
        data = get_data(client.get("/api/pathways/man-1"))
        document = json.loads(json.dumps(data["document"]))
        document["pathway"]["edges"] = [
            {"from": "q1", "answer": "Yes", "to": "q1"},
            {"from": "q1", "answer": "No", "to": "c2"},
        ]
        error = get_error(client.put("/api/pathways/man-1", json={
            "document": document, "version": data["version"]}), 422)
        assert error["code"] == "StructurallyInvalid"
        assert any(v["code"] == "Cycle" for v in error["violations"])
        # failed save left the stored document untouched
        after = get_data(client.get("/api/pathways/man-1"))
        assert after["document"] == data["document"]
        assert after["version"] == data["version"]

    def test_put_id_mismatch_400(self, client):
        data = get_data(client.get("/api/pathways/man-1"))
        error = get_error(client.put("/api/pathways/auto-1", json={
            "document": data["document"], "version": 1}), 400)
        assert error["code"] == "BadRequest"

    def test_validate_endpoint_equals_library(self, client, store):
        data = get_data(client.post("/api/pathways/man-1/validate"))
        pathway, article, _ = store.get_pathway("man-1")
        expected = build_report(
            pathway, article,
            grounding_threshold=store.config.grounding_threshold,
            coverage_threshold=store.config.coverage_threshold,
            conditional_markers=store.config.all_markers).to_json_dict()
        assert data == expected


class TestExtract:
    def test_extract_fixture_article(self, client, store):
        article = dataclasses.replace(
            make_minimal_article("a01"),
            text=json.loads((FIXTURES / "corpus" / "a01.json").read_text())["text"])
        store.add_article(article)
        data = get_data(client.post("/api/extract", json={"article_id": "a01"}))
        assert data["ok"] is True
        assert data["pathway_id"] == "auto-a01"
        listed = get_data(client.get("/api/pathways"))
        assert "auto-a01" in {p["id"] for p in listed}

    def test_unknown_article_404(self, client):
        get_error(client.post("/api/extract", json={"article_id": "zz"}), 404)

    def test_provider_miss_is_502(self, client):
        # a-min has no fixture in the response store
        error = get_error(client.post("/api/extract", json={"article_id": "a-min"}), 502)
        assert error["code"] == "ProviderUnavailable"

    def test_missing_field_400(self, client):
        get_error(client.post("/api/extract", json={}), 400)


class TestSessions:
    def start(self, client, pathway_id="man-1"):
        return get_data(client.post("/api/sessions", json={"pathway_id": pathway_id}), 201)

    def test_lifecycle(self, client):
        session = self.start(client)
        assert session["status"] == "InProgress"
        assert session["current_node"]["id"] == "q1"
        sid = session["id"]

        answered = get_data(client.post(f"/api/sessions/{sid}/answer", json={
            "answer": "Yes", "version": session["version"]}))
        assert answered["status"] == "Concluded"
        assert answered["current_node"]["id"] == "c1"
        assert len(answered["trace"]) == 1

        trace = get_data(client.get(f"/api/sessions/{sid}/trace"))
        assert trace[0]["answer"] == "Yes"

        undone = get_data(client.post(f"/api/sessions/{sid}/undo", json={
            "version": answered["version"]}))
        assert undone["status"] == "InProgress"
        assert undone["current_node"]["id"] == "q1"

    def test_stale_version_conflicts(self, client):
        session = self.start(client)
        sid = session["id"]
        first = client.post(f"/api/sessions/{sid}/answer",
                            json={"answer": "Yes", "version": 0})
        second = client.post(f"/api/sessions/{sid}/answer",
                             json={"answer": "No", "version": 0})
        codes = sorted([first.status_code, second.status_code])
        assert codes == [200, 409]

    def test_unknown_session_404(self, client):
        get_error(client.get("/api/sessions/nope/trace"), 404)

    def test_bad_answer_400(self, client):
        session = self.start(client)
        get_error(client.post(f"/api/sessions/{session['id']}/answer", json={
            "answer": "Maybe", "version": 0}), 400)

    def test_persisted_across_store_reload(self, client, store):
        session = self.start(client)
        reloaded = store.get_session(session["id"])
        assert reloaded.current == "q1"


class TestRatings:
    RATING = {
        "pathway_id": "auto-1", "rater_id": "r1",
        "textual_accuracy": True, "completeness": True,
        "no_hallucination": True, "matching": False,
        "overall": "SlightAdjustment", "comments": "solid draft",
    }

    def test_post_and_report(self, client):
        get_data(client.post("/api/ratings", json=self.RATING), 201)
        report = get_data(client.get("/api/reports/ratings"))
        assert report["summary"]["total"] == 1
        assert "Slight Adjustment Necessary 1 (100.0%)" in report["rendered"]

    def test_duplicate_rating_conflicts(self, client):
        get_data(client.post("/api/ratings", json=self.RATING), 201)
        get_error(client.post("/api/ratings", json=self.RATING), 409)

    def test_unknown_pathway_404(self, client):
        bad = dict(self.RATING, pathway_id="ghost")
        get_error(client.post("/api/ratings", json=bad), 404)


class TestBlind:
    def create(self, client):
        return get_data(client.post("/api/blind/trials", json={
            "article_id": "a-min", "automatic_id": "auto-1",
            "manual_id": "man-1", "trial_id": "t1"}), 201)

    def test_presentation_redacted(self, client):
        view = self.create(client)
        blob = json.dumps(view).lower()
        assert "automatic" not in blob
        assert "manual" not in blob
        assert "origin" not in blob
        assert "auto-1" not in blob and "man-1" not in blob
        assert set(view["pathways"]) == {"A", "B"}

    def test_origin_mismatch_400(self, client):
        error = get_error(client.post("/api/blind/trials", json={
            "article_id": "a-min", "automatic_id": "man-1",
            "manual_id": "auto-1", "trial_id": "t2"}), 400)
        assert error["code"] == "BadRequest"

    def test_response_then_unblind_then_report(self, client):
        self.create(client)
        for question in get_data(client.get("/api/blind/trials/t1"))["questions"]:
            get_data(client.post("/api/blind/trials/t1/response", json={
                "question": question, "choice": "A"}))
        status = get_data(client.get("/api/blind/trials/t1"))
        assert status["complete"] is True

        unblinded = get_data(client.post("/api/blind/unblind", json={}))
        assert unblinded["unblinded"] == 1

        late = get_error(client.post("/api/blind/trials/t1/response", json={
            "question": "Which Pathway is better overall?", "choice": "B"}), 409)
        assert late["code"] == "ProtocolError"

        report = get_data(client.get("/api/reports/blind"))
        questions = report["report"]["questions"]
        assert all(q["automatic"] + q["equivalent"] + q["manual"] == 1 for q in questions)

    def test_report_before_unblinding_conflicts(self, client):
        self.create(client)
        for question in get_data(client.get("/api/blind/trials/t1"))["questions"]:
            get_data(client.post("/api/blind/trials/t1/response", json={
                "question": question, "choice": "Equivalent"}))
        get_error(client.get("/api/reports/blind"), 409)

    def test_duplicate_trial_conflicts(self, client):
        self.create(client)
        get_error(client.post("/api/blind/trials", json={
            "article_id": "a-min", "automatic_id": "auto-1",
            "manual_id": "man-1", "trial_id": "t1"}), 409)

    def test_unblinded_view_shows_origins(self, client):
        self.create(client)
        for question in get_data(client.get("/api/blind/trials/t1"))["questions"]:
            get_data(client.post("/api/blind/trials/t1/response", json={
                "question": question, "choice": "B"}))
        get_data(client.post("/api/blind/unblind", json={"trial_id": "t1"}))
        view = get_data(client.get("/api/blind/trials/t1"))
        assert view["unblinded"] is True
        assert set(view["origins"].values()) == {"Automatic", "Manual"}
