"""LLM extraction: prompt construction, provider calls, response repair.

The model is asked for a single JSON object describing question/conclusion
blocks and their yes/no connections. The repair pipeline is deliberately
minimal (strip code fences, pull out the first balanced JSON object);
graphs that parse but violate the pathway contract are surfaced as
StructurallyInvalid for human review, never silently fixed.

Providers: "live" talks to a chat-completion HTTP endpoint, "mock" replays
canned responses keyed by article id, "replay" replays recorded live
sessions keyed by request fingerprint. Mock and replay never touch the
network, which keeps the full test suite offline.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import random
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import httpx

from .errors import (
    ConfigError,
    EmptyArticle,
    ProviderUnavailable,
    UnparseableResponse,
)
from .io_formats import canonical_json_bytes, write_atomic
from .model import Answer, Article, Edge, Node, NodeKind, Origin, Pathway, build_pathway
from .validation import ValidationError

PROMPT_VERSION = "pathforge-extraction/1"

SYSTEM_MESSAGE = """\
You are a legal knowledge engineer. The user message contains the full text \
of one legislative article. Extract the legal requirements (criteria) and \
the legal conclusions stated by the article, and link them into a single \
decision pathway.

Rules:
1. Represent every criterion as a question block phrased as a third-person \
yes/no question (for example: "Is the rent payment more than three weeks late?").
2. Represent every legal outcome as a conclusion block stating the \
consequence. Conclusion blocks are terminal: they never have outgoing \
connections and they must not introduce new criteria or conditions.
3. Connect blocks with yes/no answers: the "yes" connection of a question \
leads to what follows when the criterion is present, the "no" connection to \
what follows when it is absent.
4. Every question block must have exactly one "yes" and one "no" \
connection. When the article is silent about the negative case, connect \
"no" to a conclusion block with the text "The rule does not apply." and \
"default": true.
5. Do not deny the antecedent: the absence of a criterion must never lead \
to a substantive conclusion the article does not state for that case. \
Route such "no" answers to the default conclusion instead.
6. The pathway must be acyclic with a single starting question. Never \
connect a block back to itself or to an earlier block.
7. Use only wording grounded in the article text. Do not invent criteria \
or conclusions.

Output exactly one JSON object, with no surrounding prose and no code \
fences, in this format:
{"blocks": [{"id": "n1", "type": "question", "text": "..."}, \
{"id": "n2", "type": "conclusion", "text": "...", "default": false}], \
"connections": [{"from": "n1", "to": "n2", "answer": "yes"}], "root": "n1"}

Constraints on the JSON: block ids are "n1", "n2", ... in order; "type" is \
"question" or "conclusion"; "answer" is "yes" or "no"; "default" may only \
appear on conclusion blocks; "root" is the id of the first question.
"""


class ProviderKind(str, Enum):
    LIVE_HTTP = "live"
    MOCK_FIXTURE = "mock"
    REPLAY = "replay"


@dataclass(frozen=True)
class PromptBundle:
    system_message: str
    user_message: str
    response_schema_version: str


@dataclass(frozen=True)
class ProviderConfig:
    provider_kind: ProviderKind = ProviderKind.MOCK_FIXTURE
    model_name: str = "gpt-4"
    temperature: float = 0.0
    max_parallel: int = 4
    retry_limit: int = 2
    timeout_seconds: float = 30.0
    credentials_env_var: str = "PATHFORGE_API_KEY"
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    store_dir: Optional[Path] = None
    record: bool = False

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        if self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be > 0")
        if self.store_dir is not None:
            object.__setattr__(self, "store_dir", Path(self.store_dir))


@dataclass(frozen=True)
class RawModelResponse:
    text: str
    latency_seconds: float
    model_name: str
    request_fingerprint: str


@dataclass
class ExtractionResult:
    """Outcome of one extraction attempt.

    Exactly one of: pathway set (success), violations non-empty
    (StructurallyInvalid), or error set (provider/parse failure). raw is
    absent only when the provider never produced a response.
    """

    article_id: str
    pathway: Optional[Pathway] = None
    violations: list[ValidationError] = field(default_factory=list)
    repair_log: list[str] = field(default_factory=list)
    raw: Optional[RawModelResponse] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.pathway is not None

    def to_json_dict(self) -> dict:
        out: dict = {
            "article_id": self.article_id,
            "ok": self.ok,
            "repair_log": list(self.repair_log),
            "violations": [v.to_json_dict() for v in self.violations],
        }
        if self.error is not None:
            out["error"] = self.error
        if self.pathway is not None:
            out["pathway_id"] = self.pathway.id
            out["node_count"] = len(self.pathway.nodes)
        if self.raw is not None:
            out["latency_seconds"] = self.raw.latency_seconds
            out["model_name"] = self.raw.model_name
            out["request_fingerprint"] = self.raw.request_fingerprint
        return out


def build_prompt(article: Article) -> PromptBundle:
    """Prompt for one article; user message is the article text verbatim."""
    if not article.text.strip():
        raise EmptyArticle("article text is empty")
    return PromptBundle(
        system_message=SYSTEM_MESSAGE,
        user_message=article.text,
        response_schema_version=PROMPT_VERSION,
    )


def request_fingerprint(system_message: str, user_message: str,
                        model_name: str, temperature: float) -> str:
    payload = {
        "model_name": model_name,
        "system_message": system_message,
        "temperature": temperature,
        "user_message": user_message,
    }
    return hashlib.sha256(canonical_json_bytes(payload)).hexdigest()


def _bundle_fingerprint(bundle: PromptBundle, config: ProviderConfig) -> str:
    return request_fingerprint(
        bundle.system_message, bundle.user_message, config.model_name, config.temperature)


@dataclass(frozen=True)
class ParsedGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    root: str
    repair_log: tuple[str, ...]


def _strip_code_fences(text: str) -> str:
    """Drop a ``` / ```json fence pair, keeping the fenced body."""
    start = text.find("```")
    if start == -1:
        return text
    body_start = text.find("\n", start)
    if body_start == -1:
        return text
    end = text.find("```", body_start)
    if end == -1:
        return text
    return text[body_start + 1:end]


def _first_balanced_object(text: str) -> Optional[str]:
    """Substring covering the first balanced top-level {...}, string-aware."""
    start = text.find("{")
    if start == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def _try_load_object(text: str) -> Optional[dict]:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, RecursionError):
        return None
    return obj if isinstance(obj, dict) else None


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8", errors="replace"))


def parse_model_json(text: str) -> ParsedGraph:
    """Map raw model output to (nodes, edges, root), repairing if needed.

    Repair steps apply in fixed order: (1) strip markdown code fences,
    (2) extract the first balanced top-level JSON object. Anything else is
    UnparseableResponse. Block ids are renamed to "n1", "n2", ... in
    model-output order; connections referencing unknown block ids keep the
    raw id so the structural validator can report the dangling reference.
    """
    if not isinstance(text, str):
        raise UnparseableResponse("response is not text")
    repair_log: list[str] = []
    candidate = text
    obj = _try_load_object(candidate)
    if obj is None:
        stripped = _strip_code_fences(candidate)
        if stripped != candidate:
            repair_log.append("stripped_code_fence")
            candidate = stripped
            obj = _try_load_object(candidate)
    if obj is None:
        extracted = _first_balanced_object(candidate)
        if extracted is not None:
            inner = _try_load_object(extracted)
            if inner is not None:
                repair_log.append("extracted_balanced_object")
                obj = inner
    if obj is None:
        try:
            json.loads(candidate)
            offset = 0
        except json.JSONDecodeError as exc:
            offset = _byte_offset(candidate, exc.pos)
        except RecursionError:
            offset = 0
        raise UnparseableResponse("no JSON object found in response", offset=offset)

    return _map_block_graph(obj, repair_log)


def _field(obj: dict, key: str, expected_type, context: str):
    value = obj.get(key)
    if not isinstance(value, expected_type) or (isinstance(value, bool) and expected_type is not bool):
        raise UnparseableResponse(f"{context}: field {key!r} missing or not {expected_type.__name__}")
    return value


def _map_block_graph(obj: dict, repair_log: list[str]) -> ParsedGraph:
    blocks = _field(obj, "blocks", list, "response object")
    connections = _field(obj, "connections", list, "response object")
    root_raw = _field(obj, "root", str, "response object")

    rename: dict[str, str] = {}
    nodes: list[Node] = []
    for i, raw in enumerate(blocks):
        context = f"blocks[{i}]"
        if not isinstance(raw, dict):
            raise UnparseableResponse(f"{context}: block must be an object")
        model_id = unicodedata.normalize("NFC", _field(raw, "id", str, context))
        if not model_id:
            raise UnparseableResponse(f"{context}: block id is empty")
        if model_id in rename:
            raise UnparseableResponse(f"{context}: duplicate block id {model_id!r}")
        block_type = _field(raw, "type", str, context)
        if block_type == "question":
            kind = NodeKind.QUESTION
        elif block_type == "conclusion":
            kind = NodeKind.CONCLUSION
        else:
            raise UnparseableResponse(
                f"{context}: type must be 'question' or 'conclusion', got {block_type!r}")
        node_text = _field(raw, "text", str, context)
        is_default = raw.get("default", False)
        if not isinstance(is_default, bool):
            raise UnparseableResponse(f"{context}: 'default' must be a boolean")
        if is_default and kind is NodeKind.QUESTION:
            raise UnparseableResponse(f"{context}: 'default' is not allowed on question blocks")
        if not node_text.strip():
            raise UnparseableResponse(f"{context}: block text is empty")
        new_id = f"n{i + 1}"
        rename[model_id] = new_id
        nodes.append(Node(id=new_id, kind=kind, text=node_text, is_default=is_default))

    edges: list[Edge] = []
    for i, raw in enumerate(connections):
        context = f"connections[{i}]"
        if not isinstance(raw, dict):
            raise UnparseableResponse(f"{context}: connection must be an object")
        from_raw = unicodedata.normalize("NFC", _field(raw, "from", str, context))
        to_raw = unicodedata.normalize("NFC", _field(raw, "to", str, context))
        answer_raw = _field(raw, "answer", str, context)
        if answer_raw == "yes":
            ans = Answer.YES
        elif answer_raw == "no":
            ans = Answer.NO
        else:
            raise UnparseableResponse(f"{context}: answer must be 'yes' or 'no', got {answer_raw!r}")
        if not from_raw or not to_raw:
            raise UnparseableResponse(f"{context}: connection endpoint id is empty")
        edges.append(Edge(
            from_id=rename.get(from_raw, from_raw),
            answer=ans,
            to_id=rename.get(to_raw, to_raw),
        ))

    root = rename.get(unicodedata.normalize("NFC", root_raw), root_raw)
    if not root:
        raise UnparseableResponse("response object: 'root' is empty")
    return ParsedGraph(nodes=tuple(nodes), edges=tuple(edges), root=root,
                       repair_log=tuple(repair_log))


class MockFixtureProvider:
    """Replays canned responses from <store>/<article_id>.json (falling
    back to <fingerprint>.json). Fixture files: {"response_text", ...}."""

    def __init__(self, store_dir: Path, config: ProviderConfig):
        if store_dir is None:
            raise ConfigError("mock provider requires store_dir")
        self.store_dir = Path(store_dir)
        self.config = config
        if not self.store_dir.is_dir():
            raise ConfigError(f"fixture store {self.store_dir} is not a directory")

    def complete(self, bundle: PromptBundle, article: Article) -> RawModelResponse:
        fingerprint = _bundle_fingerprint(bundle, self.config)
        for name in (f"{article.id}.json", f"{fingerprint}.json"):
            path = self.store_dir / name
            if path.is_file():
                entry = json.loads(path.read_text(encoding="utf-8"))
                return RawModelResponse(
                    text=entry["response_text"],
                    latency_seconds=float(entry.get("latency_seconds", 0.0)),
                    model_name=entry.get("model_name", self.config.model_name),
                    request_fingerprint=fingerprint,
                )
        raise ProviderUnavailable(
            f"no fixture for article {article.id!r} (or fingerprint) in {self.store_dir}")


class ReplayProvider:
    """Replays recorded live sessions from <store>/<fingerprint>.json."""

    def __init__(self, store_dir: Path, config: ProviderConfig):
        if store_dir is None:
            raise ConfigError("replay provider requires store_dir")
        self.store_dir = Path(store_dir)
        self.config = config
        if not self.store_dir.is_dir():
            raise ConfigError(f"replay store {self.store_dir} is not a directory")

    def complete(self, bundle: PromptBundle, article: Article) -> RawModelResponse:
        fingerprint = _bundle_fingerprint(bundle, self.config)
        path = self.store_dir / f"{fingerprint}.json"
        if not path.is_file():
            raise ProviderUnavailable(f"no recorded response for fingerprint {fingerprint}")
        entry = json.loads(path.read_text(encoding="utf-8"))
        return RawModelResponse(
            text=entry["response_text"],
            latency_seconds=float(entry.get("latency_seconds", 0.0)),
            model_name=entry.get("model_name", self.config.model_name),
            request_fingerprint=fingerprint,
        )


def record_response(store_dir: Path, bundle: PromptBundle, config: ProviderConfig,
                    raw: RawModelResponse) -> Path:
    """Persist a live response so a later replay run reproduces it."""
    record = {
        "request": {
            "model_name": config.model_name,
            "system_message": bundle.system_message,
            "temperature": config.temperature,
            "user_message": bundle.user_message,
        },
        "response_text": raw.text,
        "latency_seconds": raw.latency_seconds,
        "model_name": raw.model_name,
        "recorded_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    path = Path(store_dir) / f"{raw.request_fingerprint}.json"
    write_atomic(path, canonical_json_bytes(record))
    return path


class LiveHttpProvider:
    """Chat-completion client with bounded retries and exponential backoff.

    Retries only transport errors, 5xx and 429 (content failures are
    deterministic at temperature 0 and retrying them wastes money).
    Backoff starts at 1s, doubles per attempt, jittered by +/-20%.
    """

    def __init__(self, config: ProviderConfig, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None):
        self.config = config
        api_key = os.environ.get(config.credentials_env_var, "")
        if not api_key:
            raise ConfigError(
                f"environment variable {config.credentials_env_var} is not set")
        self._api_key = api_key
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._client = httpx.Client(transport=transport, timeout=config.timeout_seconds)

    def complete(self, bundle: PromptBundle, article: Article) -> RawModelResponse:
        cfg = self.config
        body = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": bundle.system_message},
                {"role": "user", "content": bundle.user_message},
            ],
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error = "no attempt made"
        for attempt in range(cfg.retry_limit + 1):
            if attempt:
                delay = (2 ** (attempt - 1)) * self._rng.uniform(0.8, 1.2)
                self._sleep(delay)
            started = time.monotonic()
            try:
                response = self._client.post(cfg.endpoint_url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            latency = time.monotonic() - started
            if response.status_code == 200:
                try:
                    text = response.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError):
                    raise ProviderUnavailable("provider returned a malformed completion body")
                raw = RawModelResponse(
                    text=text,
                    latency_seconds=latency,
                    model_name=cfg.model_name,
                    request_fingerprint=_bundle_fingerprint(bundle, cfg),
                )
                if cfg.record and cfg.store_dir is not None:
                    record_response(cfg.store_dir, bundle, cfg, raw)
                return raw
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"provider returned {response.status_code}"
                continue
            raise ProviderUnavailable(f"provider returned {response.status_code}")
        raise ProviderUnavailable(f"retries exhausted: {last_error}")


def make_provider(config: ProviderConfig, transport: Optional[httpx.BaseTransport] = None,
                  sleep: Callable[[float], None] = time.sleep,
                  rng: Optional[random.Random] = None):
    if config.provider_kind is ProviderKind.MOCK_FIXTURE:
        return MockFixtureProvider(config.store_dir, config)
    if config.provider_kind is ProviderKind.REPLAY:
        return ReplayProvider(config.store_dir, config)
    return LiveHttpProvider(config, transport=transport, sleep=sleep, rng=rng)


def extract(article: Article, config: ProviderConfig, provider=None) -> ExtractionResult:
    """Run the full extraction for one article.

    Per-article failures come back inside the result (so batches never
    abort); only configuration problems raise.
    """
    bundle = build_prompt(article)
    if provider is None:
        provider = make_provider(config)
    try:
        raw = provider.complete(bundle, article)
    except ProviderUnavailable as exc:
        return ExtractionResult(article_id=article.id, error=f"ProviderUnavailable: {exc.message}")
    try:
        parsed = parse_model_json(raw.text)
    except UnparseableResponse as exc:
        return ExtractionResult(
            article_id=article.id, raw=raw,
            error=f"UnparseableResponse: {exc.message} (byte offset {exc.offset})")
    outcome = build_pathway(
        pathway_id=f"auto-{article.id}",
        article_id=article.id,
        origin=Origin.AUTOMATIC,
        root=parsed.root,
        nodes=parsed.nodes,
        edges=parsed.edges,
        generation_seconds=raw.latency_seconds,
    )
    if isinstance(outcome, Pathway):
        return ExtractionResult(
            article_id=article.id, pathway=outcome,
            repair_log=list(parsed.repair_log), raw=raw)
    return ExtractionResult(
        article_id=article.id, violations=outcome,
        repair_log=list(parsed.repair_log), raw=raw, error="StructurallyInvalid")


def extract_batch(articles: Sequence[Article], config: ProviderConfig,
                  provider=None) -> list[ExtractionResult]:
    """Extract a corpus with at most max_parallel requests in flight.

    Results come back in input order; one article's failure never aborts
    the batch.
    """
    if not articles:
        raise ValueError("articles must be non-empty")
    if provider is None:
        provider = make_provider(config)
    with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
        return list(pool.map(lambda a: extract(a, config, provider=provider), articles))
