"""Command-line interface.

Exit codes: 0 success, 1 domain error, 2 usage error. Pass --json to get
machine-readable stdout where a command has structured output.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click

from . import engine
from .config import ToolConfig, load_config
from .errors import (
    Conflict,
    MalformedArticle,
    MissingPathway,
    PathforgeError,
    StructurallyInvalid,
    UnknownTrial,
)
from .evaluation import (
    BLIND_QUESTIONS,
    BlindChoice,
    ManualRating,
    aggregate_article_stats,
    blind_pair,
    blind_report,
    record_blind_response,
    structural_match,
    summarize_ratings,
    unblind_trial,
)
from .extraction import ProviderConfig, ProviderKind, extract_batch
from .io_formats import export_pathway, import_pathway, load_corpus, write_atomic
from .model import Answer, Article, Difficulty, Pathway
from .store import read_trials, write_trials
from .validation import build_report


def domain_errors(func):
    """Print domain failures to stderr and exit 1 (click owns exit 2)."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PathforgeError as exc:
            detail = ""
            violations = getattr(exc, "violations", None)
            if violations:
                detail = "\n" + "\n".join(
                    f"  {v.code.value}: {v.message}" for v in violations)
            click.echo(f"error: {exc.code}: {exc.message}{detail}", err=True)
            sys.exit(1)

    return wrapper


def _load_article_file(path: Path) -> Article:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedArticle(f"{path}: {exc}") from None
    if not isinstance(payload, dict):
        raise MalformedArticle(f"{path}: expected a single article object")
    try:
        return Article(
            id=payload["id"],
            source=payload.get("source", ""),
            text=payload["text"],
            difficulty=Difficulty(payload.get("difficulty", "Unrated")),
            authoring_minutes=payload.get("authoring_minutes"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedArticle(f"{path}: {exc}") from None


def _load_articles_arg(path: Path) -> list[Article]:
    path = Path(path)
    if path.is_dir():
        return load_corpus(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(payload, list):
        return load_corpus(path)
    return [_load_article_file(path)]


def _load_document(path: Path):
    return import_pathway(Path(path).read_bytes())


def _tool_config(config_path) -> ToolConfig:
    return load_config(config_path) if config_path else load_config()


@click.group()
def main():
    """Turn legislative articles into validated decision pathways."""


@main.command()
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option("--provider", "provider_kind",
              type=click.Choice([k.value for k in ProviderKind]), default="mock",
              show_default=True, help="Which provider backend to use.")
@click.option("--store", "store_dir", type=click.Path(path_type=Path),
              help="Fixture/replay store directory (mock and replay providers).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True,
              help="Directory for pathway documents and result summaries.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable stdout.")
@domain_errors
def extract(source, provider_kind, store_dir, out_dir, config_path, as_json):
    """Extract pathways for one article file or a whole corpus directory."""
    tool = _tool_config(config_path)
    provider_config = dataclasses.replace(
        tool.provider,
        provider_kind=ProviderKind(provider_kind),
        store_dir=Path(store_dir) if store_dir else tool.provider.store_dir,
    )
    articles = _load_articles_arg(source)
    results = extract_batch(articles, provider_config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {a.id: a for a in articles}
    for result in results:
        write_atomic(out_dir / f"{result.article_id}.result.json",
                     (json.dumps(result.to_json_dict(), ensure_ascii=False,
                                 sort_keys=True, indent=2) + "\n").encode("utf-8"))
        if result.ok:
            document = export_pathway(result.pathway, by_id[result.article_id])
            write_atomic(out_dir / f"{result.article_id}.pathway.json", document)
    if as_json:
        click.echo(json.dumps([r.to_json_dict() for r in results],
                              ensure_ascii=False, sort_keys=True))
    else:
        for result in results:
            if result.ok:
                click.echo(f"{result.article_id}: ok "
                           f"({len(result.pathway.nodes)} nodes"
                           + (f", repaired: {', '.join(result.repair_log)}"
                              if result.repair_log else "") + ")")
            else:
                reason = result.error or "failed"
                click.echo(f"{result.article_id}: {reason}")
        succeeded = sum(1 for r in results if r.ok)
        click.echo(f"{succeeded}/{len(results)} pathways extracted -> {out_dir}")


@main.command()
@click.argument("pathway_file", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def validate(pathway_file, as_json):
    """Structural validation; exit 1 when the document has errors."""
    try:
        pathway, article = _load_document(pathway_file)
    except StructurallyInvalid as exc:
        if as_json:
            click.echo(json.dumps({
                "is_valid": False,
                "errors": [v.to_json_dict() for v in exc.violations],
            }, ensure_ascii=False, sort_keys=True))
        for violation in exc.violations:
            click.echo(f"{violation.code.value}: {violation.message}", err=True)
        sys.exit(1)
    report = build_report(pathway, article)
    if as_json:
        click.echo(json.dumps(report.to_json_dict(), ensure_ascii=False, sort_keys=True))
    else:
        click.echo(f"{pathway.id}: valid ({len(pathway.nodes)} nodes, "
                   f"{len(pathway.edges)} edges)")


@main.command()
@click.argument("pathway_file", type=click.Path(exists=True, path_type=Path))
@click.option("--article", "article_file", type=click.Path(exists=True, path_type=Path),
              required=True, help="Source article JSON file.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def lint(pathway_file, article_file, config_path, as_json):
    """Lint a pathway against its source article (warnings, with scores)."""
    tool = _tool_config(config_path)
    pathway, _ = _load_document(pathway_file)
    article = _load_article_file(article_file)
    report = build_report(pathway, article,
                          grounding_threshold=tool.grounding_threshold,
                          coverage_threshold=tool.coverage_threshold,
                          conditional_markers=tool.all_markers)
    if as_json:
        click.echo(json.dumps(report.to_json_dict(), ensure_ascii=False, sort_keys=True))
        return
    if not report.warnings:
        click.echo(f"{pathway.id}: no warnings "
                   f"(coverage {report.article_coverage:.2f})")
        return
    for warning in report.warnings:
        score = f" (score {warning.score:.2f})" if warning.score is not None else ""
        click.echo(f"{warning.code.value}{score}: {warning.message}")


@main.command()
@click.argument("pathway_file", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_file", type=click.Path(path_type=Path),
              help="Write canonical bytes here instead of stdout.")
@domain_errors
def export(pathway_file, out_file):
    """Re-emit a document in canonical form."""
    pathway, article = _load_document(pathway_file)
    data = export_pathway(pathway, article)
    if out_file:
        write_atomic(Path(out_file), data)
        click.echo(f"wrote {out_file}")
    else:
        sys.stdout.write(data.decode("utf-8"))


@main.command(name="import")
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def import_(file, as_json):
    """Inspect a pathway document."""
    pathway, article = _load_document(file)
    summary = {
        "pathway_id": pathway.id,
        "article_id": article.id,
        "origin": pathway.origin.value,
        "root": pathway.root,
        "node_count": len(pathway.nodes),
        "edge_count": len(pathway.edges),
    }
    if as_json:
        click.echo(json.dumps(summary, ensure_ascii=False, sort_keys=True))
    else:
        click.echo(f"{pathway.id}: {pathway.origin.value} pathway for article "
                   f"{article.id} ({len(pathway.nodes)} nodes, root {pathway.root})")


@main.command()
@click.argument("pathway_file", type=click.Path(exists=True, path_type=Path))
@domain_errors
def interview(pathway_file):
    """Walk a pathway interactively: y/n to answer, u to undo, q to quit."""
    pathway, _ = _load_document(pathway_file)
    session = engine.start(pathway)
    while session.status is engine.SessionStatus.IN_PROGRESS:
        node = pathway.node(session.current)
        click.echo(node.text)
        raw = click.prompt("[y/n/u/q]", prompt_suffix=" ").strip().lower()
        if raw in ("y", "yes"):
            session = engine.answer(pathway, session, Answer.YES)
        elif raw in ("n", "no"):
            session = engine.answer(pathway, session, Answer.NO)
        elif raw == "u":
            if session.history:
                session = engine.undo(pathway, session)
            else:
                click.echo("nothing to undo")
        elif raw == "q":
            click.echo("abandoned")
            return
        else:
            click.echo("please answer y, n, u or q")
    conclusion = pathway.node(session.current)
    click.echo(f"conclusion: {conclusion.text}")
    for row in engine.trace(pathway, session):
        click.echo(f"  {row.question_text} -> {row.answer.value} -> {row.next_text}")


@main.command()
@click.argument("automatic_file", type=click.Path(exists=True, path_type=Path))
@click.argument("manual_file", type=click.Path(exists=True, path_type=Path))
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="Dice similarity needed to pair two node texts.")
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def compare(automatic_file, manual_file, threshold, as_json):
    """Check whether two pathways are structurally matching."""
    a, _ = _load_document(automatic_file)
    b, _ = _load_document(manual_file)
    result = structural_match(a, b, text_similarity_threshold=threshold)
    if as_json:
        click.echo(json.dumps({"matched": result.matched, "witness": result.witness},
                              ensure_ascii=False, sort_keys=True))
        return
    if result.matched:
        click.echo("match")
        for a_id, b_id in sorted(result.witness.items()):
            click.echo(f"  {a_id} -> {b_id}")
    else:
        click.echo("no match")


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, path_type=Path))
@click.argument("pathways_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def stats(corpus_dir, pathways_dir, as_json):
    """Difficulty-grouped corpus statistics."""
    articles = load_corpus(corpus_dir)
    pathways: list[Pathway] = []
    for doc_path in sorted(Path(pathways_dir).glob("*.pathway.json")):
        pathway, _ = _load_document(doc_path)
        sidecar = doc_path.with_name(doc_path.name.replace(".pathway.json", ".result.json"))
        if sidecar.is_file():
            result = json.loads(sidecar.read_text(encoding="utf-8"))
            if "latency_seconds" in result:
                pathway = dataclasses.replace(
                    pathway, generation_seconds=float(result["latency_seconds"]))
        pathways.append(pathway)
    table = aggregate_article_stats(articles, pathways)
    click.echo(json.dumps(table.to_json_dict(), ensure_ascii=False, sort_keys=True)
               if as_json else table.render())


@main.group()
def ratings():
    """Manual-rating utilities."""


@ratings.command("summarize")
@click.argument("ratings_file", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def ratings_summarize(ratings_file, as_json):
    """Summarize a ratings jsonl file into the evaluation table."""
    records = []
    for line in Path(ratings_file).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(ManualRating.from_json_dict(json.loads(line)))
    summary = summarize_ratings(records)
    click.echo(json.dumps(summary.to_json_dict(), ensure_ascii=False, sort_keys=True)
               if as_json else summary.render())


@main.group()
def blind():
    """Blinded A/B comparison protocol."""


@blind.command("init")
@click.option("--article", "article_id", required=True)
@click.option("--automatic", "automatic_file", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Document of the automatically generated pathway.")
@click.option("--manual", "manual_file", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Document of the manually created pathway.")
@click.option("--trial-id")
@click.option("--seed", type=int)
@click.option("--store", "store_file", required=True, type=click.Path(path_type=Path),
              help="Trials jsonl file.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@domain_errors
def blind_init(article_id, automatic_file, manual_file, trial_id, seed, store_file,
               config_path):
    """Create a trial with a seeded A/B assignment."""
    tool = _tool_config(config_path)
    automatic, auto_article = _load_document(automatic_file)
    manual, manual_article = _load_document(manual_file)
    for pathway, article in ((automatic, auto_article), (manual, manual_article)):
        if article.id != article_id:
            raise MissingPathway(
                f"pathway {pathway.id!r} covers article {article.id!r}, not {article_id!r}")
    trial = blind_pair(article_id, automatic.id, manual.id,
                       seed=seed if seed is not None else tool.blind_seed,
                       trial_id=trial_id)
    trials = read_trials(store_file)
    if any(t.trial_id == trial.trial_id for t in trials):
        raise Conflict(f"trial {trial.trial_id!r} already exists")
    write_trials(store_file, trials + [trial])
    click.echo(f"trial {trial.trial_id}: labels assigned (seed "
               f"{trial.assignment_seed})")


@blind.command("record")
@click.option("--store", "store_file", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--trial", "trial_id", required=True)
@click.option("--question", "question_number", required=True, type=click.IntRange(1, 3),
              help="1 = overall, 2 = content, 3 = logical structure.")
@click.option("--choice", required=True,
              type=click.Choice([c.value for c in BlindChoice]))
@domain_errors
def blind_record(store_file, trial_id, question_number, choice):
    """Record one blinded preference."""
    trials = read_trials(store_file)
    by_id = {t.trial_id: t for t in trials}
    if trial_id not in by_id:
        raise UnknownTrial(f"unknown trial {trial_id!r}")
    question = BLIND_QUESTIONS[question_number - 1]
    updated = record_blind_response(by_id[trial_id], question, BlindChoice(choice))
    write_trials(store_file, [t for t in trials if t.trial_id != trial_id] + [updated])
    answered = len(updated.responses)
    click.echo(f"trial {trial_id}: {answered}/{len(BLIND_QUESTIONS)} questions answered")


@blind.command("unblind")
@click.option("--store", "store_file", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--trial", "trial_id", help="Unblind one trial (default: all).")
@domain_errors
def blind_unblind(store_file, trial_id):
    """Irreversibly unblind trials."""
    trials = read_trials(store_file)
    updated = []
    count = 0
    for trial in trials:
        if trial_id is None or trial.trial_id == trial_id:
            if not trial.unblinded:
                trial = unblind_trial(trial)
                count += 1
        updated.append(trial)
    write_trials(store_file, updated)
    click.echo(f"unblinded {count} trial(s)")


@blind.command("report")
@click.option("--store", "store_file", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, path_type=Path),
              help="Corpus directory for the difficulty split.")
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def blind_report_cmd(store_file, corpus_dir, as_json):
    """Render the blind-test tables (requires unblinded, complete trials)."""
    trials = read_trials(store_file)
    difficulties = None
    if corpus_dir:
        difficulties = {a.id: a.difficulty for a in load_corpus(corpus_dir)}
    report = blind_report(trials, difficulties=difficulties)
    click.echo(json.dumps(report.to_json_dict(), ensure_ascii=False, sort_keys=True)
               if as_json else report.render())


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@domain_errors
def serve(config_path):
    """Start the HTTP service for the review UI."""
    import uvicorn

    from .service import create_app
    from .store import FileStore

    tool = _tool_config(config_path)
    tool.data_dir.mkdir(parents=True, exist_ok=True)
    host, port = tool.host_port()
    static_dir = Path("frontend/dist") if Path("frontend/dist").is_dir() else None
    app = create_app(tool, store=FileStore(tool), static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
