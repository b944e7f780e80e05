"""Command-line interface: ingest, route, serve, simulate, report, export,
bank inspection, and worker administration."""

import json
import sys
from pathlib import Path

import click

from .project import Project, ProjectError
from .question_bank import load_bank, tree_paths, validate_bank
from .router import load_wordlists, route_corpus
from .corpus import parse_corpus_file
from .service import export_tsv
from .simulator import SimConfig, simulate


@click.group()
def main():
    """Crowdsourced Universal POS annotation pipeline."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--lists", "lists_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--mapping", required=True, type=click.Path(exists=True))
@click.option("--tests", type=click.Path(exists=True), help="Expert gold test questions.")
@click.option("--config", type=click.Path(exists=True), help="QC/auth/seed config.")
@click.option("--data-dir", required=True, type=click.Path())
def ingest(corpus, lists_dir, bank_dir, mapping, tests, config, data_dir):
    """Validate all inputs and initialize a project data directory."""
    try:
        project = Project.create(data_dir, corpus, lists_dir, bank_dir, mapping, tests, config)
    except (ProjectError, ValueError) as exc:
        raise click.ClickException(str(exc))
    report = project.routing_report.to_json()
    click.echo(json.dumps({"data_dir": str(data_dir), "routing": report}, indent=2))
    project.close()


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--lists", "lists_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(), help="Write the routing report as JSON.")
def route(corpus, lists_dir, out):
    """Route a corpus and report per-task counts and percentages."""
    try:
        tokens = parse_corpus_file(corpus)
        lists = load_wordlists(lists_dir)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    report = route_corpus(tokens, lists).to_json()
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", type=click.Path(exists=True), help="Override auth config.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(data_dir, config, host, port):
    """Serve the annotation HTTP API over an ingested project."""
    import uvicorn

    from .service import app_from_data_dir

    uvicorn.run(app_from_data_dir(data_dir, config), host=host, port=port)


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), help="Directory for the trace output.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def simulate_cmd(config, out, seed):
    """Run a synthetic-worker simulation through the full pipeline."""
    try:
        sim_config = SimConfig.from_file(config)
        if seed is not None:
            sim_config.seed = seed
        trace = simulate(sim_config)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    summary = {
        "seed": trace.seed,
        "pages_built": trace.pages_built,
        "judgments": len(trace.store),
        "completed_tokens": trace.completed_tokens,
        "pending_tokens": trace.pending_tokens,
        "rejected_workers": trace.rejected_workers,
        "banned_workers": trace.banned_workers,
        "unreachable_tag_fallbacks": trace.unreachable_tag_fallbacks,
        "mv_accuracy_vs_gold": round(trace.mv_accuracy_vs_gold(), 4)
        if trace.vote_records
        else None,
        "split_percentages": {s.value: round(p, 2) for s, p in trace.split_percentages().items()}
        if trace.vote_records
        else None,
    }
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "judgments.ndjson").write_text(trace.judgment_log_ndjson(), encoding="utf-8")
        workers = {w.worker_id: w.to_json() for w in trace.workers.values()}
        (out_dir / "workers.json").write_text(json.dumps(workers, indent=2), encoding="utf-8")
        reports = {task: r.to_json() for task, r in trace.reports.items()}
        (out_dir / "metrics.json").write_text(json.dumps(reports, indent=2), encoding="utf-8")
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    click.echo(json.dumps(summary, indent=2))


main.add_command(simulate_cmd, name="simulate")


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--task", type=click.Choice(["tsq", "eng_qt", "spa_qt"]))
@click.option("--format", "fmt", type=click.Choice(["json", "table"]), default="json", show_default=True)
def report(data_dir, task, fmt):
    """Print the routing and metrics reports for an ingested project."""
    project = Project.open(data_dir)
    try:
        doc = project.reports(task)
    finally:
        project.close()
    if fmt == "json":
        click.echo(json.dumps(doc, indent=2, ensure_ascii=False))
        return
    click.echo("routing:")
    for kind, count in doc["routing"]["counts"].items():
        pct = doc["routing"]["percentages"][kind]
        click.echo(f"  {kind:<10} {count:>8}  {pct:6.2f}%")
    for task_name, m in doc["metrics"].items():
        click.echo(f"task {task_name}:")
        if m["no_data"]:
            click.echo("  (no data)")
            continue
        click.echo(f"  test questions      {m['n_test_questions']}")
        click.echo(f"  avg judgments / TQ  {m['avg_judgments_per_tq']}")
        click.echo(f"  MV accuracy         {m['mv_accuracy']}")
        click.echo(f"  avg SJ accuracy     {m['avg_sj_accuracy']}")
        click.echo(f"  avg SJ~MV agreement {m['avg_sj_mv_agreement']}")
        for k, v in m["accuracy_k_plus_1"].items():
            click.echo(f"  accuracy({k}+1)     {v}")
        if m["split_percentages"]:
            for split, pct in m["split_percentages"].items():
                click.echo(f"  split {split:<12} {pct:6.2f}%")


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--final", "out_path", required=True, type=click.Path(), help="Output TSV path.")
def export(data_dir, out_path):
    """Export final tags as TSV (token_id, surface, lang, tag, source, split)."""
    project = Project.open(data_dir)
    try:
        text = export_tsv(project)
    finally:
        project.close()
    Path(out_path).write_text(text, encoding="utf-8")
    click.echo(f"wrote {len(text.splitlines()) - 1} rows to {out_path}")


@main.group()
def bank():
    """Question bank inspection."""


@bank.command("validate")
@click.argument("bank_dir", type=click.Path(exists=True, file_okay=False))
def bank_validate(bank_dir):
    """Validate every TSQ and tree file in a bank directory."""
    try:
        loaded = load_bank(bank_dir)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    findings = validate_bank(loaded)
    for f in findings:
        click.echo(f"{f.severity}: {f.location}: {f.message}")
    if not findings:
        click.echo(
            f"ok: {len(loaded.tsqs)} token-specific questions, {len(loaded.trees)} trees"
        )
    if any(f.severity == "error" for f in findings):
        sys.exit(1)


@bank.command("paths")
@click.argument("bank_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("tree_id")
def bank_paths(bank_dir, tree_id):
    """Dump every root-to-leaf answer path of a tree with its tag."""
    try:
        loaded = load_bank(bank_dir)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    tree = loaded.trees.get(tree_id)
    if tree is None:
        raise click.ClickException(f"unknown tree {tree_id}")
    for trail, tag in tree_paths(tree):
        steps = " > ".join(f"{node}[{idx}]" for node, idx in trail)
        click.echo(f"{steps} -> {tag.value}")


@main.group()
def qc():
    """Worker administration."""


@qc.command("workers")
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
def qc_workers(data_dir):
    """List workers with status and test accuracy."""
    project = Project.open(data_dir)
    try:
        for worker_id in sorted(project.workers):
            w = project.workers[worker_id]
            acc = f"{w.test_accuracy:.2f}" if w.test_answered else "-"
            click.echo(
                f"{w.worker_id:<12} {w.status.value:<14} tests {w.test_correct}/{w.test_answered} acc {acc}"
            )
    finally:
        project.close()


@qc.command("ban")
@click.argument("worker_id")
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dry-run", is_flag=True, default=False)
def qc_ban(worker_id, data_dir, dry_run):
    """Ban a worker, discarding all their judgments."""
    project = Project.open(data_dir)
    try:
        result = project.ban_worker(worker_id, dry_run=dry_run)
    except ProjectError as exc:
        project.close()
        raise click.ClickException(str(exc))
    project.close()
    click.echo(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
