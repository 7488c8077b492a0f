"""Operator command line.

Exit codes: 0 success, 2 malformed input or configuration, 3 missing artifact,
4 I/O failure, 5 backend transport failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .classify import assign_labels, route
from .config import EngineConfig
from .corpus import (Chunk, CleanDocument, RawDocument, Rejection, chunk_document,
                     clean_document, dedup_corpus)
from .datagen import build_mrc_dataset, run_sop, write_jsonl
from .errors import (ConfigurationError, GeoragError, MissingArtifactError,
                     ProtocolError, SchemaError, TransportError)
from .index import ExpansionMode, VectorIndex
from .metrics import SystemAnswer, load_benchmark, run_benchmark
from .pipeline import answer
from .report import render_figures, render_text_table, write_csv

EXIT_SCHEMA = 2
EXIT_MISSING = 3
EXIT_IO = 4
EXIT_TRANSPORT = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _mapped(fn):
    """Translate typed errors into the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SchemaError as exc:
            _fail(EXIT_SCHEMA, f"line {exc.line}: {exc}" if exc.line else str(exc))
        except ConfigurationError as exc:
            _fail(EXIT_SCHEMA, str(exc))
        except MissingArtifactError as exc:
            _fail(EXIT_MISSING, str(exc))
        except (TransportError, ProtocolError) as exc:
            _fail(EXIT_TRANSPORT, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config JSON path (falls back to $GEORAG_CONFIG, then defaults).")
@click.option("--seed", type=int, default=None,
              help="Override the configured seed everywhere it applies.")
@click.pass_context
def main(ctx, config_path, seed):
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed


def _load_config(ctx) -> EngineConfig:
    cfg = EngineConfig.load(ctx.obj.get("config_path"))
    if ctx.obj.get("seed") is not None:
        cfg = cfg.with_seed(ctx.obj["seed"])
    return cfg


@main.command()
@click.argument("input_path", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
@_mapped
def ingest(ctx, input_path, out_dir):
    """Clean, deduplicate, and chunk a raw-document JSONL file."""
    cfg = _load_config(ctx)
    policy = cfg.cleaning_policy()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    docs: list[CleanDocument] = []
    rejections: list[Rejection] = []
    read = 0
    with open(input_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            read += 1
            raw = RawDocument.from_json(line, lineno=lineno)
            result = clean_document(raw, policy)
            if isinstance(result, Rejection):
                rejections.append(result)
            else:
                docs.append(result)

    kept, clusters = dedup_corpus(docs, cfg.dedup_config())
    deduped = len(docs) - len(kept)

    chunk_cfg = cfg["chunking"]
    chunks: list[Chunk] = []
    for doc in kept:
        chunks.extend(chunk_document(doc, chunk_cfg["max_sentences"],
                                     chunk_cfg["overlap"]))

    with open(out / "cleaned.jsonl", "w", encoding="utf-8") as fh:
        for doc in kept:
            fh.write(doc.to_json() + "\n")
    with open(out / "chunks.jsonl", "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(chunk.to_json() + "\n")
    report = {
        "schema": "georag-ingest-report/1",
        "read": read,
        "accepted": len(docs),
        "rejected": len(rejections),
        "rejections": [{"doc_id": r.doc_id, "reason": r.reason.value, "detail": r.detail}
                       for r in rejections],
        "duplicate_clusters": clusters,
        "deduped": deduped,
        "kept": len(kept),
        "chunks": len(chunks),
        "config_hash": cfg.hash(),
    }
    (out / "ingest_report.json").write_text(
        json.dumps(report, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8")
    click.echo(f"read={read} accepted={len(docs)} rejected={len(rejections)} "
               f"deduped={deduped} kept={len(kept)} chunks={len(chunks)}")


@main.command()
@click.argument("chunks_path", type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Index file (defaults to paths.index from the config).")
@click.pass_context
@_mapped
def index(ctx, chunks_path, out_path):
    """Embed chunks and build the retrieval index."""
    cfg = _load_config(ctx)
    out_path = out_path or cfg["paths"]["index"]
    if not out_path:
        raise ConfigurationError("no index output path; pass --out or set paths.index")
    gateway = cfg.gateway()
    idx = VectorIndex(seed=cfg["seed"])
    chunks = []
    with open(chunks_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                chunks.append(Chunk.from_json(line, lineno=lineno))
    for chunk in chunks:
        idx.upsert(chunk, gateway.embed_one(chunk.text))
    idx.save(out_path)
    click.echo(f"indexed={len(idx)} dim={idx.dim or 0} path={out_path}")


@main.command()
@click.argument("question")
@click.pass_context
@_mapped
def classify(ctx, question):
    """Print dimension probabilities, labels, and the route for a question."""
    cfg = _load_config(ctx)
    clf = cfg.classifier(cfg.gateway())
    probs = clf.classify(question)
    labels = assign_labels(probs, tuple(cfg["pipeline"]["classifier_thresholds"]))
    click.echo(json.dumps({
        "question": question,
        "probs": list(probs.p),
        "labels": list(labels.y),
        "active": [d.label for d in labels.active],
        "route": route(labels).value,
    }, sort_keys=True, ensure_ascii=False))


def _ask_one(question, cfg, deps, pcfg, themes, theme_mode):
    record, trace = answer(question, pcfg, deps, themes=themes,
                           theme_mode=ExpansionMode(theme_mode))
    return record, trace


@main.command()
@click.argument("question", required=False)
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the query trace (JSON; JSONL appends in repl mode).")
@click.option("--mode", type=click.Choice(["single", "repl"]), default="single")
@click.option("--theme", "themes", multiple=True,
              help="Restrict simple-route retrieval to documents under this theme.")
@click.option("--theme-mode", default="equivalent",
              type=click.Choice([m.value for m in ExpansionMode]))
@click.pass_context
@_mapped
def ask(ctx, question, trace_path, mode, themes, theme_mode):
    """Answer a question (single shot or line-oriented REPL on stdin)."""
    cfg = _load_config(ctx)
    deps = cfg.deps()
    pcfg = cfg.pipeline_config()
    if mode == "single":
        if not question:
            raise ConfigurationError("single mode needs a question argument")
        record, trace = _ask_one(question, cfg, deps, pcfg, tuple(themes), theme_mode)
        if trace_path:
            Path(trace_path).write_text(trace.to_json() + "\n", encoding="utf-8")
        click.echo(record.text)
        return
    if question:
        raise ConfigurationError("repl mode reads questions from stdin")
    trace_fh = open(trace_path, "a", encoding="utf-8") if trace_path else None
    try:
        while True:
            if sys.stdin.isatty():
                click.echo("georag> ", err=True, nl=False)
            line = sys.stdin.readline()
            if not line:
                break
            line = line.strip()
            if not line:
                continue
            record, trace = _ask_one(line, cfg, deps, pcfg, tuple(themes), theme_mode)
            if trace_fh:
                trace_fh.write(json.dumps(trace.to_dict(), sort_keys=True,
                                          ensure_ascii=False) + "\n")
            click.echo(record.text)
    finally:
        if trace_fh:
            trace_fh.close()


@main.command()
@click.argument("cleaned_path", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
@_mapped
def datagen(ctx, cleaned_path, out_dir):
    """Run the staged QA construction over a cleaned corpus."""
    cfg = _load_config(ctx)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = []
    with open(cleaned_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                docs.append(CleanDocument.from_json(line, lineno=lineno))
    gateway = cfg.gateway()
    clf = cfg.classifier(gateway)
    sop = run_sop(docs, gateway, clf,
                  thresholds=tuple(cfg["pipeline"]["classifier_thresholds"]))
    idx = cfg.load_index()
    instances = build_mrc_dataset(sop.pairs, idx, gateway, sop,
                                  negatives_per_positive=cfg["datagen"]["negatives_per_positive"],
                                  seed=cfg["seed"], report=sop.report)
    write_jsonl(sop.triples, out / "triples.jsonl")
    write_jsonl(sop.pairs, out / "qa.jsonl")
    write_jsonl(instances, out / "mrc.jsonl")
    (out / "datagen_report.json").write_text(
        json.dumps(sop.report.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)
        + "\n", encoding="utf-8")
    accepted = len(sop.accepted)
    click.echo(f"docs={len(docs)} segments={len(sop.segments)} triples={len(sop.triples)} "
               f"qa={len(sop.pairs)} accepted={accepted} mrc={len(instances)} "
               f"rejections={sop.report.count()}")


@main.command()
@click.argument("dataset_path", type=click.Path())
@click.option("--mode", type=click.Choice(["closed", "open"]), required=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
@_mapped
def bench(ctx, dataset_path, mode, out_dir):
    """Run a benchmark dataset against the configured engine."""
    cfg = _load_config(ctx)
    items = load_benchmark(dataset_path)
    deps = cfg.deps()
    pcfg = cfg.pipeline_config()

    def system(item):
        record, _ = answer(item.prompt_text(), pcfg, deps)
        contexts = tuple(deps.index.get_chunk(cid).text
                         for cid in record.supporting_chunks)
        return SystemAnswer(text=record.text, contexts=contexts)

    metadata = {
        "config_hash": cfg.hash(),
        "backends": {cap: cfg["backends"][cap]["kind"] for cap in
                     ("generate", "embed", "classify", "score")},
    }
    report = run_benchmark(items, system, mode, embedder=deps.gateway,
                           correctness_bar=cfg["metrics"]["correctness_bar"],
                           metadata=metadata)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    table = render_text_table(report)
    (out / "report.txt").write_text(table, encoding="utf-8")
    write_csv(report, out / "report.csv")
    figures = render_figures(report, out)
    click.echo(table, nl=False)
    click.echo(f"report written to {out} ({', '.join(p.name for p in figures)})")


@main.group("config")
def config_group():
    """Configuration utilities."""


@config_group.command("check")
@click.argument("path", required=False, type=click.Path())
@click.pass_context
@_mapped
def config_check(ctx, path):
    """Validate a config file and print its hash."""
    cfg = EngineConfig.load(path or ctx.obj.get("config_path"))
    click.echo(f"ok {cfg.hash()}")


if __name__ == "__main__":
    main()
