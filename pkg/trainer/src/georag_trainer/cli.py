"""Command line entry points: train both model kinds, serve artifacts."""

from __future__ import annotations

import functools
import json
import sys

import click

from .artifacts import load_artifact
from .errors import ConfigError, DatasetError, MissingArtifactError
from .train import TrainConfig, train_classifier, train_evaluator

# exit codes: 2 bad config or dataset, 3 missing artifact, 4 I/O failure
_EXIT_CODES = ((MissingArtifactError, 3), (ConfigError, 2), (DatasetError, 2),
               (OSError, 4))


def _mapped(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except tuple(exc for exc, _ in _EXIT_CODES) as err:
            code = next(c for exc, c in _EXIT_CODES if isinstance(err, exc))
            click.echo(f"error: {err}", err=True)
            sys.exit(code)

    return wrapper


def _hyperparameters(fn):
    options = [
        click.option("--learning-rate", type=float, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--max-seq-len", type=int, default=None),
        click.option("--n-features", type=int, default=None),
        click.option("--hidden-dim", type=int, default=None),
        click.option("--seed", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _overrides(kwargs) -> dict:
    names = ("learning_rate", "batch_size", "epochs", "max_seq_len",
             "n_features", "hidden_dim", "seed")
    return {k: kwargs[k] for k in names if kwargs[k] is not None}


def _report(result) -> None:
    click.echo(json.dumps({"artifact_dir": str(result.artifact_dir),
                           **result.final}, sort_keys=True))


@click.group()
def main():
    """Train and serve the dimension tagging and relevance scoring models."""


@main.command("train-classifier")
@click.argument("dataset", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@_hyperparameters
@_mapped
def train_classifier_cmd(dataset, out_dir, **kwargs):
    """Fit the question tagger on a labeled question file."""
    cfg = TrainConfig.for_classifier(**_overrides(kwargs))
    _report(train_classifier(dataset, cfg, out_dir))


@main.command("train-evaluator")
@click.argument("mrc", type=click.Path())
@click.argument("chunks", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@_hyperparameters
@_mapped
def train_evaluator_cmd(mrc, chunks, out_dir, **kwargs):
    """Fit the pair scorer on reading-comprehension instances."""
    cfg = TrainConfig.for_evaluator(**_overrides(kwargs))
    _report(train_evaluator(mrc, chunks, cfg, out_dir))


@main.command()
@click.option("--classifier", "classifier_dir", type=click.Path(), default=None)
@click.option("--evaluator", "evaluator_dir", type=click.Path(), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True, type=int)
@_mapped
def serve(classifier_dir, evaluator_dir, host, port):
    """Serve trained artifacts over HTTP."""
    if classifier_dir is None and evaluator_dir is None:
        raise ConfigError("provide --classifier and/or --evaluator")
    classifier = load_artifact(classifier_dir) if classifier_dir else None
    evaluator = load_artifact(evaluator_dir) if evaluator_dir else None
    if classifier is not None and classifier.kind != "classifier":
        raise ConfigError(f"--classifier points at a {classifier.kind} artifact")
    if evaluator is not None and evaluator.kind != "evaluator":
        raise ConfigError(f"--evaluator points at a {evaluator.kind} artifact")

    from .serve import run

    run(classifier, evaluator, host, port)


if __name__ == "__main__":
    main()
