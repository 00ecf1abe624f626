#
#  Copyright © 2023 The Cologic contributors
#
#  This file is part of Cologic.
#
#  Cologic is free software under terms of the GNU Lesser
#  General Public License version 3 (LGPLv3) as published by the Free
#  Software Foundation. See the file README.rst for copying conditions.
#
"""
Command-line interface
~~~~~~~~~~~~~~~~~~~~~~

Every subcommand is a plain function; flags come from keyword-only
arguments.  Library errors end the process with the code of their
:class:`~cologic.constants.ExitStatus`:

* 0 -- success;
* 1 -- usage error (bad flags, malformed configuration);
* 2 -- data or validation error;
* 3 -- network error.
"""
import functools
import logging
import os
import sys
import types

import argh

from cologic import cooccur, dsl, ensemble, oracle, trainer
from cologic.constants import LOG_LEVEL_ENV, Aggregation, ConstraintMode, ExitStatus
from cologic.exceptions import CologicError, DataError, UsageError
from cologic.utils import parse_id_list

__all__ = ["CologicParser", "get_parser", "main"]

logger = logging.getLogger(__name__)


class CologicParser(argh.ArghParser):
    "Reports bad command lines with :attr:`ExitStatus.USAGE`."

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitStatus.USAGE, "{0}: error: {1}\n".format(self.prog, message))


def translate_errors(function):
    """
    Turns library exceptions raised by a command into
    :class:`argh.CommandError` with the matching exit code, so they are
    printed without a traceback.
    """

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            result = function(*args, **kwargs)
            if isinstance(result, types.GeneratorType):
                result = list(result)
            return result
        except CologicError as exc:
            raise argh.CommandError(str(exc), code=int(exc.code)) from None
        except OSError as exc:
            error = DataError(str(exc))
            raise argh.CommandError(str(error), code=int(error.code)) from None

    return wrapper


def _error_message(exc):
    return "error: {0}".format(exc)


def command(function):
    "Common wrapping of every subcommand."
    return argh.wrap_errors(processor=_error_message)(translate_errors(function))


def _load_mask(path, vocab=None):
    return cooccur.load_mask(path, vocab) if path else None


#
# Commands
#


@argh.arg("--annotations", help="CSV with the columns uid,verb_id,noun_id")
@argh.arg("--vocab", help='JSON {"verbs": [...], "nouns": [...]}')
@argh.arg("--out", help="where to write the co-occurrence matrix CSV")
@argh.arg("--min-count", help="occurrences needed for a pair to count as valid")
@argh.arg("--mask-out", help="validity mask CSV (default: <out>.mask.csv)")
@command
def build_matrix(*, annotations, vocab, out, min_count=1, mask_out=None):
    "Counts verb-noun pairs in annotations and derives the validity mask."
    vocabulary = cooccur.Vocabulary.load(vocab)
    records = cooccur.read_annotations(annotations)
    matrix = cooccur.build_from_annotations(records, vocabulary)
    mask = cooccur.binarize(matrix, min_count)
    cooccur.save_csv(matrix, out)
    mask_out = mask_out or os.path.splitext(out)[0] + ".mask.csv"
    cooccur.save_mask(mask, mask_out)
    stats = cooccur.mask_stats(mask)
    yield "{0} records, {1} of {2} pairs valid ({3:.2%})".format(
        len(records), stats.valid, stats.total, stats.density
    )


@argh.arg("--mask", help="validity mask CSV")
@argh.arg(
    "--mode",
    choices=[m.value for m in ConstraintMode],
    help="one negated formula per invalid pair, or one disjunction of valid pairs",
)
@argh.arg("--out", help="where to write the constraint file")
@command
def gen_constraints(*, mask, mode, out):
    "Turns a validity mask into constraint formulas."
    constraints = cooccur.to_constraints(cooccur.load_mask(mask), ConstraintMode(mode))
    dsl.save(constraints, out)
    yield "{0} formulas written to {1}".format(len(constraints), out)


def _resolve_constraints(choice, data, mode):
    if choice == "none":
        return None
    if choice == "source":
        return cooccur.to_constraints(trainer.observed_mask(data.source), mode)
    return dsl.load(choice)


@argh.arg("--config", help="experiment JSON file")
@argh.arg(
    "--constraints",
    help="constraint file, 'source' to derive them from the source "
    "annotations, or 'none' to train without the logic loss",
)
@argh.arg("--out", help="output directory")
@command
def train(*, config, constraints, out):
    """
    Generates the synthetic experiment, trains on it and writes the
    checkpoint, metrics, loss history, target predictions and labels.
    """
    experiment = trainer.load_experiment(config)
    data = trainer.gen_synthetic(experiment.synthetic)
    constraint_set = _resolve_constraints(
        constraints, data, experiment.train.constraint_mode
    )
    result = trainer.train(
        experiment.train,
        data.source,
        data.target,
        constraint_set,
        reference=data.mask,
    )
    os.makedirs(out, exist_ok=True)
    name = "Base" if constraint_set is None else "Base+LR"
    metrics = result.metrics
    metrics = trainer.Metrics(name, *metrics.scores())
    result.checkpoint.save(os.path.join(out, "checkpoint"))
    trainer.write_report([metrics], os.path.join(out, "metrics"))
    trainer.write_history(result.history, os.path.join(out, "history.csv"))
    predictions = ensemble.predictions_from_model(result.checkpoint, data.target, name)
    ensemble.write_predictions(predictions, os.path.join(out, "predictions.jsonl"))
    cooccur.write_annotations(
        data.target.annotations(), os.path.join(out, "target_labels.csv")
    )
    yield "action top-1 {0:.4f}, invalid rate {1:.4f}".format(
        metrics.action_top1, metrics.invalid_rate
    )


@argh.arg("--vocab", help='JSON {"verbs": [...], "nouns": [...]}')
@argh.arg("--config", help="oracle JSON file (endpoint, model, prompt, cache...)")
@argh.arg("--out", help="where to write the validity mask CSV")
@argh.arg("--mock", help="answer from this rule file instead of the network")
@argh.arg("--union", help="mask CSV to combine with the answers (pair valid in either)")
@argh.arg("--unknown-valid", help="count unanswerable pairs as valid")
@command
def llm_matrix(*, vocab, config, out, mock=None, union=None, unknown_valid=False):
    "Asks a language model which verb-noun pairs make sense."
    vocabulary = cooccur.Vocabulary.load(vocab)
    settings = oracle.OracleConfig.load(config)
    if mock:
        client = oracle.MockClient.load(mock)
    else:
        client = oracle.OpenAIChatClient(settings)
    result = oracle.query_matrix(vocabulary, settings, client, unknown_valid)
    mask = result.mask
    if union:
        mask = cooccur.union(mask, cooccur.load_mask(union, vocabulary))
    cooccur.save_mask(mask, out)
    stats = cooccur.mask_stats(mask)
    yield "{0} of {1} pairs valid, {2} unknown".format(
        stats.valid, stats.total, len(result.unknown)
    )
    for verb_id, noun_id in result.unknown:
        yield "unknown\t{0}\t{1}".format(
            vocabulary.verbs[verb_id], vocabulary.nouns[noun_id]
        )


@argh.arg("--inputs", nargs="+", help="prediction files")
@argh.arg("--weights", nargs="+", type=float, help="one weight per input")
@argh.arg("--out", help="where to write the combined predictions")
@argh.arg("--mask", help="validity mask CSV used to refine every input")
@argh.arg(
    "--mode",
    choices=[a.value for a in Aggregation],
    help="weighted mean of probabilities or of log-probabilities",
)
@argh.arg("--name", help="model name recorded in the output")
@command
def ensemble_(
    *,
    inputs,
    weights,
    out,
    mask=None,
    mode=Aggregation.ARITHMETIC.value,
    name="ensemble",
):
    "Combines the action probabilities of several models."
    files = [ensemble.read_predictions(path) for path in inputs]
    refine = _load_mask(mask)
    settings = ensemble.EnsembleConfig(tuple(weights), refine, Aggregation(mode))
    combined = ensemble.aggregate(files, settings, name)
    ensemble.write_predictions(combined, out)
    yield "{0} samples combined from {1} models".format(len(combined), len(files))


@argh.arg("--pred", help="prediction file")
@argh.arg("--labels", help="CSV with the columns uid,verb_id,noun_id")
@argh.arg("--mask", help="validity mask CSV used to refine the action scores")
@argh.arg("--out", help="write <out>.md and <out>.csv reports")
@command
def eval_(*, pred, labels, mask=None, out=None):
    "Scores a prediction file."
    predictions = ensemble.read_predictions(pred)
    annotations = cooccur.read_annotations(labels)
    metrics = ensemble.evaluate_predictions(predictions, annotations, _load_mask(mask))
    if out:
        trainer.write_report([metrics], out)
    for name, value in zip(trainer.Metrics.SCORES, metrics.scores()):
        yield "{0}\t{1!r}".format(name, value)


@argh.arg("--matrix", help="co-occurrence matrix CSV")
@argh.arg("--verbs", help="verb ids to show, e.g. 0-19 or 1,4,7")
@argh.arg("--nouns", help="noun ids to show, e.g. 0-19 or 1,4,7")
@argh.arg("--out", help="where to write the PGM image")
@argh.arg("--block", help="pixels per cell side")
@command
def heatmap(*, matrix, verbs, nouns, out, block=8):
    "Renders a selection of the matrix as a grayscale image."
    counts = cooccur.load_csv(matrix)
    verb_ids = parse_id_list(verbs)
    noun_ids = parse_id_list(nouns)
    cooccur.save_heatmap(counts, verb_ids, noun_ids, out, block)
    yield "{0}x{1} cells written to {2}".format(len(verb_ids), len(noun_ids), out)


@argh.arg("--out", help="output directory")
@argh.arg("--config", help="experiment JSON file (default: the built-in one)")
@argh.arg("--seeds", help="number of synthetic draws per variant")
@argh.arg("--refine", help="refine action scores with the constraint mask")
@argh.arg(
    "--llm-mask",
    help="mask CSV from llm-matrix; the third row then uses it (Base+LR+LLM)",
)
@command
def ablate(*, out, config=None, seeds=5, refine=False, llm_mask=None):
    """
    Compares Base, Base+LR and Base+LR+Oracle (or Base+LR+LLM) over several
    seeds and writes the comparison table.
    """
    if seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if config:
        experiment = trainer.load_experiment(config)
    else:
        experiment = trainer.Experiment.desk()
    knowledge = _load_mask(llm_mask)
    rows = trainer.run_ablation(experiment, seeds, refine, knowledge)
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, "ablation")
    trainer.write_report(rows, stem)
    with open(stem + ".md", encoding="utf-8") as f:
        yield f.read().rstrip("\n")


argh.named("ensemble")(ensemble_)
argh.named("eval")(eval_)

COMMANDS = [
    build_matrix,
    gen_constraints,
    train,
    llm_matrix,
    ensemble_,
    eval_,
    heatmap,
    ablate,
]


def get_parser():
    parser = CologicParser(
        prog="cologic",
        description="Co-occurrence constraints for domain-adaptive action recognition.",
    )
    parser.add_commands(COMMANDS)
    return parser


def configure_logging():
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    configure_logging()
    get_parser().dispatch(argv=argv, add_help_command=False)
