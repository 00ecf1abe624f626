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
Ensembles
~~~~~~~~~

Combines the action probabilities of several models, including models
trained elsewhere whose outputs only exist as prediction files.

Prediction file (JSON lines)::

    {"model": "base", "nouns": 300, "verbs": 97}
    {"noun_probs": [...], "uid": "P01_11_0", "verb_probs": [...]}
    {"action_scores": [[...], ...], "uid": "P01_11_1"}

The first line is the header; every following line is one sample carrying
either branch probabilities or a joint V x N score matrix.
"""
import json
import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from cologic import cooccur
from cologic.constants import CLAMP_EPS, Aggregation
from cologic.exceptions import (
    ConfigError,
    DataError,
    ParseError,
    UidMismatch,
    UsageError,
    VocabMismatch,
)
from cologic.io import read_text, write_text
from cologic.trainer import score_predictions

__all__ = [
    "PredictionRecord",
    "PredictionFile",
    "EnsembleConfig",
    "read_predictions",
    "write_predictions",
    "compose_action_scores",
    "aggregate",
    "predictions_from_model",
    "evaluate_predictions",
]

logger = logging.getLogger(__name__)

#: tolerance on the sum of a probability vector or score matrix
SUM_TOLERANCE = 1e-4


class PredictionRecord:
    """
    Predictions for one sample: either ``verb_probs`` and ``noun_probs`` or
    ``action_scores``.
    """

    __slots__ = ("uid", "verb_probs", "noun_probs", "action_scores")

    def __init__(self, uid, verb_probs=None, noun_probs=None, action_scores=None):
        branches = verb_probs is not None and noun_probs is not None
        if branches == (action_scores is not None):
            raise DataError(
                "record {0!r} needs either both branch vectors or action "
                "scores".format(uid)
            )
        self.uid = str(uid)
        self.verb_probs = self.noun_probs = self.action_scores = None
        if branches:
            self.verb_probs = _probabilities(verb_probs, 1, uid, "verb_probs")
            self.noun_probs = _probabilities(noun_probs, 1, uid, "noun_probs")
        else:
            self.action_scores = _probabilities(action_scores, 2, uid, "action_scores")

    @property
    def shape(self):
        if self.action_scores is not None:
            return self.action_scores.shape
        return (self.verb_probs.size, self.noun_probs.size)

    def to_dict(self):
        doc = {"uid": self.uid}
        if self.action_scores is not None:
            doc["action_scores"] = self.action_scores.tolist()
        else:
            doc["verb_probs"] = self.verb_probs.tolist()
            doc["noun_probs"] = self.noun_probs.tolist()
        return doc

    def __eq__(self, other):
        if not isinstance(other, PredictionRecord):
            return NotImplemented
        return self.uid == other.uid and all(
            _same(getattr(self, name), getattr(other, name))
            for name in ("verb_probs", "noun_probs", "action_scores")
        )

    def __repr__(self):
        return "<PredictionRecord {0} {1}x{2}>".format(self.uid, *self.shape)


def _same(a, b):
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


def _probabilities(values, ndim, uid, what):
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim or not array.size:
        raise DataError("record {0!r}: {1} has the wrong shape".format(uid, what))
    if (array < 0).any() or abs(array.sum() - 1.0) > SUM_TOLERANCE:
        raise DataError(
            "record {0!r}: {1} is not a probability distribution".format(uid, what)
        )
    array.setflags(write=False)
    return array


class PredictionFile:
    "Named, ordered predictions of one model over a vocabulary."

    def __init__(self, model, verbs, nouns, records):
        self.model = str(model)
        self.verbs = int(verbs)
        self.nouns = int(nouns)
        self.records = tuple(records)
        seen = set()
        for record in self.records:
            if record.shape != (self.verbs, self.nouns):
                raise VocabMismatch(
                    "record {0!r} is {1}x{2}, file declares {3}x{4}".format(
                        record.uid, *(record.shape + (self.verbs, self.nouns))
                    )
                )
            if record.uid in seen:
                raise DataError("duplicate uid {0!r}".format(record.uid))
            seen.add(record.uid)

    @property
    def shape(self):
        return (self.verbs, self.nouns)

    def uids(self):
        return [r.uid for r in self.records]

    def by_uid(self):
        return {r.uid: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, PredictionFile):
            return NotImplemented
        return (self.model, self.shape, self.records) == (
            other.model,
            other.shape,
            other.records,
        )

    def __repr__(self):
        return "<PredictionFile {0} {1}x{2} n={3}>".format(
            self.model, self.verbs, self.nouns, len(self)
        )


def write_predictions(predictions, path):
    header = {"model": predictions.model, "verbs": predictions.verbs}
    header["nouns"] = predictions.nouns
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in predictions.records)
    write_text(path, "\n".join(lines) + "\n")


def read_predictions(path):
    """
    Reads a prediction file.  Raises :class:`~cologic.exceptions.ParseError`
    on malformed lines and :class:`~cologic.exceptions.VocabMismatch` when a
    record disagrees with the header.
    """
    lines = read_text(path).splitlines()
    if not lines:
        raise ParseError("{0}: empty prediction file".format(path), line=1)
    try:
        header = json.loads(lines[0])
        model = header["model"]
        verbs, nouns = int(header["verbs"]), int(header["nouns"])
    except (ValueError, KeyError, TypeError):
        raise ParseError("{0}: malformed header".format(path), line=1) from None
    records = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            record = PredictionRecord(
                doc["uid"],
                doc.get("verb_probs"),
                doc.get("noun_probs"),
                doc.get("action_scores"),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError("{0}: {1}".format(path, exc), line=number) from None
        except DataError as exc:
            raise ParseError("{0}: {1}".format(path, exc), line=number) from None
        records.append(record)
    return PredictionFile(model, verbs, nouns, records)


#
# Aggregation
#


def compose_action_scores(record, mask=None):
    """
    Joint V x N scores of one record: the outer product of the branch
    probabilities, or the stored action scores.  With `mask` the result is
    refined (invalid pairs zeroed, then renormalized).
    """
    if record.action_scores is not None:
        scores = np.array(record.action_scores)
    else:
        scores = np.outer(record.verb_probs, record.noun_probs)
    if mask is None:
        return scores
    if mask.shape != scores.shape:
        raise VocabMismatch(
            "mask is {0}x{1}, predictions are {2}x{3}".format(
                *(mask.shape + scores.shape)
            )
        )
    refined, _ = cooccur.refine_scores(mask, scores)
    return refined


@dataclass(frozen=True)
class EnsembleConfig:
    weights: tuple
    mask: object = None
    mode: Aggregation = Aggregation.ARITHMETIC

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        try:
            object.__setattr__(self, "mode", Aggregation(self.mode))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if any(not w >= 0 for w in self.weights):
            raise ConfigError("ensemble weights must be non-negative")
        if not sum(self.weights) > 0:
            raise ConfigError("ensemble weights must not all be zero")

    def normalized_weights(self):
        """
        Weights divided by their sum, computed exactly and rounded once, so
        that rescaling the weights by a power of two or any exactly
        representable factor changes nothing.
        """
        exact = [Fraction(w) for w in self.weights]
        total = sum(exact)
        return [float(w / total) for w in exact]


def _combine(stack, weights, mode):
    # sorting along the model axis makes the sum independent of input order
    if mode is Aggregation.ARITHMETIC:
        weighted = np.sort(stack * weights[:, None, None], axis=0)
        combined = weighted.sum(axis=0)
    else:
        logs = np.log(np.maximum(stack, CLAMP_EPS)) * weights[:, None, None]
        combined = np.exp(np.sort(logs, axis=0).sum(axis=0))
        combined[((stack == 0) & (weights[:, None, None] > 0)).any(axis=0)] = 0.0
        if not combined.sum() > 0:
            return _combine(stack, weights, Aggregation.ARITHMETIC)
    return combined / combined.sum()


def aggregate(files, cfg, name="ensemble"):
    """
    Weighted mean of the composed action scores of every file, per uid.
    Output records are ordered by uid and sum to 1.

    Raises :class:`~cologic.exceptions.UsageError` if the number of weights
    differs from the number of files,
    :class:`~cologic.exceptions.VocabMismatch` for files over different
    vocabularies and :class:`~cologic.exceptions.UidMismatch` listing the
    uids not present in every file.
    """
    files = list(files)
    if not files:
        raise UsageError("nothing to aggregate")
    if len(cfg.weights) != len(files):
        raise UsageError(
            "{0} weights given for {1} prediction files".format(
                len(cfg.weights), len(files)
            )
        )
    shape = files[0].shape
    for other in files[1:]:
        if other.shape != shape:
            raise VocabMismatch(
                "{0} is {1}x{2}, {3} is {4}x{5}".format(
                    files[0].model, *shape, other.model, *other.shape
                )
            )
    uid_sets = [set(f.uids()) for f in files]
    everywhere = set.intersection(*uid_sets)
    anywhere = set.union(*uid_sets)
    if everywhere != anywhere:
        raise UidMismatch(anywhere - everywhere)

    weights = np.array(cfg.normalized_weights())
    lookups = [f.by_uid() for f in files]
    records = []
    for uid in sorted(everywhere):
        stack = np.stack([compose_action_scores(t[uid], cfg.mask) for t in lookups])
        records.append(
            PredictionRecord(uid, action_scores=_combine(stack, weights, cfg.mode))
        )
    logger.info(
        "aggregated %d samples from %s", len(records), ", ".join(f.model for f in files)
    )
    return PredictionFile(name, shape[0], shape[1], records)


def predictions_from_model(checkpoint, dataset, name="model"):
    "Runs a trained checkpoint over `dataset`."
    records = []
    for sample in dataset:
        verb_probs, noun_probs = checkpoint.predict(sample)
        records.append(PredictionRecord(sample.uid, verb_probs, noun_probs))
    return PredictionFile(
        name, checkpoint.config.verbs, checkpoint.config.nouns, records
    )


def evaluate_predictions(predictions, annotations, mask=None, reference=None):
    """
    Scores a prediction file against ``uid,verb_id,noun_id`` annotations
    with :func:`~cologic.trainer.score_predictions`.  Branch probabilities
    of action-score records are their marginals.
    """
    labels = {a.uid: (a.verb_id, a.noun_id) for a in annotations}
    lookup = predictions.by_uid()
    if set(labels) != set(lookup):
        raise UidMismatch(set(labels) ^ set(lookup))
    uids = sorted(lookup)
    scores = np.stack([compose_action_scores(lookup[u]) for u in uids])
    verb_probs = scores.sum(axis=2)
    noun_probs = scores.sum(axis=1)
    return score_predictions(
        verb_probs,
        noun_probs,
        [labels[u] for u in uids],
        mask=mask,
        reference=reference,
        name=predictions.model,
        action_scores=scores,
    )
