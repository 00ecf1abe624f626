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
Co-occurrence
~~~~~~~~~~~~~

Verb-noun co-occurrence counts, the validity masks derived from them, the
constraint sets generated from masks and the post-hoc refinement of action
scores.

File formats::

    matrix CSV     verbs=<V>,nouns=<N>   then V rows of N integers
    mask CSV       same, entries 0 or 1
    annotations    CSV with header uid,verb_id,noun_id
    heatmap        binary PGM (P5)

Matrices and masks are immutable values; every function here is pure.
"""
import csv
import functools
import io as _io
import logging
import re
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from cologic.constants import Branch, ConstraintMode
from cologic.exceptions import (
    BoundsError,
    ConfigError,
    DataError,
    DimensionMismatch,
    EmptyMask,
    InvalidConstraintSet,
    ParseError,
    VocabMismatch,
)
from cologic.formula import And, Atom, ConstraintSet, Not, Or
from cologic.io import read_json, read_text, write_bytes, write_text

__all__ = [
    "Vocabulary",
    "CooccurrenceMatrix",
    "ValidityMask",
    "Annotation",
    "RefinedScores",
    "read_annotations",
    "write_annotations",
    "build_from_annotations",
    "binarize",
    "union",
    "mask_stats",
    "MaskStats",
    "to_constraints",
    "refine_action_scores",
    "refine_batch",
    "refine_scores",
    "save_csv",
    "load_csv",
    "save_mask",
    "load_mask",
    "render_heatmap",
    "save_heatmap",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Vocabulary:
    "Ordered, unique verb and noun class names."

    verbs: tuple
    nouns: tuple

    def __post_init__(self):
        for name in ("verbs", "nouns"):
            names = tuple(str(x) for x in getattr(self, name))
            if not names:
                raise ConfigError("a vocabulary needs at least one of {0}".format(name))
            if len(set(names)) != len(names):
                raise ConfigError("{0} contain duplicate names".format(name))
            object.__setattr__(self, name, names)

    @property
    def shape(self):
        return (len(self.verbs), len(self.nouns))

    @classmethod
    def anonymous(cls, verbs, nouns):
        "Placeholder names ``verb0``... / ``noun0``... for a V x N vocabulary."
        return cls(
            tuple("verb{0}".format(i) for i in range(verbs)),
            tuple("noun{0}".format(j) for j in range(nouns)),
        )

    @classmethod
    def load(cls, path):
        "Reads ``{\"verbs\": [...], \"nouns\": [...]}``."
        doc = read_json(path, usage=False)
        try:
            return cls(tuple(doc["verbs"]), tuple(doc["nouns"]))
        except (KeyError, TypeError):
            raise ParseError(
                '{0}: expected an object with "verbs" and "nouns" lists'.format(path)
            ) from None


def _check_dims(array, vocab, what):
    if array.ndim != 2 or array.shape != vocab.shape:
        raise DimensionMismatch(
            "{0} is {1}, vocabulary is {2}x{3}".format(what, array.shape, *vocab.shape)
        )


class CooccurrenceMatrix:
    """
    V x N non-negative pair counts.  ``counts`` is a read-only int64 array.
    """

    def __init__(self, counts, vocab=None):
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 2:
            raise DimensionMismatch("counts must be a V x N matrix")
        if vocab is None:
            vocab = Vocabulary.anonymous(*counts.shape)
        _check_dims(counts, vocab, "count matrix")
        if (counts < 0).any():
            raise DataError("counts must be non-negative")
        counts.setflags(write=False)
        self.counts = counts
        self.vocab = vocab

    @property
    def shape(self):
        return self.counts.shape

    def total(self):
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, CooccurrenceMatrix):
            return NotImplemented
        return self.vocab == other.vocab and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return "<CooccurrenceMatrix {0}x{1} total={2}>".format(
            self.shape[0], self.shape[1], self.total()
        )


class ValidityMask:
    """
    V x N booleans, true for pairs that may occur.  At least one entry must
    be valid.
    """

    def __init__(self, valid, vocab=None):
        valid = np.array(valid, dtype=bool)
        if valid.ndim != 2:
            raise DimensionMismatch("a validity mask must be a V x N matrix")
        if vocab is None:
            vocab = Vocabulary.anonymous(*valid.shape)
        _check_dims(valid, vocab, "validity mask")
        if not valid.any():
            raise EmptyMask("the validity mask has no valid pair")
        valid.setflags(write=False)
        self.valid = valid
        self.vocab = vocab

    @property
    def shape(self):
        return self.valid.shape

    def count(self):
        return int(self.valid.sum())

    def density(self):
        return self.count() / self.valid.size

    def __eq__(self, other):
        if not isinstance(other, ValidityMask):
            return NotImplemented
        return self.vocab == other.vocab and np.array_equal(self.valid, other.valid)

    def __repr__(self):
        return "<ValidityMask {0}x{1} valid={2}>".format(
            self.shape[0], self.shape[1], self.count()
        )


Annotation = namedtuple("Annotation", ("uid", "verb_id", "noun_id"))

RefinedScores = namedtuple("RefinedScores", ("scores", "fallback"))

MaskStats = namedtuple("MaskStats", ("valid", "total", "density"))


def read_annotations(path):
    """
    Reads an annotation CSV with the header ``uid,verb_id,noun_id`` (extra
    columns are ignored) into a list of :class:`Annotation`.
    """
    reader = csv.DictReader(_io.StringIO(read_text(path)))
    required = {"uid", "verb_id", "noun_id"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise ParseError(
            "{0}: header must contain uid,verb_id,noun_id".format(path), line=1
        )
    records = []
    for row in reader:
        try:
            records.append(
                Annotation(row["uid"], int(row["verb_id"]), int(row["noun_id"]))
            )
        except (TypeError, ValueError):
            raise ParseError(
                "{0}: malformed annotation row".format(path), line=reader.line_num
            ) from None
    return records


def write_annotations(records, path):
    "Writes :class:`Annotation` records in the format :func:`read_annotations` reads."
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(Annotation._fields)
    writer.writerows(records)
    write_text(path, out.getvalue())


def build_from_annotations(records, vocab):
    """
    Counts ``(verb_id, noun_id)`` records into a
    :class:`CooccurrenceMatrix`.  Records may also be :class:`Annotation`
    tuples.

    Raises :class:`~cologic.exceptions.BoundsError` naming the first record
    outside the vocabulary.
    """
    pairs = np.array(
        [(r[-2], r[-1]) if len(r) == 3 else tuple(r) for r in records],
        dtype=np.int64,
    ).reshape(-1, 2)
    limits = np.array(vocab.shape)
    bad = np.flatnonzero(((pairs < 0) | (pairs >= limits)).any(axis=1))
    if bad.size:
        first = int(bad[0])
        raise BoundsError(
            "record {0}: pair {1} is outside a {2}x{3} vocabulary".format(
                first, tuple(int(x) for x in pairs[first]), *vocab.shape
            ),
            record=first,
        )
    counts = np.zeros(vocab.shape, dtype=np.int64)
    np.add.at(counts, (pairs[:, 0], pairs[:, 1]), 1)
    return CooccurrenceMatrix(counts, vocab)


def binarize(matrix, min_count=1):
    """
    Marks pairs seen at least `min_count` times as valid.

    Raises :class:`~cologic.exceptions.EmptyMask` when no pair qualifies.
    """
    if min_count < 1:
        raise ConfigError("min_count must be at least 1")
    valid = matrix.counts >= min_count
    if not valid.any():
        raise EmptyMask("no verb-noun pair occurs {0} times or more".format(min_count))
    mask = ValidityMask(valid, matrix.vocab)
    logger.debug("binarized at min_count=%d: %r", min_count, mask)
    return mask


def union(first, second):
    "A pair is valid if either mask says so."
    if first.shape != second.shape:
        raise DimensionMismatch(
            "cannot combine {0} and {1} masks".format(first.shape, second.shape)
        )
    return ValidityMask(first.valid | second.valid, first.vocab)


def mask_stats(mask):
    "Number of valid pairs, number of pairs and their ratio."
    return MaskStats(mask.count(), mask.valid.size, mask.density())


def _pair(verb, noun):
    return And(Atom(Branch.VERB, verb), Atom(Branch.NOUN, noun))


def to_constraints(mask, mode=ConstraintMode.VALID_DISJUNCTION):
    """
    Turns a mask into a :class:`~cologic.formula.ConstraintSet`, visiting
    pairs in row-major order:

    * ``INVALID_NEGATIONS``: one ``!(verb:i & noun:j)`` per invalid pair;
    * ``VALID_DISJUNCTION``: ``(verb:i & noun:j) | ...`` over the valid
      pairs, grouped to the left.

    An all-valid mask has no invalid pairs to negate and raises
    :class:`~cologic.exceptions.InvalidConstraintSet`.
    """
    mode = ConstraintMode(mode)
    verbs, nouns = mask.shape
    if mode is ConstraintMode.INVALID_NEGATIONS:
        invalid = np.argwhere(~mask.valid)
        if not invalid.size:
            raise InvalidConstraintSet(
                "every pair is valid; use the valid-pair disjunction instead"
            )
        formulas = [Not(_pair(i, j)) for i, j in invalid]
    else:
        pairs = (_pair(i, j) for i, j in np.argwhere(mask.valid))
        formulas = [functools.reduce(Or, pairs)]
    return ConstraintSet(formulas, mode, verbs=verbs, nouns=nouns)


def refine_batch(valid, verb_probs, noun_probs):
    """
    Vectorized refinement over samples: `verb_probs` is n x V, `noun_probs`
    n x N.  Returns the n x V x N scores and a boolean fallback flag per
    sample.
    """
    valid = np.asarray(getattr(valid, "valid", valid), dtype=bool)
    verb_probs = np.atleast_2d(np.asarray(verb_probs, dtype=np.float64))
    noun_probs = np.atleast_2d(np.asarray(noun_probs, dtype=np.float64))
    if valid.shape != (verb_probs.shape[1], noun_probs.shape[1]):
        raise DimensionMismatch(
            "mask is {0}, predictions are {1}x{2}".format(
                valid.shape, verb_probs.shape[1], noun_probs.shape[1]
            )
        )
    outer = np.einsum("bi,bj->bij", verb_probs, noun_probs)
    return refine_scores(valid, outer)


def refine_scores(valid, scores):
    """
    Refines joint scores directly: `scores` is V x N or n x V x N.  Returns
    the refined scores and the fallback flags (one per sample).
    """
    valid = np.asarray(getattr(valid, "valid", valid), dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    single = scores.ndim == 2
    scores = scores.reshape((-1,) + scores.shape[-2:])
    if scores.shape[1:] != valid.shape:
        raise DimensionMismatch(
            "mask is {0}, scores are {1}x{2}".format(valid.shape, *scores.shape[1:])
        )
    masked = np.where(valid, scores, 0.0)
    mass = masked.sum(axis=(1, 2))
    fallback = ~(mass > 0.0)
    safe = np.where(fallback, 1.0, mass)
    refined = np.where(fallback[:, None, None], scores, masked / safe[:, None, None])
    if single:
        return refined[0], fallback[0]
    return refined, fallback


def refine_action_scores(mask, assignment):
    """
    Zeroes the joint score of every invalid pair and renormalizes.

    Returns :class:`RefinedScores` ``(scores, fallback)``.  When no
    probability mass lands on a valid pair the plain outer product is
    returned with ``fallback`` set.
    """
    scores, fallback = refine_batch(
        mask, assignment.verb_probs[None, :], assignment.noun_probs[None, :]
    )
    return RefinedScores(scores[0], bool(fallback[0]))


#
# CSV
#

_HEADER = re.compile(r"^verbs=(\d+),nouns=(\d+)$")


def _write_grid(path, grid):
    out = _io.StringIO()
    out.write("verbs={0},nouns={1}\n".format(*grid.shape))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerows(grid.tolist())
    write_text(path, out.getvalue())


def _read_grid(path, vocab, allowed=None):
    lines = read_text(path).splitlines()
    if not lines:
        raise ParseError("{0}: empty file".format(path), line=1)
    header = _HEADER.match(lines[0].strip())
    if not header:
        raise ParseError("{0}: expected a verbs=<V>,nouns=<N> header".format(path), 1)
    shape = (int(header.group(1)), int(header.group(2)))
    if vocab is not None and vocab.shape != shape:
        raise VocabMismatch(
            "{0} declares {1}x{2}, vocabulary is {3}x{4}".format(
                path, *(shape + vocab.shape)
            )
        )
    rows = [line for line in lines[1:] if line.strip()]
    if len(rows) != shape[0]:
        raise ParseError(
            "{0}: expected {1} rows, found {2}".format(path, shape[0], len(rows)),
            line=len(lines) + 1,
        )
    grid = np.zeros(shape, dtype=np.int64)
    for i, cells in enumerate(csv.reader(rows)):
        line = i + 2
        if len(cells) != shape[1]:
            raise ParseError(
                "{0}: expected {1} values, found {2}".format(
                    path, shape[1], len(cells)
                ),
                line=line,
            )
        try:
            values = [int(c) for c in cells]
        except ValueError:
            raise ParseError("{0}: non-integer value".format(path), line=line) from None
        if allowed is not None and not set(values) <= allowed:
            raise ParseError("{0}: mask entries must be 0 or 1".format(path), line=line)
        if min(values) < 0:
            raise ParseError("{0}: negative count".format(path), line=line)
        grid[i] = values
    return grid


def save_csv(matrix, path):
    _write_grid(path, matrix.counts)


def load_csv(path, vocab=None):
    """
    Reads a count matrix.  If `vocab` is given its size must match the
    header, otherwise :class:`~cologic.exceptions.VocabMismatch` is raised.
    """
    return CooccurrenceMatrix(_read_grid(path, vocab), vocab)


def save_mask(mask, path):
    _write_grid(path, mask.valid.astype(np.int64))


def load_mask(path, vocab=None):
    return ValidityMask(_read_grid(path, vocab, allowed={0, 1}).astype(bool), vocab)


#
# Heatmap
#


def render_heatmap(matrix, verbs, nouns, block=8):
    """
    Renders the counts of the selected verbs (rows) and nouns (columns) as a
    binary PGM image, one `block` x `block` square per cell.  Intensity is
    proportional to ``log(1 + count)`` over the selection; zero counts are
    black and any non-zero count is at least intensity 1.

    Raises :class:`~cologic.exceptions.BoundsError` for ids outside the
    matrix.
    """
    if block < 1:
        raise ConfigError("block size must be positive")
    verbs = [int(v) for v in verbs]
    nouns = [int(n) for n in nouns]
    if not verbs or not nouns:
        raise BoundsError("the selection is empty")
    selections = ((verbs, matrix.shape[0], "verb"), (nouns, matrix.shape[1], "noun"))
    for ids, limit, name in selections:
        for position, class_id in enumerate(ids):
            if not 0 <= class_id < limit:
                raise BoundsError(
                    "{0} id {1} is outside 0..{2}".format(name, class_id, limit - 1),
                    record=position,
                )
    cells = matrix.counts[np.ix_(verbs, nouns)]
    intensity = np.log1p(cells.astype(np.float64))
    peak = intensity.max()
    if peak > 0:
        gray = np.rint(255.0 * intensity / peak).astype(np.uint8)
        gray = np.maximum(gray, (cells > 0).astype(np.uint8))
    else:
        gray = np.zeros(cells.shape, dtype=np.uint8)
    image = np.kron(gray, np.ones((block, block), dtype=np.uint8))
    height, width = image.shape
    header = "P5\n{0} {1}\n255\n".format(width, height).encode("ascii")
    return header + image.tobytes()


def save_heatmap(matrix, verbs, nouns, path, block=8):
    write_bytes(path, render_heatmap(matrix, verbs, nouns, block=block))
