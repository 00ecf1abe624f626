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
Training
~~~~~~~~

Synthetic data with a controllable domain shift, the SGD training loop with
a step learning-rate schedule, evaluation and reports.

An experiment file is a JSON object::

    {
        "synthetic": {"verbs": 12, "nouns": 20, "pairs": 40, ...},
        "train": {"epochs": 30, "lr0": 0.003, ..., "model": {"h": 32, ...}}
    }

The model's ``verbs``, ``nouns`` and ``d_in`` default to the synthetic
data's.
"""
import csv
import io as _io
import logging
import math
from collections import namedtuple
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from cologic import cooccur
from cologic.constants import (
    DEFAULT_BATCH,
    DEFAULT_EPOCHS,
    DEFAULT_LR0,
    DEFAULT_LR_DROPS,
    LR_DROP_FACTOR,
    ConstraintMode,
    Domain,
    TNorm,
)
from cologic.diffgraph import backward
from cologic.exceptions import ConfigError, DimensionMismatch, ParseError
from cologic.formula import Semantics
from cologic.io import read_json, read_text, write_text
from cologic.model import Checkpoint, FrameFeatures, ModelConfig, forward, init_params
from cologic.model import total_loss
from cologic.utils import hits_at, split_batches, top_k

__all__ = [
    "SyntheticConfig",
    "TrainConfig",
    "Experiment",
    "Dataset",
    "SyntheticData",
    "EpochLoss",
    "Metrics",
    "TrainResult",
    "load_experiment",
    "gen_synthetic",
    "observed_mask",
    "lr_at",
    "train",
    "evaluate",
    "score_predictions",
    "write_report",
    "read_report_csv",
    "write_history",
    "run_ablation",
]

logger = logging.getLogger(__name__)


def _from_dict(cls, doc, what):
    if not isinstance(doc, dict):
        raise ConfigError("{0} settings must be a JSON object".format(what))
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(
            "unknown {0} settings: {1}".format(what, ", ".join(sorted(unknown)))
        )
    return doc


#
# Configuration
#


@dataclass(frozen=True)
class SyntheticConfig:
    """
    Shape of a synthetic source/target pair of datasets.

    ``pairs`` verb-noun pairs are valid.  Every sample is the sum of a verb
    prototype and a noun prototype plus per-frame Gaussian noise; target
    prototypes are translated along one random direction by ``shift``
    standard deviations per feature.  ``unseen_fraction`` of the target
    samples come from valid pairs that never appear in the source.
    """

    verbs: int = 12
    nouns: int = 20
    pairs: int = 40
    d_in: int = 16
    frames: tuple = (2, 6)
    n_source: int = 240
    n_target: int = 120
    shift: float = 1.0
    noise_sigma: float = 2.0
    unseen_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(int(n) for n in self.frames))
        self.validate()

    def validate(self):
        if min(self.verbs, self.nouns, self.d_in) < 1:
            raise ConfigError("verbs, nouns and d_in must be at least 1")
        if not 1 <= self.pairs <= self.verbs * self.nouns:
            raise ConfigError(
                "pairs must lie in [1, {0}]".format(self.verbs * self.nouns)
            )
        if len(self.frames) != 2 or not 1 <= self.frames[0] <= self.frames[1]:
            raise ConfigError("frames must be a range [lo, hi] with 1 <= lo <= hi")
        if self.n_source < 1 or self.n_target < 0:
            raise ConfigError("need at least one source sample")
        if self.shift < 0:
            raise ConfigError("shift must be non-negative")
        if not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be positive")
        if not 0 <= self.unseen_fraction <= 1:
            raise ConfigError("unseen_fraction must lie in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.held_out_pairs() >= self.pairs:
            raise ConfigError(
                "{0} valid pairs leave none for the source after holding out "
                "{1}".format(self.pairs, self.held_out_pairs())
            )

    def unseen_samples(self):
        return int(round(self.unseen_fraction * self.n_target))

    def held_out_pairs(self):
        if not self.unseen_samples():
            return 0
        return max(1, math.ceil(self.unseen_fraction * self.pairs))

    @classmethod
    def from_dict(cls, doc):
        return cls(**_from_dict(cls, doc, "synthetic"))

    def to_dict(self):
        doc = asdict(self)
        doc["frames"] = list(self.frames)
        return doc


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    epochs: int = DEFAULT_EPOCHS
    lr0: float = DEFAULT_LR0
    lr_drops: tuple = DEFAULT_LR_DROPS
    lr_factor: float = LR_DROP_FACTOR
    batch: int = DEFAULT_BATCH
    constraint_mode: ConstraintMode = ConstraintMode.VALID_DISJUNCTION
    tnorm: TNorm = TNorm.PRODUCT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_drops", tuple(int(e) for e in self.lr_drops))
        try:
            object.__setattr__(
                self, "constraint_mode", ConstraintMode(self.constraint_mode)
            )
            object.__setattr__(self, "tnorm", TNorm(self.tnorm))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.validate()

    def validate(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if not self.lr_factor > 0:
            raise ConfigError("lr_factor must be positive")
        if self.batch < 1:
            raise ConfigError("batch must be at least 1")
        if list(self.lr_drops) != sorted(self.lr_drops):
            raise ConfigError("lr_drops must be sorted ascending")
        if self.epochs and any(not 1 <= e <= self.epochs for e in self.lr_drops):
            raise ConfigError("lr_drops must lie in [1, {0}]".format(self.epochs))

    @property
    def semantics(self):
        return Semantics(self.tnorm)

    @classmethod
    def from_dict(cls, doc, defaults=None):
        """
        `defaults` fills model settings missing from ``doc["model"]``
        (the data-dependent dimensions).
        """
        doc = dict(_from_dict(cls, doc, "train"))
        model = dict(defaults or {})
        model.update(doc.pop("model", {}))
        doc["model"] = ModelConfig.from_dict(model)
        return cls(**doc)

    def to_dict(self):
        doc = asdict(self)
        doc["model"] = self.model.to_dict()
        doc["lr_drops"] = list(self.lr_drops)
        doc["constraint_mode"] = self.constraint_mode.value
        doc["tnorm"] = self.tnorm.value
        return doc


@dataclass(frozen=True)
class Experiment:
    synthetic: SyntheticConfig
    train: TrainConfig

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("an experiment must be a JSON object")
        unknown = set(doc) - {"synthetic", "train"}
        if unknown:
            raise ConfigError(
                "unknown experiment sections: {0}".format(", ".join(sorted(unknown)))
            )
        synthetic = SyntheticConfig.from_dict(doc.get("synthetic", {}))
        dims = {
            "verbs": synthetic.verbs,
            "nouns": synthetic.nouns,
            "d_in": synthetic.d_in,
            "h": 32,
        }
        train_cfg = TrainConfig.from_dict(doc.get("train", {}), defaults=dims)
        model = train_cfg.model
        if (model.verbs, model.nouns, model.d_in) != (
            synthetic.verbs,
            synthetic.nouns,
            synthetic.d_in,
        ):
            raise ConfigError("model dimensions disagree with the synthetic data")
        return cls(synthetic, train_cfg)

    @classmethod
    def desk(cls):
        """
        The small default experiment: the 30-epoch step schedule compressed to
        15 epochs, with a learning rate suited to the synthetic features.
        """
        return cls.from_dict(
            {
                "synthetic": {},
                "train": {"epochs": 15, "lr0": 0.05, "lr_drops": [8, 12], "batch": 8},
            }
        )

    def to_dict(self):
        return {"synthetic": self.synthetic.to_dict(), "train": self.train.to_dict()}


def load_experiment(path):
    "Reads an experiment file; malformed JSON is a usage error."
    return Experiment.from_dict(read_json(path))


#
# Data
#


class Dataset:
    """
    An immutable list of samples from one domain with their ground-truth
    labels.  Target samples do not carry labels themselves; the labels here
    are for evaluation only.

    :ivar mask: ground-truth :class:`~cologic.cooccur.ValidityMask` if
        known.
    """

    __slots__ = ("name", "domain", "samples", "labels", "mask")

    def __init__(self, name, domain, samples, labels, mask=None):
        labels = np.array(labels, dtype=np.int64).reshape(-1, 2)
        if len(labels) != len(samples):
            raise DimensionMismatch(
                "{0} samples but {1} labels".format(len(samples), len(labels))
            )
        labels.setflags(write=False)
        self.name = name
        self.domain = Domain(domain)
        self.samples = tuple(samples)
        self.labels = labels
        self.mask = mask

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def annotations(self):
        return [
            cooccur.Annotation(s.uid, int(v), int(n))
            for s, (v, n) in zip(self.samples, self.labels)
        ]

    def __repr__(self):
        return "<Dataset {0} n={1}>".format(self.name, len(self))


SyntheticData = namedtuple("SyntheticData", ("source", "target", "mask", "held_out"))


def _draw(rng, cfg, prototypes, cells, domain, prefix):
    samples = []
    for index, cell in enumerate(cells):
        verb, noun = divmod(int(cell), cfg.nouns)
        steps = int(rng.integers(cfg.frames[0], cfg.frames[1] + 1))
        noise = rng.normal(scale=cfg.noise_sigma, size=(steps, cfg.d_in))
        labels = (verb, noun) if domain is Domain.SOURCE else None
        uid = "{0}{1:05d}".format(prefix, index)
        samples.append(FrameFeatures(prototypes[cell] + noise, domain, labels, uid))
    labels = np.column_stack(np.divmod(np.asarray(cells, dtype=np.int64), cfg.nouns))
    return samples, labels


def gen_synthetic(cfg):
    """
    Generates ``(source, target, mask, held_out)`` where `mask` marks all
    valid pairs, the held-out ones included, and `held_out` the pairs kept
    out of the source (`None` when there are none).  The result depends
    only on `cfg`.
    """
    rng = np.random.default_rng(cfg.seed)
    verb_protos = rng.normal(size=(cfg.verbs, cfg.d_in))
    noun_protos = rng.normal(size=(cfg.nouns, cfg.d_in))
    direction = rng.normal(size=cfg.d_in)
    direction *= math.sqrt(cfg.d_in) / np.linalg.norm(direction)

    cells = np.sort(rng.choice(cfg.verbs * cfg.nouns, size=cfg.pairs, replace=False))
    held = np.sort(rng.choice(cells, size=cfg.held_out_pairs(), replace=False))
    seen = np.setdiff1d(cells, held)

    prototypes = (verb_protos[:, None, :] + noun_protos[None, :, :]).reshape(
        cfg.verbs * cfg.nouns, cfg.d_in
    )
    source_cells = seen[rng.integers(len(seen), size=cfg.n_source)]
    n_unseen = cfg.unseen_samples()
    target_cells = np.concatenate(
        [
            held[rng.integers(len(held), size=n_unseen)] if n_unseen else [],
            seen[rng.integers(len(seen), size=cfg.n_target - n_unseen)],
        ]
    ).astype(np.int64)
    target_cells = target_cells[rng.permutation(len(target_cells))]

    valid = np.zeros(cfg.verbs * cfg.nouns, dtype=bool)
    valid[cells] = True
    mask = cooccur.ValidityMask(valid.reshape(cfg.verbs, cfg.nouns))
    held_out = None
    if len(held):
        unseen = np.zeros(cfg.verbs * cfg.nouns, dtype=bool)
        unseen[held] = True
        held_out = cooccur.ValidityMask(unseen.reshape(cfg.verbs, cfg.nouns))

    samples, labels = _draw(rng, cfg, prototypes, source_cells, Domain.SOURCE, "S")
    source = Dataset("source", Domain.SOURCE, samples, labels, mask)
    shifted = prototypes + cfg.shift * direction
    samples, labels = _draw(rng, cfg, shifted, target_cells, Domain.TARGET, "T")
    target = Dataset("target", Domain.TARGET, samples, labels, mask)
    logger.debug(
        "generated %d source and %d target samples (%d from held-out pairs)",
        len(source),
        len(target),
        n_unseen,
    )
    return SyntheticData(source, target, mask, held_out)


def observed_mask(dataset, min_count=1):
    "Validity mask of the pairs annotated in `dataset`."
    verbs, nouns = dataset.mask.shape if dataset.mask is not None else (None, None)
    if verbs is None:
        verbs = int(dataset.labels[:, 0].max()) + 1
        nouns = int(dataset.labels[:, 1].max()) + 1
    matrix = cooccur.build_from_annotations(
        dataset.annotations(), cooccur.Vocabulary.anonymous(verbs, nouns)
    )
    return cooccur.binarize(matrix, min_count)


#
# Training
#


EpochLoss = namedtuple(
    "EpochLoss", ("epoch", "lr", "verb", "noun", "domain", "logic", "total")
)


def lr_at(epoch, cfg):
    """
    Learning rate in effect during the 1-based `epoch`: ``lr0`` divided by
    ``lr_factor`` once for every drop epoch reached.
    """
    drops = sum(1 for e in cfg.lr_drops if e <= epoch)
    return cfg.lr0 / cfg.lr_factor**drops


TrainResult = namedtuple("TrainResult", ("checkpoint", "metrics", "history"))


def _train_epoch(epoch, cfg, params, samples, order, constraints):
    lr = lr_at(epoch, cfg)
    sums = dict.fromkeys(("verb", "noun", "domain", "logic", "total"), 0.0)
    batches = split_batches(order, cfg.batch)
    for batch in batches:
        params.zero_grads()
        picked = [samples[i] for i in batch]
        outputs = [forward(s, params, cfg.model) for s in picked]
        terms = total_loss(outputs, picked, cfg.model, constraints, cfg.semantics)
        backward(terms.total)
        for param in params.trainable():
            param.data = param.data - lr * param.grad
        for name in sums:
            sums[name] += terms.breakdown[name]
    means = {name: value / len(batches) for name, value in sums.items()}
    record = EpochLoss(epoch, lr, **means)
    logger.info(
        "epoch %d lr=%g verb=%.4f noun=%.4f domain=%.4f logic=%.4f total=%.4f",
        *record
    )
    return record


def train(cfg, source, target, constraints=None, refine_mask=None, reference=None):
    """
    Trains a model from scratch with plain SGD and evaluates it on `target`.

    :param constraints: :class:`~cologic.formula.ConstraintSet` for the logic
        loss, derived from source annotations or the oracle; `None` disables
        it.
    :param refine_mask: mask applied to action scores at evaluation.
    :param reference: mask the invalid rate is measured against (defaults
        as in :func:`evaluate`).

    Returns :class:`TrainResult` ``(checkpoint, metrics, history)``.  With
    zero epochs the untrained model is evaluated.
    """
    params = init_params(cfg.model, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    samples = list(source) + list(target)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples)).tolist()
        history.append(_train_epoch(epoch, cfg, params, samples, order, constraints))
    checkpoint = Checkpoint(params, cfg.model)
    metrics = evaluate(checkpoint, target, mask=refine_mask, reference=reference)
    metrics = replace(metrics, losses=tuple(history))
    return TrainResult(checkpoint, metrics, history)


#
# Evaluation
#


@dataclass(frozen=True)
class Metrics:
    name: str = ""
    verb_top1: float = 0.0
    verb_top5: float = 0.0
    noun_top1: float = 0.0
    noun_top5: float = 0.0
    action_top1: float = 0.0
    action_top5: float = 0.0
    invalid_rate: float = 0.0
    losses: tuple = field(default=(), compare=False, repr=False)

    SCORES = (
        "verb_top1",
        "verb_top5",
        "noun_top1",
        "noun_top5",
        "action_top1",
        "action_top5",
        "invalid_rate",
    )

    def scores(self):
        return [getattr(self, name) for name in self.SCORES]

    @classmethod
    def mean(cls, name, rows):
        "Average of several runs."
        rows = list(rows)
        averaged = {
            score: math.fsum(getattr(r, score) for r in rows) / len(rows)
            for score in cls.SCORES
        }
        return cls(name=name, **averaged)


def score_predictions(
    verb_probs,
    noun_probs,
    labels,
    mask=None,
    reference=None,
    name="",
    action_scores=None,
):
    """
    Computes :class:`Metrics` from n x V verb and n x N noun probabilities
    and n x 2 ``(verb, noun)`` labels.

    Action scores are `action_scores` (n x V x N) if given, else the outer
    products of the branch probabilities.  With `mask` they are refined and
    the ranking never places an invalid pair above a valid one.  Verb and
    noun accuracies always come from the branch probabilities, so action
    top-1 never exceeds either of them on unrefined scores but may with
    `mask`.  Top-k ties go to the lowest (row-major) index.  The invalid
    rate is measured against `mask`, else `reference`, and is 0 when
    neither is given.
    """
    verb_probs = np.atleast_2d(np.asarray(verb_probs, dtype=np.float64))
    noun_probs = np.atleast_2d(np.asarray(noun_probs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, 2)
    count = len(labels)
    if not count:
        return Metrics(name=name)
    verbs, nouns = verb_probs.shape[1], noun_probs.shape[1]
    if action_scores is None:
        action_scores = np.einsum("bi,bj->bij", verb_probs, noun_probs)
    action_scores = np.asarray(action_scores, dtype=np.float64)
    if mask is not None:
        scores, fallback = cooccur.refine_scores(mask, action_scores)
        if fallback.any():
            logger.debug("%d samples fell back to unrefined scores", fallback.sum())
        valid = np.asarray(mask.valid).ravel()
        ranking = np.where(valid, scores.reshape(count, -1), -1.0)
    else:
        ranking = action_scores.reshape(count, -1)
    actions = labels[:, 0] * nouns + labels[:, 1]

    invalid_rate = 0.0
    against = mask if mask is not None else reference
    if against is not None:
        if against.shape != (verbs, nouns):
            raise DimensionMismatch(
                "reference mask is {0}, predictions are {1}x{2}".format(
                    against.shape, verbs, nouns
                )
            )
        best = top_k(ranking, 1)[:, 0]
        invalid_rate = float((~np.asarray(against.valid).ravel()[best]).mean())

    return Metrics(
        name=name,
        verb_top1=hits_at(verb_probs, labels[:, 0], 1),
        verb_top5=hits_at(verb_probs, labels[:, 0], 5),
        noun_top1=hits_at(noun_probs, labels[:, 1], 1),
        noun_top5=hits_at(noun_probs, labels[:, 1], 5),
        action_top1=hits_at(ranking, actions, 1),
        action_top5=hits_at(ranking, actions, 5),
        invalid_rate=invalid_rate,
    )


def evaluate(checkpoint, dataset, mask=None, reference=None, name=""):
    """
    Scores `checkpoint` on a labeled dataset.  `reference` defaults to the
    dataset's ground-truth mask.
    """
    if reference is None:
        reference = dataset.mask
    if not len(dataset):
        return Metrics(name=name)
    predictions = [checkpoint.predict(sample) for sample in dataset]
    verb_probs = np.stack([v for v, _ in predictions])
    noun_probs = np.stack([n for _, n in predictions])
    return score_predictions(
        verb_probs, noun_probs, dataset.labels, mask, reference, name=name
    )


#
# Reports
#

_CSV_HEADER = ("model",) + Metrics.SCORES


def write_report(rows, path):
    """
    Writes ``<path>.md`` (a table of percentages) and ``<path>.csv`` (exact
    values) with one row per :class:`Metrics`.
    """
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for row in rows:
        writer.writerow([row.name] + [repr(float(v)) for v in row.scores()])
    write_text(path + ".csv", out.getvalue())

    lines = [
        "| Model | Top-1 Verb | Top-1 Noun | Top-1 Action "
        "| Top-5 Verb | Top-5 Noun | Top-5 Action | Invalid |",
        "|---|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for row in rows:
        cells = [
            row.verb_top1,
            row.noun_top1,
            row.action_top1,
            row.verb_top5,
            row.noun_top5,
            row.action_top5,
            row.invalid_rate,
        ]
        lines.append(
            "| {0} | {1} |".format(
                row.name, " | ".join("{0:.2f}".format(100 * c) for c in cells)
            )
        )
    write_text(path + ".md", "\n".join(lines) + "\n")


def read_report_csv(path):
    "Reads the rows written by :func:`write_report`."
    reader = csv.reader(_io.StringIO(read_text(path)))
    header = next(reader, None)
    if header is None or tuple(header) != _CSV_HEADER:
        raise ParseError("{0}: not a metrics report".format(path), line=1)
    rows = []
    for number, cells in enumerate(reader, start=2):
        if len(cells) != len(_CSV_HEADER):
            raise ParseError("{0}: malformed row".format(path), line=number)
        try:
            values = [float(c) for c in cells[1:]]
        except ValueError:
            raise ParseError(
                "{0}: non-numeric score".format(path), line=number
            ) from None
        rows.append(Metrics(cells[0], *values))
    return rows


def write_history(history, path):
    "Per-epoch loss curves as CSV."
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(EpochLoss._fields)
    for record in history:
        writer.writerow([record.epoch] + [repr(float(v)) for v in record[1:]])
    write_text(path, out.getvalue())


#
# Ablation
#


def run_ablation(experiment, seeds=5, refine=False, knowledge=None):
    """
    Trains the three comparison variants on `seeds` synthetic draws and
    returns their mean :class:`Metrics` on the target domain:

    * ``Base``: classification and domain losses only;
    * ``Base+LR``: plus the logic loss from source co-occurrences;
    * ``Base+LR+Oracle``: the logic loss from the complete ground-truth
      mask, standing in for world knowledge that covers pairs never seen in
      the source.

    With a `knowledge` mask (e.g. the output of ``llm-matrix``) the third
    variant is ``Base+LR+LLM`` and takes its constraints from that mask
    instead.  The invalid rate is measured against the ground-truth mask.
    With `refine` the constraint mask also refines the action scores.
    """
    train_cfg = experiment.train
    model = train_cfg.model
    if knowledge is not None and knowledge.shape != (model.verbs, model.nouns):
        raise DimensionMismatch(
            "knowledge mask is {0}x{1}, the experiment has {2}x{3}".format(
                *(knowledge.shape + (model.verbs, model.nouns))
            )
        )
    lam = model.lambda_logic or 1.0
    third = ("Base+LR+Oracle", lam, "oracle")
    if knowledge is not None:
        third = ("Base+LR+LLM", lam, "knowledge")
    variants = (("Base", 0.0, None), ("Base+LR", lam, "source"), third)
    runs = {name: [] for name, _, _ in variants}
    for offset in range(seeds):
        base = experiment.synthetic
        synthetic = replace(base, seed=base.seed + offset)
        data = gen_synthetic(synthetic)
        masks = {
            "source": observed_mask(data.source),
            "oracle": data.mask,
            "knowledge": knowledge,
        }
        for name, weight, origin in variants:
            cfg = replace(
                train_cfg,
                seed=train_cfg.seed + offset,
                model=replace(model, lambda_logic=weight),
            )
            mask = masks.get(origin)
            constraints = None
            if mask is not None:
                constraints = cooccur.to_constraints(mask, cfg.constraint_mode)
            result = train(
                cfg,
                data.source,
                data.target,
                constraints,
                refine_mask=masks[origin or "source"] if refine else None,
                reference=data.mask,
            )
            logger.info(
                "seed %d %s: action top-1 %.4f invalid %.4f",
                offset,
                name,
                result.metrics.action_top1,
                result.metrics.invalid_rate,
            )
            runs[name].append(result.metrics)
    return [Metrics.mean(name, runs[name]) for name, _, _ in variants]
