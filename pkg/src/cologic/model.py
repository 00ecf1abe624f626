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
Adaptation model
~~~~~~~~~~~~~~~~

The trainable tail of the recognition pipeline, on top of frozen frame
features:

1. a shared linear embedding of every frame (d_in -> h);
2. ``gcn_layers`` fully-connected graph convolutions over the frames,
   ``H <- ReLU(A @ H @ W)`` with the uniform adjacency ``A = 1/T``;
3. average pooling into one video-level feature;
4. a verb head and a noun head (linear + softmax) on the video feature, and
   a domain head behind the gradient reversal layer.

:func:`total_loss` combines the verb and noun cross-entropies (source
samples only), the domain cross-entropy (all samples, source=0 and
target=1) and the logic loss computed on the verb/noun probabilities.
"""
import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from cologic import diffgraph as dg
from cologic.constants import Domain
from cologic.exceptions import ConfigError, DataError, MissingLabels, ShapeMismatch
from cologic.formula import (
    DEFAULT_SEMANTICS,
    TruthAssignment,
    logic_loss,
    logic_loss_grad,
)
from cologic.io import read_json, write_json

__all__ = [
    "ModelConfig",
    "FrameFeatures",
    "VideoFeature",
    "ModelOutput",
    "LossTerms",
    "init_params",
    "gcn_encode",
    "forward",
    "logic_term",
    "total_loss",
    "Checkpoint",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    d_in: int
    h: int
    verbs: int
    nouns: int
    gcn_layers: int = 1
    lambda_grl: float = 1.0
    lambda_logic: float = 1.0
    lambda_domain: float = 1.0
    #: apply the logic loss to target-domain predictions as well
    logic_on_target: bool = True

    def __post_init__(self):
        for name in ("d_in", "h", "verbs", "nouns", "gcn_layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("{0} must be at least 1".format(name))
        for name in ("lambda_grl", "lambda_logic", "lambda_domain"):
            if float(getattr(self, name)) < 0:
                raise ConfigError("{0} must be non-negative".format(name))

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(
                "unknown model settings: {0}".format(", ".join(sorted(unknown)))
            )
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return asdict(self)


class FrameFeatures:
    """
    Frame-level features of one video.

    :param frames: T x d_in matrix.
    :param domain: :class:`~cologic.constants.Domain`.
    :param labels: ``(verb_id, noun_id)``; required for source samples and
        forbidden for target samples.
    :param uid: optional sample id.
    """

    __slots__ = ("frames", "domain", "labels", "uid")

    def __init__(self, frames, domain, labels=None, uid=None):
        frames = np.array(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ShapeMismatch(
                "frames must be a T x d matrix with T >= 1, got {0}".format(
                    frames.shape
                )
            )
        domain = Domain(domain)
        if domain is Domain.TARGET and labels is not None:
            raise DataError("target samples carry no labels")
        frames.setflags(write=False)
        self.frames = frames
        self.domain = domain
        self.labels = None if labels is None else (int(labels[0]), int(labels[1]))
        self.uid = uid

    def __repr__(self):
        return "<FrameFeatures {0} T={1} {2}>".format(
            self.uid or "-", self.frames.shape[0], self.domain.name.lower()
        )


class VideoFeature:
    "A 1 x h video-level representation (a graph node)."

    __slots__ = ("vec",)

    def __init__(self, vec):
        self.vec = vec


class ModelOutput:
    "Probability nodes of the three heads, each 1 x k."

    __slots__ = ("verb_probs", "noun_probs", "domain_probs", "feature")

    def __init__(self, verb_probs, noun_probs, domain_probs, feature=None):
        self.verb_probs = verb_probs
        self.noun_probs = noun_probs
        self.domain_probs = domain_probs
        self.feature = feature

    def assignment(self):
        return TruthAssignment(
            self.verb_probs.data.ravel(), self.noun_probs.data.ravel()
        )


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config, seed=0):
    """
    Returns a :class:`~cologic.diffgraph.ParameterStore` with
    Glorot-uniform weights and zero biases, deterministic per `seed`.
    """
    rng = np.random.default_rng(seed)
    params = dg.ParameterStore()
    params.add("embed.weight", _glorot(rng, config.d_in, config.h))
    params.add("embed.bias", np.zeros(config.h))
    for layer in range(config.gcn_layers):
        params.add("gcn.{0}.weight".format(layer), _glorot(rng, config.h, config.h))
    for head, width in (("verb", config.verbs), ("noun", config.nouns), ("domain", 2)):
        params.add(head + ".weight", _glorot(rng, config.h, width))
        params.add(head + ".bias", np.zeros(width))
    return params


def gcn_encode(features, params, config):
    """
    Embeds the frames, runs the fully-connected graph convolutions and
    averages the frames into a :class:`VideoFeature`.
    """
    frames = features.frames
    if frames.shape[1] != config.d_in:
        raise ShapeMismatch(
            "frames have {0} features, the model expects {1}".format(
                frames.shape[1], config.d_in
            )
        )
    steps = frames.shape[0]
    embed_w, embed_b = params["embed.weight"], params["embed.bias"]
    hidden = dg.linear(dg.constant(frames), embed_w, embed_b)
    adjacency = dg.constant(np.full((steps, steps), 1.0 / steps))
    for layer in range(config.gcn_layers):
        weight = params["gcn.{0}.weight".format(layer)]
        hidden = dg.relu(dg.matmul(dg.matmul(adjacency, hidden), weight))
    return VideoFeature(dg.mean_pool(hidden))


def forward(features, params, config, reverse_gradient=True):
    """
    Runs the three heads on one sample.  The domain head reads the video
    feature through :func:`~cologic.diffgraph.grl` unless
    `reverse_gradient` is `False`.
    """
    video = gcn_encode(features, params, config).vec
    verb = dg.softmax(dg.linear(video, params["verb.weight"], params["verb.bias"]))
    noun = dg.softmax(dg.linear(video, params["noun.weight"], params["noun.bias"]))
    domain_input = dg.grl(video, config.lambda_grl) if reverse_gradient else video
    domain = dg.softmax(
        dg.linear(domain_input, params["domain.weight"], params["domain.bias"])
    )
    return ModelOutput(verb, noun, domain, feature=VideoFeature(video))


def logic_term(output, constraints, semantics=DEFAULT_SEMANTICS):
    "The logic loss of one output as a graph node."

    def fn(verb_probs, noun_probs):
        assignment = TruthAssignment(verb_probs.ravel(), noun_probs.ravel())
        value = logic_loss(constraints, assignment, semantics)

        def vjp(g):
            grad_v, grad_n = logic_loss_grad(constraints, assignment, semantics)
            return g * grad_v, g * grad_n

        return value, vjp

    return dg.apply_function(fn, output.verb_probs, output.noun_probs, op="logic_loss")


class LossTerms:
    """
    The scalar training loss and the mean of every term as plain floats
    (``verb``, ``noun``, ``domain``, ``logic``, ``total``).
    """

    __slots__ = ("total", "breakdown")

    def __init__(self, total, breakdown):
        self.total = total
        self.breakdown = breakdown


def _mean(nodes):
    if not nodes:
        return None
    return dg.scalar_combine([(1.0 / len(nodes), n) for n in nodes])


def total_loss(outputs, samples, config, constraints=None, semantics=DEFAULT_SEMANTICS):
    """
    Assembles the training objective over a batch.

    :param outputs: :class:`ModelOutput` per sample.
    :param samples: the matching :class:`FrameFeatures`.
    :param constraints: a :class:`~cologic.formula.ConstraintSet` or `None`
        for no logic loss.

    Raises :class:`~cologic.exceptions.MissingLabels` for an unlabeled
    source sample.
    """
    if len(outputs) != len(samples):
        raise ShapeMismatch(
            "{0} outputs for {1} samples".format(len(outputs), len(samples))
        )
    verb_terms = []
    noun_terms = []
    domain_terms = []
    logic_terms = []
    logic_values = []
    for output, sample in zip(outputs, samples):
        is_source = sample.domain is Domain.SOURCE
        if is_source:
            if sample.labels is None:
                raise MissingLabels(
                    "source sample {0!r} has no labels".format(sample.uid)
                )
            verb_terms.append(dg.cross_entropy(output.verb_probs, sample.labels[0]))
            noun_terms.append(dg.cross_entropy(output.noun_probs, sample.labels[1]))
        if config.lambda_domain > 0:
            domain = int(sample.domain)
            domain_terms.append(dg.cross_entropy(output.domain_probs, domain))
        if constraints is not None and (is_source or config.logic_on_target):
            if config.lambda_logic > 0:
                logic_terms.append(logic_term(output, constraints, semantics))
            else:
                # monitored only
                logic_values.append(
                    logic_loss(constraints, output.assignment(), semantics)
                )

    parts = []
    breakdown = {}
    for name, nodes, weight in (
        ("verb", verb_terms, 1.0),
        ("noun", noun_terms, 1.0),
        ("domain", domain_terms, config.lambda_domain),
        ("logic", logic_terms, config.lambda_logic),
    ):
        mean = _mean(nodes)
        breakdown[name] = 0.0 if mean is None else mean.item()
        if mean is not None:
            parts.append((weight, mean))
    if logic_values:
        breakdown["logic"] = float(np.mean(logic_values))

    total = dg.scalar_combine(parts)
    breakdown["total"] = total.item()
    return LossTerms(total, breakdown)


class Checkpoint:
    """
    Trained parameters together with the model configuration they belong
    to.  On disk a checkpoint is a directory holding ``params.json`` (the
    :class:`~cologic.diffgraph.ParameterStore` format) and ``model.json``.
    """

    PARAMS_FILE = "params.json"
    CONFIG_FILE = "model.json"

    def __init__(self, params, config):
        self.params = params
        self.config = config

    def predict(self, features):
        "Verb and noun probability vectors for one sample."
        output = forward(features, self.params, self.config)
        return output.verb_probs.data.ravel(), output.noun_probs.data.ravel()

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.params.save(os.path.join(directory, self.PARAMS_FILE))
        write_json(os.path.join(directory, self.CONFIG_FILE), self.config.to_dict())

    @classmethod
    def load(cls, directory):
        config = ModelConfig.from_dict(
            read_json(os.path.join(directory, cls.CONFIG_FILE), usage=False)
        )
        params = dg.ParameterStore.load(os.path.join(directory, cls.PARAMS_FILE))
        expected = init_params(config)
        for param in expected:
            if param.name not in params or params[param.name].shape != param.shape:
                raise ShapeMismatch(
                    "checkpoint parameter {0!r} is missing or misshapen".format(
                        param.name
                    )
                )
        return cls(params, config)
