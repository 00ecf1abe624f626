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
Formulas
~~~~~~~~

Propositional formulas over verb/noun atoms and their differentiable
evaluation against the probabilistic predictions of a two-branch classifier.

The classifier outputs are read as a truth assignment: atom ``verb:i`` is
true to the degree ``verb_probs[i]``.  A :class:`Semantics` picks the fuzzy
relaxation of the connectives (product, Gödel or Łukasiewicz t-norm) and the
logic loss is the mean of ``-log(degree)`` over a set of formulas.

Gradients are taken with respect to the probability vectors; chaining through
the softmax is left to :mod:`cologic.diffgraph`.

All functions here are pure and can be called from several threads at once.
Formulas are walked with explicit stacks, never by recursion, so that the
long disjunctions produced for large vocabularies evaluate fine.
"""
import functools
import math
from dataclasses import dataclass

import numpy as np

from cologic.constants import CLAMP_EPS, Branch, ConstraintMode, TNorm
from cologic.exceptions import (
    BoundsError,
    ConfigError,
    DataError,
    DimensionMismatch,
    EmptyMask,
    InvalidConstraintSet,
)

__all__ = [
    "Atom",
    "Not",
    "And",
    "Or",
    "Implies",
    "TruthAssignment",
    "Semantics",
    "ConstraintSet",
    "iter_atoms",
    "evaluate",
    "semantic_loss",
    "semantic_loss_grad",
    "logic_loss",
    "logic_loss_grad",
    "DEFAULT_SEMANTICS",
]


#
# Syntax tree
#


@dataclass(frozen=True)
class Atom:
    "The proposition \"class ``index`` of ``branch`` holds\"."

    branch: Branch
    index: int

    def __post_init__(self):
        if not isinstance(self.branch, Branch):
            object.__setattr__(self, "branch", Branch(self.branch))
        object.__setattr__(self, "index", int(self.index))
        if self.index < 0:
            raise BoundsError("negative class id in {0}".format(self))

    children = ()

    def __str__(self):
        return "{0}:{1}".format(self.branch.value, self.index)


@dataclass(frozen=True)
class Not:
    operand: object

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class And:
    left: object
    right: object

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Or:
    left: object
    right: object

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Implies:
    "Material implication, read as ``Or(Not(left), right)`` by every semantics."

    left: object
    right: object

    @property
    def children(self):
        return (self.left, self.right)


def _postorder(formula):
    # children-first, left before right, without recursion
    stack = [(formula, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded or not node.children:
            yield node
            continue
        stack.append((node, True))
        for child in reversed(node.children):
            stack.append((child, False))


def iter_atoms(formula):
    "Yields every atom occurrence of `formula`, left to right."
    for node in _postorder(formula):
        if isinstance(node, Atom):
            yield node


#
# Truth assignments and semantics
#


@dataclass(frozen=True, eq=False)
class TruthAssignment:
    """
    Per-sample verb and noun probabilities read as truth degrees.

    Entries must lie in ``[0, 1]``.  Softmax heads also make each vector sum
    to one (see :meth:`is_normalized`), but the loss functions do not rely on
    it, so that perturbed assignments can be used for finite differences.
    """

    verb_probs: np.ndarray
    noun_probs: np.ndarray

    def __post_init__(self):
        for name in ("verb_probs", "noun_probs"):
            vec = np.asarray(getattr(self, name), dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise DimensionMismatch(
                    "{0} must be a non-empty vector, got shape {1}".format(
                        name, vec.shape
                    )
                )
            if not np.all((vec >= 0.0) & (vec <= 1.0)):
                raise DataError("{0} entries must lie in [0, 1]".format(name))
            object.__setattr__(self, name, vec)

    @property
    def shape(self):
        return (self.verb_probs.size, self.noun_probs.size)

    def is_normalized(self, atol=1e-6):
        return bool(
            abs(self.verb_probs.sum() - 1.0) <= atol
            and abs(self.noun_probs.sum() - 1.0) <= atol
        )

    def degree(self, atom):
        vec = self.verb_probs if atom.branch is Branch.VERB else self.noun_probs
        if atom.index >= vec.size:
            raise DimensionMismatch(
                "{0} is outside an assignment of {1} {2}s".format(
                    atom, vec.size, atom.branch.value
                )
            )
        return float(vec[atom.index])


@dataclass(frozen=True)
class Semantics:
    tnorm: TNorm = TNorm.PRODUCT
    clamp_eps: float = CLAMP_EPS

    def __post_init__(self):
        if not isinstance(self.tnorm, TNorm):
            try:
                object.__setattr__(self, "tnorm", TNorm(self.tnorm))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if not 0.0 < self.clamp_eps < 1e-3:
            raise ConfigError(
                "clamp_eps must lie in (0, 1e-3), got {0!r}".format(self.clamp_eps)
            )


DEFAULT_SEMANTICS = Semantics()


#
# Connectives.  Each entry maps (a, b) to the value and to the partial
# derivatives (d/da, d/db).  Gödel ties go to the left operand.
#


def _product_and(a, b):
    return a * b, (b, a)


def _product_or(a, b):
    return a + b - a * b, (1.0 - b, 1.0 - a)


def _goedel_and(a, b):
    if a <= b:
        return a, (1.0, 0.0)
    return b, (0.0, 1.0)


def _goedel_or(a, b):
    if a >= b:
        return a, (1.0, 0.0)
    return b, (0.0, 1.0)


def _lukasiewicz_and(a, b):
    s = a + b - 1.0
    if s > 0.0:
        return s, (1.0, 1.0)
    return 0.0, (0.0, 0.0)


def _lukasiewicz_or(a, b):
    s = a + b
    if s < 1.0:
        return s, (1.0, 1.0)
    return 1.0, (0.0, 0.0)


_CONNECTIVES = {
    TNorm.PRODUCT: (_product_and, _product_or),
    TNorm.GOEDEL: (_goedel_and, _goedel_or),
    TNorm.LUKASIEWICZ: (_lukasiewicz_and, _lukasiewicz_or),
}


def _record(formula, assignment, semantics):
    """
    Evaluates `formula` children-first and returns the tape: a list of
    ``(node, value, [(child_position, partial), ...])`` with the root last.
    """
    conj, disj = _CONNECTIVES[semantics.tnorm]
    tape = []
    pending = []  # tape positions of evaluated but not yet consumed nodes
    for node in _postorder(formula):
        if isinstance(node, Atom):
            tape.append((node, assignment.degree(node), ()))
        elif isinstance(node, Not):
            k = pending.pop()
            tape.append((node, 1.0 - tape[k][1], ((k, -1.0),)))
        else:
            kb = pending.pop()
            ka = pending.pop()
            a = tape[ka][1]
            b = tape[kb][1]
            if isinstance(node, And):
                value, (da, db) = conj(a, b)
            elif isinstance(node, Or):
                value, (da, db) = disj(a, b)
            elif isinstance(node, Implies):
                value, (da, db) = disj(1.0 - a, b)
                da = -da
            else:
                raise TypeError("not a formula node: {0!r}".format(node))
            tape.append((node, value, ((ka, da), (kb, db))))
        pending.append(len(tape) - 1)
    return tape


def _clip01(value):
    return min(1.0, max(0.0, value))


def evaluate(formula, assignment, semantics=DEFAULT_SEMANTICS):
    """
    Returns the degree in ``[0, 1]`` to which `assignment` satisfies
    `formula`.

    :param formula: an :class:`Atom`, :class:`Not`, :class:`And`,
        :class:`Or` or :class:`Implies` tree.
    :param assignment: a :class:`TruthAssignment`.
    :param semantics: a :class:`Semantics`; product t-norm by default.

    Raises :class:`~cologic.exceptions.DimensionMismatch` if an atom points
    outside the assignment.
    """
    return _clip01(_record(formula, assignment, semantics)[-1][1])


def _degree_and_grad(formula, assignment, semantics):
    tape = _record(formula, assignment, semantics)
    grad_v = np.zeros(assignment.verb_probs.size)
    grad_n = np.zeros(assignment.noun_probs.size)
    adjoint = [0.0] * len(tape)
    adjoint[-1] = 1.0
    for k in range(len(tape) - 1, -1, -1):
        node, _, partials = tape[k]
        g = adjoint[k]
        if isinstance(node, Atom):
            target = grad_v if node.branch is Branch.VERB else grad_n
            target[node.index] += g
            continue
        for child, partial in partials:
            adjoint[child] += g * partial
    return tape[-1][1], grad_v, grad_n


#
# Constraint sets
#


@dataclass(frozen=True)
class ConstraintSet:
    """
    An ordered, non-empty list of formulas plus the mode they were generated
    in.  ``verbs``/``nouns`` are the declared vocabulary sizes (optional).
    """

    formulas: tuple
    mode: ConstraintMode = ConstraintMode.VALID_DISJUNCTION
    verbs: int = None
    nouns: int = None

    def __post_init__(self):
        object.__setattr__(self, "formulas", tuple(self.formulas))
        if not isinstance(self.mode, ConstraintMode):
            object.__setattr__(self, "mode", ConstraintMode(self.mode))
        if not self.formulas:
            raise InvalidConstraintSet("a constraint set needs at least one formula")
        limits = {Branch.VERB: self.verbs, Branch.NOUN: self.nouns}
        if self.verbs is None and self.nouns is None:
            return
        for position, formula in enumerate(self.formulas):
            for atom in iter_atoms(formula):
                limit = limits[atom.branch]
                if limit is not None and atom.index >= limit:
                    raise BoundsError(
                        "formula {0}: {1} exceeds the declared {2} {3}s".format(
                            position + 1, atom, limit, atom.branch.value
                        ),
                        record=position,
                    )

    def __len__(self):
        return len(self.formulas)

    def __iter__(self):
        return iter(self.formulas)

    @functools.cached_property
    def _valid_pairs(self):
        pairs = []
        for formula in self.formulas:
            stack = [formula]
            while stack:
                node = stack.pop()
                if isinstance(node, Or):
                    stack.append(node.right)
                    stack.append(node.left)
                    continue
                pair = _as_pair(node)
                if pair is None:
                    return None
                pairs.append(pair)
        return tuple(pairs)

    def valid_pairs(self):
        """
        Returns the ``(verb, noun)`` pairs of a disjunction of pair
        conjunctions, in order, or `None` if some formula has another shape.
        """
        return self._valid_pairs

    def check_assignment(self, assignment):
        declared = (self.verbs, self.nouns)
        for want, got, name in zip(declared, assignment.shape, ("verb", "noun")):
            if want is not None and want != got:
                raise DimensionMismatch(
                    "constraints declare {0} {1}s, assignment has {2}".format(
                        want, name, got
                    )
                )


def _as_pair(node):
    if not isinstance(node, And):
        return None
    left, right = node.left, node.right
    if (
        isinstance(left, Atom)
        and isinstance(right, Atom)
        and left.branch is Branch.VERB
        and right.branch is Branch.NOUN
    ):
        return (left.index, right.index)
    return None


#
# Losses
#


def _valid_matrix(mask):
    valid = np.asarray(getattr(mask, "valid", mask), dtype=bool)
    if valid.ndim != 2:
        raise DimensionMismatch("a validity mask must be a V x N matrix")
    if not valid.any():
        raise EmptyMask("the validity mask has no valid pair")
    return valid


def _check_mask_shape(valid, assignment):
    if valid.shape != assignment.shape:
        raise DimensionMismatch(
            "mask is {0}x{1}, assignment is {2}x{3}".format(
                *(valid.shape + assignment.shape)
            )
        )


def semantic_loss(mask, assignment, semantics=DEFAULT_SEMANTICS):
    """
    Negative log-probability that the factorized prediction lands on a valid
    pair::

        -log(max(sum_{(i, j) valid} verb_probs[i] * noun_probs[j], eps))

    `mask` is a :class:`~cologic.cooccur.ValidityMask` or a boolean V x N
    array.  Raises :class:`~cologic.exceptions.EmptyMask` if nothing is
    valid.
    """
    valid = _valid_matrix(mask)
    _check_mask_shape(valid, assignment)
    mass = float(assignment.verb_probs @ valid @ assignment.noun_probs)
    return -math.log(max(mass, semantics.clamp_eps))


def semantic_loss_grad(mask, assignment, semantics=DEFAULT_SEMANTICS):
    "Gradient of :func:`semantic_loss` w.r.t. the verb and noun probabilities."
    valid = _valid_matrix(mask).astype(np.float64)
    _check_mask_shape(valid, assignment)
    to_verbs = valid @ assignment.noun_probs
    to_nouns = valid.T @ assignment.verb_probs
    mass = float(assignment.verb_probs @ to_verbs)
    if mass <= semantics.clamp_eps:
        # the clamp is flat there
        return np.zeros_like(to_verbs), np.zeros_like(to_nouns)
    return -to_verbs / mass, -to_nouns / mass


def _exact_form(constraints, assignment, semantics):
    if (
        constraints.mode is not ConstraintMode.VALID_DISJUNCTION
        or semantics.tnorm is not TNorm.PRODUCT
    ):
        return None
    pairs = constraints.valid_pairs()
    if pairs is None:
        return None
    index = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    outside = (index >= np.array(assignment.shape)).any(axis=1)
    if outside.any():
        verb, noun = index[np.flatnonzero(outside)[0]]
        raise DimensionMismatch(
            "pair ({0}, {1}) is outside a {2}x{3} assignment".format(
                verb, noun, *assignment.shape
            )
        )
    valid = np.zeros(assignment.shape, dtype=bool)
    valid[index[:, 0], index[:, 1]] = True
    return valid


def logic_loss(constraints, assignment, semantics=DEFAULT_SEMANTICS):
    """
    Logic loss of a :class:`ConstraintSet` under `assignment`.

    A valid-pair disjunction evaluated with the product t-norm is scored with
    the exact :func:`semantic_loss` (the pairs are mutually exclusive
    outcomes).  Any other set scores the mean of ``-log(max(degree, eps))``
    over its formulas.
    """
    constraints.check_assignment(assignment)
    valid = _exact_form(constraints, assignment, semantics)
    if valid is not None:
        return semantic_loss(valid, assignment, semantics)
    eps = semantics.clamp_eps
    total = math.fsum(
        -math.log(max(evaluate(f, assignment, semantics), eps)) for f in constraints
    )
    return total / len(constraints)


def logic_loss_grad(constraints, assignment, semantics=DEFAULT_SEMANTICS):
    """
    Returns ``(d_loss/d_verb_probs, d_loss/d_noun_probs)`` for
    :func:`logic_loss`.

    Exact for the product and Łukasiewicz t-norms away from their kinks; the
    Gödel t-norm yields a subgradient with ties resolved towards the left
    operand.
    """
    constraints.check_assignment(assignment)
    valid = _exact_form(constraints, assignment, semantics)
    if valid is not None:
        return semantic_loss_grad(valid, assignment, semantics)
    grad_v = np.zeros(assignment.verb_probs.size)
    grad_n = np.zeros(assignment.noun_probs.size)
    scale = 1.0 / len(constraints)
    for formula in constraints:
        degree, dv, dn = _degree_and_grad(formula, assignment, semantics)
        # the clamp is flat below eps
        if degree > semantics.clamp_eps:
            grad_v -= scale * dv / degree
            grad_n -= scale * dn / degree
    return grad_v, grad_n
