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
Constraint language
~~~~~~~~~~~~~~~~~~~

Text form of a :class:`~cologic.formula.ConstraintSet`::

    #! vocab verbs=97 nouns=300
    #! mode invalid
    !(verb:3 & noun:7)      # one formula per line
    verb:0 -> (noun:1 | noun:2)

Operators bind as ``!`` > ``&`` > ``|`` > ``->``; ``&`` and ``|`` group to
the left, ``->`` to the right.  ``#`` starts a comment, ``#!`` a header
directive; directives other than ``vocab`` and ``mode`` are read as
comments.  Both headers are optional: without ``mode`` a set consisting of a
single disjunction of ``verb & noun`` pairs is taken as a valid-pair
disjunction, anything else as a list of negated invalid pairs.

:func:`render` prints the canonical form: binary sub-formulas are always
parenthesized unless they continue a chain of the same operator in its
grouping direction, so that ``parse(render(s)) == s``.
"""
import functools
import logging
import re

from lark import Lark, Transformer
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput

from cologic.constants import Branch, ConstraintMode
from cologic.exceptions import BoundsError, FormulaSyntaxError, InvalidConstraintSet
from cologic.formula import And, Atom, ConstraintSet, Implies, Not, Or, iter_atoms
from cologic.io import read_text, write_text

__all__ = ["parse", "parse_formula", "render", "render_formula", "load", "save"]

logger = logging.getLogger(__name__)


GRAMMAR = r"""
    ?start: implication

    ?implication: disjunction
                | disjunction "->" implication   -> implies

    ?disjunction: conjunction
                | disjunction "|" conjunction    -> disjoin

    ?conjunction: negation
                | conjunction "&" negation       -> conjoin

    ?negation: "!" negation                      -> negate
             | atom
             | "(" implication ")"

    atom: BRANCH ":" INDEX

    BRANCH: "verb" | "noun"
    INDEX: /[0-9]+/

    %import common.WS_INLINE
    %ignore WS_INLINE
"""

U32_MAX = 2**32 - 1

_VOCAB_HEADER = re.compile(r"^#!\s*vocab\s+verbs=(\d+)\s+nouns=(\d+)\s*$")
_MODE_HEADER = re.compile(r"^#!\s*mode\s+(\w+)\s*$")
_DIRECTIVES = ("vocab", "mode")


class _FormulaBuilder(Transformer):
    # applied by the LALR parser as it reduces, so no tree is materialized

    def atom(self, children):
        branch, index = children
        return Atom(Branch(str(branch)), int(index))

    def negate(self, children):
        return Not(children[0])

    def conjoin(self, children):
        return And(children[0], children[1])

    def disjoin(self, children):
        return Or(children[0], children[1])

    def implies(self, children):
        return Implies(children[0], children[1])


@functools.lru_cache(maxsize=None)
def _parser():
    return Lark(GRAMMAR, parser="lalr", transformer=_FormulaBuilder())


def _describe(exc, text):
    if isinstance(exc, UnexpectedEOF):
        return "unexpected end of formula", len(text) + 1
    if isinstance(exc, UnexpectedCharacters):
        return "unexpected character {0!r}".format(exc.char), exc.column
    token = getattr(exc, "token", None)
    if token is not None and token.type == "$END":
        return "unexpected end of formula", len(text.rstrip()) + 1
    return "unexpected {0!r}".format(str(token)), exc.column


def parse_formula(text, line=1):
    """
    Parses a single formula.  `line` is only used for error reporting.

    Raises :class:`~cologic.exceptions.FormulaSyntaxError`.
    """
    try:
        formula = _parser().parse(text)
    except UnexpectedInput as exc:
        message, column = _describe(exc, text)
        raise FormulaSyntaxError(message, line, max(column, 1)) from None
    for atom in iter_atoms(formula):
        if atom.index > U32_MAX:
            raise FormulaSyntaxError(
                "class id {0} does not fit in 32 bits".format(atom.index), line, 1
            )
    return formula


def _infer_mode(formulas):
    if len(formulas) == 1:
        candidate = ConstraintSet(formulas, ConstraintMode.VALID_DISJUNCTION)
        if candidate.valid_pairs() is not None:
            return ConstraintMode.VALID_DISJUNCTION
    return ConstraintMode.INVALID_NEGATIONS


def parse(text, mode=None):
    """
    Parses constraint source into a :class:`~cologic.formula.ConstraintSet`,
    one formula per non-comment line, order preserved.

    :param mode:
        a :class:`~cologic.constants.ConstraintMode` overriding both the
        ``#! mode`` header and inference.

    Raises :class:`~cologic.exceptions.FormulaSyntaxError` on malformed
    input, :class:`~cologic.exceptions.BoundsError` if an atom exceeds the
    ``#! vocab`` header and
    :class:`~cologic.exceptions.InvalidConstraintSet` if there are no
    formulas.
    """
    verbs = nouns = None
    declared_mode = None
    formulas = []
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#!"):
            words = stripped[2:].split()
            keyword = words[0] if words else ""
            vocab = _VOCAB_HEADER.match(stripped)
            mode_match = _MODE_HEADER.match(stripped)
            if vocab:
                verbs, nouns = int(vocab.group(1)), int(vocab.group(2))
            elif mode_match:
                try:
                    declared_mode = ConstraintMode(mode_match.group(1))
                except ValueError:
                    raise FormulaSyntaxError(
                        "unknown mode {0!r}".format(mode_match.group(1)), number, 1
                    ) from None
            elif keyword in _DIRECTIVES:
                raise FormulaSyntaxError(
                    "malformed {0} directive".format(keyword), number, 1
                )
            else:
                logger.debug("line %d: ignoring directive %r", number, stripped)
            continue
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        formulas.append(parse_formula(body, line=number))
        lines.append(number)

    if not formulas:
        raise InvalidConstraintSet("no formulas found")

    mode = mode or declared_mode or _infer_mode(formulas)
    try:
        return ConstraintSet(formulas, mode, verbs=verbs, nouns=nouns)
    except BoundsError as exc:
        raise BoundsError(
            "line {0}: {1}".format(lines[exc.record], exc), record=exc.record
        ) from None


#
# Rendering
#


def _chain(formula):
    # flatten a same-operator chain along its grouping direction
    kind = type(formula)
    if kind is Implies:
        operands = []
        node = formula
        while type(node) is kind:
            operands.append(node.left)
            node = node.right
        operands.append(node)
        return operands
    rights = []
    node = formula
    while type(node) is kind:
        rights.append(node.right)
        node = node.left
    return [node] + rights[::-1]


_SYMBOLS = {And: " & ", Or: " | ", Implies: " -> "}


def render_formula(formula):
    "Returns the canonical text of a single formula."
    if isinstance(formula, Atom):
        return str(formula)
    if isinstance(formula, Not):
        inner = render_formula(formula.operand)
        if isinstance(formula.operand, (Atom, Not)):
            return "!" + inner
        return "!(" + inner + ")"
    parts = []
    for operand in _chain(formula):
        text = render_formula(operand)
        if not isinstance(operand, (Atom, Not)):
            text = "(" + text + ")"
        parts.append(text)
    return _SYMBOLS[type(formula)].join(parts)


def render(constraints):
    """
    Returns the canonical source of `constraints`, headers included.

    Raises :class:`~cologic.exceptions.InvalidConstraintSet` when given no
    formulas.
    """
    if not len(constraints):
        raise InvalidConstraintSet("cannot render an empty constraint set")
    lines = []
    if constraints.verbs is not None and constraints.nouns is not None:
        lines.append(
            "#! vocab verbs={0} nouns={1}".format(constraints.verbs, constraints.nouns)
        )
    lines.append("#! mode {0}".format(constraints.mode.value))
    lines.extend(render_formula(f) for f in constraints)
    return "\n".join(lines) + "\n"


def load(path, mode=None):
    "Reads and parses a constraint file."
    return parse(read_text(path), mode=mode)


def save(constraints, path):
    "Writes `constraints` in canonical form."
    write_text(path, render(constraints))
