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
Constants
~~~~~~~~~
"""
import enum

__all__ = (
    "Branch",
    "TNorm",
    "ConstraintMode",
    "Domain",
    "Verdict",
    "Aggregation",
    "ExitStatus",
    "CLAMP_EPS",
    "CE_CLAMP",
    "EPIC_VERBS",
    "EPIC_NOUNS",
    "DEFAULT_LR0",
    "DEFAULT_EPOCHS",
    "DEFAULT_LR_DROPS",
    "LR_DROP_FACTOR",
    "DEFAULT_BATCH",
    "DEFAULT_PROMPT_TEMPLATE",
    "API_KEY_ENV",
    "LOG_LEVEL_ENV",
)


class Branch(enum.Enum):
    "Which classifier branch an atom refers to."

    VERB = "verb"
    NOUN = "noun"


class TNorm(enum.Enum):
    "Fuzzy relaxation used to evaluate formulas."

    PRODUCT = "product"
    GOEDEL = "goedel"
    LUKASIEWICZ = "lukasiewicz"


class ConstraintMode(enum.Enum):
    """
    How a validity mask is turned into formulas.

    ``INVALID_NEGATIONS`` emits one ``!(verb:i & noun:j)`` per invalid pair;
    ``VALID_DISJUNCTION`` emits a single disjunction over the valid pairs.
    """

    INVALID_NEGATIONS = "invalid"
    VALID_DISJUNCTION = "valid"


class Domain(enum.IntEnum):
    "Domain labels double as the domain classifier targets."

    SOURCE = 0
    TARGET = 1


class Verdict(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


class Aggregation(enum.Enum):
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"


class ExitStatus(enum.IntEnum):
    """
    Process exit codes.  These are part of the command-line contract and must
    stay stable across releases.
    """

    SUCCESS = 0
    USAGE = 1
    DATA = 2
    NETWORK = 3


#: lower bound applied before taking the log of a satisfaction degree
CLAMP_EPS = 1e-12

#: lower bound applied before taking the log of a class probability
CE_CLAMP = 1e-12

#
# EPIC-KITCHENS-100 vocabulary sizes
#

EPIC_VERBS = 97
EPIC_NOUNS = 300

#
# Training schedule: 30 epochs, lr 3e-3 decimated at the 10th and 20th epochs
#

DEFAULT_LR0 = 3e-3
DEFAULT_EPOCHS = 30
DEFAULT_LR_DROPS = (10, 20)
LR_DROP_FACTOR = 10.0
DEFAULT_BATCH = 32

#
# LLM oracle
#

DEFAULT_PROMPT_TEMPLATE = (
    "In the context of daily cooking activities, does the action "
    '"{verb} {noun}" make sense? '
    "Answer with exactly one word: YES or NO."
)

#: name of the environment variable holding the API key (overridable)
API_KEY_ENV = "OPENAI_API_KEY"

#: environment variable read by the command-line entry point
LOG_LEVEL_ENV = "COLOGIC_LOG_LEVEL"
