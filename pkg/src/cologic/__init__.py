"""
Cologic
~~~~~~~
"""
#
#  Copyright © 2023 The Cologic contributors
#
#  This file is part of Cologic.
#
#  Cologic is free software under terms of the GNU Lesser
#  General Public License version 3 (LGPLv3) as published by the Free
#  Software Foundation. See the file README.rst for copying conditions.
#
from .constants import (
    Aggregation,
    Branch,
    ConstraintMode,
    Domain,
    ExitStatus,
    TNorm,
    Verdict,
)
from .cooccur import CooccurrenceMatrix, ValidityMask, Vocabulary
from .dsl import parse, render
from .exceptions import CologicError, DataError, OracleError, UsageError
from .formula import (
    And,
    Atom,
    ConstraintSet,
    Implies,
    Not,
    Or,
    Semantics,
    TruthAssignment,
    evaluate,
    logic_loss,
    semantic_loss,
)

__version__ = "0.1.0"

__all__ = (
    "Aggregation",
    "Branch",
    "ConstraintMode",
    "Domain",
    "ExitStatus",
    "TNorm",
    "Verdict",
    "CooccurrenceMatrix",
    "ValidityMask",
    "Vocabulary",
    "parse",
    "render",
    "CologicError",
    "DataError",
    "OracleError",
    "UsageError",
    "And",
    "Atom",
    "ConstraintSet",
    "Implies",
    "Not",
    "Or",
    "Semantics",
    "TruthAssignment",
    "evaluate",
    "logic_loss",
    "semantic_loss",
)
