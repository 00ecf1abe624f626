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
Exceptions
~~~~~~~~~~

Every error raised on purpose by the library derives from
:class:`CologicError` and carries the process exit status that the
command-line front end reports for it.
"""
from cologic.constants import ExitStatus


class CologicError(Exception):
    """
    Base class.  The ``code`` attribute is the exit status used by
    :mod:`cologic.cli` when the error reaches the top level.  It can be
    overridden per instance with the ``code`` keyword arg.
    """

    code = ExitStatus.DATA

    def __init__(self, *args, code=None):
        if code is not None:
            self.code = code
        super(CologicError, self).__init__(*args)


class UsageError(CologicError):
    "Malformed invocation: bad JSON, bad flag values, mismatched flag counts."

    code = ExitStatus.USAGE


class DataError(CologicError):
    "Input data failed validation."

    code = ExitStatus.DATA


class FormulaSyntaxError(DataError):
    """
    The constraint source could not be parsed.  ``line`` and ``column`` are
    1-based.
    """

    def __init__(self, message, line, column):
        self.message = message
        self.line = line
        self.column = column
        super(FormulaSyntaxError, self).__init__(
            "line {0}, column {1}: {2}".format(line, column, message)
        )


class BoundsError(DataError):
    """
    A class id is outside the vocabulary.  ``record`` is the index of the
    offending item when the error comes from a sequence of records.
    """

    def __init__(self, message, record=None):
        self.record = record
        super(BoundsError, self).__init__(message)


class DimensionMismatch(DataError):
    "Vector or matrix dimensions disagree with the vocabulary in force."


class ShapeMismatch(DataError):
    "Operands of a graph operation have incompatible shapes."


class NonScalarLoss(DataError):
    "Backpropagation was started from a node holding more than one element."


class EmptyMask(DataError):
    "A validity mask has no valid entry."


class InvalidConstraintSet(DataError):
    "A constraint set is empty or otherwise unusable."


class ParseError(DataError):
    "A data file is malformed.  ``line`` is 1-based."

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {0}: {1}".format(line, message)
        super(ParseError, self).__init__(message)


class VocabMismatch(DataError):
    "Declared sizes disagree with the vocabulary in force."


class MissingLabels(DataError):
    "A source-domain sample carries no labels."


class ConfigError(DataError):
    "A configuration record violates its invariants."


class TemplateError(DataError):
    "A prompt template lacks one of the required slots."


class UidMismatch(DataError):
    """
    Prediction files disagree on their sample ids.  ``missing`` holds the
    symmetric difference.
    """

    def __init__(self, missing):
        self.missing = sorted(missing)
        preview = ", ".join(self.missing[:10])
        if len(self.missing) > 10:
            preview += ", ..."
        super(UidMismatch, self).__init__(
            "uid sets differ in {0} ids: {1}".format(len(self.missing), preview)
        )


class OracleError(CologicError):
    "Failure while talking to the language model endpoint."

    code = ExitStatus.NETWORK


class NetworkError(OracleError):
    "Requests kept failing after all retries.  The cache keeps what was done."


class AuthError(OracleError):
    "No API key, or the endpoint rejected it."
