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
File Input/Output
~~~~~~~~~~~~~~~~~

All text files are UTF-8.  Whole-file writes go through a temporary sibling
and :func:`os.replace`, so a reader never sees a half-written file.
"""
import json
import os
import tempfile

from cologic.exceptions import ParseError, UsageError

__all__ = [
    "read_text",
    "write_text",
    "write_bytes",
    "read_json",
    "write_json",
    "append_json_line",
]


def read_text(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def write_bytes(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text):
    write_bytes(path, text.encode("utf-8"))


def read_json(path, usage=True):
    """
    Loads a JSON document.  Malformed JSON raises
    :class:`~cologic.exceptions.UsageError` for configuration files
    (`usage` is `True`) and :class:`~cologic.exceptions.ParseError` for data.
    """
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        error = UsageError if usage else ParseError
        raise error("{0}: invalid JSON: {1}".format(path, exc)) from None


def write_json(path, obj, sort_keys=True):
    write_text(path, json.dumps(obj, indent=2, sort_keys=sort_keys) + "\n")


def append_json_line(f, obj):
    """
    Appends one compact JSON record to an open text file and forces it to
    disk before returning.
    """
    f.write(json.dumps(obj, sort_keys=True) + "\n")
    f.flush()
    os.fsync(f.fileno())
