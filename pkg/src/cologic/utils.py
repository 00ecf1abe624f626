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
Utilities
~~~~~~~~~
"""
import re

import numpy as np

from cologic.exceptions import UsageError

__all__ = ["parse_id_list", "top_k", "hits_at", "split_batches"]


_RANGE = re.compile(r"^(\d+)(?:-(\d+))?$")


def parse_id_list(text):
    """
    Parses a comma-separated list of class ids where each item is either a
    single id or an inclusive range, e.g. ``"0-3,7"`` -> ``[0, 1, 2, 3, 7]``.
    Order is kept and duplicates are dropped.
    """
    ids = []
    seen = set()
    for item in text.split(","):
        match = _RANGE.match(item.strip())
        if not match:
            raise UsageError("malformed id list item {0!r}".format(item))
        start = int(match.group(1))
        stop = int(match.group(2)) if match.group(2) is not None else start
        if stop < start:
            raise UsageError("descending id range {0!r}".format(item))
        for value in range(start, stop + 1):
            if value not in seen:
                seen.add(value)
                ids.append(value)
    return ids


def top_k(scores, k):
    """
    Returns the indices of the `k` highest scores along the last axis, best
    first.  Ties go to the lowest index.
    """
    scores = np.asarray(scores)
    order = np.argsort(-scores, axis=-1, kind="stable")
    return order[..., :k]


def hits_at(scores, labels, k):
    """
    Fraction of rows of `scores` whose label is among the `k` best entries
    (see :func:`top_k`).  Returns 0.0 for no rows.
    """
    scores = np.atleast_2d(scores)
    labels = np.asarray(labels).reshape(-1, 1)
    if not len(labels):
        return 0.0
    return float((top_k(scores, k) == labels).any(axis=1).mean())


def split_batches(items, size):
    "Consecutive chunks of at most `size` items."
    return [items[i : i + size] for i in range(0, len(items), size)]
