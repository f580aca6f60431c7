"""Exception types shared across the library."""

from __future__ import annotations


class GPCommitteeError(Exception):
    """Base class for library-specific failures."""


class NumericalBreakdown(GPCommitteeError):
    """Cholesky factorization failed even after the full jitter ladder.

    Attributes
    ----------
    jitters_tried : list[float]
        The jitter values attempted, in order.
    expert_index : int or None
        Index of the expert whose factorization failed, when applicable.
    test_index : int or None
        Index of the test point whose per-point system failed, when applicable.
    """

    def __init__(self, message, jitters_tried=None, expert_index=None, test_index=None):
        super().__init__(message)
        self.jitters_tried = list(jitters_tried) if jitters_tried is not None else []
        self.expert_index = expert_index
        self.test_index = test_index


class InvalidStart(GPCommitteeError):
    """The objective is non-finite at the optimizer's initial point."""


class InvalidPartition(GPCommitteeError):
    """Partition arguments are inconsistent (e.g. more subsets than points)."""


class MissingCommunicationSubset(GPCommitteeError):
    """An operation requires a designated communication subset and none exists."""


class DegenerateTargets(GPCommitteeError):
    """Target vector is constant, so variance-normalized metrics are undefined."""


class DataError(GPCommitteeError):
    """Malformed input data (bad CSV cell, wrong shapes, ...)."""
