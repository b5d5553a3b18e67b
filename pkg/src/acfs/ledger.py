"""Oracle-budget accounting and the optimiser result record."""

import threading
from dataclasses import dataclass, field

import numpy as np


class OracleLedger:
    """Counter of oracle scenario draws, broken down by named budget line.

    Every draw from the true data-generating process is charged to the
    line that is current when it happens; ``total`` is the sum over lines.
    """

    def __init__(self):
        self._lines = {}
        self._line = "main"
        self._lock = threading.Lock()

    def charge(self, n_draws, line=None):
        with self._lock:
            key = line or self._line
            self._lines[key] = self._lines.get(key, 0) + int(n_draws)

    def set_line(self, line):
        self._line = line
        return self

    @property
    def total(self):
        return sum(self._lines.values())

    @property
    def lines(self):
        return dict(self._lines)

    def __repr__(self):
        return f"OracleLedger(total={self.total}, lines={self._lines})"


@dataclass
class Solution:
    """Outcome of one optimiser run.

    ``estimate`` is the method's own final risk estimate at ``x_star``
    (not the protocol's independent 2,000-draw evaluation).
    """

    x_star: np.ndarray
    estimate: object
    oracle_calls: int
    ledger_lines: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
