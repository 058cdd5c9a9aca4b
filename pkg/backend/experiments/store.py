"""
Iteration-major storage of every signal of an ILC experiment.

Rows are iterations 0..n_iterations (row 0 holds the initial experiment when
one was run), columns are times 1..horizon stored at column t-1. Reads at
nonpositive times, and reads of iterations before `first_iteration`, return 0.
"""
import hashlib
import json
import logging

import numpy as np

from backend.exceptions import HorizonIndexError, SequencingError

logger = logging.getLogger(__name__)


class IterationStore:
    SIGNALS = ('u', 'y', 'v', 'e')

    def __init__(self, n_iterations, horizon, y_d, first_iteration=1, metadata=None):
        if first_iteration not in (0, 1):
            raise ValueError(f"first_iteration must be 0 or 1, got {first_iteration}")
        y_d = np.asarray(y_d, dtype=float).reshape(-1)
        if y_d.shape[0] != horizon:
            raise ValueError(f"reference has {y_d.shape[0]} samples, horizon is {horizon}")

        self.n_iterations = int(n_iterations)
        self.horizon = int(horizon)
        self.first_iteration = first_iteration
        self.y_d = y_d
        self.metadata = dict(metadata or {})
        self.completed = first_iteration - 1

        shape = (self.n_iterations + 1, self.horizon)
        self.u = np.zeros(shape)
        self.y = np.zeros(shape)
        self.v = np.zeros(shape)
        self.e = np.zeros(shape)

    def _check(self, j, t=None):
        if j < 0 or j > self.n_iterations:
            raise HorizonIndexError(f"iteration {j} outside 0..{self.n_iterations}")
        if t is not None and t > self.horizon:
            raise HorizonIndexError(f"time {t} outside 1..{self.horizon}")

    def value(self, signal, j, t):
        self._check(j, t)
        if t < 1 or j < self.first_iteration:
            return 0.0
        return float(getattr(self, signal)[j, t - 1])

    def window(self, signal, j, t, count):
        """[x_j(t), x_j(t-1), ..., x_j(t-count+1)] with zeros at nonpositive times."""
        self._check(j, t)
        out = np.zeros(count)
        if j < self.first_iteration:
            return out
        row = getattr(self, signal)[j]
        for m in range(count):
            if t - m >= 1:
                out[m] = row[t - m - 1]
        return out

    def error_stack(self, j, t, n_c):
        """[e_j(t), e_{j-1}(t), ..., e_{j-n_c+1}(t)] with zeros before the first stored iteration."""
        self._check(j, t)
        out = np.zeros(n_c)
        for m in range(n_c):
            i = j - m
            if i >= self.first_iteration and i <= self.completed:
                out[m] = self.e[i, t - 1]
        return out

    def begin_iteration(self, j):
        if j != self.completed + 1:
            raise SequencingError(f"iteration {j} started after iteration {self.completed}")
        self._check(j)
        for signal in self.SIGNALS:
            getattr(self, signal)[j] = 0.0

    def set_sample(self, j, t, **signals):
        self._check(j, t)
        if j != self.completed + 1:
            raise SequencingError(f"iteration {j} is not the one in progress")
        for signal, value in signals.items():
            getattr(self, signal)[j, t - 1] = value

    def record_iteration(self, j, u, y, v):
        """Store a whole iteration; the error row is derived from the reference."""
        self.begin_iteration(j)
        self.u[j] = np.asarray(u, dtype=float)
        self.y[j] = np.asarray(y, dtype=float)
        self.v[j] = np.asarray(v, dtype=float)
        self.commit_iteration(j)

    def commit_iteration(self, j):
        if j != self.completed + 1:
            raise SequencingError(f"iteration {j} committed after iteration {self.completed}")
        if self.y[j, 0] != 0.0:
            raise ValueError(f"y_{j}(1) must be 0, got {self.y[j, 0]!r}")
        self.e[j] = self.y_d - self.y[j]
        self.completed = j

    def iterations(self):
        return range(self.first_iteration, self.completed + 1)

    def config_hash(self):
        config = self.metadata.get('config')
        if config is None:
            return None
        payload = json.dumps(config, sort_keys=True, default=str).encode()
        return hashlib.sha256(payload).hexdigest()[:16]
