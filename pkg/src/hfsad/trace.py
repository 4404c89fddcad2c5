"""Per-iteration run history shared by HFSAD and the baseline."""

from dataclasses import dataclass, field

import numpy as np

FIELDS = ("k0", "cumulative_updates", "relative_error", "client_gap", "cluster_gap",
          "primal_aux_gap", "objective")


@dataclass(frozen=True)
class TraceRecord:
    k0: int
    cumulative_updates: int
    relative_error: float
    client_gap: float
    cluster_gap: float
    primal_aux_gap: float
    objective: float


@dataclass
class Trace:
    """Column-stored history, one entry per completed global iteration.

    ``client_updates``/``cluster_updates`` hold per-iteration update counts
    of every node (rows = iterations) for staleness audits.
    """

    k0: np.ndarray
    cumulative_updates: np.ndarray
    relative_error: np.ndarray
    client_gap: np.ndarray
    cluster_gap: np.ndarray
    primal_aux_gap: np.ndarray
    objective: np.ndarray
    client_updates: np.ndarray | None = None
    cluster_updates: np.ndarray | None = None
    final_w: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, **extra):
        cols = {name: np.array([getattr(r, name) for r in records]) for name in FIELDS}
        cols["k0"] = cols["k0"].astype(np.int64)
        cols["cumulative_updates"] = cols["cumulative_updates"].astype(np.int64)
        for name in FIELDS[2:]:
            cols[name] = cols[name].astype(float)
        return cls(**cols, **extra)

    def __len__(self):
        return len(self.k0)

    def records(self):
        for i in range(len(self)):
            yield TraceRecord(*(getattr(self, name)[i].item() for name in FIELDS))

    def equals(self, other):
        """Bit-level equality of every column."""
        same = all(np.array_equal(getattr(self, n), getattr(other, n)) for n in FIELDS)
        for n in ("client_updates", "cluster_updates", "final_w"):
            a, b = getattr(self, n), getattr(other, n)
            same &= (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
        return bool(same)
