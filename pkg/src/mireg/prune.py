from dataclasses import dataclass

import numpy as np


@dataclass
class PruneConfig:
    tau_n: int = 10

    def __post_init__(self):
        if self.tau_n < 1:
            raise ValueError("tau_n must be >= 1")


def neighbor_counts(s_hat):
    """Row sums of a binary adjacency, not counting the self-loop."""
    s_hat = np.asarray(s_hat)
    return s_hat.sum(axis=1).astype(np.int64) - (np.diagonal(s_hat) != 0)


def prune(s_hat, tau_n):
    """Ascending indices of nodes with at least ``tau_n`` neighbors (possibly empty)."""
    return np.flatnonzero(neighbor_counts(s_hat) >= tau_n)
