"""Pure-Python fallback for the hot SGD loop.

Same contract as the compiled extension `edgepipe._kernel`. Results are
deterministic but may differ from the compiled kernel in the last few bits
(BLAS dot products vs explicit loops).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def sgd_trace(
    w: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    alpha: float,
    reg2: float,
    A: np.ndarray,
    h: np.ndarray,
    c0: float,
    lam_n: float,
    losses: np.ndarray,
) -> None:
    """Run len(idx) SGD updates on w in place, recording the full-data loss
    after every update.

    idx[j] is the dataset row used by update j. reg2 = 2*lam/N is the
    regularizer gradient coefficient. The full-data loss is evaluated from
    sufficient statistics: L(w) = w'Aw - 2h'w + c0 + lam_n*||w||^2.
    """
    two_alpha = 2.0 * alpha
    decay = 1.0 - alpha * reg2
    for j in range(idx.shape[0]):
        i = idx[j]
        xi = X[i]
        r = float(w @ xi) - y[i]
        w *= decay
        w -= (two_alpha * r) * xi
        losses[j] = float(w @ (A @ w)) - 2.0 * float(h @ w) + c0 + lam_n * float(w @ w)
