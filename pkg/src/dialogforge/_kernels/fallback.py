"""Pure numpy greedy threshold clustering, used when the compiled
extension is unavailable.  Must stay behaviorally identical to
``_greedy.pyx``."""

import numpy as np

_BLOCK = 1024


def greedy_cluster(matrix, epsilon: float):
    """Two-pass clustering of unit vectors.

    Pass 1 scans rows in order; a row becomes a focus only when its
    similarity to every earlier focus is <= epsilon.  Pass 2 assigns each
    absorbed row to its most similar focus (earliest focus wins ties).

    Returns ``(focus_indices, assignments)`` where ``assignments[i]`` is the
    row index of the focus owning row i (itself for foci).
    """
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return np.empty(0, dtype=np.int64), assign

    focus_rows = np.empty_like(matrix)
    foci: list[int] = []
    for i in range(n):
        if foci:
            sims = focus_rows[: len(foci)] @ matrix[i]
            if float(sims.max()) > epsilon:
                continue
        focus_rows[len(foci)] = matrix[i]
        foci.append(i)
        assign[i] = i

    focus_idx = np.asarray(foci, dtype=np.int64)
    focus_rows = focus_rows[: len(foci)]
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        block = matrix[start:stop] @ focus_rows.T
        best = focus_idx[np.argmax(block, axis=1)]
        chunk = assign[start:stop]
        mask = chunk == -1
        chunk[mask] = best[mask]
    return focus_idx, assign
