"""Pure-NumPy similarity-scan kernels, used when the compiled core is absent.

Bit parity with the compiled kernels is a hard contract: the dot products
accumulate column by column, which gives every row the same left-to-right
addition order as the C loop. Tests assert exact equality between the two
backends, so any edit here needs the matching edit in ``_ckernels.pyx``.
"""

from __future__ import annotations

import numpy as np


def cosine_scan(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine similarity of ``query`` against every row of ``matrix``.

    Returns an (n,) float64 array clamped to [-1, 1]. Raises ValueError
    on dimension mismatch or a zero-norm input.
    """
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    n, d = matrix.shape
    if query.shape != (d,):
        raise ValueError(f"query dimension {query.shape[0]} != matrix dimension {d}")

    qq = 0.0
    for t in range(d):
        qq += float(query[t]) * float(query[t])
    if qq == 0.0:
        raise ValueError("zero-norm query vector")

    num = np.zeros(n, dtype=np.float64)
    rr = np.zeros(n, dtype=np.float64)
    for t in range(d):
        col = matrix[:, t]
        num += col * query[t]
        rr += col * col
    if np.any(rr == 0.0):
        row = int(np.flatnonzero(rr == 0.0)[0])
        raise ValueError(f"zero-norm stored vector at row {row}")

    sims = num / (np.sqrt(qq) * np.sqrt(rr))
    np.clip(sims, -1.0, 1.0, out=sims)
    return sims


def topk_desc(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, descending, ties by lower index."""
    if k < 0:
        raise ValueError("k must be non-negative")
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, scores.shape[0])].astype(np.int64)
