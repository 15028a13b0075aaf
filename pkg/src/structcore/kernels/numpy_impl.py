"""Pure-numpy kernel implementations (fallback path).

Same contracts as the numba backend: f64 accumulation everywhere, clamped
squared distances, first-occurrence (smallest-index) argmax tie-breaking.
Results are independent of any internal blocking.
"""

import numpy as np

_KNN_BLOCK = 256


def knn_mean_sqdist(queries, bank, k):
    """Mean squared euclidean distance to the k nearest bank rows.

    queries: (P, D) float32, bank: (N, D) float32. Uses the blocked
    ||q||^2 + ||m||^2 - 2 q.m expansion with f64 accumulation; negative
    products of the expansion clamp to 0. Returns (P,) float64.
    """
    q = queries.astype(np.float64)
    b = bank.astype(np.float64)
    n = b.shape[0]
    kk = min(k, n)
    b_sq = np.einsum("nd,nd->n", b, b)
    bt = b.T.copy()
    out = np.empty(q.shape[0], dtype=np.float64)
    for lo in range(0, q.shape[0], _KNN_BLOCK):
        qb = q[lo : lo + _KNN_BLOCK]
        d2 = qb @ bt
        d2 *= -2.0
        d2 += np.einsum("pd,pd->p", qb, qb)[:, None]
        d2 += b_sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        if kk < n:
            d2 = np.partition(d2, kk - 1, axis=1)[:, :kk]
        out[lo : lo + _KNN_BLOCK] = d2.sum(axis=1) / kk
    return out


def kcenter_greedy(points, m):
    """Greedy farthest-point selection of m rows, starting from row 0.

    points: (T, d) float64. Ties break to the smallest index; rows already
    selected are masked with a negative sentinel so exact duplicates are
    taken in index order. Returns (m,) int64 of unique indices.
    """
    t = points.shape[0]
    selected = np.empty(m, dtype=np.int64)
    selected[0] = 0
    diff = points - points[0]
    min_d2 = np.einsum("td,td->t", diff, diff)
    min_d2[0] = -1.0
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))
        selected[i] = nxt
        diff = points - points[nxt]
        d2 = np.einsum("td,td->t", diff, diff)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[nxt] = -1.0
    return selected


def bilinear_upsample(src, out_h, out_w):
    """Half-pixel-center bilinear resampling, f64 in/out.

    Source coordinate for output pixel i is (i + 0.5) * scale - 0.5,
    clamped into the source range.
    """
    h, w = src.shape
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    np.clip(sy, 0.0, h - 1.0, out=sy)
    np.clip(sx, 0.0, w - 1.0, out=sx)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    a = src[np.ix_(y0, x0)]
    b = src[np.ix_(y0, x1)]
    c = src[np.ix_(y1, x0)]
    d = src[np.ix_(y1, x1)]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    return top + fy * (bot - top)


def _reflect_indices(idx, n):
    """Fold out-of-range indices by edge-inclusive mirroring."""
    idx = np.asarray(idx, dtype=np.int64).copy()
    if n == 1:
        return np.zeros_like(idx)
    while True:
        neg = idx < 0
        idx[neg] = -idx[neg] - 1
        over = idx >= n
        idx[over] = 2 * n - 1 - idx[over]
        if not (neg.any() or over.any()):
            return idx


def gaussian_blur(img, kern):
    """Separable blur with reflect padding, f64 accumulation.

    kern is the full 1-D kernel of odd length 2R+1, normalized to sum 1.
    """
    r = (kern.shape[0] - 1) // 2
    h, w = img.shape
    tmp = np.zeros_like(img)
    for t in range(kern.shape[0]):
        cols = _reflect_indices(np.arange(w) + t - r, w)
        tmp += img[:, cols] * kern[t]
    out = np.zeros_like(img)
    for t in range(kern.shape[0]):
        rows = _reflect_indices(np.arange(h) + t - r, h)
        out += tmp[rows, :] * kern[t]
    return out


def matmul_f64acc(a, b):
    """f32 @ f32 with f64 accumulation, result cast back to f32."""
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def routing_mean_min_sqdist(patches, protos):
    """Mean over patches of min squared distance to any prototype row."""
    p = patches.astype(np.float64)
    r = protos.astype(np.float64)
    d2 = (
        np.einsum("pd,pd->p", p, p)[:, None]
        + np.einsum("kd,kd->k", r, r)[None, :]
        - 2.0 * (p @ r.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return float(d2.min(axis=1).mean())
