"""Pure-Python versions of the compiled kernels.

Distances on the 8-connected grid are accumulated as integer step pairs
(orthogonal count, diagonal count) and only materialized as the float
``n_orth + n_diag * sqrt(2)``.  Distinct pairs never collide in float64 at
grid sizes that fit in memory, so the compiled module, this fallback, and
any independent reimplementation of the same graph agree bit-exactly.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

SQRT2 = math.sqrt(2.0)

# Orthogonal neighbors first, then diagonals.  A diagonal move also needs
# both flanking orthogonal cells free (no corner cutting).
_OFFSETS = ((0, 1), (0, -1), (-1, 0), (1, 0), (-1, 1), (-1, -1), (1, 1), (1, -1))


def _free_bytes(free: np.ndarray) -> bytes:
    return np.ascontiguousarray(free, dtype=np.uint8).tobytes()


def distance_field(free: np.ndarray, sy: int, sx: int) -> np.ndarray:
    """Dijkstra distances in cell units from (sy, sx) to every free cell.

    free: (ny, nx) array, nonzero cells are traversable.  Returns a float64
    array of the same shape with np.inf for unreachable cells.
    """
    ny, nx = free.shape
    n = ny * nx
    fr = _free_bytes(free)
    out = np.full((ny, nx), np.inf)
    if not fr[sy * nx + sx]:
        return out
    orth = [0] * n
    diag = [0] * n
    best = [math.inf] * n
    done = bytearray(n)
    flat = out.reshape(n)
    start = sy * nx + sx
    best[start] = 0.0
    heap = [(0.0, start)]
    while heap:
        prio, idx = heapq.heappop(heap)
        if done[idx]:
            continue
        done[idx] = 1
        flat[idx] = prio
        y, x = divmod(idx, nx)
        a = orth[idx]
        b = diag[idx]
        for k in range(8):
            dy, dx = _OFFSETS[k]
            py = y + dy
            px = x + dx
            if py < 0 or py >= ny or px < 0 or px >= nx:
                continue
            j = py * nx + px
            if not fr[j] or done[j]:
                continue
            if k >= 4:
                if not (fr[py * nx + x] and fr[y * nx + px]):
                    continue
                na = a
                nb = b + 1
            else:
                na = a + 1
                nb = b
            cand = na + nb * SQRT2
            if cand < best[j]:
                best[j] = cand
                orth[j] = na
                diag[j] = nb
                heapq.heappush(heap, (cand, j))
    return out


def plan_path(free: np.ndarray, sy: int, sx: int, ty: int, tx: int) -> np.ndarray | None:
    """Shortest 8-connected path between two free cells, or None if unreachable.

    A* with the octile heuristic; ties on the priority break by flat cell
    index so the expansion order (and therefore the returned path) is
    identical across implementations.  Returns an int32 (k, 2) array of
    (row, col) cells from start to target inclusive.
    """
    ny, nx = free.shape
    n = ny * nx
    fr = _free_bytes(free)
    if not fr[sy * nx + sx] or not fr[ty * nx + tx]:
        return None
    if sy == ty and sx == tx:
        return np.array([[sy, sx]], dtype=np.int32)
    orth = [0] * n
    diag = [0] * n
    best = [math.inf] * n
    parent = [-1] * n
    done = bytearray(n)
    start = sy * nx + sx
    target = ty * nx + tx
    best[start] = 0.0
    dy0 = abs(ty - sy)
    dx0 = abs(tx - sx)
    m0 = dy0 if dy0 < dx0 else dx0
    heap = [(m0 * SQRT2 + float(max(dy0, dx0) - m0), start)]
    reached = False
    while heap:
        _, idx = heapq.heappop(heap)
        if done[idx]:
            continue
        if idx == target:
            reached = True
            break
        done[idx] = 1
        y, x = divmod(idx, nx)
        a = orth[idx]
        b = diag[idx]
        for k in range(8):
            dy, dx = _OFFSETS[k]
            py = y + dy
            px = x + dx
            if py < 0 or py >= ny or px < 0 or px >= nx:
                continue
            j = py * nx + px
            if not fr[j] or done[j]:
                continue
            if k >= 4:
                if not (fr[py * nx + x] and fr[y * nx + px]):
                    continue
                na = a
                nb = b + 1
            else:
                na = a + 1
                nb = b
            cand = na + nb * SQRT2
            if cand < best[j]:
                best[j] = cand
                orth[j] = na
                diag[j] = nb
                parent[j] = idx
                hdy = abs(ty - py)
                hdx = abs(tx - px)
                hm = hdy if hdy < hdx else hdx
                h = hm * SQRT2 + float(max(hdy, hdx) - hm)
                heapq.heappush(heap, (cand + h, j))
    if not reached:
        return None
    cells = []
    idx = target
    while idx != -1:
        cells.append(divmod(idx, nx))
        idx = parent[idx]
    cells.reverse()
    return np.array(cells, dtype=np.int32)


def dtw_total(a: np.ndarray, b: np.ndarray) -> float:
    """Total dynamic-time-warping cost between two point sequences.

    a: (n, 2), b: (m, 2) float64.  Pairwise cost is Euclidean distance;
    standard full DP with no window.
    """
    n = a.shape[0]
    m = b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("dtw_total needs non-empty sequences")
    dx = a[:, 0].reshape(n, 1) - b[:, 0].reshape(1, m)
    dy = a[:, 1].reshape(n, 1) - b[:, 1].reshape(1, m)
    cost = np.sqrt(dx * dx + dy * dy).tolist()
    prev = [0.0] * m
    cur = [0.0] * m
    row = cost[0]
    prev[0] = row[0]
    for j in range(1, m):
        prev[j] = prev[j - 1] + row[j]
    for i in range(1, n):
        row = cost[i]
        cur[0] = prev[0] + row[0]
        for j in range(1, m):
            lo = prev[j]
            if prev[j - 1] < lo:
                lo = prev[j - 1]
            if cur[j - 1] < lo:
                lo = cur[j - 1]
            cur[j] = lo + row[j]
        prev, cur = cur, prev
    return prev[m - 1]
