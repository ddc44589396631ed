# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grid-search and time-warp kernels.

Kept operation-for-operation identical to _fallback.py: same neighbor
order, same (priority, cell index) heap ordering, same canonical
``n_orth + n_diag * sqrt(2)`` float materialization.  Equal-priority pops
cannot occur because priorities are distinct per (orth, diag) pair and the
cell index breaks the remaining ties, so both implementations expand nodes
in the same order and return bit-equal results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt
from libc.stdlib cimport free as cfree
from libc.stdlib cimport malloc, realloc

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951

cdef int* OFF_Y = [0, 0, -1, 1, -1, -1, 1, 1]
cdef int* OFF_X = [1, -1, 0, 0, 1, -1, 1, -1]


cdef struct Heap:
    double* prio
    long* idx
    Py_ssize_t size
    Py_ssize_t cap


cdef inline void heap_init(Heap* h, Py_ssize_t cap) noexcept:
    h.prio = <double*> malloc(cap * sizeof(double))
    h.idx = <long*> malloc(cap * sizeof(long))
    h.size = 0
    h.cap = cap


cdef inline void heap_destroy(Heap* h) noexcept:
    cfree(h.prio)
    cfree(h.idx)


cdef inline bint heap_less(Heap* h, Py_ssize_t i, Py_ssize_t j) noexcept:
    if h.prio[i] != h.prio[j]:
        return h.prio[i] < h.prio[j]
    return h.idx[i] < h.idx[j]


cdef inline void heap_swap(Heap* h, Py_ssize_t i, Py_ssize_t j) noexcept:
    cdef double tp = h.prio[i]
    cdef long ti = h.idx[i]
    h.prio[i] = h.prio[j]
    h.idx[i] = h.idx[j]
    h.prio[j] = tp
    h.idx[j] = ti


cdef inline void heap_push(Heap* h, double p, long v) noexcept:
    cdef Py_ssize_t i, parent
    if h.size == h.cap:
        h.cap *= 2
        h.prio = <double*> realloc(h.prio, h.cap * sizeof(double))
        h.idx = <long*> realloc(h.idx, h.cap * sizeof(long))
    h.prio[h.size] = p
    h.idx[h.size] = v
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) // 2
        if heap_less(h, i, parent):
            heap_swap(h, i, parent)
            i = parent
        else:
            break


cdef inline long heap_pop(Heap* h, double* p) noexcept:
    cdef double out_p = h.prio[0]
    cdef long out_v = h.idx[0]
    cdef Py_ssize_t i = 0, l, r, m
    h.size -= 1
    h.prio[0] = h.prio[h.size]
    h.idx[0] = h.idx[h.size]
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.size and heap_less(h, l, m):
            m = l
        if r < h.size and heap_less(h, r, m):
            m = r
        if m == i:
            break
        heap_swap(h, i, m)
        i = m
    p[0] = out_p
    return out_v


def distance_field(free, int sy, int sx):
    """Dijkstra distances in cell units from (sy, sx) to every free cell."""
    cdef const unsigned char[:, ::1] fr = np.ascontiguousarray(free, dtype=np.uint8)
    cdef Py_ssize_t ny = fr.shape[0]
    cdef Py_ssize_t nx = fr.shape[1]
    cdef Py_ssize_t n = ny * nx
    out_arr = np.full((ny, nx), np.inf)
    cdef double[:, ::1] out = out_arr
    if not fr[sy, sx]:
        return out_arr
    cdef long* orth = <long*> malloc(n * sizeof(long))
    cdef long* diag = <long*> malloc(n * sizeof(long))
    cdef double* best = <double*> malloc(n * sizeof(double))
    cdef unsigned char* done = <unsigned char*> malloc(n)
    cdef Py_ssize_t i
    for i in range(n):
        best[i] = INFINITY
        done[i] = 0
        orth[i] = 0
        diag[i] = 0
    cdef Heap heap
    heap_init(&heap, 1024)
    cdef long start = sy * nx + sx
    best[start] = 0.0
    heap_push(&heap, 0.0, start)
    cdef double prio, cand
    cdef long idx, a, b, na, nb, j
    cdef Py_ssize_t y, x, py, px
    cdef int k, dy, dx
    while heap.size > 0:
        idx = heap_pop(&heap, &prio)
        if done[idx]:
            continue
        done[idx] = 1
        y = idx // nx
        x = idx % nx
        out[y, x] = prio
        a = orth[idx]
        b = diag[idx]
        for k in range(8):
            dy = OFF_Y[k]
            dx = OFF_X[k]
            py = y + dy
            px = x + dx
            if py < 0 or py >= ny or px < 0 or px >= nx:
                continue
            j = py * nx + px
            if not fr[py, px] or done[j]:
                continue
            if k >= 4:
                if not (fr[py, x] and fr[y, px]):
                    continue
                na = a
                nb = b + 1
            else:
                na = a + 1
                nb = b
            cand = <double>na + <double>nb * SQRT2
            if cand < best[j]:
                best[j] = cand
                orth[j] = na
                diag[j] = nb
                heap_push(&heap, cand, j)
    heap_destroy(&heap)
    cfree(orth)
    cfree(diag)
    cfree(best)
    cfree(done)
    return out_arr


def plan_path(free, int sy, int sx, int ty, int tx):
    """Shortest 8-connected path between two free cells, or None.

    A* with the octile heuristic, (priority, cell index) tie-break.
    Returns an int32 (k, 2) array of (row, col) cells start..target.
    """
    cdef const unsigned char[:, ::1] fr = np.ascontiguousarray(free, dtype=np.uint8)
    cdef Py_ssize_t ny = fr.shape[0]
    cdef Py_ssize_t nx = fr.shape[1]
    cdef Py_ssize_t n = ny * nx
    if not fr[sy, sx] or not fr[ty, tx]:
        return None
    if sy == ty and sx == tx:
        return np.array([[sy, sx]], dtype=np.int32)
    cdef long* orth = <long*> malloc(n * sizeof(long))
    cdef long* diag = <long*> malloc(n * sizeof(long))
    cdef double* best = <double*> malloc(n * sizeof(double))
    cdef long* parent = <long*> malloc(n * sizeof(long))
    cdef unsigned char* done = <unsigned char*> malloc(n)
    cdef Py_ssize_t i
    for i in range(n):
        best[i] = INFINITY
        done[i] = 0
        orth[i] = 0
        diag[i] = 0
        parent[i] = -1
    cdef Heap heap
    heap_init(&heap, 1024)
    cdef long start = sy * nx + sx
    cdef long target = ty * nx + tx
    best[start] = 0.0
    cdef long hdy = ty - sy if ty >= sy else sy - ty
    cdef long hdx = tx - sx if tx >= sx else sx - tx
    cdef long hm = hdy if hdy < hdx else hdx
    cdef long hM = hdx if hdy < hdx else hdy
    heap_push(&heap, <double>hm * SQRT2 + <double>(hM - hm), start)
    cdef bint reached = False
    cdef double prio, cand, h
    cdef long idx, a, b, na, nb, j
    cdef Py_ssize_t y, x, py, px
    cdef int k, dy, dx
    while heap.size > 0:
        idx = heap_pop(&heap, &prio)
        if done[idx]:
            continue
        if idx == target:
            reached = True
            break
        done[idx] = 1
        y = idx // nx
        x = idx % nx
        a = orth[idx]
        b = diag[idx]
        for k in range(8):
            dy = OFF_Y[k]
            dx = OFF_X[k]
            py = y + dy
            px = x + dx
            if py < 0 or py >= ny or px < 0 or px >= nx:
                continue
            j = py * nx + px
            if not fr[py, px] or done[j]:
                continue
            if k >= 4:
                if not (fr[py, x] and fr[y, px]):
                    continue
                na = a
                nb = b + 1
            else:
                na = a + 1
                nb = b
            cand = <double>na + <double>nb * SQRT2
            if cand < best[j]:
                best[j] = cand
                orth[j] = na
                diag[j] = nb
                parent[j] = idx
                hdy = ty - py if ty >= py else py - ty
                hdx = tx - px if tx >= px else px - tx
                hm = hdy if hdy < hdx else hdx
                hM = hdx if hdy < hdx else hdy
                h = <double>hm * SQRT2 + <double>(hM - hm)
                heap_push(&heap, cand + h, j)
    heap_destroy(&heap)
    cfree(orth)
    cfree(diag)
    cfree(best)
    if not reached:
        cfree(parent)
        cfree(done)
        return None
    cells = []
    cdef long cur = target
    while cur != -1:
        cells.append((cur // nx, cur % nx))
        cur = parent[cur]
    cfree(parent)
    cfree(done)
    cells.reverse()
    return np.array(cells, dtype=np.int32)


def dtw_total(a, b):
    """Total dynamic-time-warping cost between two (k, 2) point sequences."""
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    if n == 0 or m == 0:
        raise ValueError("dtw_total needs non-empty sequences")
    cdef double* prev = <double*> malloc(m * sizeof(double))
    cdef double* cur = <double*> malloc(m * sizeof(double))
    cdef double* tmp
    cdef Py_ssize_t i, j
    cdef double dx, dy, lo
    dx = av[0, 0] - bv[0, 0]
    dy = av[0, 1] - bv[0, 1]
    prev[0] = sqrt(dx * dx + dy * dy)
    for j in range(1, m):
        dx = av[0, 0] - bv[j, 0]
        dy = av[0, 1] - bv[j, 1]
        prev[j] = prev[j - 1] + sqrt(dx * dx + dy * dy)
    for i in range(1, n):
        dx = av[i, 0] - bv[0, 0]
        dy = av[i, 1] - bv[0, 1]
        cur[0] = prev[0] + sqrt(dx * dx + dy * dy)
        for j in range(1, m):
            lo = prev[j]
            if prev[j - 1] < lo:
                lo = prev[j - 1]
            if cur[j - 1] < lo:
                lo = cur[j - 1]
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            cur[j] = lo + sqrt(dx * dx + dy * dy)
        tmp = prev
        prev = cur
        cur = tmp
    lo = prev[m - 1]
    cfree(prev)
    cfree(cur)
    return lo
