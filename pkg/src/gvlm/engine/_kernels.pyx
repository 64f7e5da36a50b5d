# Compiled kernels with a fixed, ascending-index summation order.
#
# Every reduction here accumulates left to right (lowest index first) and
# multiply/add are rounded separately (the build passes -ffp-contract=off),
# so results are bit-identical to the pure-numpy backend and to a naive
# scalar loop in the same precision.

cimport cython

ctypedef fused floating:
    float
    double


cdef inline void _mm(const floating* a, const floating* b, floating* c,
                     Py_ssize_t m, Py_ssize_t k, Py_ssize_t n) noexcept nogil:
    # ikj order: each c[i,j] accumulates over p ascending; the j loop is
    # independent per lane so the compiler may vectorise it without
    # changing any per-element rounding order.
    cdef Py_ssize_t i, p, j
    cdef floating aip
    cdef const floating* bp
    cdef floating* ci
    for i in range(m):
        ci = c + i * n
        for j in range(n):
            ci[j] = 0
        for p in range(k):
            aip = a[i * k + p]
            bp = b + p * n
            for j in range(n):
                ci[j] = ci[j] + aip * bp[j]


def matmul2(floating[:, ::1] a, floating[:, ::1] b, floating[:, ::1] out):
    """out[m,n] = a[m,k] @ b[k,n], accumulated over k in ascending order."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if m == 0 or n == 0:
        return
    with nogil:
        _mm(&a[0, 0], &b[0, 0], &out[0, 0], m, k, n)


def matmul3(floating[:, :, ::1] a, floating[:, :, ::1] b, floating[:, :, ::1] out):
    """Batched matmul: out[q] = a[q] @ b[q] for every leading index q."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2]
    cdef Py_ssize_t q
    if nb == 0 or m == 0 or n == 0:
        return
    with nogil:
        for q in range(nb):
            _mm(&a[q, 0, 0], &b[q, 0, 0], &out[q, 0, 0], m, k, n)


cdef inline void _mm_tn(const floating* a, const floating* g, floating* c,
                        Py_ssize_t r, Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    # c[m,n] = a^T @ g for a[r,m], g[r,n], accumulating over rows p ascending;
    # reads both operands contiguously, no transpose copy needed.
    cdef Py_ssize_t p, i, j
    cdef floating aip
    cdef const floating* ap
    cdef const floating* gp
    cdef floating* ci
    for i in range(m * n):
        c[i] = 0
    for p in range(r):
        ap = a + p * m
        gp = g + p * n
        for i in range(m):
            aip = ap[i]
            ci = c + i * n
            for j in range(n):
                ci[j] = ci[j] + aip * gp[j]


def matmul2_tn(floating[:, ::1] a, floating[:, ::1] g, floating[:, ::1] out):
    """out = a.T @ g without materialising the transpose."""
    cdef Py_ssize_t r = a.shape[0], m = a.shape[1], n = g.shape[1]
    if m == 0 or n == 0:
        return
    with nogil:
        _mm_tn(&a[0, 0], &g[0, 0], &out[0, 0], r, m, n)


def matmul3_tn(floating[:, :, ::1] a, floating[:, :, ::1] g, floating[:, :, ::1] out):
    """Batched out[q] = a[q].T @ g[q]."""
    cdef Py_ssize_t nb = a.shape[0], r = a.shape[1], m = a.shape[2], n = g.shape[2]
    cdef Py_ssize_t q
    if nb == 0 or m == 0 or n == 0:
        return
    with nogil:
        for q in range(nb):
            _mm_tn(&a[q, 0, 0], &g[q, 0, 0], &out[q, 0, 0], r, m, n)


def rowsum(floating[:, ::1] a, floating[::1] out):
    """out[i] = sum_j a[i,j], ascending j, double accumulator."""
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    cdef const floating* ai
    with nogil:
        for i in range(m):
            ai = &a[i, 0] if n else NULL
            acc = 0
            for j in range(n):
                acc = acc + ai[j]
            out[i] = <floating> acc


def colsum(floating[:, ::1] a, double[::1] work, floating[::1] out):
    """out[j] = sum_i a[i,j], ascending i, double accumulators."""
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1]
    cdef Py_ssize_t i, j
    cdef const floating* ai
    with nogil:
        for j in range(n):
            work[j] = 0
        for i in range(m):
            ai = &a[i, 0] if n else NULL
            for j in range(n):
                work[j] = work[j] + ai[j]
        for j in range(n):
            out[j] = <floating> work[j]


def vecsum(floating[::1] a):
    """Ascending-order sum of a flat vector, double accumulator."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i
    cdef double acc = 0
    with nogil:
        for i in range(n):
            acc = acc + a[i]
    return acc


def scatter_add_rows(floating[:, ::1] out, long long[::1] idx, floating[:, ::1] src):
    """out[idx[i], :] += src[i, :] for i ascending (duplicates allowed)."""
    cdef Py_ssize_t r = src.shape[0], d = src.shape[1]
    cdef Py_ssize_t i, j
    cdef long long row
    cdef const floating* si
    cdef floating* oi
    with nogil:
        for i in range(r):
            row = idx[i]
            si = &src[i, 0] if d else NULL
            oi = &out[row, 0] if d else NULL
            for j in range(d):
                oi[j] = oi[j] + si[j]
