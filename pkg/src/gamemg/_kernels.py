"""Compiled sequential kernels.

Everything here is deterministic: loops run in a fixed order, so results are
reproducible run to run and match a plain-Python reference loop bit for bit.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def csr_matvec(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        out[i] = s


@njit(cache=True)
def segment_sums(vals, ptr, out):
    """Left-to-right sum of each segment; empty segments give zero."""
    for i in range(ptr.shape[0] - 1):
        s = 0.0
        for p in range(ptr[i], ptr[i + 1]):
            s += vals[p]
        out[i] = s


@njit(cache=True)
def gs_sweep(indptr, indices, data, diag, u, f, order):
    """One Gauss-Seidel sweep over the rows listed in `order`, in place."""
    for k in range(order.shape[0]):
        i = order[k]
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s += data[p] * u[j]
        u[i] = (f[i] - s) / diag[i]


@njit(cache=True)
def rs_first_pass(s_ptr, s_idx, st_ptr, st_idx):
    """Greedy coarse/fine splitting driven by strong-influence counts.

    `s_*` is the strong-connection graph (row i lists the points i depends
    on), `st_*` its transpose (points that depend on i).  Returns a status
    array with 1 for coarse points and 2 for fine points.

    The weight of an undecided point is the number of undecided points that
    depend on it plus twice the number of fine points that depend on it;
    the point of maximal weight becomes coarse and its dependents fine.
    Implemented with bucketed doubly-linked lists so the whole pass is
    O(n + edges).
    """
    n = s_ptr.shape[0] - 1
    UNDECIDED, COARSE, FINE = 0, 1, 2
    status = np.zeros(n, dtype=np.int8)
    lam = np.empty(n, dtype=np.int64)
    for i in range(n):
        lam[i] = st_ptr[i + 1] - st_ptr[i]

    nbucket = 2 * n + 2
    head = np.full(nbucket, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    prv = np.full(n, -1, dtype=np.int64)

    for i in range(n - 1, -1, -1):  # push in reverse so buckets pop low index first
        b = lam[i]
        nxt[i] = head[b]
        if head[b] >= 0:
            prv[head[b]] = i
        prv[i] = -1
        head[b] = i

    def _remove(i, b, head, nxt, prv):
        if prv[i] >= 0:
            nxt[prv[i]] = nxt[i]
        else:
            head[b] = nxt[i]
        if nxt[i] >= 0:
            prv[nxt[i]] = prv[i]

    def _push(i, b, head, nxt, prv):
        nxt[i] = head[b]
        if head[b] >= 0:
            prv[head[b]] = i
        prv[i] = -1
        head[b] = i

    top = 2 * n + 1
    remaining = n
    while remaining > 0:
        while top > 0 and head[top] < 0:
            top -= 1
        i = head[top]
        _remove(i, lam[i], head, nxt, prv)
        status[i] = COARSE
        remaining -= 1
        # points i depends on lose one undecided dependent
        for p in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[p]
            if status[j] == UNDECIDED:
                _remove(j, lam[j], head, nxt, prv)
                lam[j] -= 1
                _push(j, lam[j], head, nxt, prv)
        # dependents of i become fine
        for p in range(st_ptr[i], st_ptr[i + 1]):
            m = st_idx[p]
            if status[m] != UNDECIDED:
                continue
            _remove(m, lam[m], head, nxt, prv)
            status[m] = FINE
            remaining -= 1
            for q in range(s_ptr[m], s_ptr[m + 1]):
                j = s_idx[q]
                if status[j] == UNDECIDED:
                    _remove(j, lam[j], head, nxt, prv)
                    lam[j] += 1
                    if lam[j] > top:
                        top = lam[j]
                    _push(j, lam[j], head, nxt, prv)
    return status


@njit(cache=True)
def rs_second_pass(s_ptr, s_idx, status):
    """Enforce that strongly coupled fine-fine pairs share a coarse point.

    Scans fine points in ascending order.  On the first violation the
    offending neighbour is tentatively promoted to coarse; on a second
    violation for the same point the point itself is promoted instead and
    the tentative promotion is reverted.  Modifies `status` in place.
    """
    n = s_ptr.shape[0] - 1
    COARSE, FINE = 1, 2
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if status[i] != FINE:
            continue
        for p in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[p]
            if status[j] == COARSE:
                mark[j] = i
        tentative = -1
        for p in range(s_ptr[i], s_ptr[i + 1]):
            k = s_idx[p]
            if status[k] != FINE:
                continue
            common = False
            for q in range(s_ptr[k], s_ptr[k + 1]):
                l = s_idx[q]
                if status[l] == COARSE and mark[l] == i:
                    common = True
                    break
            if not common:
                if tentative >= 0:
                    status[tentative] = FINE
                    status[i] = COARSE
                    tentative = -1
                    break
                tentative = k
                status[k] = COARSE
                mark[k] = i


@njit(cache=True)
def interpolation_weights(indptr, indices, data, strong, status, cmap):
    """Classical two-point interpolation rows for the fine points.

    Coarse points interpolate by identity.  A fine point i interpolates from
    its strong coarse neighbours; weak couplings are collapsed onto the
    diagonal and strong fine-fine couplings are distributed over the coarse
    neighbours shared with the intermediate point.  Returns CSR data for P
    plus an error flag (row index of the first fine point whose weights
    could not be formed, or -1).
    """
    n = indptr.shape[0] - 1
    COARSE = 1
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if status[i] == COARSE:
            counts[i] = 1
        else:
            c = 0
            for p in range(indptr[i], indptr[i + 1]):
                if strong[p] and status[indices[p]] == COARSE:
                    c += 1
            counts[i] = c

    p_ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        p_ptr[i + 1] = p_ptr[i] + counts[i]
    nnz = p_ptr[n]
    p_idx = np.empty(nnz, dtype=np.int64)
    p_val = np.empty(nnz, dtype=np.float64)

    slot = np.full(n, -1, dtype=np.int64)   # column -> position in current row of P
    stamp = np.full(n, -1, dtype=np.int64)
    bad_row = -1

    for i in range(n):
        if status[i] == COARSE:
            p_idx[p_ptr[i]] = cmap[i]
            p_val[p_ptr[i]] = 1.0
            continue
        base = p_ptr[i]
        nc = 0
        diag = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                diag = data[p]
            elif strong[p] and status[j] == COARSE:
                p_idx[base + nc] = cmap[j]
                p_val[base + nc] = data[p]
                slot[j] = base + nc
                stamp[j] = i
                nc += 1
        if nc == 0:
            if bad_row < 0:
                bad_row = i
            continue
        weak = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                continue
            if strong[p] and status[j] == COARSE:
                continue
            if strong[p] and status[j] == 2:  # strong fine-fine coupling
                denom = 0.0
                for q in range(indptr[j], indptr[j + 1]):
                    l = indices[q]
                    if stamp[l] == i and data[q] < 0.0:
                        denom += data[q]
                if denom == 0.0:
                    weak += data[p]
                else:
                    for q in range(indptr[j], indptr[j + 1]):
                        l = indices[q]
                        if stamp[l] == i and data[q] < 0.0:
                            p_val[slot[l]] += data[p] * data[q] / denom
            else:
                weak += data[p]
        scale = diag + weak
        if scale == 0.0:
            if bad_row < 0:
                bad_row = i
            continue
        for t in range(base, base + nc):
            p_val[t] = -p_val[t] / scale
    return p_ptr, p_idx, p_val, bad_row


@njit(cache=True)
def band_factor(rowwin, n, kl, ku, piv, tiny):
    """LU factorisation with partial pivoting on a row-window band layout.

    `rowwin[i, :]` holds row i over absolute columns [i-kl, i+ku+kl]; the
    extra kl columns absorb pivoting fill.  Multipliers overwrite the
    eliminated entries.  Returns -1 on success, else the column index of
    the first pivot that fell below `tiny`.
    """
    w = ku + 2 * kl + 1
    for j in range(n):
        iend = j + kl
        if iend > n - 1:
            iend = n - 1
        p = j
        best = abs(rowwin[j, kl])
        for i in range(j + 1, iend + 1):
            c = abs(rowwin[i, j - i + kl])
            if c > best:
                best = c
                p = i
        if best <= tiny:
            return j
        piv[j] = p
        if p != j:
            for t in range(kl, w):  # absolute columns j .. j+ku+kl
                a = rowwin[j, t]
                b = rowwin[p, t - (p - j)]
                rowwin[j, t] = b
                rowwin[p, t - (p - j)] = a
        pv = rowwin[j, kl]
        for i in range(j + 1, iend + 1):
            off = j - i + kl
            m = rowwin[i, off] / pv
            rowwin[i, off] = m
            if m != 0.0:
                for t in range(1, ku + kl + 1):
                    rowwin[i, off + t] -= m * rowwin[j, kl + t]
    return -1


@njit(cache=True)
def band_solve(rowwin, n, kl, ku, piv, b):
    """Solve with the factors produced by band_factor; overwrites b."""
    for j in range(n):
        p = piv[j]
        if p != j:
            t = b[j]
            b[j] = b[p]
            b[p] = t
        iend = j + kl
        if iend > n - 1:
            iend = n - 1
        for i in range(j + 1, iend + 1):
            b[i] -= rowwin[i, j - i + kl] * b[j]
    for j in range(n - 1, -1, -1):
        s = b[j]
        tend = ku + kl
        if j + tend > n - 1:
            tend = n - 1 - j
        for t in range(1, tend + 1):
            s -= rowwin[j, kl + t] * b[j + t]
        b[j] = s / rowwin[j, kl]
