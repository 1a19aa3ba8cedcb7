"""Hot numeric kernels for hit-count distribution maintenance.

Every kernel operates on a dense table ``D`` of shape ``(m_count, capacity)``
holding, per genotype row, the probability of exactly ``j`` hits from the
current peptide support (columns beyond the support width are kept at zero).

Two interchangeable backends are provided:

* ``numba``  -- scalar loops compiled with ``@njit`` (the default when numba
  is importable),
* ``numpy``  -- a vectorized pure-numpy fallback.

The backend is chosen once at import time from the ``COVAX_BACKEND``
environment variable (``auto``, ``numba`` or ``numpy``).  Both backends are
always importable through :func:`get_backend` so they can be compared, see
``benchmarks/backend_bench.py``.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

BACKEND_ENV = "COVAX_BACKEND"

# Row sums drifting further than this after a removal trigger a rebuild of
# the affected genotype row from scratch.  With the direction-switched
# deconvolution the drift stays near machine noise, so this is a rarely-hit
# safety net sized well inside the 1e-9 normalization budget.
REMOVE_REBUILD_TOL = 1e-12


# ---------------------------------------------------------------------------
# scalar-loop sources (compiled by numba when that backend is active)
# ---------------------------------------------------------------------------

def _scalar_convolve_add(D, support, rows, probs):
    # Widens touched rows from support+1 to support+2 entries in place.
    for i in range(rows.size):
        r = rows[i]
        p = probs[i]
        q = 1.0 - p
        D[r, support + 1] = D[r, support] * p
        for j in range(support, 0, -1):
            D[r, j] = D[r, j] * q + D[r, j - 1] * p
        D[r, 0] = D[r, 0] * q


def _scalar_convolve_remove(D, support, rows, probs, tol):
    # Deconvolves one Bernoulli factor; rows shrink to `support` entries.
    # The recurrence direction follows the stable branch: bottom-up divides
    # by (1-p) and damps error only for p <= 1/2, top-down divides by p and
    # damps it for p > 1/2.  Returns a mask of rows whose sum still drifted
    # beyond tol (those are rebuilt from scratch by the caller).
    bad = np.empty(rows.size, dtype=np.bool_)
    for i in range(rows.size):
        r = rows[i]
        p = probs[i]
        q = 1.0 - p
        if p <= 0.5:
            D[r, 0] = D[r, 0] / q
            for j in range(1, support):
                D[r, j] = (D[r, j] - p * D[r, j - 1]) / q
        else:
            up = D[r, support] / p
            for j in range(support - 1, 0, -1):
                cur = (D[r, j] - q * up) / p
                D[r, j] = up
                up = cur
            D[r, 0] = up
        D[r, support] = 0.0
        s = 0.0
        for j in range(support):
            s += D[r, j]
        bad[i] = abs(s - 1.0) > tol
    return bad


def _scalar_rebuild_rows(D, rows, members, indptr, bind_geno, bind_prob):
    # Rebuilds the given genotype rows from scratch for the member set.
    for i in range(rows.size):
        r = rows[i]
        for j in range(D.shape[1]):
            D[r, j] = 0.0
        D[r, 0] = 1.0
        width = 0
        for t in range(members.size):
            v = members[t]
            lo = indptr[v]
            hi = indptr[v + 1]
            while lo < hi:
                mid = (lo + hi) // 2
                if bind_geno[mid] < r:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < indptr[v + 1] and bind_geno[lo] == r:
                p = bind_prob[lo]
                q = 1.0 - p
                D[r, width + 1] = D[r, width] * p
                for j in range(width, 0, -1):
                    D[r, j] = D[r, j] * q + D[r, j - 1] * p
                D[r, 0] = D[r, 0] * q
                width += 1


def _scalar_update_row_exp(D, support, rows, threshold, row_exp):
    # row_exp[r] = sum_{z<N} z*D[r,z] + N*P(hits >= N), entries clamped at 0.
    for i in range(rows.size):
        r = rows[i]
        e = 0.0
        top = min(threshold - 1, support)
        for z in range(1, top + 1):
            d = D[r, z]
            if d > 0.0:
                e += z * d
        if threshold <= support:
            t = 0.0
            for z in range(threshold, support + 1):
                d = D[r, z]
                if d > 0.0:
                    t += d
            e += threshold * t
        row_exp[r] = e


def _scalar_weighted_total(weights, row_exp):
    # Fixed ascending-genotype order keeps results bit-reproducible.
    s = 0.0
    for r in range(weights.size):
        s += weights[r] * row_exp[r]
    return s


def _scalar_add_gain(D, row_exp, support, rows, probs, threshold, weights):
    # Gain of adding one peptide, computed transiently (D is not modified).
    g = 0.0
    new_support = support + 1
    for i in range(rows.size):
        r = rows[i]
        p = probs[i]
        q = 1.0 - p
        e = 0.0
        top = min(threshold - 1, new_support)
        for z in range(1, top + 1):
            below = D[r, z - 1]
            cur = D[r, z] if z <= support else 0.0
            d = cur * q + below * p
            if d > 0.0:
                e += z * d
        if threshold <= new_support:
            t = 0.0
            for z in range(threshold, new_support + 1):
                below = D[r, z - 1] if z >= 1 else 0.0
                cur = D[r, z] if z <= support else 0.0
                d = cur * q + below * p
                if d > 0.0:
                    t += d
            e += threshold * t
        g += weights[r] * (e - row_exp[r])
    return g


def _scalar_row_sum_error(D, support):
    err = 0.0
    for r in range(D.shape[0]):
        s = 0.0
        for j in range(support + 1):
            s += D[r, j]
        d = abs(s - 1.0)
        if d > err:
            err = d
    return err


def _scalar_clone_add(Dsrc, Ddst, support, pvec, threshold, exp_src, exp_dst):
    # Fused copy + single-peptide add + expectation refresh, one streaming
    # pass per genotype row (rows with pvec == 0 are copied verbatim).
    # Dst rows are fully written including trailing zeros, so Ddst may be
    # uninitialized memory.
    cap = Ddst.shape[1]
    new_support = support + 1
    for r in range(Dsrc.shape[0]):
        p = pvec[r]
        if p == 0.0:
            for j in range(support + 1):
                Ddst[r, j] = Dsrc[r, j]
            for j in range(support + 1, cap):
                Ddst[r, j] = 0.0
            exp_dst[r] = exp_src[r]
            continue
        q = 1.0 - p
        Ddst[r, new_support] = Dsrc[r, support] * p
        for j in range(support, 0, -1):
            Ddst[r, j] = Dsrc[r, j] * q + Dsrc[r, j - 1] * p
        Ddst[r, 0] = Dsrc[r, 0] * q
        for j in range(new_support + 1, cap):
            Ddst[r, j] = 0.0
        e = 0.0
        top = min(threshold - 1, new_support)
        for z in range(1, top + 1):
            d = Ddst[r, z]
            if d > 0.0:
                e += z * d
        if threshold <= new_support:
            t = 0.0
            for z in range(threshold, new_support + 1):
                d = Ddst[r, z]
                if d > 0.0:
                    t += d
            e += threshold * t
        exp_dst[r] = e


def _scalar_clone_remove(Dsrc, Ddst, support, pvec, threshold, exp_src, exp_dst, tol):
    # Fused copy + single-peptide removal + expectation refresh.  Returns a
    # full-length mask of rows whose sum drifted beyond tol (to be rebuilt).
    cap = Ddst.shape[1]
    new_support = support - 1
    bad = np.zeros(Dsrc.shape[0], dtype=np.bool_)
    for r in range(Dsrc.shape[0]):
        p = pvec[r]
        if p == 0.0:
            # unbound rows cannot reach `support` hits, top entry is zero
            for j in range(support):
                Ddst[r, j] = Dsrc[r, j]
            for j in range(support, cap):
                Ddst[r, j] = 0.0
            exp_dst[r] = exp_src[r]
            continue
        q = 1.0 - p
        if p <= 0.5:
            Ddst[r, 0] = Dsrc[r, 0] / q
            for j in range(1, support):
                Ddst[r, j] = (Dsrc[r, j] - p * Ddst[r, j - 1]) / q
        else:
            up = Dsrc[r, support] / p
            for j in range(support - 1, 0, -1):
                cur = (Dsrc[r, j] - q * up) / p
                Ddst[r, j] = up
                up = cur
            Ddst[r, 0] = up
        for j in range(support, cap):
            Ddst[r, j] = 0.0
        s = 0.0
        for j in range(support):
            s += Ddst[r, j]
        bad[r] = abs(s - 1.0) > tol
        e = 0.0
        top = min(threshold - 1, new_support)
        for z in range(1, top + 1):
            d = Ddst[r, z]
            if d > 0.0:
                e += z * d
        if threshold <= new_support:
            t = 0.0
            for z in range(threshold, new_support + 1):
                d = Ddst[r, z]
                if d > 0.0:
                    t += d
            e += threshold * t
        exp_dst[r] = e
    return bad


# ---------------------------------------------------------------------------
# vectorized numpy fallback
# ---------------------------------------------------------------------------

def _np_convolve_add(D, support, rows, probs):
    if rows.size == 0:
        return
    w = support + 1
    sub = D[rows, :w]
    out = np.zeros((rows.size, w + 1))
    out[:, :w] = sub * (1.0 - probs)[:, None]
    out[:, 1:] += sub * probs[:, None]
    D[rows, : w + 1] = out


def _np_convolve_remove(D, support, rows, probs, tol):
    if rows.size == 0:
        return np.zeros(0, dtype=np.bool_)
    sub = D[rows, : support + 1]
    q = 1.0 - probs
    new = np.empty((rows.size, support))
    low = probs <= 0.5
    if low.any():
        s, p, qq = sub[low], probs[low], q[low]
        out = new[low]
        out[:, 0] = s[:, 0] / qq
        for j in range(1, support):
            out[:, j] = (s[:, j] - p * out[:, j - 1]) / qq
        new[low] = out
    high = ~low
    if high.any():
        s, p, qq = sub[high], probs[high], q[high]
        out = new[high]
        up = s[:, support] / p
        for j in range(support - 1, 0, -1):
            cur = (s[:, j] - qq * up) / p
            out[:, j] = up
            up = cur
        out[:, 0] = up
        new[high] = out
    D[rows, :support] = new
    D[rows, support] = 0.0
    return np.abs(new.sum(axis=1) - 1.0) > tol


def _np_rebuild_rows(D, rows, members, indptr, bind_geno, bind_prob):
    for r in rows:
        D[r, :] = 0.0
        D[r, 0] = 1.0
        width = 0
        for v in members:
            lo, hi = indptr[v], indptr[v + 1]
            pos = lo + np.searchsorted(bind_geno[lo:hi], r)
            if pos < hi and bind_geno[pos] == r:
                p = bind_prob[pos]
                seg = D[r, : width + 1].copy()
                D[r, : width + 1] = seg * (1.0 - p)
                D[r, 1 : width + 2] += seg * p
                width += 1


def _np_update_row_exp(D, support, rows, threshold, row_exp):
    if rows.size == 0:
        return
    w = support + 1
    sub = np.clip(D[rows, :w], 0.0, None)
    zcount = min(threshold, w)
    e = sub[:, :zcount] @ np.arange(zcount, dtype=np.float64)
    if threshold <= support:
        e = e + threshold * sub[:, threshold:w].sum(axis=1)
    row_exp[rows] = e


def _np_weighted_total(weights, row_exp):
    return float(np.add.reduce(weights * row_exp))


def _np_add_gain(D, row_exp, support, rows, probs, threshold, weights):
    if rows.size == 0:
        return 0.0
    w = support + 1
    sub = D[rows, :w]
    new = np.zeros((rows.size, w + 1))
    new[:, :w] = sub * (1.0 - probs)[:, None]
    new[:, 1:] += sub * probs[:, None]
    np.clip(new, 0.0, None, out=new)
    zcount = min(threshold, w + 1)
    e = new[:, :zcount] @ np.arange(zcount, dtype=np.float64)
    if threshold <= support + 1:
        e = e + threshold * new[:, threshold:].sum(axis=1)
    return float(np.add.reduce(weights[rows] * (e - row_exp[rows])))


def _np_row_sum_error(D, support):
    return float(np.abs(D[:, : support + 1].sum(axis=1) - 1.0).max())


def _np_clone_add(Dsrc, Ddst, support, pvec, threshold, exp_src, exp_dst):
    # Composition of copy + add + expectation (no per-row streaming to fuse
    # in pure numpy); arithmetic matches the scalar kernel exactly.
    w = support + 1
    Ddst[:, :w] = Dsrc[:, :w]
    Ddst[:, w:] = 0.0
    rows = np.flatnonzero(pvec).astype(np.int64)
    _np_convolve_add(Ddst, support, rows, pvec[rows])
    exp_dst[:] = exp_src
    _np_update_row_exp(Ddst, support + 1, rows, threshold, exp_dst)


def _np_clone_remove(Dsrc, Ddst, support, pvec, threshold, exp_src, exp_dst, tol):
    w = support + 1
    Ddst[:, :w] = Dsrc[:, :w]
    Ddst[:, w:] = 0.0
    rows = np.flatnonzero(pvec).astype(np.int64)
    bad_rows = _np_convolve_remove(Ddst, support, rows, pvec[rows], tol)
    exp_dst[:] = exp_src
    _np_update_row_exp(Ddst, support - 1, rows, threshold, exp_dst)
    bad = np.zeros(Dsrc.shape[0], dtype=np.bool_)
    bad[rows] = bad_rows
    return bad


NUMPY_BACKEND = SimpleNamespace(
    name="numpy",
    convolve_add=_np_convolve_add,
    convolve_remove=_np_convolve_remove,
    rebuild_rows=_np_rebuild_rows,
    update_row_exp=_np_update_row_exp,
    weighted_total=_np_weighted_total,
    add_gain=_np_add_gain,
    row_sum_error=_np_row_sum_error,
    clone_add=_np_clone_add,
    clone_remove=_np_clone_remove,
)

_NUMBA_BACKEND = None


def _build_numba_backend():
    global _NUMBA_BACKEND
    if _NUMBA_BACKEND is None:
        from numba import njit

        _NUMBA_BACKEND = SimpleNamespace(
            name="numba",
            convolve_add=njit(cache=True)(_scalar_convolve_add),
            convolve_remove=njit(cache=True)(_scalar_convolve_remove),
            rebuild_rows=njit(cache=True)(_scalar_rebuild_rows),
            update_row_exp=njit(cache=True)(_scalar_update_row_exp),
            weighted_total=njit(cache=True)(_scalar_weighted_total),
            add_gain=njit(cache=True)(_scalar_add_gain),
            row_sum_error=njit(cache=True)(_scalar_row_sum_error),
            clone_add=njit(cache=True)(_scalar_clone_add),
            clone_remove=njit(cache=True)(_scalar_clone_remove),
        )
    return _NUMBA_BACKEND


def get_backend(name: str) -> SimpleNamespace:
    """Return the kernel namespace for ``name`` ("numba" or "numpy")."""
    if name == "numpy":
        return NUMPY_BACKEND
    if name == "numba":
        return _build_numba_backend()
    raise ValueError(f"unknown kernel backend {name!r}")


def _select_backend() -> SimpleNamespace:
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{BACKEND_ENV} must be 'auto', 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return NUMPY_BACKEND
    try:
        return _build_numba_backend()
    except ImportError:
        if choice == "numba":
            raise
        return NUMPY_BACKEND


_ACTIVE = _select_backend()

ACTIVE_BACKEND = _ACTIVE.name
convolve_add = _ACTIVE.convolve_add
convolve_remove = _ACTIVE.convolve_remove
rebuild_rows = _ACTIVE.rebuild_rows
update_row_exp = _ACTIVE.update_row_exp
weighted_total = _ACTIVE.weighted_total
add_gain = _ACTIVE.add_gain
row_sum_error = _ACTIVE.row_sum_error
clone_add = _ACTIVE.clone_add
clone_remove = _ACTIVE.clone_remove
