"""Hot loops: the noisy reservoir recurrence and the NARMA10 recurrence.

Each kernel has a numba ``@njit`` build and a pure-numpy fallback. Numba is
used when it imports cleanly unless ``ROBUSTRC_DISABLE_NUMBA`` is set to a
truthy value. Both paths consume identical pre-drawn random numbers, so they
pick the same perturbed positions; they differ only in floating-point
summation order inside the mat-vec.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("ROBUSTRC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"


def floyd_positions(nnz, u, pos):
    """Fill ``pos`` with ``len(pos)`` distinct indices in ``[0, nnz)``.

    Robert Floyd's sampling algorithm driven by pre-drawn uniforms ``u``; every
    subset of the requested size is equally likely.
    """
    n = pos.shape[0]
    for idx in range(n):
        j = nnz - n + idx
        t = int(u[idx] * (j + 1))
        if t > j:
            t = j
        for q in range(idx):
            if pos[q] == t:
                t = j
                break
        pos[idx] = t


def _floyd_set(nnz, u, pos):
    # same draws as floyd_positions, O(n) membership for the interpreted path
    n = pos.shape[0]
    taken = set()
    for idx in range(n):
        j = nnz - n + idx
        t = min(int(u[idx] * (j + 1)), j)
        if t in taken:
            t = j
        taken.add(t)
        pos[idx] = t


def drive_numpy(rows, indptr, cols, vals, w_res, w_in, x, inputs, washout, readout, sel_u, deltas, out):
    nnz = vals.shape[0]
    n = sel_u.shape[1]
    m = readout.shape[0]
    work = w_res.copy()
    pos = np.empty(n, dtype=np.int64)
    state = x.copy()
    for t in range(inputs.shape[0]):
        if n:
            _floyd_set(nnz, sel_u[t], pos)
            r = rows[pos]
            c = cols[pos]
            work[r, c] = vals[pos] + deltas[t]
            state = np.tanh(work @ state + w_in * inputs[t])
            work[r, c] = vals[pos]
        else:
            state = np.tanh(work @ state + w_in * inputs[t])
        if t >= washout:
            out[t - washout, :m] = state[readout]
    out[:, m] = 1.0
    x[:] = state


def _drive_loop(rows, indptr, cols, vals, w_res, w_in, x, inputs, washout, readout, sel_u, deltas, out):
    nnz = vals.shape[0]
    size = x.shape[0]
    n = sel_u.shape[1]
    m = readout.shape[0]
    work = vals.copy()
    acc = np.empty(size)
    pos = np.empty(n, dtype=np.int64)
    for t in range(inputs.shape[0]):
        if n > 0:
            _floyd(nnz, sel_u[t], pos)
            for i in range(n):
                work[pos[i]] = vals[pos[i]] + deltas[t, i]
        for i in range(size):
            total = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                total += work[k] * x[cols[k]]
            acc[i] = total
        u = inputs[t]
        for i in range(size):
            x[i] = np.tanh(acc[i] + w_in[i] * u)
        if n > 0:
            for i in range(n):
                work[pos[i]] = vals[pos[i]]
        if t >= washout:
            row = t - washout
            for i in range(m):
                out[row, i] = x[readout[i]]
            out[row, m] = 1.0


def narma10_loop(u, y, limit):
    """Fill ``y`` with the NARMA10 response to ``u``; zero history before t=0.

    Returns the first index whose magnitude exceeds ``limit`` or -1. Entries
    from a divergent index onward are NaN.
    """
    n = u.shape[0]
    for t in range(n):
        y1 = y[t - 1] if t >= 1 else 0.0
        s = 0.0
        for i in range(1, 11):
            if t - i >= 0:
                s += y[t - i]
        u1 = u[t - 1] if t >= 1 else 0.0
        u10 = u[t - 10] if t >= 10 else 0.0
        val = 0.3 * y1 + 0.05 * y1 * s + 1.5 * u10 * u1 + 0.1
        if not abs(val) <= limit:
            for k in range(t, n):
                y[k] = np.nan
            return t
        y[t] = val
    return -1


if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    _floyd = _jit(floyd_positions)
    drive_numba = _jit(_drive_loop)
    narma10_numba = _jit(narma10_loop)
else:  # pragma: no cover
    _floyd = floyd_positions
    drive_numba = None
    narma10_numba = None


def drive(rows, indptr, cols, vals, w_res, w_in, x, inputs, washout, readout, sel_u, deltas, out):
    """Advance ``x`` in place through ``inputs`` and fill the state matrix ``out``.

    The nonzeros ``(rows, cols, vals)`` must be in row-major order with
    ``indptr`` the CSR row offsets.
    """
    if USE_NUMBA:
        drive_numba(rows, indptr, cols, vals, w_res, w_in, x, inputs, washout, readout, sel_u, deltas, out)
    else:
        drive_numpy(rows, indptr, cols, vals, w_res, w_in, x, inputs, washout, readout, sel_u, deltas, out)


def narma10(u, y, limit):
    if USE_NUMBA:
        return narma10_numba(u, y, limit)
    return narma10_loop(u, y, limit)
