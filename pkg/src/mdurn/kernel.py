"""Compiled inner loop for trajectories whose sample sizes do not depend on the past.

The loop applies exactly the rules of :func:`mdurn.urn.step` and
:meth:`mdurn.estimators.Accumulators.update`; ``tests/test_engine.py`` checks
the two engines agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Column layout of the int64 accumulator vector.
SUM_N, SUM_N2, N_A, N_B, SUM_AX, SUM_B_NX, SUM_A2X, SUM_B2_NX, SUM_ABX_NX, SUM_X_NX = range(10)
N_ACC = 10

# Column layout of a snapshot row: step, last draw, composition, accumulators.
SNAP_N, SNAP_NN, SNAP_X, SNAP_A, SNAP_B, SNAP_H, SNAP_K = range(7)
SNAP_ACC0 = 7
SNAP_WIDTH = SNAP_ACC0 + N_ACC


@njit(cache=True)
def advance(state, acc, x_by_size, start_n, sizes, a_vals, b_vals, unif,
            snap_at, snap_pos, snap_rows, snap_x_by_size, x_out):
    """Run ``len(sizes)`` steps starting at step ``start_n``.

    ``state`` is ``[H, K]``; it, ``acc`` and ``x_by_size`` are updated in place.
    Rows are written for the steps listed in ``snap_at`` (sorted) beginning at
    ``snap_pos``. Returns ``(status, snap_pos)`` where ``status`` is 0 on
    success or the offending step index when a sample size exceeds the urn.
    """
    H = state[0]
    K = state[1]
    m = sizes.shape[0]
    n_snap = snap_at.shape[0]
    for i in range(m):
        n = start_n + i
        N = sizes[i]
        S = H + K
        if N < 1 or N > S:
            state[0] = H
            state[1] = K
            return n, snap_pos
        h = H
        s = S
        x = 0
        for t in range(N):
            if unif[i, t] * s < h:
                x += 1
                h -= 1
            s -= 1
        A = a_vals[i]
        B = b_vals[i]
        y = N - x
        H += A * x
        K += B * y
        acc[SUM_N] += N
        acc[SUM_N2] += N * N
        acc[N_A] += x
        acc[N_B] += y
        acc[SUM_AX] += A * x
        acc[SUM_B_NX] += B * y
        acc[SUM_A2X] += A * A * x
        acc[SUM_B2_NX] += B * B * y
        acc[SUM_ABX_NX] += A * B * x * y
        acc[SUM_X_NX] += x * y
        x_by_size[N] += x
        x_out[i] = x
        while snap_pos < n_snap and snap_at[snap_pos] == n:
            row = snap_rows[snap_pos]
            row[SNAP_N] = n
            row[SNAP_NN] = N
            row[SNAP_X] = x
            row[SNAP_A] = A
            row[SNAP_B] = B
            row[SNAP_H] = H
            row[SNAP_K] = K
            for c in range(N_ACC):
                row[SNAP_ACC0 + c] = acc[c]
            for d in range(x_by_size.shape[0]):
                snap_x_by_size[snap_pos, d] = x_by_size[d]
            snap_pos += 1
    state[0] = H
    state[1] = K
    return 0, snap_pos
