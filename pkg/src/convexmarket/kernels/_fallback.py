"""Pure-Python Dykstra sweep; same contract as the compiled kernel."""

import numpy as np


def dykstra_box_slabs(y, lo, hi, indptr, indices, data, slo, shi, max_sweeps, tol):
    x = np.array(y, dtype=np.float64)
    box = np.zeros_like(x)
    m = len(slo)
    inc = [0.0] * m
    rows = []
    for j in range(m):
        idx = np.asarray(indices[indptr[j]:indptr[j + 1]])
        a = np.asarray(data[indptr[j]:indptr[j + 1]], dtype=np.float64)
        rows.append((idx, a, float(a @ a), float(slo[j]), float(shi[j])))

    sweep = 0
    converged = False
    while sweep < max_sweeps:
        sweep += 1
        z = x + box
        xn = np.clip(z, lo, hi)
        # track every intermediate step, not just the net change over the sweep
        move = float(np.max(np.abs(xn - x), initial=0.0))
        x = xn
        box = z - x
        for j, (idx, a, nrm, s_lo, s_hi) in enumerate(rows):
            if nrm == 0.0:
                continue
            s = float(a @ x[idx]) + inc[j] * nrm
            if s > s_hi:
                theta = (s - s_hi) / nrm
            elif s < s_lo:
                theta = (s - s_lo) / nrm
            else:
                theta = 0.0
            if theta != inc[j]:
                step = (inc[j] - theta) * a
                x[idx] += step
                move = max(move, float(np.max(np.abs(step))))
            inc[j] = theta
        if move < tol:
            converged = True
            break
    return x, sweep, converged
