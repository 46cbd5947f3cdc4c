"""Compiled inner loops (numba); every kernel is pure given its inputs."""
import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def lyapunov_batches(a_plus, a_minus, signs, burn_in, n_batches):
    """Per-batch sums of log|v| growth for v <- g_{+-} v, renormalized each step."""
    v0, v1 = 1.0, 0.0
    for i in range(burn_in):
        a = a_plus if signs[i] > 0 else a_minus
        w0 = a * v0 - v1
        w1 = v0
        nrm = np.sqrt(w0 * w0 + w1 * w1)
        v0, v1 = w0 / nrm, w1 / nrm
    steps = signs.size - burn_in
    sums = np.zeros(n_batches)
    counts = np.zeros(n_batches, dtype=np.int64)
    for i in range(steps):
        b = (i * n_batches) // steps
        a = a_plus if signs[burn_in + i] > 0 else a_minus
        w0 = a * v0 - v1
        w1 = v0
        nrm = np.sqrt(w0 * w0 + w1 * w1)
        sums[b] += np.log(nrm)
        counts[b] += 1
        v0, v1 = w0 / nrm, w1 / nrm
    return sums, counts


@numba.njit(cache=True, nogil=True)
def sturm_counts(diag, energies):
    """Eigenvalues below each energy of tridiag(1, diag, 1); -1 marks a zero pivot."""
    out = np.empty(energies.size, dtype=np.int64)
    for k in range(energies.size):
        E = energies[k]
        q = diag[0] - E
        cnt = 1 if q < 0 else 0
        bad = q == 0.0
        for i in range(1, diag.size):
            if bad:
                break
            q = (diag[i] - E) - 1.0 / q
            if q < 0:
                cnt += 1
            elif q == 0.0:
                bad = True
        out[k] = -1 if bad else cnt
    return out


@numba.njit(cache=True, nogil=True)
def projective_orbit(gp, gm, signs, x0, burn_in):
    """Orbit x_{k+1} = tau_{g_k}(x_k) in [0, 1); returns the post burn-in points."""
    th = np.pi * x0
    v0, v1 = np.cos(th), np.sin(th)
    out = np.empty(signs.size - burn_in)
    for i in range(signs.size):
        if signs[i] > 0:
            w0 = gp[0, 0] * v0 + gp[0, 1] * v1
            w1 = gp[1, 0] * v0 + gp[1, 1] * v1
        else:
            w0 = gm[0, 0] * v0 + gm[0, 1] * v1
            w1 = gm[1, 0] * v0 + gm[1, 1] * v1
        nrm = np.sqrt(w0 * w0 + w1 * w1)
        v0, v1 = w0 / nrm, w1 / nrm
        if i >= burn_in:
            x = np.arctan2(v1, v0) / np.pi
            x = x - np.floor(x)
            if x >= 1.0:
                x = 0.0
            out[i - burn_in] = x
    return out
