"""Compiled inner loops: transfer products, projective winding, Sturm counts.

Everything here works on plain arrays so it can be jitted by numba.  When
numba is missing the functions run as ordinary (slow) Python.
"""

import math

import numpy as np

try:
    import numba

    def jit(f):
        return numba.njit(cache=True)(f)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    def jit(f):
        return f

    HAVE_NUMBA = False


@jit
def eval_matrix(modes, coefs, period, x, y):
    """A(x + i y) for A = sum_k coefs[k] e^{2 pi i modes[k] z / period}."""
    out = np.zeros((2, 2), dtype=np.complex128)
    for k in range(modes.shape[0]):
        m = modes[k]
        arg = 2.0 * math.pi * m / period
        ph = complex(math.cos(arg * x), math.sin(arg * x)) * math.exp(-arg * y)
        for i in range(2):
            for j in range(2):
                out[i, j] += coefs[k, i, j] * ph
    return out


@jit
def transfer_product(modes, coefs, period, alpha, x0, y, n):
    """Normalized n-step product and its accumulated log scale.

    Returns (M, log_scale) with A_n(x0 + i y) = exp(log_scale) M.  Every step
    the running product is divided by its largest entry modulus.
    """
    M = np.eye(2, dtype=np.complex128)
    log_scale = 0.0
    for j in range(n):
        x = (x0 + j * alpha) % period
        A = eval_matrix(modes, coefs, period, x, y)
        m00 = A[0, 0] * M[0, 0] + A[0, 1] * M[1, 0]
        m01 = A[0, 0] * M[0, 1] + A[0, 1] * M[1, 1]
        m10 = A[1, 0] * M[0, 0] + A[1, 1] * M[1, 0]
        m11 = A[1, 0] * M[0, 1] + A[1, 1] * M[1, 1]
        s = max(abs(m00), abs(m01), abs(m10), abs(m11))
        if s == 0.0:
            s = 1.0
        M[0, 0] = m00 / s
        M[0, 1] = m01 / s
        M[1, 0] = m10 / s
        M[1, 1] = m11 / s
        log_scale += math.log(s)
    return M, log_scale


@jit
def schrodinger_lognorms(vmodes, vcoefs, alpha, E, x0s, y, n):
    """ln ||A_n(x + i y)|| for the Schrodinger cocycle, one value per start phase."""
    out = np.empty(x0s.shape[0])
    for s in range(x0s.shape[0]):
        u00 = 1.0 + 0j
        u01 = 0.0 + 0j
        u10 = 0.0 + 0j
        u11 = 1.0 + 0j
        log_scale = 0.0
        for j in range(n):
            x = (x0s[s] + j * alpha) % 1.0
            v = 0j
            for k in range(vmodes.shape[0]):
                arg = 2.0 * math.pi * vmodes[k]
                v += vcoefs[k] * complex(math.cos(arg * x), math.sin(arg * x)) * math.exp(-arg * y)
            a = E - v
            n00 = a * u00 - u10
            n01 = a * u01 - u11
            u10 = u00
            u11 = u01
            u00 = n00
            u01 = n01
            sc = max(abs(u00), abs(u01), abs(u10), abs(u11))
            if sc > 1e100 or sc < 1e-100 or j == n - 1:
                u00 /= sc
                u01 /= sc
                u10 /= sc
                u11 /= sc
                log_scale += math.log(sc)
        # operator 2-norm of the normalized product
        a2 = abs(u00) ** 2 + abs(u01) ** 2 + abs(u10) ** 2 + abs(u11) ** 2
        det = abs(u00 * u11 - u01 * u10)
        disc = max(a2 * a2 - 4.0 * det * det, 0.0)
        sig = math.sqrt(0.5 * (a2 + math.sqrt(disc)))
        out[s] = log_scale + math.log(sig)
    return out


@jit
def winding(modes, coefs, period, alpha, x0, n, phi0):
    """Lifted projective angle gained along an orbit of length n (real cocycles).

    The increment of one step splits as the angle of the orthogonal polar
    factor, taken principal, plus the move of the positive factor, which
    never exceeds pi/2 in modulus.
    """
    c = math.cos(phi0)
    s = math.sin(phi0)
    ang = phi0
    total = 0.0
    for j in range(n):
        x = (x0 + j * alpha) % period
        A = eval_matrix(modes, coefs, period, x, 0.0)
        a = A[0, 0].real
        b = A[0, 1].real
        cc = A[1, 0].real
        d = A[1, 1].real
        rot = math.atan2(cc - b, a + d)
        w0 = a * c + b * s
        w1 = cc * c + d * s
        new_ang = math.atan2(w1, w0)
        dlt = new_ang - ang - rot
        dlt = dlt - 2.0 * math.pi * math.floor((dlt + math.pi) / (2.0 * math.pi))
        total += rot + dlt
        r = math.sqrt(w0 * w0 + w1 * w1)
        c = w0 / r
        s = w1 / r
        ang = new_ang
    return total


@jit
def schrodinger_winding(vmodes, vcoefs, alpha, E, x0, n):
    """winding() specialised to (E - V, -1; 1, 0); the polar angle is atan2(2, E - V)."""
    c = 1.0
    s = 0.0
    ang = 0.0
    total = 0.0
    for j in range(n):
        x = (x0 + j * alpha) % 1.0
        v = 0.0
        for k in range(vmodes.shape[0]):
            arg = 2.0 * math.pi * vmodes[k] * x
            v += vcoefs[k].real * math.cos(arg) - vcoefs[k].imag * math.sin(arg)
        a = E - v
        rot = math.atan2(2.0, a)
        w0 = a * c - s
        w1 = c
        new_ang = math.atan2(w1, w0)
        dlt = new_ang - ang - rot
        dlt = dlt - 2.0 * math.pi * math.floor((dlt + math.pi) / (2.0 * math.pi))
        total += rot + dlt
        r = math.sqrt(w0 * w0 + w1 * w1)
        c = w0 / r
        s = w1 / r
        ang = new_ang
    return total


@jit
def sample_potential(vmodes, vcoefs, alpha, theta, n):
    """V(theta + j alpha), j = 1..n, real part."""
    out = np.empty(n)
    for j in range(n):
        x = (theta + (j + 1) * alpha) % 1.0
        v = 0.0
        for k in range(vmodes.shape[0]):
            arg = 2.0 * math.pi * vmodes[k] * x
            v += vcoefs[k].real * math.cos(arg) - vcoefs[k].imag * math.sin(arg)
        out[j] = v
    return out


@jit
def sturm_counts(diag, energies):
    """Number of eigenvalues < E of tridiag(1, diag, 1), for each E (negative LDL pivots)."""
    out = np.empty(energies.shape[0], dtype=np.int64)
    tiny = 1e-300
    for e in range(energies.shape[0]):
        E = energies[e]
        cnt = 0
        d = diag[0] - E
        if d == 0.0:
            d = tiny
        if d <= 0.0:
            cnt += 1
        for i in range(1, diag.shape[0]):
            d = diag[i] - E - 1.0 / d
            if d == 0.0:
                d = tiny
            if d <= 0.0:
                cnt += 1
        out[e] = cnt
    return out
