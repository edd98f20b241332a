"""Compiled integration kernels.

Everything here is numba code parameterised by the field kernels
``rhs(x, p, out)`` and ``jac(x, p, out)``. The state layout of the
integrator is ``z = [x (m), M (m*k, row-major), logdet (1)]`` when a
tangent frame of ``k`` columns is carried, or just ``x`` when ``k < 0``.
``logdet`` is the integral of div X along the orbit (Jacobi's formula),
so it equals log|det DX_t| regardless of the frame carried.
"""
import numba as nb
import numpy as np

OK = 0
UNDERFLOW = 1
ESCAPED = 2
MAX_STEPS = 3

RESAMPLE = 0
REFLECT = 1
CLAMP = 2

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


@nb.njit(cache=True, nogil=True)
def _aug_eval(rhs, jac, p, z, m, k, out, J):
    rhs(z[:m], p, out[:m])
    if k < 0:
        return
    jac(z[:m], p, J)
    tr = 0.0
    for i in range(m):
        tr += J[i, i]
        for j in range(k):
            s = 0.0
            for l in range(m):
                s += J[i, l] * z[m + l * k + j]
            out[m + i * k + j] = s
    out[m + m * k] = tr


@nb.njit(cache=True, nogil=True)
def _outside(z, m, lo, hi):
    for i in range(m):
        if z[i] < lo[i] or z[i] > hi[i] or z[i] != z[i]:
            return True
    return False


@nb.njit(cache=True, nogil=True)
def dopri(rhs, jac, p, z0, m, k, t_end, rtol, atol, h0, lo, hi, max_steps):
    """Advance ``z0`` by time ``t_end`` (either sign).

    Returns ``(z, h_suggest, status, t_reached)``. On failure ``z`` is the
    last accepted state and ``t_reached`` its (signed) time.
    """
    n = z0.size
    z = z0.copy()
    if t_end == 0.0:
        return z, h0, OK, 0.0
    sgn = 1.0 if t_end > 0 else -1.0
    T = abs(t_end)
    J = np.empty((m, m))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    y = np.empty(n)
    zn = np.empty(n)
    _aug_eval(rhs, jac, p, z, m, k, k1, J)

    h = abs(h0)
    if not h > 0.0:
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(z[i])
            d0 += (z[i] / sc) ** 2
            d1 += (k1[i] / sc) ** 2
        d0 = np.sqrt(d0 / n)
        d1 = np.sqrt(d1 / n)
        if d0 < 1e-5 or d1 < 1e-5:
            h = 1e-6
        else:
            h = 0.01 * d0 / d1
    h = min(h, T)
    h_suggest = h
    t = 0.0
    steps = 0
    hmin = 1e-14 * max(1.0, T)
    while t < T:
        last = False
        if h >= T - t:
            h = T - t
            last = True
        hs = sgn * h
        for i in range(n):
            y[i] = z[i] + hs * A21 * k1[i]
        _aug_eval(rhs, jac, p, y, m, k, k2, J)
        for i in range(n):
            y[i] = z[i] + hs * (A31 * k1[i] + A32 * k2[i])
        _aug_eval(rhs, jac, p, y, m, k, k3, J)
        for i in range(n):
            y[i] = z[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _aug_eval(rhs, jac, p, y, m, k, k4, J)
        for i in range(n):
            y[i] = z[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _aug_eval(rhs, jac, p, y, m, k, k5, J)
        for i in range(n):
            y[i] = z[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _aug_eval(rhs, jac, p, y, m, k, k6, J)
        for i in range(n):
            zn[i] = z[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        _aug_eval(rhs, jac, p, zn, m, k, k7, J)
        err = 0.0
        for i in range(n):
            e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(z[i]), abs(zn[i]))
            err += (e / sc) ** 2
        err = np.sqrt(err / n)
        if err != err:
            err = 1e10
        if err <= 1.0:
            if _outside(zn, m, lo, hi):
                return z, h_suggest, ESCAPED, sgn * t
            t = T if last else t + h
            for i in range(n):
                z[i] = zn[i]
                k1[i] = k7[i]
            steps += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not last or h * fac < h_suggest:
                h_suggest = h * fac
            h = h * fac
            if steps >= max_steps and t < T:
                return z, h_suggest, MAX_STEPS, sgn * t
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
            if h < hmin:
                return z, h_suggest, UNDERFLOW, sgn * t
    return z, h_suggest, OK, sgn * t


@nb.njit(cache=True, nogil=True)
def trajectory(rhs, jac, p, x0, dt, n, rtol, atol, lo, hi, max_steps):
    """Samples X_{i dt}(x0), i = 0..n. Returns (points, status, n_good)."""
    m = x0.size
    pts = np.empty((n + 1, m))
    pts[0] = x0
    x = x0.copy()
    h = 0.0
    for i in range(n):
        x, h, st, _ = dopri(rhs, jac, p, x, m, -1, dt, rtol, atol, h, lo, hi, max_steps)
        if st != OK:
            return pts[: i + 1], st, i + 1
        pts[i + 1] = x
    return pts, OK, n + 1


@nb.njit(cache=True, nogil=True)
def tangent(rhs, jac, p, x, frame, t, rtol, atol, lo, hi, max_steps):
    """Returns (X_t x, DX_t frame, log|det DX_t|, status)."""
    m = x.size
    k = frame.shape[1]
    z = np.empty(m + m * k + 1)
    z[:m] = x
    for i in range(m):
        for j in range(k):
            z[m + i * k + j] = frame[i, j]
    z[m + m * k] = 0.0
    z, h, st, _ = dopri(rhs, jac, p, z, m, k, t, rtol, atol, 0.0, lo, hi, max_steps)
    M = np.empty((m, k))
    for i in range(m):
        for j in range(k):
            M[i, j] = z[m + i * k + j]
    return z[:m].copy(), M, z[m + m * k], st


@nb.njit(cache=True, nogil=True)
def tangent_steps(rhs, jac, p, x0, dt, n, rtol, atol, lo, hi, max_steps):
    """Orbit samples plus the one-step tangent maps DX_dt(p_i)."""
    m = x0.size
    eye = np.eye(m)
    pts = np.empty((n + 1, m))
    mats = np.empty((n, m, m))
    logdets = np.empty(n)
    pts[0] = x0
    x = x0.copy()
    for i in range(n):
        x, M, ld, st = tangent(rhs, jac, p, x, eye, dt, rtol, atol, lo, hi, max_steps)
        if st != OK:
            return pts[: i + 1], mats[:i], logdets[:i], st
        pts[i + 1] = x
        mats[i] = M
        logdets[i] = ld
    return pts, mats, logdets, OK


@nb.njit(cache=True, nogil=True)
def tangent_maps(rhs, jac, p, X, dt, rtol, atol, lo, hi, max_steps):
    """DX_dt at every row of X (not assumed to be consecutive on one orbit)."""
    N, m = X.shape
    eye = np.eye(m)
    mats = np.empty((N, m, m))
    images = np.empty((N, m))
    logdets = np.empty(N)
    for r in range(N):
        y, M, ld, st = tangent(rhs, jac, p, X[r].copy(), eye, dt, rtol, atol, lo, hi, max_steps)
        if st != OK:
            return images[:r], mats[:r], logdets[:r], st
        images[r] = y
        mats[r] = M
        logdets[r] = ld
    return images, mats, logdets, OK


@nb.njit(cache=True, nogil=True)
def map_points(rhs, jac, p, X, tau, rtol, atol, lo, hi, max_steps):
    """Apply the time-tau map row-wise; status per row."""
    N, m = X.shape
    out = np.empty((N, m))
    status = np.zeros(N, dtype=np.int64)
    for r in range(N):
        x, _, st, _ = dopri(rhs, jac, p, X[r].copy(), m, -1, tau, rtol, atol, 0.0, lo, hi, max_steps)
        out[r] = x
        status[r] = st
    return out, status


@nb.njit(cache=True, nogil=True)
def lyapunov_qr(rhs, jac, p, x0, interval, n_intervals, record_every, rtol, atol, lo, hi, max_steps):
    """Benettin/QR method with a full frame.

    Returns (log|R_ii| sums, log|det| total, history, x, status, intervals done).
    """
    m = x0.size
    Q = np.eye(m)
    x = x0.copy()
    sums = np.zeros(m)
    logdet = 0.0
    n_rec = n_intervals // record_every
    hist = np.empty((n_rec, m + 1))
    r = 0
    for it in range(n_intervals):
        x, M, ld, st = tangent(rhs, jac, p, x, Q, interval, rtol, atol, lo, hi, max_steps)
        if st != OK:
            return sums, logdet, hist[:r], x, st, it
        logdet += ld
        Q, R = np.linalg.qr(M)
        for i in range(m):
            d = abs(R[i, i])
            if not d > 1e-300:
                return sums, logdet, hist[:r], x, UNDERFLOW, it
            sums[i] += np.log(d)
        if (it + 1) % record_every == 0 and r < n_rec:
            T = (it + 1) * interval
            hist[r, 0] = T
            for i in range(m):
                hist[r, i + 1] = sums[i] / T
            r += 1
    return sums, logdet, hist[:r], x, OK, n_intervals


@nb.njit(cache=True, nogil=True)
def _apply_boundary(y, lo, hi, policy):
    m = y.size
    for i in range(m):
        if policy == REFLECT:
            w = hi[i] - lo[i]
            v = (y[i] - lo[i]) % (2.0 * w)
            y[i] = lo[i] + (v if v <= w else 2.0 * w - v)
        elif policy == CLAMP:
            y[i] = min(max(y[i], lo[i]), hi[i])


@nb.njit(cache=True, nogil=True)
def chain_block(rhs, jac, p, x0s, n_steps, keep_from, eps, tau, policy, zero_noise, rng,
                rtol, atol, lo, hi, max_steps):
    """Run independent chains x -> F(x) + eps*xi, one after the other.

    States with index >= keep_from (0 is the initial state) are returned,
    shape (n_chains, n_steps + 1 - keep_from, m).
    """
    nc, m = x0s.shape
    n_keep = n_steps + 1 - keep_from
    out = np.empty((nc, n_keep, m))
    y = np.empty(m)
    h = 0.0
    for c in range(nc):
        x = x0s[c].copy()
        if keep_from == 0:
            out[c, 0] = x
        for s in range(1, n_steps + 1):
            fx, h, st, _ = dopri(rhs, jac, p, x, m, -1, tau, rtol, atol, h, lo, hi, max_steps)
            if st != OK:
                return out, st, c, s
            if zero_noise:
                for i in range(m):
                    y[i] = fx[i]
            else:
                tries = 0
                while True:
                    xi = rng.standard_normal(m)
                    for i in range(m):
                        y[i] = fx[i] + eps * xi[i]
                    if policy != RESAMPLE or not _outside(y, m, lo, hi):
                        break
                    tries += 1
                    if tries >= 10000:
                        _apply_boundary(y, lo, hi, CLAMP)
                        break
                if policy != RESAMPLE:
                    _apply_boundary(y, lo, hi, policy)
            for i in range(m):
                x[i] = y[i]
            if s >= keep_from:
                out[c, s - keep_from] = x
    return out, OK, nc, n_steps


@nb.njit(cache=True, nogil=True)
def bowen_survival(rhs, jac, p, ref, samples, tau, rho, rtol, atol, lo, hi, max_steps):
    """counts[k] = number of samples y with dist(F^j x, F^j y) <= rho for all j <= k.

    ``ref`` holds the reference iterates F^j x, j = 0..n.
    """
    n = ref.shape[0] - 1
    N, m = samples.shape
    counts = np.zeros(n + 1, dtype=np.int64)
    h = 0.0
    for r in range(N):
        y = samples[r].copy()
        for j in range(n + 1):
            if j > 0:
                y, h, st, _ = dopri(rhs, jac, p, y, m, -1, tau, rtol, atol, h, lo, hi, max_steps)
                if st != OK:
                    break
            d = 0.0
            for i in range(m):
                d += (y[i] - ref[j, i]) ** 2
            if d > rho * rho:
                break
            counts[j] += 1
    return counts
