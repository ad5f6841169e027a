"""Hot loops: characteristic integration, stencils, polyline distance.

Each kernel exists twice, ``*_numba`` (compiled loop nest) and ``*_numpy``
(array expressions).  The unsuffixed name is bound to one of them according
to :data:`acflow._accel.USE_NUMBA`.  Both variants are kept importable so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them.

Grid arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along y.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

KIND_ZERO = 0
KIND_SINGLE_VORTEX = 1
KIND_DOUBLE_VORTEX = 2

PI = np.pi


# ---------------------------------------------------------------------------
# stream functions of the built-in velocities
# ---------------------------------------------------------------------------


def stream_derivs(kind, amp, x, y):
    """(psi_x, psi_y, psi_xx, psi_xy, psi_yy) of a built-in stream function.

    Works on scalars and on arrays; compiled below for the numba path.
    """
    if kind == KIND_SINGLE_VORTEX:
        sx = np.sin(PI * x)
        cx = np.cos(PI * x)
        sy = np.sin(PI * y)
        cy = np.cos(PI * y)
        s2x = 2.0 * sx * cx
        s2y = 2.0 * sy * cy
        c2x = 1.0 - 2.0 * sx * sx
        c2y = 1.0 - 2.0 * sy * sy
        px = amp * PI * s2x * sy * sy
        py = amp * PI * sx * sx * s2y
        pxx = 2.0 * amp * PI * PI * c2x * sy * sy
        pyy = 2.0 * amp * PI * PI * sx * sx * c2y
        pxy = amp * PI * PI * s2x * s2y
        return px, py, pxx, pxy, pyy
    if kind == KIND_DOUBLE_VORTEX:
        s2x = np.sin(2.0 * PI * x)
        c2x = np.cos(2.0 * PI * x)
        sy = np.sin(PI * y)
        cy = np.cos(PI * y)
        s4x = 2.0 * s2x * c2x
        c4x = 1.0 - 2.0 * s2x * s2x
        s2y = 2.0 * sy * cy
        c2y = 1.0 - 2.0 * sy * sy
        px = 2.0 * amp * PI * s4x * sy * sy
        py = amp * PI * s2x * s2x * s2y
        pxx = 8.0 * amp * PI * PI * c4x * sy * sy
        pyy = 2.0 * amp * PI * PI * s2x * s2x * c2y
        pxy = 2.0 * amp * PI * PI * s4x * s2y
        return px, py, pxx, pxy, pyy
    z = 0.0 * x * y
    return z, z, z, z, z


_stream_derivs_jit = njit(stream_derivs)


# ---------------------------------------------------------------------------
# characteristics: dX/dt = v(X, t), dJ/dt = grad v(X, t) J
# ---------------------------------------------------------------------------


@njit
def _flow_numba(kind, amp, x, y, dt, nsteps, with_jac, jac):
    n = x.shape[0]
    h2 = 0.5 * dt
    for p in range(n):
        X = x[p]
        Y = y[p]
        if with_jac:
            a11 = jac[0, p]
            a12 = jac[1, p]
            a21 = jac[2, p]
            a22 = jac[3, p]
        else:
            a11 = 1.0
            a12 = 0.0
            a21 = 0.0
            a22 = 1.0
        for _ in range(nsteps):
            # stage 1
            px, py, pxx, pxy, pyy = _stream_derivs_jit(kind, amp, X, Y)
            k1x = -py
            k1y = px
            g11 = -pxy
            g12 = -pyy
            g21 = pxx
            g22 = pxy
            m111 = g11 * a11 + g12 * a21
            m112 = g11 * a12 + g12 * a22
            m121 = g21 * a11 + g22 * a21
            m122 = g21 * a12 + g22 * a22
            # stage 2
            Xs = X + h2 * k1x
            Ys = Y + h2 * k1y
            b11 = a11 + h2 * m111
            b12 = a12 + h2 * m112
            b21 = a21 + h2 * m121
            b22 = a22 + h2 * m122
            px, py, pxx, pxy, pyy = _stream_derivs_jit(kind, amp, Xs, Ys)
            k2x = -py
            k2y = px
            g11 = -pxy
            g12 = -pyy
            g21 = pxx
            g22 = pxy
            m211 = g11 * b11 + g12 * b21
            m212 = g11 * b12 + g12 * b22
            m221 = g21 * b11 + g22 * b21
            m222 = g21 * b12 + g22 * b22
            # stage 3
            Xs = X + h2 * k2x
            Ys = Y + h2 * k2y
            b11 = a11 + h2 * m211
            b12 = a12 + h2 * m212
            b21 = a21 + h2 * m221
            b22 = a22 + h2 * m222
            px, py, pxx, pxy, pyy = _stream_derivs_jit(kind, amp, Xs, Ys)
            k3x = -py
            k3y = px
            g11 = -pxy
            g12 = -pyy
            g21 = pxx
            g22 = pxy
            m311 = g11 * b11 + g12 * b21
            m312 = g11 * b12 + g12 * b22
            m321 = g21 * b11 + g22 * b21
            m322 = g21 * b12 + g22 * b22
            # stage 4
            Xs = X + dt * k3x
            Ys = Y + dt * k3y
            b11 = a11 + dt * m311
            b12 = a12 + dt * m312
            b21 = a21 + dt * m321
            b22 = a22 + dt * m322
            px, py, pxx, pxy, pyy = _stream_derivs_jit(kind, amp, Xs, Ys)
            k4x = -py
            k4y = px
            g11 = -pxy
            g12 = -pyy
            g21 = pxx
            g22 = pxy
            m411 = g11 * b11 + g12 * b21
            m412 = g11 * b12 + g12 * b22
            m421 = g21 * b11 + g22 * b21
            m422 = g21 * b12 + g22 * b22
            X += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            Y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            a11 += dt / 6.0 * (m111 + 2.0 * m211 + 2.0 * m311 + m411)
            a12 += dt / 6.0 * (m112 + 2.0 * m212 + 2.0 * m312 + m412)
            a21 += dt / 6.0 * (m121 + 2.0 * m221 + 2.0 * m321 + m421)
            a22 += dt / 6.0 * (m122 + 2.0 * m222 + 2.0 * m322 + m422)
        x[p] = X
        y[p] = Y
        if with_jac:
            jac[0, p] = a11
            jac[1, p] = a12
            jac[2, p] = a21
            jac[3, p] = a22


def _flow_numpy(derivs, x, y, t0, dt, nsteps, with_jac, jac):
    """Vectorised RK4; ``derivs(x, y, t)`` returns the stream-function derivatives."""

    def rhs(X, Y, A, t):
        px, py, pxx, pxy, pyy = derivs(X, Y, t)
        kx, ky = -py, px
        if not with_jac:
            return kx, ky, None
        g = ((-pxy, -pyy), (pxx, pxy))
        M = np.empty_like(A)
        M[0] = g[0][0] * A[0] + g[0][1] * A[2]
        M[1] = g[0][0] * A[1] + g[0][1] * A[3]
        M[2] = g[1][0] * A[0] + g[1][1] * A[2]
        M[3] = g[1][0] * A[1] + g[1][1] * A[3]
        return kx, ky, M

    X = x.copy()
    Y = y.copy()
    A = jac.copy() if with_jac else None
    t = t0
    for _ in range(nsteps):
        k1x, k1y, m1 = rhs(X, Y, A, t)
        A2 = A + 0.5 * dt * m1 if with_jac else None
        k2x, k2y, m2 = rhs(X + 0.5 * dt * k1x, Y + 0.5 * dt * k1y, A2, t + 0.5 * dt)
        A3 = A + 0.5 * dt * m2 if with_jac else None
        k3x, k3y, m3 = rhs(X + 0.5 * dt * k2x, Y + 0.5 * dt * k2y, A3, t + 0.5 * dt)
        A4 = A + dt * m3 if with_jac else None
        k4x, k4y, m4 = rhs(X + dt * k3x, Y + dt * k3y, A4, t + dt)
        X = X + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        Y = Y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if with_jac:
            A = A + dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
        t += dt
    x[:] = X
    y[:] = Y
    if with_jac:
        jac[:] = A


def flow_points(kind, amp, derivs, x, y, t0, t1, max_step, jac=None, use_numba=None):
    """Integrate points (in place) from ``t0`` to ``t1`` with classical RK4.

    ``kind``/``amp`` select a built-in field for the compiled path; ``derivs``
    is the generic callable used by the numpy path (and for custom fields).
    ``jac`` (shape ``(4, N)``, row-major 2x2 per point) is advanced with the
    variational equation when given.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    span = t1 - t0
    if span == 0.0:
        return
    nsteps = max(1, int(np.ceil(abs(span) / max_step - 1e-12)))
    dt = span / nsteps
    with_jac = jac is not None
    if use_numba and kind is not None:
        dummy = jac if with_jac else np.empty((4, 0))
        _flow_numba(kind, float(amp), x, y, dt, nsteps, with_jac, dummy)
    else:
        _flow_numpy(derivs, x, y, t0, dt, nsteps, with_jac, jac)


# ---------------------------------------------------------------------------
# Allen-Cahn right-hand sides
# ---------------------------------------------------------------------------


@njit
def ac_rhs_numba(c, fc, vx, vy, mob, inv_eps2, h, out):
    n0, n1 = c.shape
    ih2 = 1.0 / (h * h)
    i2h = 0.5 / h
    for i in range(n0):
        out[i, 0] = 0.0
        out[i, n1 - 1] = 0.0
    for j in range(n1):
        out[0, j] = 0.0
        out[n0 - 1, j] = 0.0
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            cc = c[i, j]
            lap = (c[i + 1, j] + c[i - 1, j] + c[i, j + 1] + c[i, j - 1] - 4.0 * cc) * ih2
            cx = (c[i + 1, j] - c[i - 1, j]) * i2h
            cy = (c[i, j + 1] - c[i, j - 1]) * i2h
            out[i, j] = -(vx[i, j] * cx + vy[i, j] * cy) + mob * (lap - inv_eps2 * fc[i, j])


def ac_rhs_numpy(c, fc, vx, vy, mob, inv_eps2, h, out):
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    ci = c[1:-1, 1:-1]
    lap = (c[2:, 1:-1] + c[:-2, 1:-1] + c[1:-1, 2:] + c[1:-1, :-2] - 4.0 * ci) / (h * h)
    cx = (c[2:, 1:-1] - c[:-2, 1:-1]) / (2.0 * h)
    cy = (c[1:-1, 2:] - c[1:-1, :-2]) / (2.0 * h)
    out[1:-1, 1:-1] = -(vx[1:-1, 1:-1] * cx + vy[1:-1, 1:-1] * cy) + mob * (
        lap - inv_eps2 * fc[1:-1, 1:-1]
    )


@njit
def metric_step_numba(w, fw, g11, g12, g22, mob, inv_eps2, h, dt, lo, hi, out):
    """One forward-Euler step of ``w_t = mob * (div(G grad w) - fw / eps^2)``.

    Edge form: ``G = a_x e_x e_x^T + a_y e_y e_y^T + a_d d d^T`` with
    ``a_x = G11 - |G12|``, ``a_y = G22 - |G12|`` and ``a_d = |G12|`` on the
    diagonal ``d = (1, sign G12)``, each weight taken at the edge midpoint.
    This decomposition is exact, but ``a_x`` and ``a_y`` turn negative
    wherever G is not diagonally dominant.  The positive parts form a
    monotone low-order update; the negative parts are added back as
    antidiffusive fluxes scaled by a Zalesak limiter so that the result stays
    in ``[lo, hi]``.  Boundary nodes are copied unchanged.
    """
    n0, n1 = w.shape
    s = dt * mob / (h * h)
    low = np.empty((n0, n1))
    rp = np.ones((n0, n1))
    rm = np.ones((n0, n1))
    for i in range(n0):
        for j in range(n1):
            low[i, j] = w[i, j]
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            wc = w[i, j]
            acc = 0.0
            pp = 0.0
            pm = 0.0
            for di in range(-1, 2):
                for dj in range(-1, 2):
                    if di == 0 and dj == 0:
                        continue
                    a = i + di
                    b = j + dj
                    m12 = 0.5 * (g12[i, j] + g12[a, b])
                    if dj == 0:
                        wt = 0.5 * (g11[i, j] + g11[a, b]) - abs(m12)
                    elif di == 0:
                        wt = 0.5 * (g22[i, j] + g22[a, b]) - abs(m12)
                    elif di * dj > 0:
                        wt = max(m12, 0.0)
                    else:
                        wt = max(-m12, 0.0)
                    flux = wt * (w[a, b] - wc)
                    if wt > 0.0:
                        acc += flux
                    elif flux > 0.0:
                        pp += flux
                    else:
                        pm += flux
            wl = wc + dt * mob * (acc / (h * h) - inv_eps2 * fw[i, j])
            low[i, j] = wl
            if pp > 0.0:
                rp[i, j] = min(1.0, max(hi - wl, 0.0) / (s * pp))
            if pm < 0.0:
                rm[i, j] = min(1.0, min(lo - wl, 0.0) / (s * pm))
    for i in range(n0):
        for j in range(n1):
            out[i, j] = low[i, j]
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            wc = w[i, j]
            corr = 0.0
            for k in range(4):
                a = i + (1 if k == 0 else (-1 if k == 1 else 0))
                b = j + (1 if k == 2 else (-1 if k == 3 else 0))
                m12 = 0.5 * (g12[i, j] + g12[a, b])
                if k < 2:
                    wt = 0.5 * (g11[i, j] + g11[a, b]) - abs(m12)
                else:
                    wt = 0.5 * (g22[i, j] + g22[a, b]) - abs(m12)
                if wt >= 0.0:
                    continue
                flux = wt * (w[a, b] - wc)
                if flux > 0.0:
                    alpha = min(rp[i, j], rm[a, b])
                else:
                    alpha = min(rm[i, j], rp[a, b])
                corr += alpha * flux
            out[i, j] += s * corr


def metric_edge_weights(g11, g12, g22):
    """Edge weights (x, y, main diagonal, anti-diagonal) between neighbouring nodes.

    Arrays have shapes (n-1, n), (n, n-1), (n-1, n-1), (n-1, n-1); the
    anti-diagonal entry ``[i, j]`` joins nodes (i, j+1) and (i+1, j).  The
    x and y weights may be negative; the diagonal ones never are.
    """
    m12x = 0.5 * (g12[1:, :] + g12[:-1, :])
    ax = 0.5 * (g11[1:, :] + g11[:-1, :]) - np.abs(m12x)
    m12y = 0.5 * (g12[:, 1:] + g12[:, :-1])
    ay = 0.5 * (g22[:, 1:] + g22[:, :-1]) - np.abs(m12y)
    ad = np.maximum(0.5 * (g12[1:, 1:] + g12[:-1, :-1]), 0.0)
    aa = np.maximum(-0.5 * (g12[:-1, 1:] + g12[1:, :-1]), 0.0)
    return ax, ay, ad, aa


def _scatter(acc, fx, fy, fd=None, fa=None):
    acc[:-1, :] += fx
    acc[1:, :] -= fx
    acc[:, :-1] += fy
    acc[:, 1:] -= fy
    if fd is not None:
        acc[:-1, :-1] += fd
        acc[1:, 1:] -= fd
        acc[:-1, 1:] += fa
        acc[1:, :-1] -= fa


def metric_step_numpy(w, fw, g11, g12, g22, mob, inv_eps2, h, dt, lo, hi, out):
    ax, ay, ad, aa = metric_edge_weights(g11, g12, g22)
    dx = w[1:, :] - w[:-1, :]
    dy = w[:, 1:] - w[:, :-1]
    acc = np.zeros_like(w)
    _scatter(acc, np.maximum(ax, 0.0) * dx, np.maximum(ay, 0.0) * dy,
             ad * (w[1:, 1:] - w[:-1, :-1]), aa * (w[1:, :-1] - w[:-1, 1:]))
    interior = np.zeros(w.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    low = np.where(interior, w + dt * mob * (acc / (h * h) - inv_eps2 * fw), w)

    # antidiffusive fluxes, oriented from the lower-index node into the higher one
    s = dt * mob / (h * h)
    ex = np.minimum(ax, 0.0) * dx
    ey = np.minimum(ay, 0.0) * dy
    pp = np.zeros_like(w)
    pm = np.zeros_like(w)
    for f, lo_sl, hi_sl in ((ex, np.s_[:-1, :], np.s_[1:, :]), (ey, np.s_[:, :-1], np.s_[:, 1:])):
        pp[lo_sl] += np.maximum(f, 0.0)
        pm[lo_sl] += np.minimum(f, 0.0)
        pp[hi_sl] += np.maximum(-f, 0.0)
        pm[hi_sl] += np.minimum(-f, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rp = np.where(pp > 0.0, np.minimum(1.0, np.maximum(hi - low, 0.0) / (s * pp)), 1.0)
        rm = np.where(pm < 0.0, np.minimum(1.0, np.minimum(lo - low, 0.0) / (s * pm)), 1.0)
    rp[~interior] = 1.0
    rm[~interior] = 1.0
    # a positive flux raises the lower-index node and lowers the other one
    alx = np.where(ex > 0.0, np.minimum(rp[:-1, :], rm[1:, :]), np.minimum(rm[:-1, :], rp[1:, :]))
    aly = np.where(ey > 0.0, np.minimum(rp[:, :-1], rm[:, 1:]), np.minimum(rm[:, :-1], rp[:, 1:]))
    corr = np.zeros_like(w)
    _scatter(corr, alx * ex, aly * ey)
    out[:] = np.where(interior, low + s * corr, w)


# ---------------------------------------------------------------------------
# polylines
# ---------------------------------------------------------------------------


@njit
def polyline_distance_numba(px, py, vx, vy):
    """Signed distance to a closed polyline (negative inside) and closest points."""
    npt = px.shape[0]
    nv = vx.shape[0]
    dist = np.empty(npt)
    cx = np.empty(npt)
    cy = np.empty(npt)
    for p in range(npt):
        x = px[p]
        y = py[p]
        best = 1e300
        bx = 0.0
        by = 0.0
        wn = 0
        for k in range(nv):
            ax = vx[k]
            ay = vy[k]
            k1 = k + 1
            if k1 == nv:
                k1 = 0
            ex = vx[k1] - ax
            ey = vy[k1] - ay
            ll = ex * ex + ey * ey
            s = 0.0
            if ll > 0.0:
                s = ((x - ax) * ex + (y - ay) * ey) / ll
                if s < 0.0:
                    s = 0.0
                elif s > 1.0:
                    s = 1.0
            qx = ax + s * ex
            qy = ay + s * ey
            d2 = (x - qx) * (x - qx) + (y - qy) * (y - qy)
            if d2 < best:
                best = d2
                bx = qx
                by = qy
            # winding number (Sunday)
            cross = ex * (y - ay) - ey * (x - ax)
            if ay <= y:
                if vy[k1] > y and cross > 0.0:
                    wn += 1
            else:
                if vy[k1] <= y and cross < 0.0:
                    wn -= 1
        d = np.sqrt(best)
        if wn != 0:
            d = -d
        dist[p] = d
        cx[p] = bx
        cy[p] = by
    return dist, cx, cy


def polyline_distance_numpy(px, py, vx, vy, chunk=4096):
    ax, ay = vx, vy
    bxs, bys = np.roll(vx, -1), np.roll(vy, -1)
    ex, ey = bxs - ax, bys - ay
    ll = ex * ex + ey * ey
    safe = np.where(ll > 0.0, ll, 1.0)
    dist = np.empty(px.shape[0])
    cx = np.empty(px.shape[0])
    cy = np.empty(px.shape[0])
    for start in range(0, px.shape[0], chunk):
        x = px[start : start + chunk, None]
        y = py[start : start + chunk, None]
        s = np.clip(((x - ax) * ex + (y - ay) * ey) / safe, 0.0, 1.0)
        s = np.where(ll > 0.0, s, 0.0)
        qx = ax + s * ex
        qy = ay + s * ey
        d2 = (x - qx) ** 2 + (y - qy) ** 2
        k = np.argmin(d2, axis=1)
        rows = np.arange(k.shape[0])
        cross = ex * (y - ay) - ey * (x - ax)
        up = (ay <= y) & (bys > y) & (cross > 0.0)
        down = (ay > y) & (bys <= y) & (cross < 0.0)
        wn = up.sum(axis=1) - down.sum(axis=1)
        d = np.sqrt(d2[rows, k])
        dist[start : start + chunk] = np.where(wn != 0, -d, d)
        cx[start : start + chunk] = qx[rows, k]
        cy[start : start + chunk] = qy[rows, k]
    return dist, cx, cy


@njit
def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if v > 0.0:
        return 1
    if v < 0.0:
        return -1
    return 0


@njit
def self_intersections_numba(vx, vy):
    """Number of properly crossing non-adjacent segment pairs of a closed polyline."""
    n = vx.shape[0]
    count = 0
    for a in range(n):
        a1 = (a + 1) % n
        for b in range(a + 2, n):
            b1 = (b + 1) % n
            if b1 == a:
                continue
            o1 = _orient(vx[a], vy[a], vx[a1], vy[a1], vx[b], vy[b])
            o2 = _orient(vx[a], vy[a], vx[a1], vy[a1], vx[b1], vy[b1])
            o3 = _orient(vx[b], vy[b], vx[b1], vy[b1], vx[a], vy[a])
            o4 = _orient(vx[b], vy[b], vx[b1], vy[b1], vx[a1], vy[a1])
            if o1 * o2 < 0 and o3 * o4 < 0:
                count += 1
    return count


def self_intersections_numpy(vx, vy):
    n = vx.shape[0]
    a = np.arange(n)[:, None]
    b = np.arange(n)[None, :]
    mask = (b >= a + 2) & ~((a == 0) & (b == n - 1))
    ax, ay = vx[:, None], vy[:, None]
    a1x, a1y = np.roll(vx, -1)[:, None], np.roll(vy, -1)[:, None]
    bx, by = vx[None, :], vy[None, :]
    b1x, b1y = np.roll(vx, -1)[None, :], np.roll(vy, -1)[None, :]

    def orient(px, py, qx, qy, rx, ry):
        return np.sign((qx - px) * (ry - py) - (qy - py) * (rx - px))

    o1 = orient(ax, ay, a1x, a1y, bx, by)
    o2 = orient(ax, ay, a1x, a1y, b1x, b1y)
    o3 = orient(bx, by, b1x, b1y, ax, ay)
    o4 = orient(bx, by, b1x, b1y, a1x, a1y)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0) & mask
    return int(hit.sum())


if USE_NUMBA:
    ac_rhs = ac_rhs_numba
    metric_step = metric_step_numba
    polyline_distance = polyline_distance_numba
    self_intersections = self_intersections_numba
else:
    ac_rhs = ac_rhs_numpy
    metric_step = metric_step_numpy
    polyline_distance = polyline_distance_numpy
    self_intersections = self_intersections_numpy
