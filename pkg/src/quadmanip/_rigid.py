"""Compiled rigid-body core for the quadrotor + 2-link arm.

Everything here works on flat float64 arrays and register-resident tuples so
the closed-loop simulator can call it at kilohertz rates.  The packed
parameter vector layout is given by the ``P_*`` indices below;
:func:`quadmanip.dynamics.pack_params` builds it.

Generalized coordinates ``q = [X, Y, Z, phi, theta, psi, theta1, theta2]``.
Generalized forces are power-conjugate to ``q_dot``: inertial force on the
vehicle CM for the first three, ``J_v^T @ tau_body`` for the Euler angles, and
joint torques for the last two.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

P_M, P_D, P_IX, P_IY, P_IZ, P_IR = 0, 1, 2, 3, 4, 5
P_M0, P_M1, P_M2 = 6, 7, 8
P_L0, P_L1, P_L2 = 9, 10, 11
P_G, P_JA1, P_JA2 = 12, 13, 14
P_C2, P_I2 = 15, 16
N_PARAMS = 17

NQ = 8


# 3-vectors are tuples; 3x3 matrices are tuples of rows.


@njit(cache=True, inline="always")
def _add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True, inline="always")
def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True, inline="always")
def _scale(k, a):
    return (k * a[0], k * a[1], k * a[2])


@njit(cache=True, inline="always")
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True, inline="always")
def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@njit(cache=True, inline="always")
def _mv(m, a):
    return (_dot(m[0], a), _dot(m[1], a), _dot(m[2], a))


@njit(cache=True, inline="always")
def _mtv(m, a):
    return (
        m[0][0] * a[0] + m[1][0] * a[1] + m[2][0] * a[2],
        m[0][1] * a[0] + m[1][1] * a[1] + m[2][1] * a[2],
        m[0][2] * a[0] + m[1][2] * a[1] + m[2][2] * a[2],
    )


@njit(cache=True, inline="always")
def _rod(k, d, w):
    # inertia of a slender rod along unit d (perpendicular inertia k) applied to w
    return _scale(k, _sub(w, _scale(_dot(d, w), d)))


@njit(cache=True, inline="always")
def _point_acc(base, wd, w, r):
    return _add(base, _add(_cross(wd, r), _cross(w, _cross(w, r))))


@njit(cache=True)
def _rot(phi, theta, psi):
    """Body-to-inertial rotation ``Rz(psi) Ry(theta) Rx(phi)`` as row tuples."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return (
        (cp * ct, -sp * cf + cp * st * sf, sp * sf + cp * st * cf),
        (sp * ct, cp * cf + sp * st * sf, -cp * sf + sp * st * cf),
        (-st, ct * sf, ct * cf),
    )


@njit(cache=True)
def _jv(phi, theta):
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return ((1.0, 0.0, -st), (0.0, cf, ct * sf), (0.0, -sf, ct * cf))


@njit(cache=True)
def _jv_dot(phi, theta, dphi, dtheta):
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return (
        (0.0, 0.0, -ct * dtheta),
        (0.0, -sf * dphi, -st * sf * dtheta + ct * cf * dphi),
        (0.0, -cf * dphi, -st * cf * dtheta - ct * sf * dphi),
    )


@njit(cache=True)
def body_to_inertial(phi, theta, psi):
    r = _rot(phi, theta, psi)
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = r[i][j]
    return out


@njit(cache=True)
def _rnea(q, qd, qdd, p, omega_bar, out):
    """Recursive Newton-Euler pass; writes generalized forces into ``out``.

    Returns the wrench the arm exerts on the vehicle: force in the inertial
    frame and moment about the vehicle CM in the body frame.
    """
    m, ix, iy, iz, ir = p[P_M], p[P_IX], p[P_IY], p[P_IZ], p[P_IR]
    m0, m1, m2 = p[P_M0], p[P_M1], p[P_M2]
    l0, l1 = p[P_L0], p[P_L1]
    g = p[P_G]
    c2off, i2p = p[P_C2], p[P_I2]

    phi, theta, psi = q[3], q[4], q[5]
    r = _rot(phi, theta, psi)
    jv = _jv(phi, theta)
    jvd = _jv_dot(phi, theta, qd[3], qd[4])
    ed = (qd[3], qd[4], qd[5])
    edd = (qdd[3], qdd[4], qdd[5])
    wb = _mv(jv, ed)
    wdb = _add(_mv(jv, edd), _mv(jvd, ed))
    w = _mv(r, wb)
    wd = _mv(r, wdb)

    pdd = (qdd[0], qdd[1], qdd[2])
    gvec = (0.0, 0.0, -g)

    # base link, rigidly attached
    ez = (r[0][2], r[1][2], r[2][2])
    rc0 = _scale(-0.5 * l0, ez)
    ro1 = _scale(-l0, ez)
    ac0 = _point_acc(pdd, wd, w, rc0)
    ao1 = _point_acc(pdd, wd, w, ro1)
    k0 = m0 * l0 * l0 / 12.0

    # link 1
    t1, t2 = q[6], q[7]
    dt1, dt2 = qd[6], qd[7]
    ddt1, ddt2 = qdd[6], qdd[7]
    c1, s1 = math.cos(t1), math.sin(t1)
    c2, s2 = math.cos(t2), math.sin(t2)
    ax1 = (r[0][0], r[1][0], r[2][0])
    w1 = _add(w, _scale(dt1, ax1))
    wd1 = _add(_add(wd, _scale(ddt1, ax1)), _cross(w, _scale(dt1, ax1)))
    d1 = _mv(r, (0.0, -c1, -s1))
    sv1 = _scale(0.5 * l1, d1)
    lv1 = _scale(l1, d1)
    ac1 = _point_acc(ao1, wd1, w1, sv1)
    ao2 = _point_acc(ao1, wd1, w1, lv1)
    k1 = m1 * l1 * l1 / 12.0

    # link 2 (+ payload)
    ax2 = _mv(r, (0.0, -s1, c1))
    w2 = _add(w1, _scale(dt2, ax2))
    wd2 = _add(_add(wd1, _scale(ddt2, ax2)), _cross(w1, _scale(dt2, ax2)))
    d2 = _mv(r, (s2, -c1 * c2, -s1 * c2))
    sv2 = _scale(c2off, d2)
    ac2 = _point_acc(ao2, wd2, w2, sv2)

    # inward pass
    f2 = _scale(m2, _sub(ac2, gvec))
    n2 = _add(_add(_rod(i2p, d2, wd2), _cross(w2, _rod(i2p, d2, w2))), _cross(sv2, f2))
    g1 = _scale(m1, _sub(ac1, gvec))
    f1 = _add(g1, f2)
    n1 = _add(_rod(k1, d1, wd1), _cross(w1, _rod(k1, d1, w1)))
    n1 = _add(_add(n1, _cross(sv1, g1)), _add(n2, _cross(lv1, f2)))
    g0 = _scale(m0, _sub(ac0, gvec))
    f0 = _add(g0, f1)
    n0 = _add(_rod(k0, ez, wd), _cross(w, _rod(k0, ez, w)))
    n0 = _add(_add(n0, _cross(rc0, g0)), _add(n1, _cross(ro1, f1)))

    f_int = _scale(-1.0, f0)
    m_int = _scale(-1.0, _mtv(r, n0))

    fq = _sub(_scale(m, _sub(pdd, gvec)), f_int)
    out[0], out[1], out[2] = fq[0], fq[1], fq[2]
    iwb = (ix * wb[0], iy * wb[1], iz * wb[2])
    gyro = (-ir * wb[1] * omega_bar, ir * wb[0] * omega_bar, 0.0)
    tb = _add((ix * wdb[0], iy * wdb[1], iz * wdb[2]), _cross(wb, iwb))
    tb = _sub(_sub(tb, m_int), gyro)
    tq = _mtv(jv, tb)
    out[3], out[4], out[5] = tq[0], tq[1], tq[2]
    out[6] = _dot(n1, ax1) + p[P_JA1] * ddt1
    out[7] = _dot(n2, ax2) + p[P_JA2] * ddt2
    return f_int, m_int


@njit(cache=True)
def rnea(q, qd, qdd, p, omega_bar):
    """Returns ``(Q, f_int, m_int)`` as arrays."""
    out = np.empty(NQ)
    f, mo = _rnea(q, qd, qdd, p, omega_bar, out)
    return out, np.array(f), np.array(mo)


@njit(cache=True)
def _fill_mass_bias(q, qd, p, omega_bar, n_active, mm, bias, scratch):
    probe = np.zeros(NQ)
    _rnea(q, qd, probe, p, omega_bar, bias)
    for j in range(n_active):
        probe[j] = 1.0
        _rnea(q, qd, probe, p, omega_bar, scratch)
        probe[j] = 0.0
        for i in range(n_active):
            mm[i, j] = scratch[i] - bias[i]


@njit(cache=True)
def mass_and_bias(q, qd, p, omega_bar, n_active):
    """Mass matrix from unit-acceleration probes and the bias vector.

    Only the leading ``n_active`` coordinates are probed (6 freezes the joints).
    """
    mm = np.empty((n_active, n_active))
    bias = np.empty(NQ)
    _fill_mass_bias(q, qd, p, omega_bar, n_active, mm, bias, np.empty(NQ))
    return mm, bias


@njit(cache=True)
def _input_forces(q, u, dist, out):
    r = _rot(q[3], q[4], q[5])
    jv = _jv(q[3], q[4])
    for i in range(3):
        out[i] = u[0] * r[i][2] + dist[i]
    tq = _mtv(jv, (u[1] + dist[3], u[2] + dist[4], u[3] + dist[5]))
    out[3], out[4], out[5] = tq[0], tq[1], tq[2]
    out[6] = u[4]
    out[7] = u[5]


@njit(cache=True)
def input_forces(q, u, dist):
    """Map ``u = [T, tau_a(3), tau_m(2)]`` and ``dist = [F_I(3), M_B(3)]`` to generalized forces."""
    out = np.empty(NQ)
    _input_forces(q, u, dist, out)
    return out


@njit(cache=True)
def _cholesky_solve(a, b, n):
    """In-place Cholesky solve of the SPD system; ``a`` and ``b`` are overwritten."""
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if not s > 0.0:
            raise ValueError("mass matrix not positive definite")
        a[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / a[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= a[i, k] * b[k]
        b[i] = s / a[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= a[k, i] * b[k]
        b[i] = s / a[i, i]


@njit(cache=True)
def _forward_dynamics(q, qd, u, dist, p, omega_bar, n_active, out, mm, bias, scratch):
    _fill_mass_bias(q, qd, p, omega_bar, n_active, mm, bias, scratch)
    _input_forces(q, u, dist, scratch)
    for i in range(NQ):
        out[i] = 0.0
    for i in range(n_active):
        out[i] = scratch[i] - bias[i]
    _cholesky_solve(mm, out, n_active)


@njit(cache=True)
def forward_dynamics(q, qd, u, dist, p, omega_bar, n_active):
    out = np.empty(NQ)
    _forward_dynamics(
        q, qd, u, dist, p, omega_bar, n_active, out, np.empty((n_active, n_active)), np.empty(NQ), np.empty(NQ)
    )
    return out


@njit(cache=True)
def _deriv(x, u, dist, p, omega_bar, n_active, out, mm, bias, scratch, acc):
    q = x[:NQ]
    qd = x[NQ:]
    _forward_dynamics(q, qd, u, dist, p, omega_bar, n_active, acc, mm, bias, scratch)
    for i in range(NQ):
        out[i] = qd[i]
        out[NQ + i] = acc[i]


@njit(cache=True)
def state_derivative(x, u, dist, p, omega_bar, n_active):
    out = np.empty(2 * NQ)
    _deriv(
        x, u, dist, p, omega_bar, n_active, out,
        np.empty((n_active, n_active)), np.empty(NQ), np.empty(NQ), np.empty(NQ),
    )
    return out


@njit(cache=True)
def rk4_substeps(x, u, dist, p, omega_bar, dt, n_sub, n_active):
    """``n_sub`` classical RK4 steps of size ``dt`` with inputs held constant."""
    n = 2 * NQ
    mm = np.empty((n_active, n_active))
    bias = np.empty(NQ)
    scratch = np.empty(NQ)
    acc = np.empty(NQ)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    x = x.copy()
    for _ in range(n_sub):
        _deriv(x, u, dist, p, omega_bar, n_active, k1, mm, bias, scratch, acc)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _deriv(tmp, u, dist, p, omega_bar, n_active, k2, mm, bias, scratch, acc)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _deriv(tmp, u, dist, p, omega_bar, n_active, k3, mm, bias, scratch, acc)
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        _deriv(tmp, u, dist, p, omega_bar, n_active, k4, mm, bias, scratch, acc)
        for i in range(n):
            x[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return x


@njit(cache=True)
def rk4_step(x, u, dist, p, omega_bar, dt, n_active):
    return rk4_substeps(x, u, dist, p, omega_bar, dt, 1, n_active)


@njit(cache=True)
def energies(q, qd, p):
    """``(kinetic, potential)`` energy; potential is zero at ``Z = 0`` for every body."""
    m, ix, iy, iz = p[P_M], p[P_IX], p[P_IY], p[P_IZ]
    m0, m1, m2 = p[P_M0], p[P_M1], p[P_M2]
    l0, l1 = p[P_L0], p[P_L1]
    g = p[P_G]
    c2off, i2p = p[P_C2], p[P_I2]

    r = _rot(q[3], q[4], q[5])
    wb = _mv(_jv(q[3], q[4]), (qd[3], qd[4], qd[5]))
    w = _mv(r, wb)
    pos = (q[0], q[1], q[2])
    v = (qd[0], qd[1], qd[2])

    ke = 0.5 * m * _dot(v, v) + 0.5 * (ix * wb[0] ** 2 + iy * wb[1] ** 2 + iz * wb[2] ** 2)
    pe = m * g * pos[2]

    ez = (r[0][2], r[1][2], r[2][2])
    rc0 = _scale(-0.5 * l0, ez)
    vc0 = _add(v, _cross(w, rc0))
    ke += 0.5 * m0 * _dot(vc0, vc0) + 0.5 * _dot(w, _rod(m0 * l0 * l0 / 12.0, ez, w))
    pe += m0 * g * (pos[2] + rc0[2])

    ro1 = _scale(-l0, ez)
    vo1 = _add(v, _cross(w, ro1))
    c1, s1 = math.cos(q[6]), math.sin(q[6])
    c2, s2 = math.cos(q[7]), math.sin(q[7])
    w1 = _add(w, _scale(qd[6], (r[0][0], r[1][0], r[2][0])))
    d1 = _mv(r, (0.0, -c1, -s1))
    vc1 = _add(vo1, _cross(w1, _scale(0.5 * l1, d1)))
    ke += 0.5 * m1 * _dot(vc1, vc1) + 0.5 * _dot(w1, _rod(m1 * l1 * l1 / 12.0, d1, w1))
    pe += m1 * g * (pos[2] + ro1[2] + 0.5 * l1 * d1[2])

    vo2 = _add(vo1, _cross(w1, _scale(l1, d1)))
    ax2 = _mv(r, (0.0, -s1, c1))
    w2 = _add(w1, _scale(qd[7], ax2))
    d2 = _mv(r, (s2, -c1 * c2, -s1 * c2))
    vc2 = _add(vo2, _cross(w2, _scale(c2off, d2)))
    ke += 0.5 * m2 * _dot(vc2, vc2) + 0.5 * _dot(w2, _rod(i2p, d2, w2))
    pe += m2 * g * (pos[2] + ro1[2] + l1 * d1[2] + c2off * d2[2])

    ke += 0.5 * (p[P_JA1] * qd[6] ** 2 + p[P_JA2] * qd[7] ** 2)
    return ke, pe
