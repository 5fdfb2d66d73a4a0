"""Compiled closed-loop kernels: RIC axis law, eight-axis controller, mixer, one control period.

Gain rows are ``[kp_ext, kd_ext, kp_int, kd_int, ki_int, tau_c, integral_limit]``;
state rows are ``[ym, ym_dot, integ, u_prev, primed]``.  Axis order follows
:data:`quadmanip.control.AXES`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from . import _rigid

AX_X, AX_Y, AX_Z, AX_PHI, AX_THETA, AX_PSI, AX_T1, AX_T2 = range(8)

# closed_loop_step status codes
OK, DIVERGED_MAGNITUDE, DIVERGED_PITCH, DIVERGED_NONFINITE = 0, 1, 2, 3


@njit(cache=True)
def _model_advance(g, s, u_c, y, y_rate, dt):
    """Advance the reference model of one axis; returns ``(e_r, e_r_rate, integ)``."""
    if s[4] != 0.0:
        a0 = s[3] / g[5]
        a1 = u_c / g[5]
        s[0] = s[0] + dt * s[1] + dt * dt * (2.0 * a0 + a1) / 6.0
        s[1] = s[1] + 0.5 * dt * (a0 + a1)
        s[2] = min(max(s[2] + (s[0] - y) * dt, -g[6]), g[6])
    else:
        s[0] = y
        s[1] = y_rate
        s[2] = 0.0
    s[3] = u_c
    s[4] = 1.0
    return s[0] - y, s[1] - y_rate, s[2]


@njit(cache=True)
def ric_axis(g, s, y_ref, y_ref_rate, y, y_rate, u_ex, dt):
    """Advance one axis in place and return its effort."""
    u_c = g[0] * (y_ref - y) + g[1] * (y_ref_rate - y_rate)
    e_r, e_r_rate, integ = _model_advance(g, s, u_c, y, y_rate, dt)
    return u_c + g[2] * e_r + g[3] * e_r_rate + g[4] * integ + u_ex


@njit(cache=True)
def ric_xy(gx, gy, sx, sy, ref, ref_rate, pos, vel, psi, dt):
    """Horizontal efforts along the yaw-aligned axes.

    Every error pair is mapped by ``M = [[c, s], [s, -c]]`` (the yaw error
    transform) before the gains act.  The reference models stay in the
    inertial frame and are driven by ``M`` applied to the mapped external
    effort; ``M`` is its own inverse.
    """
    c, s = math.cos(psi), math.sin(psi)
    ex, ey = ref[0] - pos[0], ref[1] - pos[1]
    edx, edy = ref_rate[0] - vel[0], ref_rate[1] - vel[1]
    ucx = gx[0] * (ex * c + ey * s) + gx[1] * (edx * c + edy * s)
    ucy = gy[0] * (ex * s - ey * c) + gy[1] * (edx * s - edy * c)
    erx, erdx, ix = _model_advance(gx, sx, ucx * c + ucy * s, pos[0], vel[0], dt)
    ery, erdy, iy = _model_advance(gy, sy, ucx * s - ucy * c, pos[1], vel[1], dt)
    ukx = gx[2] * (erx * c + ery * s) + gx[3] * (erdx * c + erdy * s) + gx[4] * (ix * c + iy * s)
    uky = gy[2] * (erx * s - ery * c) + gy[3] * (erdx * s - erdy * c) + gy[4] * (ix * s - iy * c)
    return ucx + ukx, ucy + uky


@njit(cache=True)
def controller(gains, states, sp_pos, sp_vel, q, qd, weight, tilt, dt, cmd):
    """Fill ``cmd = [T, tau_a(3), tau_m(2)]``; return ``(phi_des, theta_des)``."""
    ux, uy = ric_xy(gains[AX_X], gains[AX_Y], states[AX_X], states[AX_Y], sp_pos, sp_vel, q, qd, q[5], dt)
    theta_des = min(max(ux / weight, -tilt), tilt)
    phi_des = min(max(uy / weight, -tilt), tilt)
    cmd[0] = ric_axis(gains[AX_Z], states[AX_Z], sp_pos[2], sp_vel[2], q[2], qd[2], weight, dt)
    cmd[1] = ric_axis(gains[AX_PHI], states[AX_PHI], phi_des, 0.0, q[3], qd[3], 0.0, dt)
    cmd[2] = ric_axis(gains[AX_THETA], states[AX_THETA], theta_des, 0.0, q[4], qd[4], 0.0, dt)
    cmd[3] = ric_axis(gains[AX_PSI], states[AX_PSI], sp_pos[3], sp_vel[3], q[5], qd[5], 0.0, dt)
    cmd[4] = ric_axis(gains[AX_T1], states[AX_T1], sp_pos[4], sp_vel[4], q[6], qd[6], 0.0, dt)
    cmd[5] = ric_axis(gains[AX_T2], states[AX_T2], sp_pos[5], sp_vel[5], q[7], qd[7], 0.0, dt)
    return phi_des, theta_des


@njit(cache=True)
def mix(ginv, wrench, omega_max, omega):
    """Clipping mixer; returns ``(clipped, saturated)`` flags."""
    clipped = False
    saturated = False
    for j in range(4):
        w2 = 0.0
        for k in range(4):
            w2 += ginv[j, k] * wrench[k]
        if w2 < -1e-9:
            clipped = True
        w = math.sqrt(w2) if w2 > 0.0 else 0.0
        if w > omega_max:
            saturated = True
            w = omega_max
        omega[j] = w
    return clipped, saturated


@njit(cache=True)
def rotor_wrench(omega, kf, km, d, u):
    """Write realized ``[T, tau_a(3)]`` into ``u[:4]``; return signed speed sum."""
    f0 = kf[0] * omega[0] ** 2
    f1 = kf[1] * omega[1] ** 2
    f2 = kf[2] * omega[2] ** 2
    f3 = kf[3] * omega[3] ** 2
    u[0] = f0 + f1 + f2 + f3
    u[1] = d * (f3 - f1)
    u[2] = d * (f2 - f0)
    u[3] = -km[0] * omega[0] ** 2 + km[1] * omega[1] ** 2 - km[2] * omega[2] ** 2 + km[3] * omega[3] ** 2
    return omega[0] - omega[1] + omega[2] - omega[3]


@njit(cache=True)
def closed_loop_step(
    x, meas, sp_pos, sp_vel, gains, states, weight, tilt, ginv, kf, km, d, omega_max,
    p, dist, dt, n_sub, cmd, omega, applied,
):
    """One control period: controller on ``meas``, mixer, rotor model, RK4 on truth ``x``.

    Returns ``(x_next, phi_des, theta_des, status, clipped, saturated)``.
    ``applied`` receives the realized ``[T, tau_a(3), tau_m(2)]``.
    """
    phi_des, theta_des = controller(gains, states, sp_pos, sp_vel, meas[:8], meas[8:], weight, tilt, dt, cmd)
    clipped, saturated = mix(ginv, cmd[:4], omega_max, omega)
    omega_bar = rotor_wrench(omega, kf, km, d, applied)
    applied[4] = cmd[4]
    applied[5] = cmd[5]
    xn = _rigid.rk4_substeps(x, applied, dist, p, omega_bar, dt / n_sub, n_sub, 8)
    status = OK
    for i in range(16):
        v = xn[i]
        if not math.isfinite(v):
            status = DIVERGED_NONFINITE
            break
        if abs(v) > 1e6:
            status = DIVERGED_MAGNITUDE
            break
    if status == OK and abs(xn[4]) >= math.radians(85.0):
        status = DIVERGED_PITCH
    return xn, phi_des, theta_des, status, clipped, saturated


def new_states() -> np.ndarray:
    return np.zeros((8, 5))


@njit(cache=True)
def run_loop(
    x0, sp_pos, sp_vel, noise, gains, states, weight, tilt, ginv, kf, km, d, omega_max,
    ptable, pidx, dist, dt, n_sub, decimation, frames,
):
    """Run ``len(sp_pos)`` control periods from ``x0``.

    Every ``decimation``-th period writes ``[x(16), cmd(6), phi_des, theta_des,
    omega(4)]`` into the next row of ``frames``.  ``noise`` is either empty or
    one additive 16-vector per period for the controller's view of the state.
    Returns ``(x_last, n_frames, status, k_stop, n_clipped, n_saturated)``; on
    divergence ``k_stop`` is the offending period and ``x_last`` the last good
    state.
    """
    n = sp_pos.shape[0]
    x = x0.copy()
    meas = np.empty(16)
    cmd = np.empty(6)
    omega = np.empty(4)
    applied = np.empty(6)
    n_frames = 0
    n_clip = 0
    n_sat = 0
    use_noise = noise.shape[0] > 0
    for k in range(n):
        for i in range(16):
            meas[i] = x[i] + noise[k, i] if use_noise else x[i]
        xn, phi_des, theta_des, status, clipped, saturated = closed_loop_step(
            x, meas, sp_pos[k], sp_vel[k], gains, states, weight, tilt, ginv, kf, km, d, omega_max,
            ptable[pidx[k]], dist[k], dt, n_sub, cmd, omega, applied,
        )
        if clipped:
            n_clip += 1
        if saturated:
            n_sat += 1
        if k % decimation == 0:
            row = frames[n_frames]
            for i in range(16):
                row[i] = x[i]
            for i in range(6):
                row[16 + i] = cmd[i]
            row[22] = phi_des
            row[23] = theta_des
            for i in range(4):
                row[24 + i] = omega[i]
            n_frames += 1
        if status != OK:
            return x, n_frames, status, k, n_clip, n_sat
        x = xn
    return x, n_frames, OK, n, n_clip, n_sat
