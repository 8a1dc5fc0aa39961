"""Compiled scalar kernels shared by the public API and the simulator.

Every configuration is packed into a single float64 vector ``p`` so that the
closed-loop right-hand side has the uniform signature ``rhs(t, y, p, dy)``
expected by :func:`rk4_step`. Index constants below name the slots. The
simulator passes ``p`` as a tuple: it is immutable, which lets the compiler
keep the constants in registers.

Closed-loop state layout: ``y = (xi1, xi2, xi3, theta_hat[3], theta_d_hat[3],
u_hold)``; the last entry has zero rate and carries the held input when the
control is sampled.
"""

import math

import numpy as np
from numba import njit

# numpy error model: float division by zero yields inf/nan instead of raising
jit = njit(cache=True, nogil=True, error_model="numpy")
# small helpers are inlined at the numba IR level
jit_inline = njit(cache=True, nogil=True, error_model="numpy", inline="always")

# plant slots
P_B = 0
P_VT = 1
P_S = 2
P_MT = 3
P_B0 = 4
P_K = 5
P_GAMMA = 6
P_ALPHA = 7
P_PD = 8
P_TH0 = 9
P_TH1 = 10
P_TH2 = 11
P_FTRUE = 12
P_DKIND = 13
P_DAMP = 14
P_DFREQ = 15
# reference slots
R_KIND = 16
R_AMP = 17
# controller slots
C_KIND = 18
C_LAM = 19
C_KO = 20
C_G6 = 21
C_G7 = 22
C_DMAX = 23
C_FMAX = 24
C_EPS = 25
C_LAW = 26
C_ACCEL = 27
C_BMAX = 28
C_B = 29
C_VT = 30
C_S = 31
C_MT = 32
C_B0 = 33
C_K = 34
C_ALPHA = 35
C_GAMMA = 36
C_PD = 37
# sliding-mode slots
M_K = 38
M_KEQ = 39
M_C1 = 40
M_C2 = 41
# sampled (held) control flag
H_FLAG = 42
# derived controller constants filled by pack_derived
D_A4 = 45
D_A5 = 46
D_A6 = 47
D_FB = 48
D_A1 = 49
D_A2 = 50
D_GX2 = 51
D_GX3 = 52
D_UGAIN = 53
D_INV_EPS = 54
D_BDMAX = 55
# derived plant constants filled by pack_plant_derived
Q_INV_MT = 56
Q_4BV = 57
N_SLOTS = 58

REF_STEP = 0
REF_SINE = 1
REF_SUM_OF_SINES = 2

CTRL_NONE = 0
CTRL_BACKSTEPPING = 1
CTRL_SMC = 2

LAW_SMOOTH = 0
LAW_PRINTED = 1

ACCEL_MEASURED = 0
ACCEL_MODEL = 1

SAT_FRACTION = 0.999
DIVERGENCE_LIMIT = 1e12

# log columns produced by the kernel
L_T = 0
L_XI = 1
L_R = 4
L_E = 5
L_U = 8
L_V = 9
L_TH = 10
L_THD = 13
L_SAT = 16
N_LOG = 17
N_STATE = 10


@jit_inline
def sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@jit_inline
def clamp_pressure(x3, pd):
    lim = SAT_FRACTION * pd
    if x3 > lim:
        return lim
    if x3 < -lim:
        return -lim
    return x3


@jit_inline
def disturbance(t, p):
    if p[P_DKIND] == 0.0:
        return p[P_DAMP]
    return p[P_DAMP] * math.sin(p[P_DFREQ] * t)


@jit_inline
def friction_perturbation(x2, p):
    return p[P_FTRUE] * math.sin(x2)


@jit_inline
def plant_accel(x1, x2, x3, p):
    """Velocity rate of the true plant (independent of the input)."""
    beta = p[P_TH0] * x1 * x1 + p[P_TH1] * x2 * x2 + p[P_TH2] * x3 * x3
    b = p[P_B0] + friction_perturbation(x2, p)
    return (p[P_S] * x3 - b * x2 - beta * x1) * p[Q_INV_MT]


@jit_inline
def pressure_rate(x2, x3, u, p):
    x3c = clamp_pressure(x3, p[P_PD])
    flow = p[P_K] * u * math.sqrt(p[P_PD] - sign(u) * x3c)
    leak = p[P_ALPHA] * x3 / (1.0 + p[P_GAMMA] * abs(u))
    return p[Q_4BV] * (flow - leak - p[P_S] * x2)


@jit_inline
def reference(t, kind, amp):
    if kind == REF_STEP:
        return amp, 0.0, 0.0, 0.0
    if kind == REF_SINE:
        s = math.sin(t)
        c = math.cos(t)
        return amp * s, amp * c, -amp * s, -amp * c
    r = 0.0
    r1 = 0.0
    r2 = 0.0
    r3 = 0.0
    for n in range(1, 4):
        w = float(n)
        s = math.sin(w * t)
        c = math.cos(w * t)
        r += amp * s
        r1 += amp * w * c
        r2 -= amp * w * w * s
        r3 -= amp * w * w * w * c
    return r, r1, r2, r3


@jit
def gains(lam):
    return 1.5 + lam, 1.0 + 1.0 / lam**3 + 1.0 / (2.0 * lam), 1.0 / lam**4


@jit
def pack_derived(p):
    a4, a5, a6 = gains(p[C_LAM])
    p[D_A4] = a4
    p[D_A5] = a5
    p[D_A6] = a6
    # the smooth law bounds the velocity-rate perturbation F/m_t**2
    mt = p[C_MT]
    b0 = p[C_B0]
    if p[C_LAW] == LAW_SMOOTH:
        p[D_FB] = p[C_FMAX] / (mt * mt)
        p[D_GX3] = a6 * b0 * p[C_S] / (mt * mt)
    else:
        p[D_FB] = p[C_FMAX]
        p[D_GX3] = b0 * p[C_S] / (mt * mt)
    p[D_A1] = a6 * b0 / (mt * mt)
    p[D_A2] = a6 / mt
    p[D_GX2] = a6 * (b0 * b0 / (mt * mt) - 4.0 * p[C_B] * p[C_S] ** 2 / (mt * p[C_VT]))
    p[D_UGAIN] = mt * p[C_VT] / (4.0 * a6 * p[C_S] * p[C_B] * p[C_K])
    p[D_INV_EPS] = 1.0 / p[C_EPS]
    p[D_BDMAX] = p[C_BMAX] / mt


@jit
def pack_plant_derived(p):
    p[Q_INV_MT] = 1.0 / p[P_MT]
    p[Q_4BV] = 4.0 * p[P_B] / p[P_VT]


@jit_inline
def clip(x, lim):
    if x > lim:
        return lim
    if x < -lim:
        return -lim
    return x


@jit_inline
def estimates(x1, x2, x3, y, k0, p):
    """Clamped (smooth law) stiffness estimates from y[k0:k0+6]."""
    f1 = x1 * x1
    f2 = x2 * x2
    f3 = x3 * x3
    bh = y[k0] * f1 + y[k0 + 1] * f2 + y[k0 + 2] * f3
    bd = y[k0 + 3] * f1 + y[k0 + 4] * f2 + y[k0 + 5] * f3
    if p[C_LAW] == LAW_SMOOTH:
        bh = clip(bh, p[C_BMAX])
        bd = clip(bd, p[D_BDMAX])
    return bh, bd


@jit_inline
def model_accel(x1, x2, x3, bh, p):
    return (p[C_S] * x3 - p[C_B0] * x2 - bh * x1) / p[C_MT]


@jit_inline
def stabilizing(e1, e2, e3, x2, x3, p):
    a4 = p[D_A4]
    a5 = p[D_A5]
    h = a4 * e1 + a5 * e2 + p[D_A6] * e3
    g = e2 + p[C_LAM] * e1 + a4 * e2 + a5 * e3 + p[D_GX2] * x2 - p[D_GX3] * x3
    return h, g


@jit_inline
def phi_term(x1, x2, bh, p):
    return (abs(p[D_A1] * bh * x1) + abs(p[D_A2] * bh * x2)
            + p[D_A6] * p[D_FB] * abs(x1) * abs(bh))


@jit_inline
def robust_magnitude(x1, x2, x3, bh, bd, p):
    a4 = p[D_A4]
    a6 = p[D_A6]
    fb = p[D_FB]
    return (abs(a4 - a6 * bd) * p[C_DMAX] + phi_term(x1, x2, bh, p)
            + a6 * abs(x3) * fb + a6 * abs(x2) * fb * fb * fb)


@jit_inline
def input_gain(x3, p):
    x3c = clamp_pressure(x3, p[C_PD])
    # min of the two roots is the root of P_d - |xi3|
    return p[D_UGAIN] / math.sqrt(p[C_PD] - abs(x3c))


@jit_inline
def _tanh(x):
    # cheaper than libm tanh; expm1 keeps full relative precision near 0
    q = math.expm1(-2.0 * abs(x))
    return math.copysign(-q / (2.0 + q), x)


@jit_inline
def backstepping(e1, e2, e3, x1, x2, x3, y, k0, p):
    """Returns (u, v, h); estimates are read from y[k0:k0+6]."""
    bh, bd = estimates(x1, x2, x3, y, k0, p)
    h, g = stabilizing(e1, e2, e3, x2, x3, p)
    rob = robust_magnitude(x1, x2, x3, bh, bd, p)
    if p[C_LAW] == LAW_SMOOTH:
        v = -g - _tanh(h * p[D_INV_EPS]) * rob - p[C_KO] * h
    else:
        v = -(abs(g) + rob) - p[C_KO] * h
    return input_gain(x3, p) * v, v, h


@jit_inline
def adaptation(h, x1, x2, x3, p, out, k0):
    """Writes (d theta_hat/dt, d theta_d_hat/dt) into out[k0:k0+6]."""
    a6 = p[D_A6]
    s1 = p[C_G6] * (p[D_A1] * h * x1 - p[D_A2] * h * x2 + a6 * p[D_FB] * abs(x1))
    s2 = -p[C_G7] * a6 * p[C_DMAX]
    f1 = x1 * x1
    f2 = x2 * x2
    f3 = x3 * x3
    out[k0] = s1 * f1
    out[k0 + 1] = s1 * f2
    out[k0 + 2] = s1 * f3
    out[k0 + 3] = s2 * f1
    out[k0 + 4] = s2 * f2
    out[k0 + 5] = s2 * f3


@jit_inline
def smc(e1, e2, e3, p):
    """Returns (u, s)."""
    s = e3 + p[M_C2] * e2 + p[M_C1] * e1
    return -p[M_K] * sign(s) - p[M_KEQ] * s, s


@jit_inline
def closed_loop(t, y, p, dy, hold):
    """Closed-loop rates into dy; returns (u, v, r, e1, e2, e3).

    With ``hold`` the plant is driven by ``y[9]`` instead of the law.
    """
    x1 = y[0]
    x2 = y[1]
    x3 = y[2]
    r, r1, r2, r3 = reference(t, int(p[R_KIND]), p[R_AMP])
    acc = plant_accel(x1, x2, x3, p)
    e1 = x1 - r
    e2 = x2 - r1
    kind = int(p[C_KIND])
    if kind == CTRL_BACKSTEPPING and p[C_ACCEL] == ACCEL_MODEL:
        bh = estimates(x1, x2, x3, y, 3, p)[0]
        e3 = model_accel(x1, x2, x3, bh, p) - r2
    else:
        e3 = acc - r2
    for i in range(3, 9):
        dy[i] = 0.0
    if kind == CTRL_BACKSTEPPING:
        u, v, h = backstepping(e1, e2, e3, x1, x2, x3, y, 3, p)
        adaptation(h, x1, x2, x3, p, dy, 3)
    elif kind == CTRL_SMC:
        u, v = smc(e1, e2, e3, p)
    else:
        u = 0.0
        v = 0.0
    if hold:
        u = y[9]
    dy[9] = 0.0
    dy[0] = x2 + disturbance(t, p)
    dy[1] = acc
    dy[2] = pressure_rate(x2, x3, u, p)
    return u, v, r, e1, e2, e3


@jit
def closed_loop_rhs(t, y, p, dy):
    closed_loop(t, y, p, dy, p[H_FLAG] != 0.0)


@jit
def linear_decay_rhs(t, y, p, dy):
    for i in range(y.size):
        dy[i] = -p[0] * y[i]


@jit
def rk4_step(rhs, t, y, dt, p, work):
    """Classical fixed-step RK4, in place; work has shape (5, n)."""
    n = y.size
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    rhs(t, y, p, k1)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    rhs(t + 0.5 * dt, tmp, p, k2)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    rhs(t + 0.5 * dt, tmp, p, k3)
    for i in range(n):
        tmp[i] = y[i] + dt * k3[i]
    rhs(t + dt, tmp, p, k4)
    for i in range(n):
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@jit_inline
def rk4_closed_loop(t, y, dt, p, work, hold):
    """:func:`rk4_step` specialized to the closed loop so the rates inline."""
    n = y.size
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    closed_loop(t, y, p, k1, hold)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    closed_loop(t + 0.5 * dt, tmp, p, k2, hold)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    closed_loop(t + 0.5 * dt, tmp, p, k3, hold)
    for i in range(n):
        tmp[i] = y[i] + dt * k3[i]
    closed_loop(t + dt, tmp, p, k4, hold)
    for i in range(n):
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@jit
def integrate(rhs, y0, p, t0, dt, n):
    y = y0.copy()
    work = np.empty((5, y.size))
    for m in range(n):
        rk4_step(rhs, t0 + m * dt, y, dt, p, work)
    return y


@jit
def _log_row(row, t, y, p, log, dy, sat):
    u, v, r, e1, e2, e3 = closed_loop(t, y, p, dy, False)
    log[row, L_T] = t
    for i in range(3):
        log[row, L_XI + i] = y[i]
        log[row, L_TH + i] = y[3 + i]
        log[row, L_THD + i] = y[6 + i]
    log[row, L_R] = r
    log[row, L_E] = e1
    log[row, L_E + 1] = e2
    log[row, L_E + 2] = e3
    log[row, L_U] = u
    log[row, L_V] = v
    log[row, L_SAT] = sat


@jit
def _bad(y):
    for i in range(9):
        if not math.isfinite(y[i]) or abs(y[i]) > DIVERGENCE_LIMIT:
            return True
    return False


@jit
def simulate(y0, p, n_samples, substeps, sample_dt, log):
    """Integrates and logs; returns (rows written, diverged flag)."""
    y = y0.copy()
    work = np.empty((5, y.size))
    dy = np.empty(y.size)
    dt = sample_dt / substeps
    hold = p[H_FLAG] != 0.0
    lim = SAT_FRACTION * p[P_PD]
    _log_row(0, 0.0, y, p, log, dy, 1.0 if abs(y[2]) > lim else 0.0)
    if _bad(y):
        return 1, True
    for k in range(n_samples):
        t0 = k * sample_dt
        if hold:
            y[9] = closed_loop(t0, y, p, dy, False)[0]
        sat = 0.0
        for m in range(substeps):
            rk4_closed_loop(t0 + m * dt, y, dt, p, work, hold)
            if abs(y[2]) > lim:
                sat = 1.0
        # a blow-up inside the sample propagates as inf/nan to its end
        if _bad(y):
            return k + 1, True
        _log_row(k + 1, (k + 1) * sample_dt, y, p, log, dy, sat)
    return n_samples + 1, False
