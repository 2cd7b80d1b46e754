"""Compiled numeric kernels: equinoctial dynamics, costate rates, RK7(8).

All kernels assume canonical heliocentric units (mu = 1) and operate on
the packed 14-vector ``y = [p, f, g, h, k, L, m, lp, lf, lg, lh, lk, lL, lm]``
(six modified equinoctial elements, mass, six costates, mass costate).

Everything here is ``@njit(cache=True, nogil=True)`` so propagations can
run concurrently from worker threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Packed-state indices.
IP, IF, IG, IH, IK, IL, IM = 0, 1, 2, 3, 4, 5, 6
ILP, ILM = 7, 13

# Propagation status codes.
STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_MIN_STEP = 2
STATUS_DOMAIN = 3
STATUS_BUFFER_FULL = 4

_DIRECTION_TOL = 1e-14  # |B^T lam| below this counts as singular


@njit(cache=True, nogil=True)
def auxiliaries(x):
    """Return (w, s2) for an equinoctial element vector."""
    w = 1.0 + x[1] * math.cos(x[5]) + x[2] * math.sin(x[5])
    s2 = 1.0 + x[3] * x[3] + x[4] * x[4]
    return w, s2


@njit(cache=True, nogil=True)
def b_matrix(x):
    """Thrust-direction influence matrix B(x), shape (6, 3).

    Columns act on the radial / tangential / normal thrust components.
    """
    p, f, g, h, k, L = x[0], x[1], x[2], x[3], x[4], x[5]
    cL = math.cos(L)
    sL = math.sin(L)
    w = 1.0 + f * cL + g * sL
    s2 = 1.0 + h * h + k * k
    hk = h * sL - k * cL
    root = math.sqrt(p)

    B = np.zeros((6, 3))
    B[0, 1] = root * 2.0 * p / w
    B[1, 0] = root * sL
    B[1, 1] = root * ((1.0 + w) * cL + f) / w
    B[1, 2] = -root * g * hk / w
    B[2, 0] = -root * cL
    B[2, 1] = root * ((1.0 + w) * sL + g) / w
    B[2, 2] = root * f * hk / w
    B[3, 2] = root * s2 * cL / (2.0 * w)
    B[4, 2] = root * s2 * sL / (2.0 * w)
    B[5, 2] = root * hk / w
    return B


@njit(cache=True, nogil=True)
def d_vector(x):
    """Drift vector D(x): pure Kepler motion of the true longitude."""
    p = x[0]
    w, _ = auxiliaries(x)
    D = np.zeros(6)
    D[5] = math.sqrt(p) * (w / p) ** 2
    return D


@njit(cache=True, nogil=True)
def b_partials(x):
    """All six element-wise partials of B, stacked as (6, 6, 3).

    Order of the leading axis: d/dp, d/df, d/dg, d/dh, d/dk, d/dL.
    """
    p, f, g, h, k, L = x[0], x[1], x[2], x[3], x[4], x[5]
    cL = math.cos(L)
    sL = math.sin(L)
    w = 1.0 + f * cL + g * sL
    wL = g * cL - f * sL
    s2 = 1.0 + h * h + k * k
    hk = h * sL - k * cL
    root = math.sqrt(p)

    out = np.zeros((6, 6, 3))

    # d/dp: B scaled by 1/(2p) except the (0,1) entry, which also carries
    # the explicit p of 2p/w.
    c = 1.0 / (2.0 * root)
    out[0, 0, 1] = c * 6.0 * p / w
    out[0, 1, 0] = c * sL
    out[0, 1, 1] = c * ((1.0 + w) * cL + f) / w
    out[0, 1, 2] = -c * g * hk / w
    out[0, 2, 0] = -c * cL
    out[0, 2, 1] = c * ((1.0 + w) * sL + g) / w
    out[0, 2, 2] = c * f * hk / w
    out[0, 3, 2] = c * s2 * cL / (2.0 * w)
    out[0, 4, 2] = c * s2 * sL / (2.0 * w)
    out[0, 5, 2] = c * hk / w

    # d/df
    c = root / (w * w)
    out[1, 0, 1] = -c * 2.0 * p * cL
    out[1, 1, 1] = c * (w - (cL + f) * cL)
    out[1, 1, 2] = c * g * cL * hk
    out[1, 2, 1] = -c * (sL + g) * cL
    out[1, 2, 2] = c * (w - f * cL) * hk
    out[1, 3, 2] = -c * 0.5 * s2 * cL * cL
    out[1, 4, 2] = -c * 0.5 * s2 * sL * cL
    out[1, 5, 2] = -c * hk * cL

    # d/dg
    out[2, 0, 1] = -c * 2.0 * p * sL
    out[2, 1, 1] = -c * (cL + f) * sL
    out[2, 1, 2] = -c * (w - g * sL) * hk
    out[2, 2, 1] = c * (w - (sL + g) * sL)
    out[2, 2, 2] = -c * f * sL * hk
    out[2, 3, 2] = -c * 0.5 * s2 * cL * sL
    out[2, 4, 2] = -c * 0.5 * s2 * sL * sL
    out[2, 5, 2] = -c * hk * sL

    # d/dh: only the normal column reacts (s2 and hk carry h).
    c = root / w
    out[3, 1, 2] = -c * g * sL
    out[3, 2, 2] = c * f * sL
    out[3, 3, 2] = c * h * cL
    out[3, 4, 2] = c * h * sL
    out[3, 5, 2] = c * sL

    # d/dk
    out[4, 1, 2] = c * g * cL
    out[4, 2, 2] = -c * f * cL
    out[4, 3, 2] = c * k * cL
    out[4, 4, 2] = c * k * sL
    out[4, 5, 2] = -c * cL

    # d/dL. Q is the longitude rate of w*hk-type terms.
    c = root / (w * w)
    Q = (w * h + wL * k) * cL + (w * k - wL * h) * sL
    out[5, 0, 1] = -c * 2.0 * p * wL
    out[5, 1, 0] = c * w * w * cL
    out[5, 1, 1] = c * (-(1.0 + w) * w * sL - wL * (cL + f))
    out[5, 1, 2] = -c * g * Q
    out[5, 2, 0] = c * w * w * sL
    out[5, 2, 1] = c * ((1.0 + w) * w * cL - wL * (sL + g))
    out[5, 2, 2] = c * f * Q
    out[5, 3, 2] = -c * 0.5 * s2 * (w * sL + wL * cL)
    out[5, 4, 2] = c * 0.5 * s2 * (w * cL - wL * sL)
    out[5, 5, 2] = c * Q
    return out


@njit(cache=True, nogil=True)
def throttle_from_sf(sf, eps):
    """Smoothed optimal throttle for a given switching-function value.

    For ``eps = 0`` this is the bang-bang limit (0.5 exactly at sf = 0).
    The ``sf < 0`` branch is rearranged to avoid cancellation when
    ``|sf| >> eps``.
    """
    if eps == 0.0:
        if sf < 0.0:
            return 1.0
        if sf > 0.0:
            return 0.0
        return 0.5
    root = math.sqrt(4.0 * eps * eps + sf * sf)
    if sf >= 0.0:
        return 2.0 * eps / (2.0 * eps + sf + root)
    return 1.0 / (1.0 + 2.0 * eps / (root - sf))


@njit(cache=True, nogil=True)
def control_from_costates(y, c1, c2, eps):
    """Closed-form optimal control at an augmented state.

    Returns (u, ir, it, in_, sf, btl_norm). When |B^T lam| is numerically
    zero the direction defaults to tangential and the switching function
    drops the gradient term.
    """
    B = b_matrix(y[:6])
    bt0 = B[0, 0] * y[7] + B[1, 0] * y[8] + B[2, 0] * y[9] \
        + B[3, 0] * y[10] + B[4, 0] * y[11] + B[5, 0] * y[12]
    bt1 = B[0, 1] * y[7] + B[1, 1] * y[8] + B[2, 1] * y[9] \
        + B[3, 1] * y[10] + B[4, 1] * y[11] + B[5, 1] * y[12]
    bt2 = B[0, 2] * y[7] + B[1, 2] * y[8] + B[2, 2] * y[9] \
        + B[3, 2] * y[10] + B[4, 2] * y[11] + B[5, 2] * y[12]
    btl = math.sqrt(bt0 * bt0 + bt1 * bt1 + bt2 * bt2)
    if btl < _DIRECTION_TOL:
        ir, it, in_ = 0.0, 1.0, 0.0
        sf = 1.0 - c2 * y[13]
    else:
        inv = 1.0 / btl
        ir, it, in_ = -bt0 * inv, -bt1 * inv, -bt2 * inv
        sf = 1.0 - (c1 / y[6]) * btl - c2 * y[13]
    u = throttle_from_sf(sf, eps)
    return u, ir, it, in_, sf, btl


@njit(cache=True, nogil=True)
def hamiltonian(y, u, ir, it, in_, c1, c2, eps):
    """Control Hamiltonian at an augmented state and explicit control."""
    p = y[0]
    w, _ = auxiliaries(y[:6])
    B = b_matrix(y[:6])
    lbt = (
        y[7] * (B[0, 0] * ir + B[0, 1] * it + B[0, 2] * in_)
        + y[8] * (B[1, 0] * ir + B[1, 1] * it + B[1, 2] * in_)
        + y[9] * (B[2, 0] * ir + B[2, 1] * it + B[2, 2] * in_)
        + y[10] * (B[3, 0] * ir + B[3, 1] * it + B[3, 2] * in_)
        + y[11] * (B[4, 0] * ir + B[4, 1] * it + B[4, 2] * in_)
        + y[12] * (B[5, 0] * ir + B[5, 1] * it + B[5, 2] * in_)
    )
    value = (c1 * u / y[6]) * lbt + y[12] * w * w / math.sqrt(p**3) \
        - c2 * y[13] * u + u
    if eps > 0.0:
        uc = min(max(u, 1e-16), 1.0 - 1e-16)
        value -= eps * math.log(uc * (1.0 - uc))
    return value


@njit(cache=True, nogil=True)
def state_rates(x, m, u, ir, it, in_, c1, c2):
    """Element and mass rates at an explicit control, shape (7,)."""
    B = b_matrix(x)
    acc = c1 * u / m
    out = np.empty(7)
    for i in range(6):
        out[i] = acc * (B[i, 0] * ir + B[i, 1] * it + B[i, 2] * in_)
    out[5] += math.sqrt(x[0]) * (auxiliaries(x)[0] / x[0]) ** 2
    out[6] = -c2 * u
    return out


@njit(cache=True, nogil=True)
def costate_rates(y, u, ir, it, in_, c1, c2):
    """Costate rates -dH/d(x, m) at an explicit control, shape (7,).

    The mass-costate rate uses lam^T B i_tau, which reduces to
    -|B^T lam| at the optimal direction.
    """
    p = y[0]
    lam_L = y[12]
    w, _ = auxiliaries(y[:6])
    wL = y[2] * math.cos(y[5]) - y[1] * math.sin(y[5])
    dB = b_partials(y[:6])
    acc = c1 * u / y[6]

    out = np.empty(7)
    for d in range(6):
        s = 0.0
        for i in range(6):
            s += y[7 + i] * (
                dB[d, i, 0] * ir + dB[d, i, 1] * it + dB[d, i, 2] * in_
            )
        out[d] = -acc * s
    sq_p3 = math.sqrt(p**3)
    out[0] += 1.5 * lam_L * w * w / (sq_p3 * p)
    out[1] += -2.0 * lam_L * w * math.cos(y[5]) / sq_p3
    out[2] += -2.0 * lam_L * w * math.sin(y[5]) / sq_p3
    out[5] += -2.0 * lam_L * w * wL / sq_p3

    B = b_matrix(y[:6])
    lbt = 0.0
    for i in range(6):
        lbt += y[7 + i] * (B[i, 0] * ir + B[i, 1] * it + B[i, 2] * in_)
    out[6] = (c1 * u / (y[6] * y[6])) * lbt
    return out


@njit(cache=True, nogil=True)
def augmented_rhs(y, c1, c2, eps):
    """Full 14-dimensional state/costate rates at the optimal control.

    Returns NaNs when the state leaves the validity domain (p <= 0,
    w <= 0 or m <= 0), which the step controller treats as a rejection.
    """
    out = np.empty(14)
    p, m = y[0], y[6]
    w, _ = auxiliaries(y[:6])
    if p <= 0.0 or w <= 0.0 or m <= 0.0:
        for i in range(14):
            out[i] = np.nan
        return out
    u, ir, it, in_, _, _ = control_from_costates(y, c1, c2, eps)
    sm = state_rates(y[:6], m, u, ir, it, in_, c1, c2)
    cm = costate_rates(y, u, ir, it, in_, c1, c2)
    for i in range(7):
        out[i] = sm[i]
        out[7 + i] = cm[i]
    return out


# --------------------------------------------------------------------------
# Fehlberg 7(8) embedded pair: 13 stages, 8th-order solution with a
# 7th-order error estimate err = h * 41/840 * (k1 + k11 - k12 - k13).

_RK_C = np.array([
    0.0, 2.0 / 27.0, 1.0 / 9.0, 1.0 / 6.0, 5.0 / 12.0, 0.5, 5.0 / 6.0,
    1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0, 1.0, 0.0, 1.0,
])

_RK_A = np.zeros((13, 13))
_RK_A[1, 0] = 2.0 / 27.0
_RK_A[2, 0] = 1.0 / 36.0
_RK_A[2, 1] = 1.0 / 12.0
_RK_A[3, 0] = 1.0 / 24.0
_RK_A[3, 2] = 1.0 / 8.0
_RK_A[4, 0] = 5.0 / 12.0
_RK_A[4, 2] = -25.0 / 16.0
_RK_A[4, 3] = 25.0 / 16.0
_RK_A[5, 0] = 1.0 / 20.0
_RK_A[5, 3] = 1.0 / 4.0
_RK_A[5, 4] = 1.0 / 5.0
_RK_A[6, 0] = -25.0 / 108.0
_RK_A[6, 3] = 125.0 / 108.0
_RK_A[6, 4] = -65.0 / 27.0
_RK_A[6, 5] = 125.0 / 54.0
_RK_A[7, 0] = 31.0 / 300.0
_RK_A[7, 4] = 61.0 / 225.0
_RK_A[7, 5] = -2.0 / 9.0
_RK_A[7, 6] = 13.0 / 900.0
_RK_A[8, 0] = 2.0
_RK_A[8, 3] = -53.0 / 6.0
_RK_A[8, 4] = 704.0 / 45.0
_RK_A[8, 5] = -107.0 / 9.0
_RK_A[8, 6] = 67.0 / 90.0
_RK_A[8, 7] = 3.0
_RK_A[9, 0] = -91.0 / 108.0
_RK_A[9, 3] = 23.0 / 108.0
_RK_A[9, 4] = -976.0 / 135.0
_RK_A[9, 5] = 311.0 / 54.0
_RK_A[9, 6] = -19.0 / 60.0
_RK_A[9, 7] = 17.0 / 6.0
_RK_A[9, 8] = -1.0 / 12.0
_RK_A[10, 0] = 2383.0 / 4100.0
_RK_A[10, 3] = -341.0 / 164.0
_RK_A[10, 4] = 4496.0 / 1025.0
_RK_A[10, 5] = -301.0 / 82.0
_RK_A[10, 6] = 2133.0 / 4100.0
_RK_A[10, 7] = 45.0 / 82.0
_RK_A[10, 8] = 45.0 / 164.0
_RK_A[10, 9] = 18.0 / 41.0
_RK_A[11, 0] = 3.0 / 205.0
_RK_A[11, 5] = -6.0 / 41.0
_RK_A[11, 6] = -3.0 / 205.0
_RK_A[11, 7] = -3.0 / 41.0
_RK_A[11, 8] = 3.0 / 41.0
_RK_A[11, 9] = 6.0 / 41.0
_RK_A[12, 0] = -1777.0 / 4100.0
_RK_A[12, 3] = -341.0 / 164.0
_RK_A[12, 4] = 4496.0 / 1025.0
_RK_A[12, 5] = -289.0 / 82.0
_RK_A[12, 6] = 2193.0 / 4100.0
_RK_A[12, 7] = 51.0 / 82.0
_RK_A[12, 8] = 33.0 / 164.0
_RK_A[12, 9] = 12.0 / 41.0
_RK_A[12, 11] = 1.0

_RK_B8 = np.array([
    0.0, 0.0, 0.0, 0.0, 0.0, 34.0 / 105.0, 9.0 / 35.0, 9.0 / 35.0,
    9.0 / 280.0, 9.0 / 280.0, 0.0, 41.0 / 840.0, 41.0 / 840.0,
])

_ERR_C = 41.0 / 840.0
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_ORDER_EXP = 1.0 / 8.0


@njit(cache=True, nogil=True)
def _rk_stages(y, t, h, c1, c2, eps, K):
    """Fill the 13 stage derivatives for one trial step."""
    n = y.shape[0]
    yi = np.empty(n)
    K[0] = augmented_rhs(y, c1, c2, eps)
    for i in range(1, 13):
        for j in range(n):
            acc = 0.0
            for l in range(i):
                a = _RK_A[i, l]
                if a != 0.0:
                    acc += a * K[l, j]
            yi[j] = y[j] + h * acc
        K[i] = augmented_rhs(yi, c1, c2, eps)


@njit(cache=True, nogil=True)
def _step_candidate(y, h, K):
    """Combine stages into (y_new, scaled error numerator)."""
    n = y.shape[0]
    y_new = np.empty(n)
    err = np.empty(n)
    for j in range(n):
        acc = 0.0
        for i in range(13):
            b = _RK_B8[i]
            if b != 0.0:
                acc += b * K[i, j]
        y_new[j] = y[j] + h * acc
        err[j] = h * _ERR_C * (K[0, j] + K[10, j] - K[11, j] - K[12, j])
    return y_new, err


@njit(cache=True, nogil=True)
def _error_norm(y, y_new, err, rtol, atol):
    n = y.shape[0]
    s = 0.0
    for j in range(n):
        sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
        e = err[j] / sc
        s += e * e
    return math.sqrt(s / n)


@njit(cache=True, nogil=True)
def _domain_ok(y):
    w, _ = auxiliaries(y[:6])
    return y[0] > 0.0 and y[6] > 0.0 and w > 0.0


@njit(cache=True, nogil=True)
def _initial_step(span, max_step):
    h = span / 100.0
    if h > max_step:
        h = max_step
    if h < 1e-10:
        h = 1e-10
    return h


@njit(cache=True, nogil=True)
def _throttle_swing(y_a, y_b, c1, c2, eps):
    """Throttle difference between two augmented states."""
    ua, _, _, _, _, _ = control_from_costates(y_a, c1, c2, eps)
    ub, _, _, _, _, _ = control_from_costates(y_b, c1, c2, eps)
    return abs(ub - ua)


@njit(cache=True, nogil=True)
def _double_step(y, t, hs, c1, c2, eps, K):
    """Two half steps of the 8th-order formula (for step doubling)."""
    _rk_stages(y, t, 0.5 * hs, c1, c2, eps, K)
    y_half, _ = _step_candidate(y, 0.5 * hs, K)
    for j in range(y.shape[0]):
        if not math.isfinite(y_half[j]):
            return y_half
    _rk_stages(y_half, t + 0.5 * hs, 0.5 * hs, c1, c2, eps, K)
    y_full, _ = _step_candidate(y_half, 0.5 * hs, K)
    return y_full


@njit(cache=True, nogil=True)
def propagate_core(y0, t0, t1, c1, c2, eps, rtol, atol, max_step,
                   max_steps, h0, du_max=0.15):
    """Adaptive propagation of the augmented system from t0 to t1.

    Backward integration is requested with t1 < t0. Besides the embedded
    error estimate, steps whose endpoint throttle change exceeds
    ``du_max`` are rejected: the smoothed throttle switches within
    layers of width O(eps) that can hide between stages, where the
    estimate alone underpredicts the true error. Returns
    (y, t_reached, status, n_accepted, n_rejected).
    """
    n = y0.shape[0]
    y = y0.copy()
    t = t0
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        return y, t, STATUS_OK, 0, 0

    h = h0 if h0 > 0.0 else _initial_step(span, max_step)
    if h > max_step:
        h = max_step
    K = np.empty((13, n))
    n_acc = 0
    n_rej = 0
    last_rejected = False
    guard = eps > 0.0 and du_max < 1.0

    for _ in range(max_steps):
        if direction * (t1 - t) <= 0.0:
            return y, t, STATUS_OK, n_acc, n_rej
        # Clip the final step exactly onto t1.
        if h > abs(t1 - t):
            h = abs(t1 - t)
        h_min = 16.0 * 2.22e-16 * max(abs(t), abs(t1))
        hs = direction * h

        _rk_stages(y, t, hs, c1, c2, eps, K)
        finite = True
        for i in range(13):
            for j in range(n):
                if not math.isfinite(K[i, j]):
                    finite = False
                    break
            if not finite:
                break

        if finite:
            y_new, err = _step_candidate(y, hs, K)
            ok = True
            for j in range(n):
                if not math.isfinite(y_new[j]):
                    ok = False
                    break
            errn = _error_norm(y, y_new, err, rtol, atol) if ok else np.inf
        else:
            errn = np.inf

        if errn <= 1.0:
            if not _domain_ok(y_new):
                # Likely an overshoot across the validity boundary; retry
                # smaller, fail only at the step floor.
                if h <= h_min * 2.0:
                    return y, t, STATUS_DOMAIN, n_acc, n_rej
                h *= 0.5
                n_rej += 1
                last_rejected = True
                continue
            if guard and h > h_min * 4.0:
                du = _throttle_swing(y, y_new, c1, c2, eps)
                if du > du_max:
                    h *= max(0.1, 0.5 * du_max / du)
                    n_rej += 1
                    last_rejected = True
                    continue
            if guard:
                # The smoothed throttle has steep layers and long 1/SF
                # tails whose high derivatives fool the embedded
                # estimate; verify every step by doubling and keep the
                # more accurate two-half-step result.
                y_dbl = _double_step(y, t, hs, c1, c2, eps, K)
                dbl_ok = True
                errn2 = 0.0
                for j in range(n):
                    if not math.isfinite(y_dbl[j]):
                        dbl_ok = False
                        break
                if dbl_ok:
                    sacc = 0.0
                    for j in range(n):
                        sc = atol + rtol * max(abs(y[j]), abs(y_dbl[j]))
                        e = (y_new[j] - y_dbl[j]) / sc
                        sacc += e * e
                    errn2 = math.sqrt(sacc / n)
                if not dbl_ok:
                    if h <= h_min * 2.0:
                        return y, t, STATUS_MIN_STEP, n_acc, n_rej
                    h *= 0.5
                    n_rej += 1
                    last_rejected = True
                    continue
                if errn2 > 1.0:
                    if h <= h_min:
                        return y, t, STATUS_MIN_STEP, n_acc, n_rej
                    fac = _SAFETY * errn2 ** (-_ORDER_EXP)
                    if fac < 0.1:
                        fac = 0.1
                    elif fac > 0.9:
                        fac = 0.9
                    h = max(h * fac, h_min)
                    n_rej += 1
                    last_rejected = True
                    continue
                y_new = y_dbl
                if errn2 > errn:
                    errn = errn2
            t = t + hs
            y = y_new
            n_acc += 1
            if errn == 0.0:
                fac = _MAX_FACTOR
            else:
                fac = _SAFETY * errn ** (-_ORDER_EXP)
                if fac > _MAX_FACTOR:
                    fac = _MAX_FACTOR
                elif fac < _MIN_FACTOR:
                    fac = _MIN_FACTOR
            if last_rejected and fac > 1.0:
                fac = 1.0
            h = min(h * fac, max_step)
            last_rejected = False
        else:
            if h <= h_min:
                return y, t, STATUS_MIN_STEP, n_acc, n_rej
            if math.isinf(errn):
                fac = 0.1
            else:
                fac = _SAFETY * errn ** (-_ORDER_EXP)
                if fac < 0.1:
                    fac = 0.1
                elif fac > 0.9:
                    fac = 0.9
            h = max(h * fac, h_min)
            n_rej += 1
            last_rejected = True

    return y, t, STATUS_MAX_STEPS, n_acc, n_rej


@njit(cache=True, nogil=True)
def propagate_to_times(y0, times, c1, c2, eps, rtol, atol, max_step,
                       max_steps, out, du_max=0.15):
    """Propagate hitting each entry of ``times`` exactly (step clipping).

    ``times`` must be strictly monotone; ``times[0]`` is the initial
    time of ``y0``. ``out`` has shape (len(times), 14). Returns
    (status, n_accepted).
    """
    n = y0.shape[0]
    nt = times.shape[0]
    y = y0.copy()
    for j in range(n):
        out[0, j] = y[j]
    n_acc_total = 0
    for idx in range(1, nt):
        t0 = times[idx - 1]
        t1 = times[idx]
        y, t_reach, status, n_acc, _ = propagate_core(
            y, t0, t1, c1, c2, eps, rtol, atol, max_step,
            max_steps, 0.0, du_max)
        n_acc_total += n_acc
        if status != STATUS_OK:
            return status, n_acc_total
        for j in range(n):
            out[idx, j] = y[j]
    return STATUS_OK, n_acc_total


@njit(cache=True, nogil=True)
def propagate_record(y0, t0, t1, c1, c2, eps, rtol, atol, max_step,
                     max_steps, tbuf, ybuf, du_max=0.15):
    """Propagate recording every accepted step into the buffers.

    Returns (status, count). ``tbuf`` has length cap, ``ybuf`` shape
    (cap, 14); ``count`` rows are valid on return (including the initial
    point; the final row is exactly t1 on success).
    """
    n = y0.shape[0]
    cap = tbuf.shape[0]
    y = y0.copy()
    t = t0
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    count = 0
    if cap < 2:
        return STATUS_BUFFER_FULL, 0
    tbuf[0] = t
    for j in range(n):
        ybuf[0, j] = y[j]
    count = 1
    if span == 0.0:
        return STATUS_OK, count

    h = _initial_step(span, max_step)
    K = np.empty((13, n))
    last_rejected = False
    guard = eps > 0.0 and du_max < 1.0

    for _ in range(max_steps):
        if direction * (t1 - t) <= 0.0:
            return STATUS_OK, count
        if h > abs(t1 - t):
            h = abs(t1 - t)
        h_min = 16.0 * 2.22e-16 * max(abs(t), abs(t1))
        hs = direction * h

        _rk_stages(y, t, hs, c1, c2, eps, K)
        finite = True
        for i in range(13):
            for j in range(n):
                if not math.isfinite(K[i, j]):
                    finite = False
                    break
            if not finite:
                break
        if finite:
            y_new, err = _step_candidate(y, hs, K)
            ok = True
            for j in range(n):
                if not math.isfinite(y_new[j]):
                    ok = False
                    break
            errn = _error_norm(y, y_new, err, rtol, atol) if ok else np.inf
        else:
            errn = np.inf

        if errn <= 1.0:
            if not _domain_ok(y_new):
                if h <= h_min * 2.0:
                    return STATUS_DOMAIN, count
                h *= 0.5
                last_rejected = True
                continue
            if guard and h > h_min * 4.0:
                du = _throttle_swing(y, y_new, c1, c2, eps)
                if du > du_max:
                    h *= max(0.1, 0.5 * du_max / du)
                    last_rejected = True
                    continue
            if guard:
                y_dbl = _double_step(y, t, hs, c1, c2, eps, K)
                dbl_ok = True
                errn2 = 0.0
                for j in range(n):
                    if not math.isfinite(y_dbl[j]):
                        dbl_ok = False
                        break
                if dbl_ok:
                    sacc = 0.0
                    for j in range(n):
                        sc = atol + rtol * max(abs(y[j]), abs(y_dbl[j]))
                        e = (y_new[j] - y_dbl[j]) / sc
                        sacc += e * e
                    errn2 = math.sqrt(sacc / n)
                if not dbl_ok:
                    if h <= h_min * 2.0:
                        return STATUS_MIN_STEP, count
                    h *= 0.5
                    last_rejected = True
                    continue
                if errn2 > 1.0:
                    if h <= h_min:
                        return STATUS_MIN_STEP, count
                    fac = _SAFETY * errn2 ** (-_ORDER_EXP)
                    if fac < 0.1:
                        fac = 0.1
                    elif fac > 0.9:
                        fac = 0.9
                    h = max(h * fac, h_min)
                    last_rejected = True
                    continue
                y_new = y_dbl
                if errn2 > errn:
                    errn = errn2
            t = t + hs
            y = y_new
            if count >= cap:
                return STATUS_BUFFER_FULL, count
            tbuf[count] = t
            for j in range(n):
                ybuf[count, j] = y[j]
            count += 1
            if errn == 0.0:
                fac = _MAX_FACTOR
            else:
                fac = _SAFETY * errn ** (-_ORDER_EXP)
                if fac > _MAX_FACTOR:
                    fac = _MAX_FACTOR
                elif fac < _MIN_FACTOR:
                    fac = _MIN_FACTOR
            if last_rejected and fac > 1.0:
                fac = 1.0
            h = min(h * fac, max_step)
            last_rejected = False
        else:
            if h <= h_min:
                return STATUS_MIN_STEP, count
            if math.isinf(errn):
                fac = 0.1
            else:
                fac = _SAFETY * errn ** (-_ORDER_EXP)
                if fac < 0.1:
                    fac = 0.1
                elif fac > 0.9:
                    fac = 0.9
            h = max(h * fac, h_min)
            last_rejected = True

    return STATUS_MAX_STEPS, count


@njit(cache=True, nogil=True)
def single_step(y, t, t_target, c1, c2, eps):
    """One fixed 13-stage step from (t, y) to t_target, no error control.

    Used to evaluate a recorded solution between stored steps; the
    sub-step is never larger than the accepted step that bracketed it.
    """
    n = y.shape[0]
    h = t_target - t
    if h == 0.0:
        return y.copy()
    K = np.empty((13, n))
    _rk_stages(y, t, h, c1, c2, eps, K)
    y_new, _ = _step_candidate(y, h, K)
    return y_new
