"""Hot numeric loops: two-component EM and batched GIoU.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature.  The numba path is used when numba imports and the
environment variable ``APS_LAB_DISABLE_JIT`` is unset or ``0``; the choice is
made once at import time and exposed as ``JIT_ENABLED``.
"""

import math
import os

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
_TINY = 1e-300


def _jit_requested():
    flag = os.environ.get("APS_LAB_DISABLE_JIT", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and _jit_requested()


# ---------------------------------------------------------------------------
# EM for a 1-D two-component Gaussian mixture
#
# params layout: [w1, mu1, var1, w2, mu2, var2]
# trace receives the log-likelihood before the first step and after every
# M-step; the number of filled entries is returned.
# ---------------------------------------------------------------------------


def em_numpy(x, params, max_iter, tol, var_floor, trace):
    p = params.copy()
    n = x.shape[0]

    def log_terms(p):
        la = math.log(p[0]) - 0.5 * (LOG_2PI + math.log(p[2])) - (x - p[1]) ** 2 / (2.0 * p[2])
        lb = math.log(p[3]) - 0.5 * (LOG_2PI + math.log(p[5])) - (x - p[4]) ** 2 / (2.0 * p[5])
        m = np.maximum(la, lb)
        lse = m + np.log(np.exp(la - m) + np.exp(lb - m))
        return la, lb, lse

    la, lb, lse = log_terms(p)
    ll = lse.sum()
    trace[0] = ll
    filled = 1
    for _ in range(max_iter):
        r1 = np.exp(la - lse)
        r2 = np.exp(lb - lse)
        n1 = max(r1.sum(), _TINY)
        n2 = max(r2.sum(), _TINY)
        mu1 = (r1 * x).sum() / n1
        mu2 = (r2 * x).sum() / n2
        p[0] = n1 / n
        p[3] = n2 / n
        p[1] = mu1
        p[4] = mu2
        p[2] = max((r1 * (x - mu1) ** 2).sum() / n1, var_floor)
        p[5] = max((r2 * (x - mu2) ** 2).sum() / n2, var_floor)
        la, lb, lse = log_terms(p)
        new_ll = lse.sum()
        trace[filled] = new_ll
        filled += 1
        if new_ll - ll < tol:
            break
        ll = new_ll
    return p, filled


def _em_loop(x, params, max_iter, tol, var_floor, trace):
    p = params.copy()
    n = x.shape[0]
    la = np.empty(n)
    lb = np.empty(n)
    lse = np.empty(n)

    ll = 0.0
    c1 = math.log(p[0]) - 0.5 * (LOG_2PI + math.log(p[2]))
    c2 = math.log(p[3]) - 0.5 * (LOG_2PI + math.log(p[5]))
    for i in range(n):
        la[i] = c1 - (x[i] - p[1]) ** 2 / (2.0 * p[2])
        lb[i] = c2 - (x[i] - p[4]) ** 2 / (2.0 * p[5])
        m = max(la[i], lb[i])
        lse[i] = m + math.log(math.exp(la[i] - m) + math.exp(lb[i] - m))
        ll += lse[i]
    trace[0] = ll
    filled = 1
    for _ in range(max_iter):
        n1 = 0.0
        n2 = 0.0
        s1 = 0.0
        s2 = 0.0
        for i in range(n):
            r1 = math.exp(la[i] - lse[i])
            r2 = math.exp(lb[i] - lse[i])
            n1 += r1
            n2 += r2
            s1 += r1 * x[i]
            s2 += r2 * x[i]
        n1 = max(n1, _TINY)
        n2 = max(n2, _TINY)
        mu1 = s1 / n1
        mu2 = s2 / n2
        q1 = 0.0
        q2 = 0.0
        for i in range(n):
            r1 = math.exp(la[i] - lse[i])
            r2 = math.exp(lb[i] - lse[i])
            q1 += r1 * (x[i] - mu1) ** 2
            q2 += r2 * (x[i] - mu2) ** 2
        p[0] = n1 / n
        p[3] = n2 / n
        p[1] = mu1
        p[4] = mu2
        p[2] = max(q1 / n1, var_floor)
        p[5] = max(q2 / n2, var_floor)
        c1 = math.log(p[0]) - 0.5 * (LOG_2PI + math.log(p[2]))
        c2 = math.log(p[3]) - 0.5 * (LOG_2PI + math.log(p[5]))
        new_ll = 0.0
        for i in range(n):
            la[i] = c1 - (x[i] - p[1]) ** 2 / (2.0 * p[2])
            lb[i] = c2 - (x[i] - p[4]) ** 2 / (2.0 * p[5])
            m = max(la[i], lb[i])
            lse[i] = m + math.log(math.exp(la[i] - m) + math.exp(lb[i] - m))
            new_ll += lse[i]
        trace[filled] = new_ll
        filled += 1
        if new_ll - ll < tol:
            break
        ll = new_ll
    return p, filled


# ---------------------------------------------------------------------------
# GIoU of many predicted boxes against one reference box, rows (x0, y0, x1, y1)
# ---------------------------------------------------------------------------


def giou_numpy(pred, gt):
    iw = np.minimum(pred[:, 2], gt[2]) - np.maximum(pred[:, 0], gt[0])
    ih = np.minimum(pred[:, 3], gt[3]) - np.maximum(pred[:, 1], gt[1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_p = (pred[:, 2] - pred[:, 0]) * (pred[:, 3] - pred[:, 1])
    area_g = (gt[2] - gt[0]) * (gt[3] - gt[1])
    union = area_p + area_g - inter
    enclose = (np.maximum(pred[:, 2], gt[2]) - np.minimum(pred[:, 0], gt[0])) * (
        np.maximum(pred[:, 3], gt[3]) - np.minimum(pred[:, 1], gt[1])
    )
    return inter / union - (enclose - union) / enclose


def _giou_loop(pred, gt):
    n = pred.shape[0]
    out = np.empty(n)
    area_g = (gt[2] - gt[0]) * (gt[3] - gt[1])
    for i in range(n):
        iw = min(pred[i, 2], gt[2]) - max(pred[i, 0], gt[0])
        ih = min(pred[i, 3], gt[3]) - max(pred[i, 1], gt[1])
        inter = max(iw, 0.0) * max(ih, 0.0)
        area_p = (pred[i, 2] - pred[i, 0]) * (pred[i, 3] - pred[i, 1])
        union = area_p + area_g - inter
        enclose = (max(pred[i, 2], gt[2]) - min(pred[i, 0], gt[0])) * (
            max(pred[i, 3], gt[3]) - min(pred[i, 1], gt[1])
        )
        out[i] = inter / union - (enclose - union) / enclose
    return out


if HAVE_NUMBA:
    em_numba = numba.njit(cache=True, nogil=True)(_em_loop)
    giou_numba = numba.njit(cache=True, nogil=True)(_giou_loop)
else:  # pragma: no cover
    em_numba = None
    giou_numba = None

em = em_numba if JIT_ENABLED else em_numpy
giou_batch = giou_numba if JIT_ENABLED else giou_numpy
