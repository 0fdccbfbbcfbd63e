"""Compiled inner loops for message passing over flat arrays.

Layout (all int64 / float64 1-D arrays):
  lp_data[lp_start[r] : lp_start[r] + size[r]]      log potential of region r
  g_data[g_start[r] + row*size[r] + j]               message entry gathered into
                                                     entry j of region r, one row per slot
  mi_data[mi_start[k] + j]                           child entry fed by parent entry j on edge k
  logm[offsets[k] : offsets[k+1]]                    log message on edge k
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def normalize_log(x, n):
    mx = -np.inf
    for j in range(n):
        if x[j] > mx:
            mx = x[j]
    if mx == -np.inf:
        return
    s = 0.0
    for j in range(n):
        s += math.exp(x[j] - mx)
    c = mx + math.log(s)
    for j in range(n):
        x[j] -= c


@njit(cache=True)
def log_belief(r, logm, lp_data, lp_start, size, g_data, g_start, g_rows, out):
    n = size[r]
    s0 = lp_start[r]
    for j in range(n):
        out[j] = lp_data[s0 + j]
    base = g_start[r]
    for row in range(g_rows[r]):
        b = base + row * n
        for j in range(n):
            out[j] += logm[g_data[b + j]]
    normalize_log(out, n)


@njit(cache=True)
def sweep(
    ks, logm, e_parent, e_child, offsets, mi_data, mi_start,
    lp_data, lp_start, size, g_data, g_start, g_rows,
    damping, cache_parent, log_belief_floor, log_message_floor,
    buf_p, buf_c, buf_m, buf_new,
):
    residual = 0.0
    clamps = 0
    last = -1
    for k in ks:
        p = e_parent[k]
        c = e_child[k]
        # a parent's belief does not depend on its own outgoing messages
        if (not cache_parent) or p != last:
            log_belief(p, logm, lp_data, lp_start, size, g_data, g_start, g_rows, buf_p)
            last = p
        n_p = size[p]
        n_c = size[c]
        for j in range(n_c):
            buf_m[j] = 0.0
        m0 = mi_start[k]
        for j in range(n_p):
            buf_m[mi_data[m0 + j]] += math.exp(buf_p[j])
        log_belief(c, logm, lp_data, lp_start, size, g_data, g_start, g_rows, buf_c)
        off = offsets[k]
        for j in range(n_c):
            old = logm[off + j]
            lm = math.log(buf_m[j]) if buf_m[j] > 0.0 else -np.inf
            v = lm - buf_c[j] + old
            if buf_c[j] < log_belief_floor or not math.isfinite(v):
                clamps += 1
                if math.isnan(v) or v < log_message_floor:
                    v = log_message_floor
                elif v == np.inf:
                    v = 0.0
            buf_new[j] = v
        normalize_log(buf_new, n_c)
        if damping > 0.0:
            for j in range(n_c):
                buf_new[j] = (1.0 - damping) * buf_new[j] + damping * logm[off + j]
            normalize_log(buf_new, n_c)
        for j in range(n_c):
            d = abs(buf_new[j] - logm[off + j])
            if d > residual:
                residual = d
            logm[off + j] = buf_new[j]
    return residual, clamps


@njit(cache=True)
def mix(logm, proposal, offsets, damping):
    """logm <- normalized (1 - damping) * proposal + damping * logm; returns max change."""
    residual = 0.0
    for k in range(offsets.shape[0] - 1):
        a = offsets[k]
        n = offsets[k + 1] - a
        seg = proposal[a:a + n]
        for j in range(n):
            seg[j] = (1.0 - damping) * seg[j] + damping * logm[a + j]
        normalize_log(seg, n)
        for j in range(n):
            d = abs(seg[j] - logm[a + j])
            if d > residual:
                residual = d
            logm[a + j] = seg[j]
    return residual
