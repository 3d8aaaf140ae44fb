"""Pure-Python reference implementation of the per-task sweep kernels.

The compiled twin in ``_ckernels.pyx`` mirrors these loops statement for
statement so both backends produce identical floating-point results.  All
kernels work on the CSR adjacency of the network:

    out_ptr[i]:out_ptr[i+1]  slots of node i's out-links
    out_dst[slot]            target node of the slot
    out_eid[slot]            global link id of the slot

Per-task fraction arrays are indexed by link id (``phi_link``) plus a
per-node local-computation fraction (``phi_self``) for the data class.
"""

import numpy as np

BACKEND = "python"


def topo_order(n, out_ptr, out_dst, active):
    """Kahn topological order of the subgraph of active adjacency slots.

    Returns (order, count); the first ``count`` entries of ``order`` are a
    valid topological order.  count < n means the active subgraph has a cycle.
    """
    indeg = np.zeros(n, dtype=np.int32)
    for i in range(n):
        for s in range(out_ptr[i], out_ptr[i + 1]):
            if active[s]:
                indeg[out_dst[s]] += 1
    order = np.empty(n, dtype=np.int32)
    count = 0
    for i in range(n):
        if indeg[i] == 0:
            order[count] = i
            count += 1
    head = 0
    while head < count:
        i = order[head]
        head += 1
        for s in range(out_ptr[i], out_ptr[i + 1]):
            if active[s]:
                j = out_dst[s]
                indeg[j] -= 1
                if indeg[j] == 0:
                    order[count] = j
                    count += 1
    return order, count


def sweep_data(order, out_ptr, out_dst, out_eid, phi_self, phi_link, rates):
    """Forward sweep of data traffic in topological order.

    Returns (t, g, f): total data traffic per node, computation flow per
    node, and data flow per link.
    """
    n = len(order)
    t = rates.astype(np.float64, copy=True)
    g = np.zeros(n)
    f = np.zeros(len(phi_link))
    for k in range(n):
        i = order[k]
        ti = t[i]
        g[i] = ti * phi_self[i]
        for s in range(out_ptr[i], out_ptr[i + 1]):
            e = out_eid[s]
            fe = ti * phi_link[e]
            f[e] = fe
            t[out_dst[s]] += fe
    return t, g, f


def sweep_result(order, out_ptr, out_dst, out_eid, phi_link, seed):
    """Forward sweep of result traffic seeded by the computation output."""
    n = len(order)
    t = seed.astype(np.float64, copy=True)
    f = np.zeros(len(phi_link))
    for k in range(n):
        i = order[k]
        ti = t[i]
        for s in range(out_ptr[i], out_ptr[i + 1]):
            e = out_eid[s]
            fe = ti * phi_link[e]
            f[e] = fe
            t[out_dst[s]] += fe
    return t, f


def marginal_result(order, out_ptr, out_dst, out_eid, phi_link, dprime):
    """Reverse sweep for the marginal cost of injected result traffic."""
    n = len(order)
    pt = np.zeros(n)
    for k in range(n - 1, -1, -1):
        i = order[k]
        acc = 0.0
        for s in range(out_ptr[i], out_ptr[i + 1]):
            e = out_eid[s]
            p = phi_link[e]
            if p > 0.0:
                acc += p * (dprime[e] + pt[out_dst[s]])
        pt[i] = acc
    return pt


def marginal_data(order, out_ptr, out_dst, out_eid, phi_self, phi_link,
                  dprime, comp_grad, ratio, pt):
    """Reverse sweep for the marginal cost of injected data traffic."""
    n = len(order)
    pr = np.zeros(n)
    for k in range(n - 1, -1, -1):
        i = order[k]
        acc = phi_self[i] * (comp_grad[i] + ratio * pt[i])
        for s in range(out_ptr[i], out_ptr[i + 1]):
            e = out_eid[s]
            p = phi_link[e]
            if p > 0.0:
                acc += p * (dprime[e] + pr[out_dst[s]])
        pr[i] = acc
    return pr


def project_row(phi, grad, scale, free):
    """Scaled projection of one strategy row onto its constrained simplex.

    Minimizes grad . (v - phi) + (v - phi)^T diag(scale) (v - phi) subject to
    v >= 0, sum(v) = 1, and v = 0 on non-free options.  Solved exactly via
    the KKT form v_j = max(0, phi_j + (lam - grad_j) / (2 scale_j)) with a
    sorted breakpoint scan for the multiplier lam.
    """
    k = len(phi)
    out = np.zeros(k)
    idx = np.flatnonzero(free)
    if len(idx) == 0:
        raise ValueError("no free options")
    if len(idx) == 1:
        out[idx[0]] = 1.0
        return out
    base = phi[idx] - grad[idx] / (2.0 * scale[idx])
    slope = 1.0 / (2.0 * scale[idx])
    bp = -base / slope
    srt = np.argsort(bp, kind="stable")
    s_base = 0.0
    s_slope = 0.0
    m = len(idx)
    lam = 0.0
    for j in range(m):
        o = srt[j]
        s_base += base[o]
        s_slope += slope[o]
        lam = (1.0 - s_base) / s_slope
        if j == m - 1 or lam <= bp[srt[j + 1]]:
            break
    v = base + slope * lam
    np.maximum(v, 0.0, out=v)
    out[idx] = v
    return out
