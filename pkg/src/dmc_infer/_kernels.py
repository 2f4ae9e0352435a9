"""Hot loop of the backward SMC: propose a cherry leaf, score, contract.

State layout for ``N`` particles over a pair with ``V`` leaves and ``I``
internal forest nodes:

``adj``       (N, V, V) uint8   adjacency; merged-away slots have zero rows
``occ``       (N, V + I) int64  vertex slot currently sitting at each forest
                                node, -1 if none (leaves are nodes 0..V-1)
``children``  (I, 2) int64      child node indices of internal node V + k

``coef`` packs ``(log p, log((1-p)/2), log p_c, log(1-p_c), log|V_prev|)``.
Both implementations write slots ``lo:hi`` of the destination buffers and
agree draw-for-draw.
"""

import math

import numpy as np

from ._accel import jit
from ._rng import STREAM_PROPOSE, uniform_jit, uniforms


@jit
def propagate_numba(adj_src, occ_src, anc, adj_dst, occ_dst, children, seed, t, coef,
                    lo, hi, dup_out, anchor_out, logw_out):
    n_vert = adj_src.shape[1]
    n_int = children.shape[0]
    n_nodes = occ_src.shape[1]
    logp, loghalf, logpc, log1mpc, log_vprev = coef[0], coef[1], coef[2], coef[3], coef[4]
    stream = np.uint64(STREAM_PROPOSE)
    tt = np.uint64(t)
    for i in range(lo, hi):
        a = anc[i]
        for r in range(n_vert):
            for c in range(n_vert):
                adj_dst[i, r, c] = adj_src[a, r, c]
        for r in range(n_nodes):
            occ_dst[i, r] = occ_src[a, r]
        n_ch = 0
        for k in range(n_int):
            if occ_dst[i, children[k, 0]] >= 0 and occ_dst[i, children[k, 1]] >= 0:
                n_ch += 1
        u01 = uniform_jit(seed, stream, tt, np.uint64(i))
        pick = int(u01 * (2 * n_ch))
        if pick > 2 * n_ch - 1:
            pick = 2 * n_ch - 1
        target = pick // 2
        side = pick % 2
        kk = -1
        seen = 0
        for k in range(n_int):
            if occ_dst[i, children[k, 0]] >= 0 and occ_dst[i, children[k, 1]] >= 0:
                if seen == target:
                    kk = k
                    break
                seen += 1
        node_v = children[kk, side]
        node_u = children[kk, 1 - side]
        v = occ_dst[i, node_v]
        u = occ_dst[i, node_u]
        kb = 0
        ko = 0
        for w in range(n_vert):
            if w == u or w == v:
                continue
            au = adj_dst[i, u, w]
            av = adj_dst[i, v, w]
            if au != 0 and av != 0:
                kb += 1
            elif au != 0 or av != 0:
                ko += 1
            if av != 0:
                adj_dst[i, u, w] = 1
                adj_dst[i, w, u] = 1
                adj_dst[i, v, w] = 0
                adj_dst[i, w, v] = 0
        homo = adj_dst[i, u, v] != 0
        adj_dst[i, u, v] = 0
        adj_dst[i, v, u] = 0
        hterm = logpc if homo else log1mpc
        logw_out[i] = kb * logp + ko * loghalf + hterm - log_vprev + math.log(2.0 * n_ch)
        occ_dst[i, n_vert + kk] = u
        occ_dst[i, node_u] = -1
        occ_dst[i, node_v] = -1
        dup_out[i] = v
        anchor_out[i] = u


def propagate_numpy(adj_src, occ_src, anc, adj_dst, occ_dst, children, seed, t, coef,
                    lo, hi, dup_out, anchor_out, logw_out):
    n_vert = adj_src.shape[1]
    logp, loghalf, logpc, log1mpc, log_vprev = (float(c) for c in coef)
    a = anc[lo:hi]
    m = hi - lo
    rows = np.arange(m)
    adj = adj_src[a]
    occ = occ_src[a]
    mask = (occ[:, children[:, 0]] >= 0) & (occ[:, children[:, 1]] >= 0)
    n_ch = mask.sum(axis=1)
    u01 = uniforms(seed, STREAM_PROPOSE, t, np.arange(lo, hi))
    pick = np.minimum((u01 * (2 * n_ch)).astype(np.int64), 2 * n_ch - 1)
    target, side = pick // 2, pick % 2
    kk = np.argmax(np.cumsum(mask, axis=1) > target[:, None], axis=1)
    node_v = children[kk, side]
    node_u = children[kk, 1 - side]
    v = occ[rows, node_v]
    u = occ[rows, node_u]
    keep = np.ones((m, n_vert), dtype=bool)
    keep[rows, u] = False
    keep[rows, v] = False
    ru = adj[rows, u] != 0
    rv = adj[rows, v] != 0
    kb = (ru & rv & keep).sum(axis=1)
    ko = ((ru ^ rv) & keep).sum(axis=1)
    homo = adj[rows, u, v] != 0
    hterm = np.where(homo, logpc, log1mpc)
    logw_out[lo:hi] = kb * logp + ko * loghalf + hterm - log_vprev + np.log(2.0 * n_ch)
    merged = ((ru | rv) & keep).astype(np.uint8)
    adj[rows, u, :] = merged
    adj[rows, :, u] = merged
    adj[rows, v, :] = 0
    adj[rows, :, v] = 0
    occ[rows, n_vert + kk] = u
    occ[rows, node_u] = -1
    occ[rows, node_v] = -1
    adj_dst[lo:hi] = adj
    occ_dst[lo:hi] = occ
    dup_out[lo:hi] = v
    anchor_out[lo:hi] = u


PROPAGATE = {"numba": propagate_numba, "numpy": propagate_numpy}
