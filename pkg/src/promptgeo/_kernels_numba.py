"""Numba kernel implementations (see `_kernels_numpy` for the contracts).

Loop-based @njit(cache=True) versions of the same signatures. No prange and
no fastmath: accumulation order is fixed so repeated runs are bit-identical.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def cosine_softmax(F, G, tau):
    n, D = F.shape
    K = G.shape[0]
    Gh = np.empty((K, D))
    for k in range(K):
        s = 0.0
        for d in range(D):
            s += G[k, d] * G[k, d]
        gn = np.sqrt(s)
        for d in range(D):
            Gh[k, d] = G[k, d] / gn

    P = np.empty((n, K))
    sims = np.empty(K)
    for i in range(n):
        s = 0.0
        for d in range(D):
            s += F[i, d] * F[i, d]
        fn = np.sqrt(s)
        for k in range(K):
            acc = 0.0
            for d in range(D):
                acc += F[i, d] * Gh[k, d]
            sims[k] = acc / fn / tau
        m = sims[0]
        for k in range(1, K):
            if sims[k] > m:
                m = sims[k]
        tot = 0.0
        for k in range(K):
            sims[k] = np.exp(sims[k] - m)
            tot += sims[k]
        for k in range(K):
            P[i, k] = sims[k] / tot
    return P


@njit(cache=True)
def project_rows(F, W, Ginv):
    n, D = F.shape
    M = W.shape[1]
    Q = np.empty((n, D))
    t = np.empty(M)
    z = np.empty(M)
    for i in range(n):
        for m in range(M):
            acc = 0.0
            for d in range(D):
                acc += W[d, m] * F[i, d]
            t[m] = acc
        for m in range(M):
            acc = 0.0
            for j in range(M):
                acc += Ginv[m, j] * t[j]
            z[m] = acc
        for d in range(D):
            acc = 0.0
            for m in range(M):
                acc += W[d, m] * z[m]
            Q[i, d] = acc
    return Q


@njit(cache=True)
def ratio_terms(F, W, Ginv, ood_mask, eps, need_grad):
    n, D = F.shape
    M = W.shape[1]
    grad_id = np.zeros((D, M))
    grad_ood = np.zeros((D, M))
    sub_id = 0.0
    sub_ood = 0.0

    t = np.empty(M)
    z = np.empty(M)
    y2 = np.empty(M)
    q = np.empty(D)
    e = np.empty(D)
    wy2 = np.empty(D)

    for i in range(n):
        for m in range(M):
            acc = 0.0
            for d in range(D):
                acc += W[d, m] * F[i, d]
            t[m] = acc
        for m in range(M):
            acc = 0.0
            for j in range(M):
                acc += Ginv[m, j] * t[j]
            z[m] = acc
        nf2 = 0.0
        nq2 = 0.0
        ne2 = 0.0
        for d in range(D):
            acc = 0.0
            for m in range(M):
                acc += W[d, m] * z[m]
            q[d] = acc
            e[d] = F[i, d] - acc
            nf2 += F[i, d] * F[i, d]
            nq2 += acc * acc
            ne2 += e[d] * e[d]
        nf = np.sqrt(nf2)
        nq = np.sqrt(nq2)
        ne = np.sqrt(ne2)

        if ood_mask[i]:
            sub_ood += nq / nf
        else:
            sub_id += ne / nf

        if need_grad:
            # zero subgradient when the projected/residual norm degenerates
            if ood_mask[i]:
                live = nq > 1e-12 * nf
            else:
                live = ne > 1e-12 * nf
            if live:
                for m in range(M):
                    acc = 0.0
                    for j in range(M):
                        acc += Ginv[m, j] * z[j]
                    y2[m] = acc
                for d in range(D):
                    acc = 0.0
                    for m in range(M):
                        acc += W[d, m] * y2[m]
                    wy2[d] = acc
                if ood_mask[i]:
                    a = 1.0 / (nq * nf)
                    for d in range(D):
                        for m in range(M):
                            grad_ood[d, m] += a * (
                                e[d] * (z[m] - eps * y2[m]) + eps * wy2[d] * z[m]
                            )
                else:
                    b = 1.0 / (ne * nf)
                    for d in range(D):
                        for m in range(M):
                            grad_id[d, m] += b * (
                                -e[d] * (z[m] + eps * y2[m]) + eps * wy2[d] * z[m]
                            )
    return sub_id, sub_ood, grad_id, grad_ood
