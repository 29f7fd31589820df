"""Message-passing kernels: explicit-loop numba versions and vectorized numpy twins.

Both paths take the same arrays:

* ``contrib``  (K, d_v, M) complex: sqrt(p) * h[u, k] * x[u, m, k] for the
  d_v users ``fn_users[k]`` attached to function node ``k``;
* ``combos``   (M**d_v, d_v) int: lexicographic enumeration of the symbol
  hypotheses of one function node (digit ``s`` belongs to slot ``s``);
* ``loglik``   (K, M**d_v): Gaussian log-likelihood of every hypothesis.

``mpa_messages`` returns normalized log-marginals of shape (J, M).
"""
from __future__ import annotations

import numpy as np

from ._jit import DISABLE_JIT, njit


def hypothesis_table(M: int, d_v: int) -> np.ndarray:
    grids = np.indices((M,) * d_v).reshape(d_v, -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


# -- numpy -----------------------------------------------------------------


def loglik_numpy(y, contrib, noise, combos):
    K, dv, _ = contrib.shape
    z = contrib[:, np.arange(dv)[None, :], combos].sum(axis=-1)  # (K, C)
    e = y[:, None] - z
    return -(e.real**2 + e.imag**2) / noise[:, None]


def _lse(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def mpa_messages_numpy(loglik, fn_users, J, M, iters, maxlog):
    K, dv = fn_users.shape
    shape = (M,) * dv
    table = loglik.reshape((K,) + shape)
    v2f = np.zeros((K, dv, M))
    f2v = np.zeros((K, dv, M))
    flat_users = fn_users.ravel()
    axes_other = [tuple(a for a in range(dv) if a != s) for s in range(dv)]
    bshape = [tuple(M if a == s else 1 for a in range(dv)) for s in range(dv)]
    total = np.zeros((J, M))
    for _ in range(iters):
        for k in range(K):
            T = table[k].copy()
            for s in range(dv):
                T += v2f[k, s].reshape(bshape[s])
            for s in range(dv):
                V = T - v2f[k, s].reshape(bshape[s])
                if dv == 1:
                    msg = V
                elif maxlog:
                    msg = V.max(axis=axes_other[s])
                else:
                    msg = _lse(V, axes_other[s])
                f2v[k, s] = msg - msg.max()
        total = np.zeros((J, M))
        np.add.at(total, flat_users, f2v.reshape(-1, M))
        v2f = total[fn_users] - f2v
        v2f -= _lse(v2f, -1)[..., None]
    return total - _lse(total, -1)[:, None]


# -- numba -----------------------------------------------------------------


@njit
def loglik_numba(y, contrib, noise, combos):
    K, dv, _ = contrib.shape
    C = combos.shape[0]
    out = np.empty((K, C))
    for k in range(K):
        yk = y[k]
        inv = 1.0 / noise[k]
        for c in range(C):
            z = 0j
            for s in range(dv):
                z += contrib[k, s, combos[c, s]]
            e = yk - z
            out[k, c] = -(e.real * e.real + e.imag * e.imag) * inv
    return out


@njit
def mpa_messages_numba(loglik, fn_users, combos, J, M, iters, maxlog):
    K, dv = fn_users.shape
    C = combos.shape[0]
    v2f = np.zeros((K, dv, M))
    f2v = np.zeros((K, dv, M))
    T = np.empty(C)
    mx = np.empty(M)
    acc = np.empty(M)
    total = np.zeros((J, M))
    for _ in range(iters):
        for k in range(K):
            for c in range(C):
                t = loglik[k, c]
                for s in range(dv):
                    t += v2f[k, s, combos[c, s]]
                T[c] = t
            for s in range(dv):
                for m in range(M):
                    mx[m] = -np.inf
                    acc[m] = 0.0
                for c in range(C):
                    m = combos[c, s]
                    v = T[c] - v2f[k, s, m]
                    if v > mx[m]:
                        mx[m] = v
                if maxlog:
                    for m in range(M):
                        f2v[k, s, m] = mx[m]
                else:
                    for c in range(C):
                        m = combos[c, s]
                        acc[m] += np.exp(T[c] - v2f[k, s, m] - mx[m])
                    for m in range(M):
                        f2v[k, s, m] = mx[m] + np.log(acc[m])
                top = f2v[k, s, 0]
                for m in range(1, M):
                    if f2v[k, s, m] > top:
                        top = f2v[k, s, m]
                for m in range(M):
                    f2v[k, s, m] -= top
        for j in range(J):
            for m in range(M):
                total[j, m] = 0.0
        for k in range(K):
            for s in range(dv):
                u = fn_users[k, s]
                for m in range(M):
                    total[u, m] += f2v[k, s, m]
        for k in range(K):
            for s in range(dv):
                u = fn_users[k, s]
                top = -np.inf
                for m in range(M):
                    v = total[u, m] - f2v[k, s, m]
                    v2f[k, s, m] = v
                    if v > top:
                        top = v
                ssum = 0.0
                for m in range(M):
                    ssum += np.exp(v2f[k, s, m] - top)
                norm = top + np.log(ssum)
                for m in range(M):
                    v2f[k, s, m] -= norm
    out = np.empty((J, M))
    for j in range(J):
        top = total[j, 0]
        for m in range(1, M):
            if total[j, m] > top:
                top = total[j, m]
        ssum = 0.0
        for m in range(M):
            ssum += np.exp(total[j, m] - top)
        norm = top + np.log(ssum)
        for m in range(M):
            out[j, m] = total[j, m] - norm
    return out


# -- dispatch --------------------------------------------------------------


def loglik(y, contrib, noise, combos, use_jit: bool | None = None):
    jit = (not DISABLE_JIT) if use_jit is None else use_jit
    if jit:
        return loglik_numba(y, contrib, noise, combos)
    return loglik_numpy(y, contrib, noise, combos)


def mpa_messages(L, fn_users, combos, J, M, iters, maxlog=False, use_jit: bool | None = None):
    jit = (not DISABLE_JIT) if use_jit is None else use_jit
    if jit:
        return mpa_messages_numba(L, fn_users, combos, J, M, iters, maxlog)
    return mpa_messages_numpy(L, fn_users, J, M, iters, maxlog)
