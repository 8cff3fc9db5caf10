"""numba implementations of the batched kernels (same contracts as numpy_impl)."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _spd_inverse(G, Ginv, logdet, ok):
    N = G.shape[0]
    n = G.shape[1]
    L = np.zeros((n, n))
    Linv = np.zeros((n, n))
    for b in range(N):
        failed = False
        for i in range(n):
            for j in range(i + 1):
                s = G[b, i, j]
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                if i == j:
                    if not s > 0.0:
                        failed = True
                        break
                    L[i, i] = math.sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
            if failed:
                break
        if failed:
            ok[b] = False
            logdet[b] = np.nan
            for i in range(n):
                for j in range(n):
                    Ginv[b, i, j] = np.nan
            continue
        ld = 0.0
        for i in range(n):
            ld += 2.0 * math.log(L[i, i])
        logdet[b] = ld
        for i in range(n):
            for j in range(n):
                Linv[i, j] = 0.0
        for i in range(n):
            Linv[i, i] = 1.0 / L[i, i]
            for j in range(i):
                s = 0.0
                for k in range(j, i):
                    s -= L[i, k] * Linv[k, j]
                Linv[i, j] = s / L[i, i]
        for i in range(n):
            for j in range(i, n):
                s = 0.0
                for k in range(j, n):
                    s += Linv[k, i] * Linv[k, j]
                Ginv[b, i, j] = s
                Ginv[b, j, i] = s


def spd_inverse(G):
    G = np.ascontiguousarray(G, dtype=np.float64)
    N = G.shape[0]
    Ginv = np.empty_like(G)
    logdet = np.empty(N)
    ok = np.ones(N, dtype=np.bool_)
    _spd_inverse(G, Ginv, logdet, ok)
    return Ginv, logdet, ok


@njit(cache=True)
def _christoffel(Ginv, dG, out):
    N = Ginv.shape[0]
    n = Ginv.shape[1]
    low = np.empty((n, n, n))
    for b in range(N):
        for l in range(n):
            for i in range(n):
                for j in range(i, n):
                    v = 0.5 * (dG[b, l, j, i] + dG[b, l, i, j] - dG[b, i, j, l])
                    low[l, i, j] = v
                    low[l, j, i] = v
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    s = 0.0
                    for l in range(n):
                        s += Ginv[b, k, l] * low[l, i, j]
                    out[b, k, i, j] = s
                    out[b, k, j, i] = s


def christoffel(Ginv, dG):
    Ginv = np.ascontiguousarray(Ginv, dtype=np.float64)
    dG = np.ascontiguousarray(dG, dtype=np.float64)
    n = Ginv.shape[1]
    out = np.empty((Ginv.shape[0], n, n, n))
    _christoffel(Ginv, dG, out)
    return out


@njit(cache=True)
def _covariant_jacobian(J, Gamma, H, out):
    N = J.shape[0]
    n = J.shape[1]
    for b in range(N):
        for k in range(n):
            for j in range(n):
                s = J[b, j, k]
                for m in range(n):
                    s += Gamma[b, j, k, m] * H[b, m]
                out[b, k, j] = s


def covariant_jacobian(J, Gamma, H):
    J = np.ascontiguousarray(J, dtype=np.float64)
    Gamma = np.ascontiguousarray(Gamma, dtype=np.float64)
    H = np.ascontiguousarray(H, dtype=np.float64)
    out = np.empty_like(J)
    _covariant_jacobian(J, Gamma, H, out)
    return out


@njit(cache=True)
def _quad_form(G, v, w, out):
    N = G.shape[0]
    n = G.shape[1]
    for b in range(N):
        s = 0.0
        for i in range(n):
            t = 0.0
            for j in range(n):
                t += G[b, i, j] * w[b, j]
            s += v[b, i] * t
        out[b] = s


def quad_form(G, v, w):
    G = np.ascontiguousarray(G, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    out = np.empty(G.shape[0])
    _quad_form(G, v, w, out)
    return out


@njit(cache=True)
def _smooth_step(x, s, ds):
    for i in range(x.size):
        t = x[i]
        if t <= 0.0:
            s[i] = 0.0
            ds[i] = 0.0
        elif t >= 1.0:
            s[i] = 1.0
            ds[i] = 0.0
        else:
            z = 1.0 / t - 1.0 / (1.0 - t)
            e = math.exp(-abs(z))
            if z > 0:
                val = e / (1.0 + e)
            else:
                val = 1.0 / (1.0 + e)
            s[i] = val
            if val == 0.0 or val == 1.0:
                ds[i] = 0.0
            else:
                ds[i] = val * (1.0 - val) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))


def smooth_step(x):
    x = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(x.ravel())
    s = np.empty_like(flat)
    ds = np.empty_like(flat)
    _smooth_step(flat, s, ds)
    return s.reshape(x.shape), ds.reshape(x.shape)


@njit(cache=True)
def _norm_gradient(G, dG, h, J, rho2, drho2):
    N = G.shape[0]
    n = G.shape[1]
    for b in range(N):
        s = 0.0
        for i in range(n):
            t = 0.0
            for j in range(n):
                t += G[b, i, j] * h[b, j]
            s += h[b, i] * t
        rho2[b] = s
        for k in range(n):
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    acc += h[b, i] * (dG[b, i, j, k] * h[b, j] + 2.0 * G[b, i, j] * J[b, j, k])
            drho2[b, k] = acc


def norm_gradient(G, dG, h, J):
    G = np.ascontiguousarray(G, dtype=np.float64)
    dG = np.ascontiguousarray(dG, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    J = np.ascontiguousarray(J, dtype=np.float64)
    rho2 = np.empty(G.shape[0])
    drho2 = np.empty_like(h)
    _norm_gradient(G, dG, h, J, rho2, drho2)
    return rho2, drho2


@njit(cache=True)
def _density_divergence(Ginv, dG, h, J, out):
    N = Ginv.shape[0]
    n = Ginv.shape[1]
    for b in range(N):
        s = 0.0
        for i in range(n):
            s += J[b, i, i]
            t = 0.0
            for a in range(n):
                for c in range(n):
                    t += Ginv[b, a, c] * dG[b, c, a, i]
            s += 0.5 * h[b, i] * t
        out[b] = s


def density_divergence(Ginv, dG, h, J):
    Ginv = np.ascontiguousarray(Ginv, dtype=np.float64)
    dG = np.ascontiguousarray(dG, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    J = np.ascontiguousarray(J, dtype=np.float64)
    out = np.empty(Ginv.shape[0])
    _density_divergence(Ginv, dG, h, J, out)
    return out
