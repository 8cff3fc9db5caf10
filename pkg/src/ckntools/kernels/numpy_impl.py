"""Pure-numpy reference implementations of the batched kernels."""
import numpy as np


def spd_inverse(G):
    """Cholesky-based inverse and log-determinant of a batch of SPD matrices.

    Returns ``(Ginv, logdet, ok)``; rows that fail to factor have ``ok=False``
    and NaN entries.
    """
    G = np.asarray(G, dtype=float)
    N, n = G.shape[0], G.shape[1]
    ok = np.ones(N, dtype=bool)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = np.full_like(G, np.nan)
        for b in range(N):
            try:
                L[b] = np.linalg.cholesky(G[b])
            except np.linalg.LinAlgError:
                ok[b] = False
    Ginv = np.full_like(G, np.nan)
    logdet = np.full(N, np.nan)
    if ok.any():
        Lg = L[ok]
        Linv = np.linalg.inv(Lg)
        Ginv[ok] = np.einsum("bki,bkj->bij", Linv, Linv)
        logdet[ok] = 2.0 * np.log(np.diagonal(Lg, axis1=1, axis2=2)).sum(axis=1)
    return Ginv, logdet, ok


def christoffel(Ginv, dG):
    # lowered symbols Gamma_{l,ij} = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    low = 0.5 * (np.swapaxes(dG, 2, 3) + dG - np.moveaxis(dG, 3, 1))
    return np.einsum("bkl,blij->bkij", Ginv, low)


def covariant_jacobian(J, Gamma, H):
    return np.swapaxes(J, 1, 2) + np.einsum("bjkm,bm->bkj", Gamma, H)


def quad_form(G, v, w):
    """Batched ``G_ij v^i w^j``."""
    return np.einsum("bij,bi,bj->b", G, v, w, optimize=True)


def norm_gradient(G, dG, h, J):
    """|h|^2 = g_ij h^i h^j and its coordinate gradient d_k |h|^2."""
    rho2 = quad_form(G, h, h)
    drho2 = np.einsum("bijk,bi,bj->bk", dG, h, h, optimize=True)
    drho2 += 2.0 * np.einsum("bij,bi,bjk->bk", G, h, J, optimize=True)
    return rho2, drho2


def density_divergence(Ginv, dG, h, J):
    """div h = d_i h^i + h^i d_i log sqrt(det g)."""
    dlog = 0.5 * np.einsum("bac,bcai->bi", Ginv, dG, optimize=True)
    return np.trace(J, axis1=1, axis2=2) + np.einsum("bi,bi->b", h, dlog)


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1; returns (value, derivative)."""
    x = np.asarray(x, dtype=float)
    s = np.zeros_like(x)
    ds = np.zeros_like(x)
    s[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    if mid.any():
        t = x[mid]
        z = 1.0 / t - 1.0 / (1.0 - t)
        # logistic(-z) evaluated without overflow
        e = np.exp(-np.abs(z))
        val = np.where(z > 0, e / (1.0 + e), 1.0 / (1.0 + e))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            der = val * (1.0 - val) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))
        der = np.where((val == 0.0) | (val == 1.0), 0.0, der)
        s[mid] = val
        ds[mid] = der
    return s, ds
