"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_cext.pyx`` runs the same algorithm in
compiled loops and must agree with them to rounding.
"""
import numpy as np


def kde_sum(query, train, bandwidth):
    query = np.ascontiguousarray(query, dtype=np.float64)
    train = np.ascontiguousarray(train, dtype=np.float64)
    out = np.empty(query.size)
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    step = max(1, 2_000_000 // max(train.size, 1))
    for lo in range(0, query.size, step):
        diff = query[lo:lo + step, None] - train[None, :]
        out[lo:lo + step] = np.exp(-(diff * diff) * inv).sum(axis=1)
    return out


def _prox(v, thr, mask):
    out = v.copy()
    out[mask] = np.sign(v[mask]) * np.maximum(np.abs(v[mask]) - thr, 0.0)
    return out


def _l1(x, mask):
    return np.abs(x[mask]).sum()


def _backtrack(G, v, grad, L, lam, mask):
    while True:
        z = _prox(v - grad / L, lam / L, mask)
        d = z - v
        if d @ G @ d <= L * (d @ d) * (1.0 + 1e-12):
            return z, L
        L *= 2.0


def wlasso_gram(G, c, bb, penalized, lam, L0, lmax, mu, max_iter, tol, record=False):
    """Minimise 0.5 x'Gx - c'x + 0.5 bb + lam * |x[penalized]|_1.

    Accelerated proximal gradient with backtracking and function-value
    restart; every accepted iterate has an objective no larger than the
    previous one. With ``mu`` > 0 (smallest eigenvalue of G) the stop is a
    certified bound ``|x - x*|_2 <= tol``; otherwise the relative
    objective decrease of a plain step is tested against ``tol``.
    Returns ``(x, n_iter, converged, history)``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    mask = np.asarray(penalized, dtype=bool)
    x = np.zeros(c.size)
    y = x.copy()
    t = 1.0
    L = float(L0)
    momentum = False
    history = [x.copy()] if record else None
    certify = mu > 1e-12 * lmax
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        z, L = _backtrack(G, y, G @ y - c, L, lam, mask)
        e = z - x
        gx = G @ x - c
        dJ = e @ gx + 0.5 * (e @ G @ e) + lam * (_l1(z, mask) - _l1(x, mask))
        if dJ > 0.0:
            if not momentum:
                # plain step from x failed to decrease: numerically stationary
                converged = True
                break
            y = x.copy()
            t = 1.0
            momentum = False
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_new) * (z - x)
        x = z
        t = t_new
        momentum = True
        if record:
            history.append(x.copy())

        gx = G @ x - c
        xp, L = _backtrack(G, x, gx, L, lam, mask)
        e = xp - x
        dJp = e @ gx + 0.5 * (e @ G @ e) + lam * (_l1(xp, mask) - _l1(x, mask))
        if certify:
            bound = (L + lmax) * np.sqrt(e @ e) / mu
            done = bound <= tol
        else:
            J = 0.5 * (x @ G @ x) - c @ x + 0.5 * bb + lam * _l1(x, mask)
            done = -dJp <= tol * max(abs(J), 1e-300)
        if done:
            if dJp <= 0.0:
                x = xp
                if record:
                    history.append(x.copy())
            converged = True
            break
    return x, it, converged, history
