"""SMO solver for the linear SVM / SVR duals with an unregularized bias.

Both problems are written in the common form

    min_beta  0.5 * beta' Q beta + p' beta
    s.t.      s' beta = 0,  0 <= beta_i <= C,

with ``Q_ij = s_i s_j K[idx_i, idx_j]`` for a base Gram matrix ``K``. The
classifier uses ``s = y`` and ``p = -1``; the regressor doubles the
variables (``s = [+1.., -1..]``, ``p = [eps - y, eps + y]``).

Working pairs are chosen by maximal violation with second-order gain.
Every ``m`` steps the primal objective is evaluated with the bias solved
exactly; the solver stops once primal minus dual drops below ``tol``.

On ill-conditioned Gram matrices SMO finds the active set quickly but then
crawls along the free subspace. Between SMO rounds the solver therefore
tries an exact step: with the variables at their bounds held fixed, the
equality-constrained optimum of the free ones is one small linear solve.
The step is kept only when it stays inside the box and does not lower the
dual objective, so the dual sequence stays monotone.
"""

import numba
import numpy as np

from radpath.errors import NumericError

TAU = 1e-12
GAP_TOL = 1e-6


@numba.njit(cache=True)
def _min_loss_bias(f, y, eps, classify):
    """Bias minimizing the summed hinge (classify) or eps-insensitive loss.

    The loss is convex piecewise linear in ``b`` with kinks at a known set
    of points; the minimum is taken at the midpoint of the optimal kinks.
    """
    n = f.shape[0]
    nk = n if classify else 2 * n
    kinks = np.empty(nk)
    for i in range(n):
        if classify:
            kinks[i] = y[i] - f[i]
        else:
            kinks[i] = y[i] - f[i] - eps
            kinks[n + i] = y[i] - f[i] + eps
    vals = np.empty(nk)
    for k in range(nk):
        b = kinks[k]
        s = 0.0
        for i in range(n):
            if classify:
                r = 1.0 - y[i] * (f[i] + b)
            else:
                r = abs(y[i] - f[i] - b) - eps
            if r > 0.0:
                s += r
        vals[k] = s
    best = vals.min()
    tol = 1e-12 * max(1.0, best)
    lo = np.inf
    hi = -np.inf
    for k in range(nk):
        if vals[k] <= best + tol:
            lo = min(lo, kinks[k])
            hi = max(hi, kinks[k])
    return 0.5 * (lo + hi), best


@numba.njit(cache=True)
def _smo(K, s, idx, p, C, y, eps, classify, tol, max_iter, beta0):
    m = s.shape[0]
    n = K.shape[0]
    beta = beta0.copy()
    coef = np.zeros(n)  # coef[j] = sum over variables mapped to j of s_i beta_i
    for t in range(m):
        coef[idx[t]] += s[t] * beta[t]
    grad = p.copy()
    for t in range(m):
        grad[t] += s[t] * (K[idx[t]] @ coef)
    history = []
    best_primal = np.inf
    best_b = 0.0
    best_coef = coef.copy()
    it = 0
    gap = np.inf
    done = False
    while True:
        if it % m == 0:
            f = K @ coef
            wnorm = coef @ f
            b, loss = _min_loss_bias(f, y, eps, classify)
            primal = 0.5 * wnorm + C * loss
            # dual (minimization form): 0.5 beta'Q beta + p'beta
            dual = 0.5 * wnorm + p @ beta
            gap = primal + dual
            if primal < best_primal:
                best_primal = primal
                best_b = b
                best_coef = coef.copy()
            history.append((primal, -dual))
            if gap < tol:
                done = True
                break
        if it >= max_iter:
            break
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(m):
            if (s[t] > 0 and beta[t] < C) or (s[t] < 0 and beta[t] > 0):
                v = -s[t] * grad[t]
                if v >= gmax:
                    if v > gmax or i < 0:
                        gmax = v
                        i = t
        # j: second-order choice in I_low
        gmin = np.inf
        obj_min = np.inf
        j = -1
        if i >= 0:
            Kii = K[idx[i], idx[i]]
            for t in range(m):
                if (s[t] > 0 and beta[t] > 0) or (s[t] < 0 and beta[t] < C):
                    v = -s[t] * grad[t]
                    if v < gmin:
                        gmin = v
                    diff = gmax - v
                    if diff > 0:
                        a = Kii + K[idx[t], idx[t]] - 2.0 * K[idx[i], idx[t]]
                        if a <= 0:
                            a = TAU
                        o = -(diff * diff) / a
                        if o < obj_min:
                            obj_min = o
                            j = t
        if j < 0 or gmax - gmin < 1e-14:
            # KKT conditions hold to machine precision; gap reflects rounding
            f = K @ coef
            wnorm = coef @ f
            b, loss = _min_loss_bias(f, y, eps, classify)
            primal = 0.5 * wnorm + C * loss
            dual = 0.5 * wnorm + p @ beta
            gap = primal + dual
            if primal < best_primal:
                best_primal = primal
                best_b = b
                best_coef = coef.copy()
            history.append((primal, -dual))
            done = True
            break
        # two-variable update along s_i d_i + s_j d_j = 0
        ki, kj = idx[i], idx[j]
        Qii = K[ki, ki]
        Qjj = K[kj, kj]
        Qij = s[i] * s[j] * K[ki, kj]
        oi, oj = beta[i], beta[j]
        if s[i] != s[j]:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = oi - oj
            bi = oi + delta
            bj = oj + delta
            if diff > 0:
                if bj < 0:
                    bj = 0.0
                    bi = diff
            else:
                if bi < 0:
                    bi = 0.0
                    bj = -diff
            if diff > 0:
                if bi > C:
                    bi = C
                    bj = C - diff
            else:
                if bj > C:
                    bj = C
                    bi = C + diff
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = oi + oj
            bi = oi - delta
            bj = oj + delta
            if total > C:
                if bi > C:
                    bi = C
                    bj = total - C
            else:
                if bj < 0:
                    bj = 0.0
                    bi = total
            if total > C:
                if bj > C:
                    bj = C
                    bi = total - C
            else:
                if bi < 0:
                    bi = 0.0
                    bj = total
        di = bi - oi
        dj = bj - oj
        beta[i] = bi
        beta[j] = bj
        coef[ki] += s[i] * di
        coef[kj] += s[j] * dj
        for t in range(m):
            kt = idx[t]
            grad[t] += s[t] * (s[i] * K[kt, ki] * di + s[j] * K[kt, kj] * dj)
        it += 1
    return beta, best_coef, best_b, best_primal, gap, it, history, done


def _objectives(K, s, idx, p, C, y, eps, classify, beta):
    coef = np.zeros(K.shape[0])
    np.add.at(coef, idx, s * beta)
    f = K @ coef
    wnorm = float(coef @ f)
    b, loss = _min_loss_bias(f, y, eps, classify)
    primal = 0.5 * wnorm + C * loss
    dual = -(0.5 * wnorm + float(p @ beta))
    return primal, dual, coef, b


def _face_step(K, s, idx, p, C, beta, margin=1e-10):
    """Exact optimum over the free variables with bounded ones held fixed."""
    free = (beta > margin * C) & (beta < C * (1 - margin))
    F = np.flatnonzero(free)
    if len(F) == 0:
        return None
    B = np.flatnonzero(~free)
    sF = s[F]
    Q_FF = sF[:, None] * sF[None, :] * K[np.ix_(idx[F], idx[F])]
    rhs = -p[F]
    if len(B):
        rhs = rhs - (sF[:, None] * s[B][None, :] * K[np.ix_(idx[F], idx[B])]) @ beta[B]
    A = np.zeros((len(F) + 1, len(F) + 1))
    A[:-1, :-1] = Q_FF
    A[:-1, -1] = sF
    A[-1, :-1] = sF
    r = np.r_[rhs, -(s[B] @ beta[B]) if len(B) else 0.0]
    sol = np.linalg.lstsq(A, r, rcond=None)[0]
    cand = beta.copy()
    cand[F] = sol[:-1]
    if np.any(cand[F] < 0) or np.any(cand[F] > C):
        return None
    return cand


def solve(K, y, C, eps=None, tol=GAP_TOL, max_iter=None):
    """Solve the classification (``eps is None``) or regression dual.

    Parameters
    ----------
    K : (n, n) Gram matrix of the training rows.
    y : labels in {-1, +1} or real targets.

    Returns
    -------
    coef : (n,) expansion coefficients, ``w = X.T @ coef``.
    b : float
    info : dict with ``primal``, ``gap``, ``iterations`` and ``history``
        (primal, dual) pairs at each outer iteration.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n == 0:
        raise ValueError("empty training set")
    classify = eps is None
    if classify:
        s = y.copy()
        idx = np.arange(n)
        p = -np.ones(n)
        e = 0.0
    else:
        s = np.concatenate([np.ones(n), -np.ones(n)])
        idx = np.concatenate([np.arange(n), np.arange(n)])
        p = np.concatenate([eps - y, eps + y])
        e = float(eps)
    C = float(C)
    m = len(s)
    if max_iter is None:
        max_iter = 200_000 + 2000 * m
    chunk = 20 * m
    beta = np.zeros(m)
    history = []
    best = (np.inf, None, 0.0)
    total = 0
    gap = np.inf
    while True:
        budget = min(chunk, max_iter - total)
        beta, coef, b, primal, gap, it, hist, done = _smo(K, s, idx, p, C, y, e, classify, tol, budget, beta)
        total += it
        history.extend(hist)
        if primal < best[0]:
            best = (primal, coef, b)
        if done or total >= max_iter:
            break
        cand = _face_step(K, s, idx, p, C, beta)
        if cand is None:
            continue
        c_primal, c_dual, c_coef, c_b = _objectives(K, s, idx, p, C, y, e, classify, cand)
        if c_dual >= history[-1][1]:
            beta = cand
            history.append((c_primal, c_dual))
            gap = c_primal - c_dual
            if c_primal < best[0]:
                best = (c_primal, c_coef, c_b)
            if gap < tol:
                break
    primal, coef, b = best
    scale = max(1.0, abs(primal))
    if not np.isfinite(primal) or gap > max(tol, 1e-9 * scale):
        raise NumericError(f"SMO stopped with duality gap {gap:.3g} after {total} steps")
    return coef, float(b), {"primal": float(primal), "gap": float(gap), "iterations": int(total),
                            "history": np.array(history, dtype=np.float64), "dual_variables": beta}
