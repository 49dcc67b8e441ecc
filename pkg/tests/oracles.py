"""Reference computations kept independent of the package code paths.

GP formulas are evaluated with explicit matrix inversion in ``np.longdouble``
(x87 extended precision on x86-64), with kernels re-implemented from their
textbook definitions.
"""

import numpy as np

LD = np.longdouble


def ld_kernel(terms, x, y):
    """Kernel matrix in long double. ``terms`` is a list of (name, params)."""
    x = np.asarray(x, dtype=LD).reshape(len(x), -1)
    y = np.asarray(y, dtype=LD).reshape(len(y), -1)
    K = np.zeros((len(x), len(y)), dtype=LD)
    pi = LD("3.14159265358979323846264338327950288")
    for name, p in terms:
        p = [LD(v) for v in p]
        if name == "rbf":
            d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
            K += p[0] ** 2 * np.exp(-d2 / (2 * p[1] ** 2))
        elif name == "linear":
            K += (x @ y.T) / p[0] ** 2
        elif name == "periodic":
            d = x[:, None, 0] - y[None, :, 0]
            K += p[0] ** 2 * np.exp(-2 * np.sin(pi * d / p[1]) ** 2 / p[2] ** 2)
        elif name == "constant":
            K += p[0]
        else:
            raise ValueError(name)
    return K


def ld_inverse_logdet(A):
    """Gauss-Jordan inverse with partial pivoting, plus log|det A|."""
    A = np.array(A, dtype=LD)
    n = A.shape[0]
    M = np.concatenate([A, np.eye(n, dtype=LD)], axis=1)
    logdet = LD(0)
    for i in range(n):
        piv = i + int(np.argmax(np.abs(M[i:, i])))
        if piv != i:
            M[[i, piv]] = M[[piv, i]]
        logdet += np.log(np.abs(M[i, i]))
        M[i] = M[i] / M[i, i]
        col = M[:, i].copy()
        col[i] = 0
        M -= np.outer(col, M[i])
    return M[:, n:], logdet


def ld_posterior(terms, sigma2, X, y, Xq, extra_diag=None):
    y = np.asarray(y, dtype=LD)
    mu = y.mean()
    A = ld_kernel(terms, X, X) + LD(sigma2) * np.eye(len(y), dtype=LD)
    if extra_diag is not None:
        A += np.diag(np.asarray(extra_diag, dtype=LD))
    Ainv, _ = ld_inverse_logdet(A)
    Ks = ld_kernel(terms, Xq, X)
    mean = mu + Ks @ Ainv @ (y - mu)
    cov = ld_kernel(terms, Xq, Xq) - Ks @ Ainv @ Ks.T
    return mean, cov


def ld_log_marginal(terms, sigma2, X, y, extra_diag=None):
    y = np.asarray(y, dtype=LD)
    r = y - y.mean()
    A = ld_kernel(terms, X, X) + LD(sigma2) * np.eye(len(y), dtype=LD)
    if extra_diag is not None:
        A += np.diag(np.asarray(extra_diag, dtype=LD))
    Ainv, logdet = ld_inverse_logdet(A)
    n = len(y)
    two_pi = 2 * LD("3.14159265358979323846264338327950288")
    return -r @ Ainv @ r / 2 - logdet / 2 - n * np.log(two_pi) / 2


def linear_ode_exact(T0, Q, mdot, h, M=0.7854, cp=6.9244, T_in=20.0, T_amb=15.0, U=1e-7):
    """Closed form of dT/dt = (Q - mdot cp (T - T_in) - U (T - T_amb)) / (M cp)."""
    a = (mdot * cp + U) / (M * cp)
    T_inf = (Q + mdot * cp * T_in + U * T_amb) / (mdot * cp + U)
    return T_inf + (T0 - T_inf) * np.exp(-a * h)


def slack_lp_minimum(T, x_min, eta_lo, x_max=None, eta_hi=0.0):
    """Minimal violation cost with explicit slack variables, solved as an LP."""
    from scipy.optimize import linprog

    T = np.asarray(T, dtype=float)
    n = len(T)
    # variables: lower slacks g (n), upper slacks G (n)
    c = np.concatenate([np.full(n, eta_lo), np.full(n, eta_hi)])
    # x_min - g <= T   ->  -g <= T - x_min
    A = [np.concatenate([-np.eye(n), np.zeros((n, n))], axis=1)]
    b = [T - x_min]
    if x_max is not None:
        # T <= x_max + G  ->  -G <= x_max - T
        A.append(np.concatenate([np.zeros((n, n)), -np.eye(n)], axis=1))
        b.append(x_max - T)
    bounds = [(0, None)] * n + ([(0, None)] * n if x_max is not None else [(0, 0)] * n)
    res = linprog(c, A_ub=np.vstack(A), b_ub=np.concatenate(b), bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    assert res.success, res.message
    return res.fun, res.x


def grid_search_rempc(T0, mdot_gs, params, config, levels=21):
    """Exhaustive search over ``levels`` evenly spaced heater powers per step."""
    import itertools

    from hybridgp.plant import rk4_step

    grid = np.linspace(config.u_min, config.u_max, levels)
    best = np.inf
    best_u = None
    for u in itertools.product(grid, repeat=len(mdot_gs)):
        T = T0
        J = 0.0
        for ui, wi in zip(u, mdot_gs):
            T = rk4_step(params, T, ui, wi / 1000.0, config.h)
            J += ui**2 + config.eta_lower * max(0.0, config.x_min - T)
        if J < best:
            best, best_u = J, np.array(u)
    return best, best_u
