"""Independent reference implementations used as test oracles.

Everything here is deliberately written against scipy/numpy primitives and
plain brute force, not against the package code paths it checks.
"""

import numpy as np
from scipy import integrate


def phi_quad(mu):
    """MMSE function by adaptive quadrature of E[1 - tanh(L/2)], L ~ N(mu, 2mu).

    The integrand is positive, so there is no cancellation; reliable for
    mu up to a few hundred.
    """
    if mu == 0.0:
        return 1.0
    f = lambda L: np.exp(-((L - mu) ** 2) / (4.0 * mu)) / np.sqrt(4.0 * np.pi * mu) * (1.0 - np.tanh(L / 2.0))
    lo, _ = integrate.quad(f, -np.inf, 0.0, limit=500, epsabs=1e-300, epsrel=1e-11)
    hi, _ = integrate.quad(f, 0.0, np.inf, limit=500, epsabs=1e-300, epsrel=1e-11)
    return lo + hi


def phi_quad_paper_form(mu):
    """Same function by quadrature of the standardized-variable integrand."""
    if mu == 0.0:
        return 1.0
    f = lambda y: np.exp(-y * y / 2.0) / np.sqrt(2.0 * np.pi) * np.tanh(mu / 2.0 - np.sqrt(mu / 2.0) * y)
    y0 = np.sqrt(mu / 2.0)
    total = 0.0
    for a, b in [(-np.inf, 0.0), (0.0, y0), (y0, y0 + 40.0), (y0 + 40.0, np.inf)]:
        total += integrate.quad(f, a, b, limit=500)[0]
    return 1.0 - total


def j_quad(mu):
    """Mutual information by adaptive quadrature."""
    if mu == 0.0:
        return 0.0
    f = lambda L: (
        np.exp(-((L - mu) ** 2) / (4.0 * mu))
        / np.sqrt(4.0 * np.pi * mu)
        * np.log2(1.0 + np.exp(-np.clip(L, -700.0, 700.0)))
    )
    lo, _ = integrate.quad(f, -np.inf, 0.0, limit=500, epsabs=1e-300, epsrel=1e-11)
    hi, _ = integrate.quad(f, 0.0, np.inf, limit=500, epsabs=1e-300, epsrel=1e-11)
    return 1.0 - (lo + hi)


def bisect_inverse(fn, target, lo, hi, increasing, iters=200):
    """Plain bisection inverse of a scalar monotone function."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (fn(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def j_approx_polynomial(sigma):
    """Closed-form two-branch approximation of J as a function of the LLR
    standard deviation sigma = sqrt(2 mu); accurate to about 1e-3."""
    if sigma <= 1.6363:
        return -0.0421061 * sigma**3 + 0.209252 * sigma**2 - 0.00640081 * sigma
    if sigma < 10.0:
        return 1.0 - np.exp(0.00181491 * sigma**3 - 0.142675 * sigma**2 - 0.0822054 * sigma + 0.0549608)
    return 1.0


def single_user_ga_de_threshold(lambda_pairs, d_c, r_c, tol_db=0.02):
    """Gaussian-approximation density evolution threshold for a single-user
    BPSK channel, written directly against phi_quad with its own loop.

    The channel LLR mean is 4/sigma2 (complex-noise convention); Eb/N0 is
    1/(r_c * sigma2).  Returns the threshold in dB.
    """
    degs = np.array([d for d, _ in lambda_pairs], dtype=float)
    lam = np.array([f for _, f in lambda_pairs], dtype=float)

    grid = np.geomspace(1e-4, 800.0, 4000)
    phi_tab = np.array([phi_quad(m) for m in grid])

    def phi_f(x):
        x = np.clip(x, grid[0], grid[-1])
        return np.interp(np.log(x), np.log(grid), phi_tab)

    def phi_inv_f(v):
        idx = np.searchsorted(-phi_tab, -v)
        idx = np.clip(idx, 1, len(grid) - 1)
        x0, x1 = np.log(grid[idx - 1]), np.log(grid[idx])
        y0, y1 = phi_tab[idx - 1], phi_tab[idx]
        t = (v - y0) / (y1 - y0)
        return np.exp(x0 + t * (x1 - x0))

    def converges(ebn0_db):
        sigma2 = 1.0 / (r_c * 10 ** (ebn0_db / 10.0))
        mu_ch = 4.0 / sigma2
        mu_cnd = 0.0
        last = -1.0
        for _ in range(20000):
            mmse = float(lam @ phi_f(mu_ch + (degs - 1.0) * mu_cnd))
            mu_cnd = float(phi_inv_f(1.0 - (1.0 - mmse) ** (d_c - 1)))
            if mu_cnd > 600.0:
                return True
            if mu_cnd - last < 1e-9:
                return False
            last = mu_cnd
        return False

    lo, hi = -2.0, 8.0
    if not converges(hi):
        return np.inf
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if converges(mid):
            hi = mid
        else:
            lo = mid
    return hi


def enumerate_codewords(h_dense):
    """All codewords of a small parity-check matrix by brute force."""
    m, n = h_dense.shape
    words = []
    for x in range(2**n):
        bits = np.array([(x >> i) & 1 for i in range(n)], dtype=np.uint8)
        if not np.any(h_dense @ bits % 2):
            words.append(bits)
    return np.array(words, dtype=np.uint8)


def girth_through_node_exhaustive(adj_vn, adj_cn, vn, cap=24):
    """Shortest cycle length through a given variable node by DFS over all
    simple paths; intended for graphs with at most a few dozen nodes.

    Returns None when no cycle of length <= cap passes through the node.
    """
    best = [cap + 2]
    visited = set()

    def dfs(node, is_vn, depth):
        if depth + 1 >= best[0]:
            return
        for nxt in adj_vn[node] if is_vn else adj_cn[node]:
            if not is_vn and nxt == vn:
                if depth + 1 >= 4:
                    best[0] = min(best[0], depth + 1)
                continue
            key = ("c" if is_vn else "v", nxt)
            if key in visited:
                continue
            visited.add(key)
            dfs(nxt, not is_vn, depth + 1)
            visited.remove(key)

    dfs(vn, True, 0)
    return best[0] if best[0] <= cap else None
