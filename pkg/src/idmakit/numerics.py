"""Scalar information-theoretic kernels for Gaussian-approximation analysis.

All message statistics follow the consistent-Gaussian convention: an LLR
message with mean ``mu >= 0`` has variance ``2*mu``.  Two transfer functions
of that mean are provided together with their inverses and derivative:

``phi(mu)``
    Mean-square error of the soft BPSK symbol estimate ``tanh(L/2)``,
    i.e. ``E[1 - tanh(L/2)]`` for ``L ~ N(mu, 2*mu)``.  Strictly decreasing
    from ``phi(0) = 1`` to ``phi(inf) = 0``.

``j_fun(mu)``
    Mutual information (bits) between the BPSK symbol and the LLR,
    ``1 - E[log2(1 + exp(-L))]``.  Strictly increasing from 0 to 1.

Both integrals are evaluated with deterministic fixed-panel Gauss-Legendre
quadrature after factoring out the dominant ``exp(-mu/4)`` decay, which keeps
the evaluation accurate for all ``mu`` up to the saturation point.  A dense
monotone-cubic lookup table built from the quadrature serves as a fast path;
the quadrature itself remains available via the ``*_exact`` functions.

Everything here is pure and reentrant; the lookup tables are immutable after
construction.
"""

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import erfc

__all__ = [
    "phi",
    "phi_inv",
    "phi_prime",
    "j_fun",
    "j_inv",
    "phi_exact",
    "j_fun_exact",
    "MU_SATURATION",
]

# Above this mean the table ends and the closed-form exponential tail is used.
MU_SATURATION = 700.0

# Below this mean the first-order series is exact to double precision.
_MU_SERIES = 1e-6

_N_KNOTS = 4096

# Gauss-Legendre panels covering the half-line integrands, which decay at
# least as fast as exp(-L/2) once the Gaussian envelope is factored out.
_PANEL_EDGES = (0.0, 12.0, 36.0, 90.0)
_PANEL_ORDER = 64


def _build_gl_nodes():
    xs, ws = [], []
    base_x, base_w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    for a, b in zip(_PANEL_EDGES[:-1], _PANEL_EDGES[1:]):
        xs.append(0.5 * (b - a) * base_x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * base_w)
    return np.concatenate(xs), np.concatenate(ws)


_GL_X, _GL_W = _build_gl_nodes()
_GH_T, _GH_W = np.polynomial.hermite.hermgauss(128)
_LN2 = np.log(2.0)

# The envelope-factored panels resolve features of scale ~1; below this mean
# the integrand support shrinks like sqrt(mu) and Gauss-Hermite in the
# standardized variable is exact instead.
_MU_GL_MIN = 1.0


def _validate(mu, name="mu"):
    arr = np.asarray(mu, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0):
        raise ValueError(f"{name} must be non-negative, got {mu!r}")
    return arr


def phi_exact(mu):
    """Quadrature evaluation of the MMSE transfer function (slow path)."""
    mu = _validate(mu)
    scalar = mu.ndim == 0
    mu = np.atleast_1d(mu)
    out = np.ones_like(mu)
    out[np.isinf(mu)] = 0.0
    small = (mu > 0.0) & (mu < _MU_GL_MIN)
    if np.any(small):
        m = mu[small][:, None]
        llr = m + 2.0 * np.sqrt(m) * _GH_T[None, :]
        out[small] = np.sum(_GH_W * (1.0 - np.tanh(llr / 2.0)), axis=1) / np.sqrt(np.pi)
    big = np.isfinite(mu) & (mu >= _MU_GL_MIN)
    if np.any(big):
        m = mu[big][:, None]
        with np.errstate(under="ignore"):
            integ = np.sum(
                _GL_W / (1.0 + np.exp(-_GL_X)) * np.exp(-_GL_X / 2.0 - _GL_X**2 / (4.0 * m)),
                axis=1,
            )
            out[big] = 4.0 * np.exp(-mu[big] / 4.0) / np.sqrt(4.0 * np.pi * mu[big]) * integ
    return float(out[0]) if scalar else out


def _j_loss_exact(mu):
    # 1 - J(mu) without cancellation, valid down to the underflow of exp(-mu/4).
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    out = np.ones_like(mu)
    out[np.isinf(mu)] = 0.0
    small = (mu > 0.0) & (mu < _MU_GL_MIN)
    if np.any(small):
        m = mu[small][:, None]
        llr = m + 2.0 * np.sqrt(m) * _GH_T[None, :]
        out[small] = np.sum(_GH_W * np.logaddexp(0.0, -llr), axis=1) / (_LN2 * np.sqrt(np.pi))
    big = np.isfinite(mu) & (mu >= _MU_GL_MIN)
    if np.any(big):
        m = mu[big]
        # E[max(0, -L)] for L ~ N(m, 2m), in closed form.
        s = np.sqrt(2.0 * m)
        d = np.sqrt(m / 2.0)
        with np.errstate(under="ignore"):
            neg_part = s * np.exp(-d * d / 2.0) / np.sqrt(2.0 * np.pi) - m * 0.5 * erfc(d / np.sqrt(2.0))
            # E[log2(1 + exp(-|L|))], with the Gaussian envelope factored out.
            base = np.log1p(np.exp(-_GL_X)) / _LN2 * 2.0 * np.cosh(_GL_X / 2.0)
            integ = np.sum(_GL_W * base * np.exp(-_GL_X**2 / (4.0 * m[:, None])), axis=1)
            out[big] = neg_part / _LN2 + np.exp(-m / 4.0) / np.sqrt(4.0 * np.pi * m) * integ
    return out


def j_fun_exact(mu):
    """Quadrature evaluation of the mutual-information transfer function."""
    mu = _validate(mu)
    scalar = mu.ndim == 0
    out = 1.0 - _j_loss_exact(mu)
    return float(out[0]) if scalar else out


def _inverse_seed(y_decreasing, x):
    # Seed-quality inverse map; drop knots where y collides in float.
    y = y_decreasing[::-1]
    x = x[::-1]
    running = np.maximum.accumulate(y)
    keep = np.concatenate(([True], y[1:] > running[:-1]))
    return PchipInterpolator(y[keep], x[keep], extrapolate=False)


class _Tables:
    """Monotone-cubic fast path for phi and j_fun plus inverse seeds."""

    def __init__(self):
        knots = np.geomspace(_MU_SERIES, MU_SATURATION, _N_KNOTS)
        self.log_knots = np.log(knots)
        phi_k = phi_exact(knots)
        jloss_k = _j_loss_exact(knots)  # strictly decreasing, > 0
        self.log_phi = PchipInterpolator(self.log_knots, np.log(phi_k), extrapolate=False)
        self.dlog_phi = self.log_phi.derivative()
        self.log_jloss = PchipInterpolator(self.log_knots, np.log(jloss_k), extrapolate=False)
        # Inverse seeds (polished by Newton steps on the forward interpolant).
        self.inv_phi_seed = _inverse_seed(np.log(phi_k), self.log_knots)
        self.inv_jloss_seed = _inverse_seed(np.log(jloss_k), self.log_knots)
        self.phi_lo, self.phi_hi = phi_k[-1], phi_k[0]
        self.jloss_lo, self.jloss_hi = jloss_k[-1], jloss_k[0]
        # Linear-in-mu slope of J below the first knot.
        self.j_slope = (1.0 - jloss_k[0]) / knots[0]
        self._validate_against_exact(knots)

    def _validate_against_exact(self, knots):
        mids = np.sqrt(knots[:-1] * knots[1:])[:: max(1, (_N_KNOTS - 1) // 512)]
        with np.errstate(under="ignore"):
            rel_phi = np.abs(np.exp(self.log_phi(np.log(mids))) / phi_exact(mids) - 1.0)
            rel_jl = np.abs(np.exp(self.log_jloss(np.log(mids))) / _j_loss_exact(mids) - 1.0)
        worst = max(rel_phi.max(), rel_jl.max())
        if worst > 1e-5:
            raise RuntimeError(f"lookup table deviates from quadrature by {worst:.2e}")


_TABLES = None


def _tables():
    global _TABLES
    if _TABLES is None:
        _TABLES = _Tables()
    return _TABLES


def _phi_tail(mu):
    # Exponential tail above the table, scaled for continuity at the edge.
    t = _tables()
    with np.errstate(under="ignore"):
        return t.phi_lo * np.sqrt(MU_SATURATION / mu) * np.exp(-(mu - MU_SATURATION) / 4.0)


def _jloss_tail(mu):
    t = _tables()
    with np.errstate(under="ignore"):
        return t.jloss_lo * np.sqrt(mu / MU_SATURATION) * np.exp(-(mu - MU_SATURATION) / 4.0)


def phi(mu):
    """MMSE of the soft BPSK estimate for an LLR of mean ``mu`` (fast path).

    Accepts scalars or arrays; raises ``ValueError`` for negative input.
    """
    mu = _validate(mu)
    scalar = mu.ndim == 0
    mu = np.atleast_1d(mu)
    t = _tables()
    out = np.empty_like(mu)
    small = mu < _MU_SERIES
    big = mu > MU_SATURATION
    mid = ~small & ~big
    out[small] = 1.0 - 0.5 * mu[small]
    if np.any(mid):
        with np.errstate(under="ignore"):
            out[mid] = np.exp(t.log_phi(np.log(mu[mid])))
    if np.any(big):
        fin = big & np.isfinite(mu)
        out[big] = 0.0
        out[fin] = _phi_tail(mu[fin])
    return float(out[0]) if scalar else out


def j_fun(mu):
    """Mutual information in bits carried by an LLR of mean ``mu``."""
    mu = _validate(mu)
    scalar = mu.ndim == 0
    mu = np.atleast_1d(mu)
    t = _tables()
    out = np.empty_like(mu)
    small = mu < _MU_SERIES
    big = mu > MU_SATURATION
    mid = ~small & ~big
    out[small] = t.j_slope * mu[small]
    if np.any(mid):
        with np.errstate(under="ignore"):
            out[mid] = 1.0 - np.exp(t.log_jloss(np.log(mu[mid])))
    if np.any(big):
        fin = big & np.isfinite(mu)
        out[big] = 1.0
        out[fin] = 1.0 - _jloss_tail(mu[fin])
    return float(out[0]) if scalar else out


def _newton_polish(log_mu, target_log, interp, dinterp, lo, hi, steps=3):
    # A few guarded Newton iterations on the forward interpolant.
    for _ in range(steps):
        f = interp(log_mu) - target_log
        df = dinterp(log_mu)
        step = np.where(df != 0.0, f / np.where(df == 0.0, 1.0, df), 0.0)
        log_mu = np.clip(log_mu - step, lo, hi)
    return log_mu


def _bisect_log(interp, target_log, lo, hi, iters=80):
    lo = np.full_like(target_log, lo)
    hi = np.full_like(target_log, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        v = interp(mid)
        take_lo = v > target_log  # interp decreasing in log mu
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    return 0.5 * (lo + hi)


def phi_inv(v):
    """Inverse of :func:`phi`; accepts values in ``(0, 1]``."""
    arr = np.asarray(v, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValueError(f"phi_inv argument must lie in (0, 1], got {v!r}")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    t = _tables()
    out = np.empty_like(arr)
    near_one = arr >= t.phi_hi
    tail = arr < t.phi_lo
    mid = ~near_one & ~tail
    out[near_one] = 2.0 * (1.0 - arr[near_one])
    if np.any(mid):
        target = np.log(arr[mid])
        lo, hi = t.log_knots[0], t.log_knots[-1]
        seed = np.clip(t.inv_phi_seed(target), lo, hi)
        log_mu = _newton_polish(seed, target, t.log_phi, t.dlog_phi, lo, hi)
        bad = np.abs(t.log_phi(log_mu) - target) > 1e-12
        if np.any(bad):
            log_mu[bad] = _bisect_log(t.log_phi, target[bad], lo, hi)
        out[mid] = np.exp(log_mu)
    if np.any(tail):
        # Solve the scaled exponential tail: monotone in mu, bisect in mu.
        target = np.log(arr[tail])
        lo = np.full_like(target, MU_SATURATION)
        hi = MU_SATURATION - 4.0 * (target - np.log(t.phi_lo)) + 64.0
        for _ in range(200):
            m = 0.5 * (lo + hi)
            f = np.log(t.phi_lo) + 0.5 * (np.log(MU_SATURATION) - np.log(m)) - (m - MU_SATURATION) / 4.0
            take_lo = f > target
            lo = np.where(take_lo, m, lo)
            hi = np.where(take_lo, hi, m)
        out[tail] = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


def j_inv(i):
    """Inverse of :func:`j_fun`; accepts values in ``[0, 1)``."""
    arr = np.asarray(i, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"j_inv argument must lie in [0, 1), got {i!r}")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    t = _tables()
    out = np.empty_like(arr)
    loss = 1.0 - arr
    small = loss >= t.jloss_hi  # i at or below the first knot's MI
    tail = loss < t.jloss_lo
    mid = ~small & ~tail
    out[small] = arr[small] / t.j_slope
    if np.any(mid):
        target = np.log(loss[mid])
        lo, hi = t.log_knots[0], t.log_knots[-1]
        seed = np.clip(t.inv_jloss_seed(target), lo, hi)
        dlog = t.log_jloss.derivative()
        log_mu = _newton_polish(seed, target, t.log_jloss, dlog, lo, hi)
        bad = np.abs(t.log_jloss(log_mu) - target) > 1e-12
        if np.any(bad):
            log_mu[bad] = _bisect_log(t.log_jloss, target[bad], lo, hi)
        out[mid] = np.exp(log_mu)
    if np.any(tail):
        target = np.log(loss[tail])
        lo = np.full_like(target, MU_SATURATION)
        hi = MU_SATURATION - 4.0 * (target - np.log(t.jloss_lo)) + 64.0
        for _ in range(200):
            m = 0.5 * (lo + hi)
            f = np.log(t.jloss_lo) + 0.5 * (np.log(m) - np.log(MU_SATURATION)) - (m - MU_SATURATION) / 4.0
            take_lo = f > target
            lo = np.where(take_lo, m, lo)
            hi = np.where(take_lo, hi, m)
        out[tail] = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


def phi_prime(mu):
    """Derivative of :func:`phi`; defined for ``mu > 0`` and always negative."""
    arr = np.asarray(mu, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"phi_prime argument must be positive, got {mu!r}")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    t = _tables()
    out = np.empty_like(arr)
    small = arr < _MU_SERIES
    big = arr > MU_SATURATION
    mid = ~small & ~big
    out[small] = -0.5
    if np.any(mid):
        m = arr[mid]
        with np.errstate(under="ignore"):
            out[mid] = np.exp(t.log_phi(np.log(m))) * t.dlog_phi(np.log(m)) / m
    if np.any(big):
        fin = big & np.isfinite(arr)
        out[big] = 0.0
        m = arr[fin]
        out[fin] = _phi_tail(m) * (-0.25 - 0.5 / m)
    return float(out[0]) if scalar else out
