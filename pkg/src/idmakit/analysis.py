"""Capacity and gap utilities, operating-regime classification, and the
asymptotic fixed-point solvers behind the two repetition-equalizer
mechanisms.

The asymptotic solvers formalize two limits of the detector/repetition
front end:

* user-load limit: many users at fixed repetition-to-user ratio
  ``gamma = d_r / N`` -- the message toward the LDPC decoder depends on the
  ratio only;
* energy limit: vanishing per-user power at fixed energy product
  ``gamma = P_i * d_r_i`` -- users with different powers see identical
  decoder inputs when their repetition factors compensate.

Both reduce to the same scalar equation in the converged front-end mean,
solved here by scanning for the first sign change and polishing with
Brent's method.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import exit_engine as ee
from . import numerics as nm

__all__ = [
    "gmac_ebn0_limit",
    "gap_to_capacity",
    "gap_to_capacity_db",
    "sigma2_from_ebn0_db",
    "ebn0_db_from_sigma2",
    "RegimeReport",
    "regime_classify",
    "front_end_equilibrium_mean",
    "decoder_input_load_limit",
    "decoder_input_energy_limit",
    "gap_surface",
    "write_gap_surface_csv",
]


def gmac_ebn0_limit(r_sum):
    """Eb/N0 (dB) at which the Gaussian MAC sum capacity equals ``r_sum``."""
    if r_sum <= 0.0:
        raise ValueError("sum rate must be positive")
    return 10.0 * np.log10((2.0**r_sum - 1.0) / r_sum)


def gap_to_capacity(threshold_snr, r_sum):
    """Linear SNR gap of a decoding threshold to the sum-capacity limit."""
    if threshold_snr <= 0.0:
        raise ValueError("threshold SNR must be positive")
    return threshold_snr / (2.0**r_sum - 1.0)


def gap_to_capacity_db(threshold_snr, r_sum):
    return 10.0 * np.log10(gap_to_capacity(threshold_snr, r_sum))


def sigma2_from_ebn0_db(ebn0_db, r_sum):
    """Noise variance for a given Eb/N0 under unit total received power."""
    if r_sum <= 0.0:
        raise ValueError("sum rate must be positive")
    return 1.0 / (r_sum * 10.0 ** (ebn0_db / 10.0))


def ebn0_db_from_sigma2(sigma2, r_sum):
    if sigma2 <= 0.0 or r_sum <= 0.0:
        raise ValueError("noise variance and sum rate must be positive")
    return 10.0 * np.log10(1.0 / (r_sum * sigma2))


@dataclass(frozen=True)
class RegimeReport:
    """Interference/noise balance of one scenario."""

    inr_db: float
    snr_mu_db: float
    sinr_lower_db: tuple
    sinr_upper_db: tuple
    regime: str  # noise_limited | mai_limited | mixed


def regime_classify(scenario, band_db=3.0):
    """Classify a scenario by the ratio of worst-case interference power to
    noise power, using a symmetric dB band around parity for the mixed
    regime."""
    p = scenario.power_array
    total = float(p.sum())
    interference = total - p  # per user, all others at full power
    with np.errstate(divide="ignore"):
        inr_db = float(10.0 * np.log10(np.max(interference) / scenario.sigma2)) if np.max(interference) > 0 else -np.inf
        lower = 10.0 * np.log10(p / (interference + scenario.sigma2))
        upper = 10.0 * np.log10(p / scenario.sigma2)
    if inr_db > band_db:
        regime = "mai_limited"
    elif inr_db < -band_db:
        regime = "noise_limited"
    else:
        regime = "mixed"
    return RegimeReport(
        inr_db=inr_db,
        snr_mu_db=scenario.gamma_smu_db,
        sinr_lower_db=tuple(lower),
        sinr_upper_db=tuple(upper),
        regime=regime,
    )


def _first_root(fn, lo, hi, n_scan=4000):
    """Smallest root of ``fn`` in [lo, hi], located by a scan for the first
    sign change and polished by Brent's method."""
    xs = np.linspace(lo, hi, n_scan)
    vals = np.array([fn(x) for x in xs])
    if abs(vals[0]) < 1e-300:
        return lo
    sign_change = np.where(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(sign_change) == 0:
        raise ArithmeticError("no sign change in the root bracket")
    k = sign_change[0]
    return brentq(fn, xs[k], xs[k + 1], xtol=1e-14, rtol=1e-15, maxiter=300)


def front_end_equilibrium_mean(mu_decoder, scenario, d_r):
    """Converged repetition-to-detector message mean for the equal-power
    scenario, given the decoder feedback mean ``mu_decoder``.

    Solves ``k s2 + (1 - 1/N) phi(k) (k - mu_decoder) = mu_decoder s2 + 4 (d_r - 1)/N``
    for the smallest ``k >= mu_decoder``; equivalent to the inner fixed point of
    the detector/repetition loop via ``k = (d_r - 1) mu + mu_decoder``.
    """
    if mu_decoder < 0.0:
        raise ValueError("decoder feedback mean must be non-negative")
    scenario._require_symmetric("front_end_equilibrium_mean")
    n = scenario.n_users
    s2 = scenario.sigma2
    rhs = mu_decoder * s2 + 4.0 * (d_r - 1.0) / n

    def f(k):
        return k * s2 + (1.0 - 1.0 / n) * nm.phi(k) * (k - mu_decoder) - rhs

    hi = mu_decoder + 4.0 * d_r / (n * s2) + 10.0
    root = _first_root(f, mu_decoder, hi)
    if abs(f(root)) > 1e-10 * max(1.0, abs(rhs)):
        raise ArithmeticError(f"equilibrium residual too large: {f(root):.3e}")
    return root


def _asymptotic_equilibrium(gamma, sigma2, mu_decoder):
    # k s2 + phi(k)(k - mu_decoder) = mu_decoder s2 + 4 gamma, smallest root k >= mu_decoder.
    rhs = mu_decoder * sigma2 + 4.0 * gamma

    def f(k):
        return k * sigma2 + nm.phi(k) * (k - mu_decoder) - rhs

    hi = mu_decoder + 4.0 * (gamma + 1.0) / sigma2 + 10.0
    return _first_root(f, mu_decoder, hi)


def decoder_input_load_limit(gamma_load, sigma2, mu_decoder):
    """Large-system decoder input mean at fixed repetition-to-user ratio."""
    if gamma_load <= 0.0:
        raise ValueError("load ratio must be positive")
    if mu_decoder < 0.0:
        raise ValueError("decoder feedback mean must be non-negative")
    eq_mean = _asymptotic_equilibrium(gamma_load, sigma2, mu_decoder)
    return 4.0 * gamma_load / (sigma2 + nm.phi(eq_mean))


def decoder_input_energy_limit(gamma_energy, sigma2, mu_decoder):
    """Vanishing-power decoder input mean at fixed energy product
    ``P_i * d_r_i``; returns ``(mu_in, equilibrium_mean)`` so callers can also verify
    the equal-message property: every user's message toward the detector
    equals this value plus the decoder feedback mean."""
    if gamma_energy <= 0.0:
        raise ValueError("energy product must be positive")
    if mu_decoder < 0.0:
        raise ValueError("decoder feedback mean must be non-negative")
    eq_mean = _asymptotic_equilibrium(gamma_energy, sigma2, mu_decoder)
    mu_in = 4.0 * gamma_energy / (sigma2 + nm.phi(eq_mean))
    return mu_in, eq_mean


def gap_surface(profile, points, tol_db=0.01, max_iters=2000):
    """Decoding-threshold gap over a grid of (user count, repetition factor).

    ``points`` is an iterable of ``(n_users, d_r)``; the sum rate of each
    point follows from the fixed profile.  Returns a list of result rows.
    """
    rows = []
    for n_users, d_r in points:
        r_sum = n_users * profile.rate / d_r
        thr = ee.de_threshold(profile, n_users, d_r, r_sum, tol_db=tol_db, max_iters=max_iters)
        if np.isinf(thr):
            gap_db = np.inf
        else:
            gap_db = thr - gmac_ebn0_limit(r_sum)
        rows.append(
            {
                "n_users": n_users,
                "d_r": d_r,
                "gamma_rur": d_r / n_users,
                "threshold_ebn0_db": thr,
                "gap_db": gap_db,
            }
        )
    return rows


def write_gap_surface_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["n_users", "d_r", "gamma_rur", "threshold_ebn0_db", "gap_db"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
