"""Joint LDPC + repetition degree-profile design.

For a fixed repetition factor and check degree, the variable-node degree
distribution maximizing the LDPC code rate subject to an open decoding
tunnel is a linear program: the tunnel constraint is sampled on a grid of
check-to-variable message means, with the detector/repetition inner fixed
point folded into the constraint coefficients, plus the degree-2 stability
bound.  Sweeping repetition factor and check degree and keeping the best
total rate yields the design; bisection over the noise variance turns the
rate-maximizing design into a rate-targeted one and recovers the decoding
threshold.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from . import exit_engine as ee
from . import numerics as nm
from .exit_engine import DegreeProfile, MacScenario

__all__ = [
    "DesignSpec",
    "DesignResult",
    "lp_design",
    "sweep_design",
    "rate_targeted_design",
    "stability_bound",
    "save_design",
    "load_design",
    "save_profile",
    "load_profile",
]


@dataclass(frozen=True)
class DesignSpec:
    """Inputs of one design problem."""

    n_users: int
    sigma2: float
    v_max: int = 320
    c_max: int = 64
    r_max: int = 8
    target_rate: float = None  # total per-user rate R_c / d_r
    n_grid: int = 64
    rel_slack: float = 1e-5
    min_fraction: float = 1e-4  # support sparsification threshold
    verify_factor: int = 4

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be at least 1")
        if not self.sigma2 > 0.0:
            raise ValueError("noise variance must be positive")
        if self.v_max < 2 or self.c_max < 2 or self.r_max < 1:
            raise ValueError("degree caps must allow at least one valid profile")
        if self.n_grid < 40:
            raise ValueError("constraint grid needs at least 40 samples")
        if self.target_rate is not None and not 0.0 < self.target_rate < 1.0:
            raise ValueError("target total rate must lie in (0, 1)")


@dataclass(frozen=True)
class DesignResult:
    """One designed ensemble with its bookkeeping."""

    profile: DegreeProfile = None
    d_r: int = 0
    rate_ldpc: float = 0.0
    rate_total: float = 0.0
    lp_status: str = "infeasible"
    n_users: int = 0
    sigma2: float = 0.0

    @property
    def feasible(self):
        return self.lp_status == "optimal"


def stability_bound(n_users, sigma2, d_c):
    """Upper bound on the degree-2 edge fraction.

    Equals ``exp(mu_ch / 4) / (d_c - 1)`` for the single-user-style channel
    mean ``mu_ch = 4 / (N sigma2)``; unbounded when the exponent overflows.
    """
    if d_c < 2:
        raise ValueError("check degree must be at least 2")
    if n_users < 1 or sigma2 <= 0.0:
        raise ValueError("invalid scenario parameters")
    expo = 1.0 / (n_users * sigma2)
    if expo > 700.0:
        return math.inf
    return math.exp(expo) / (d_c - 1)


def _constraint_grid(n_grid):
    mu_top = nm.j_inv(ee.MI_SUCCESS)
    return np.geomspace(1e-3, mu_top, n_grid)


def _tunnel_coefficients(spec, d_r, mu_grid):
    """phi(d_r * fixed_point(i * mu) + (i - 1) * mu) per degree and grid mean.

    Shared by every check degree at fixed (scenario, d_r).
    """
    degrees = np.arange(2, spec.v_max + 1)
    scen = MacScenario.equal_power(spec.n_users, sigma2=spec.sigma2, d_r=d_r)
    feedback = degrees[:, None] * mu_grid[None, :]
    fp = ee.mud_rep_fixed_point(scen, d_r, feedback)
    coef = nm.phi(d_r * fp + (degrees[:, None] - 1.0) * mu_grid[None, :])
    return degrees, coef


def _tunnel_rhs(mu_grid, d_c, rel_slack):
    with np.errstate(under="ignore", divide="ignore"):
        rhs = -np.expm1(np.log1p(-nm.phi(mu_grid)) / (d_c - 1))
    return rhs * (1.0 - rel_slack)


def _solve_lp(degrees, coef, rhs, lam2_cap):
    c = -1.0 / degrees
    bounds = [(0.0, lam2_cap if d == 2 else None) for d in degrees]
    res = linprog(
        c,
        A_ub=coef.T,
        b_ub=rhs,
        A_eq=np.ones((1, len(degrees))),
        b_eq=[1.0],
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return None
    if not res.success:
        raise RuntimeError(f"LP solver failure: {res.message}")
    return res.x


def _verify_and_sparsify(spec, d_r, d_c, degrees, lam, mu_grid, coef):
    """Drop negligible support, then re-check the tunnel constraint on a
    finer grid, appending violated points and re-solving when needed."""
    fine_grid = _constraint_grid(spec.n_grid * spec.verify_factor)
    scen = MacScenario.equal_power(spec.n_users, sigma2=spec.sigma2, d_r=d_r)
    lam2_cap = min(stability_bound(spec.n_users, spec.sigma2, d_c), 1.0)

    for _ in range(4):
        keep = lam > spec.min_fraction
        if not np.any(keep):
            return None, mu_grid, coef
        lam_s = lam[keep] / lam[keep].sum()
        profile = DegreeProfile(
            degrees=tuple(int(d) for d in degrees[keep]),
            fractions=tuple(lam_s),
            d_c=d_c,
            v_max=spec.v_max,
            c_max=spec.c_max,
        )
        margin = ee.tunnel_margin(profile, scen, d_r, n_grid=len(fine_grid), mu_top=fine_grid[-1])
        if margin > 0.0:
            return profile, mu_grid, coef
        # Find and append the violated fine-grid points, then re-solve.
        degs_full, coef_fine = _tunnel_coefficients(spec, d_r, fine_grid)
        rhs_fine = _tunnel_rhs(fine_grid, d_c, 0.0)
        lam_full = np.zeros(len(degs_full))
        lam_full[np.asarray(degrees[keep]) - 2] = lam_s
        violated = (lam_full @ coef_fine) > rhs_fine
        if not np.any(violated):
            return profile, mu_grid, coef
        mu_grid = np.sort(np.concatenate([mu_grid, fine_grid[violated]]))
        _, coef = _tunnel_coefficients(spec, d_r, mu_grid)
        lam = _solve_lp(degs_full, coef, _tunnel_rhs(mu_grid, d_c, spec.rel_slack), lam2_cap)
        if lam is None:
            return None, mu_grid, coef
    return profile, mu_grid, coef


def lp_design(spec, d_r, d_c, _coef_cache=None):
    """Rate-maximizing degree profile for fixed repetition and check degree.

    Infeasibility is reported through ``lp_status``, not an exception.
    """
    if not 1 <= d_r <= spec.r_max:
        raise ValueError("repetition factor outside the design caps")
    if not 2 <= d_c <= spec.c_max:
        raise ValueError("check degree outside the design caps")
    mu_grid = _constraint_grid(spec.n_grid)
    if _coef_cache is not None and d_r in _coef_cache:
        degrees, coef = _coef_cache[d_r]
    else:
        degrees, coef = _tunnel_coefficients(spec, d_r, mu_grid)
        if _coef_cache is not None:
            _coef_cache[d_r] = (degrees, coef)
    lam2_cap = min(stability_bound(spec.n_users, spec.sigma2, d_c), 1.0)
    lam = _solve_lp(degrees, coef, _tunnel_rhs(mu_grid, d_c, spec.rel_slack), lam2_cap)
    if lam is None:
        return DesignResult(n_users=spec.n_users, sigma2=spec.sigma2, d_r=d_r)
    profile, _, _ = _verify_and_sparsify(spec, d_r, d_c, degrees, lam, mu_grid.copy(), coef)
    if profile is None:
        return DesignResult(n_users=spec.n_users, sigma2=spec.sigma2, d_r=d_r)
    rate = profile.rate
    if rate <= 0.0:
        return DesignResult(n_users=spec.n_users, sigma2=spec.sigma2, d_r=d_r)
    return DesignResult(
        profile=profile,
        d_r=d_r,
        rate_ldpc=rate,
        rate_total=rate / d_r,
        lp_status="optimal",
        n_users=spec.n_users,
        sigma2=spec.sigma2,
    )


def sweep_design(spec, d_r_fixed=None):
    """Best design over the repetition/check-degree sweep; ties go to the
    smaller repetition factor, then the smaller check degree."""
    best = DesignResult(n_users=spec.n_users, sigma2=spec.sigma2)
    rep_range = [d_r_fixed] if d_r_fixed is not None else range(1, spec.r_max + 1)
    for d_r in rep_range:
        cache = {}
        for d_c in range(2, spec.c_max + 1):
            result = lp_design(spec, d_r, d_c, _coef_cache=cache)
            if result.feasible and result.rate_total > best.rate_total + 1e-12:
                best = result
    return best


def rate_targeted_design(spec, d_r=None, sigma2_bracket=(1e-4, 16.0), tol=1e-4, max_steps=60):
    """Bisect the noise variance until the swept design meets the target
    total rate; returns ``(result, sigma2_threshold)``.

    The achievable rate decreases with noise, so the threshold is the worst
    noise level still supporting the target.
    """
    if spec.target_rate is None:
        raise ValueError("spec.target_rate must be set")

    def rate_at(sigma2):
        return sweep_design(replace(spec, sigma2=sigma2), d_r_fixed=d_r)

    lo, hi = sigma2_bracket
    r_lo = rate_at(lo)
    if not r_lo.feasible or r_lo.rate_total < spec.target_rate - tol:
        raise ArithmeticError(
            f"target rate {spec.target_rate} unreachable even at sigma2={lo}"
            f" (achieved {r_lo.rate_total:.6f})"
        )
    r_hi = rate_at(hi)
    if r_hi.feasible and r_hi.rate_total >= spec.target_rate:
        raise ArithmeticError(f"target rate met at the top of the bracket sigma2={hi}")
    best = r_lo
    best_sigma2 = lo
    for _ in range(max_steps):
        mid = math.sqrt(lo * hi)
        r_mid = rate_at(mid)
        if r_mid.feasible and r_mid.rate_total >= spec.target_rate:
            best, best_sigma2 = r_mid, mid
            lo = mid
        else:
            hi = mid
        if best.feasible and abs(best.rate_total - spec.target_rate) <= tol and hi / lo < 1.001:
            break
    return best, best_sigma2


# ---------------------------------------------------------------------------
# profile / design file format: plain text, one key-value pair per line,
# lambda entries as "lambda <degree> <fraction>".

def save_profile(profile, path, header=()):
    lines = list(header)
    lines.append(f"d_c {profile.d_c}")
    lines.append(f"v_max {profile.v_max}")
    lines.append(f"c_max {profile.c_max}")
    for d, f in zip(profile.degrees, profile.fractions):
        lines.append(f"lambda {d} {f:.12g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_profile_lines(lines):
    fields = {}
    lam = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "lambda":
            lam[int(parts[1])] = float(parts[2])
        else:
            fields[parts[0]] = parts[1]
    if not lam:
        raise ValueError("profile file holds no lambda entries")
    degrees = tuple(sorted(lam))
    return fields, DegreeProfile(
        degrees=degrees,
        fractions=tuple(lam[d] for d in degrees),
        d_c=int(fields["d_c"]),
        v_max=int(fields.get("v_max", 320)),
        c_max=int(fields.get("c_max", 64)),
    )


def load_profile(path):
    with open(path) as fh:
        _, profile = _parse_profile_lines(fh.readlines())
    return profile


def save_design(result, path):
    if not result.feasible:
        raise ValueError("cannot serialize an infeasible design")
    header = [
        f"n_users {result.n_users}",
        f"sigma2 {result.sigma2:.12g}",
        f"d_r {result.d_r}",
        f"rate_ldpc {result.rate_ldpc:.12g}",
        f"rate_total {result.rate_total:.12g}",
    ]
    save_profile(result.profile, path, header=header)


def load_design(path):
    with open(path) as fh:
        fields, profile = _parse_profile_lines(fh.readlines())
    d_r = int(fields["d_r"])
    return DesignResult(
        profile=profile,
        d_r=d_r,
        rate_ldpc=profile.rate,
        rate_total=profile.rate / d_r,
        lp_status="optimal",
        n_users=int(fields.get("n_users", 0)),
        sigma2=float(fields.get("sigma2", 0.0)),
    )
