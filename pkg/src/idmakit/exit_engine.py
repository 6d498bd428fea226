"""EXIT transfer functions and Gaussian-approximation density evolution.

The receiver graph couples four node families: the soft-interference-
cancellation detector (one node per received chip), per-user repetition
nodes, and the variable/check node halves of the LDPC code.  This module
tracks only the means of consistent-Gaussian LLR messages through that
graph: analytical transfer curves for each component, the detector/repetition
inner fixed point, the full density-evolution recursion, and the decoding
threshold search.

All analysis here assumes the AWGN channel; fading is handled by Monte-Carlo
simulation only.  Functions are pure; inputs are never mutated.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm

__all__ = [
    "DegreeProfile",
    "MacScenario",
    "ExitCurve",
    "DeTrace",
    "mud_update",
    "mud_exit_curve",
    "rep_updates",
    "mud_rep_fixed_point",
    "vnd_update",
    "cnd_update",
    "vnd_to_rep",
    "de_evolve",
    "de_threshold",
    "rep_exit_curve",
    "cnd_exit_curve",
    "front_end_exit_curve",
    "composite_exit_curve",
    "MI_SUCCESS",
]

# Density evolution declares success once the check-to-variable messages
# carry this much mutual information.
MI_SUCCESS = 1.0 - 1e-6


@dataclass(frozen=True)
class DegreeProfile:
    """Edge-perspective variable-node degree distribution with a regular
    check degree.

    ``degrees``/``fractions`` hold the support of the distribution: the
    fraction of edges attached to variable nodes of each degree.  Check
    nodes all have degree ``d_c``.
    """

    degrees: tuple
    fractions: tuple
    d_c: int
    v_max: int = 320
    c_max: int = 64

    def __post_init__(self):
        degs = np.asarray(self.degrees, dtype=int)
        lam = np.asarray(self.fractions, dtype=float)
        if degs.shape != lam.shape or degs.ndim != 1 or len(degs) == 0:
            raise ValueError("degrees and fractions must be matching 1-D sequences")
        if np.any(degs < 2) or np.any(degs > self.v_max):
            raise ValueError(f"variable-node degrees must lie in [2, {self.v_max}]")
        if len(np.unique(degs)) != len(degs) or np.any(np.diff(degs) <= 0):
            raise ValueError("degrees must be strictly increasing")
        if np.any(lam < 0.0):
            raise ValueError("edge fractions must be non-negative")
        if abs(lam.sum() - 1.0) > 1e-12:
            raise ValueError(f"edge fractions must sum to 1, got {lam.sum()!r}")
        if not (2 <= self.d_c <= self.c_max):
            raise ValueError(f"check degree must lie in [2, {self.c_max}]")
        object.__setattr__(self, "degrees", tuple(int(d) for d in degs))
        object.__setattr__(self, "fractions", tuple(float(f) for f in lam))

    @property
    def degree_array(self):
        return np.asarray(self.degrees, dtype=float)

    @property
    def fraction_array(self):
        return np.asarray(self.fractions, dtype=float)

    @property
    def inv_degree_sum(self):
        """Sum of lambda_i / i, proportional to the variable-node count."""
        return float(self.fraction_array @ (1.0 / self.degree_array))

    @property
    def rate(self):
        """Design rate of the ensemble."""
        return 1.0 - 1.0 / (self.d_c * self.inv_degree_sum)

    def lambda_2(self):
        return self.fractions[self.degrees.index(2)] if 2 in self.degrees else 0.0


def regular_profile(d_v, d_c):
    """Convenience (d_v, d_c)-regular ensemble."""
    return DegreeProfile(degrees=(d_v,), fractions=(1.0,), d_c=d_c)


@dataclass(frozen=True)
class MacScenario:
    """One operating point of the multiple-access channel."""

    n_users: int
    powers: tuple
    sigma2: float
    rep_factors: tuple
    channel: str = "awgn"

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be at least 1")
        p = np.asarray(self.powers, dtype=float)
        r = np.asarray(self.rep_factors, dtype=int)
        if p.shape != (self.n_users,) or r.shape != (self.n_users,):
            raise ValueError("powers and rep_factors must have one entry per user")
        if np.any(p < 0.0):
            raise ValueError("powers must be non-negative")
        if np.any(r < 1):
            raise ValueError("repetition factors must be at least 1")
        if not self.sigma2 > 0.0:
            raise ValueError("noise variance must be positive")
        if self.channel not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel {self.channel!r}")
        object.__setattr__(self, "powers", tuple(float(x) for x in p))
        object.__setattr__(self, "rep_factors", tuple(int(x) for x in r))

    @classmethod
    def equal_power(cls, n_users, sigma2=None, gamma_smu_db=None, d_r=1, channel="awgn"):
        """Symmetric scenario with total unit power split evenly."""
        if (sigma2 is None) == (gamma_smu_db is None):
            raise ValueError("give exactly one of sigma2 or gamma_smu_db")
        if sigma2 is None:
            sigma2 = 10.0 ** (-gamma_smu_db / 10.0)
        return cls(
            n_users=n_users,
            powers=(1.0 / n_users,) * n_users,
            sigma2=float(sigma2),
            rep_factors=(int(d_r),) * n_users,
            channel=channel,
        )

    @property
    def power_array(self):
        return np.asarray(self.powers, dtype=float)

    @property
    def gamma_smu_db(self):
        """Multi-user SNR: total received power over noise variance."""
        return 10.0 * np.log10(sum(self.powers) / self.sigma2)

    @property
    def is_symmetric(self):
        return len(set(self.powers)) == 1 and len(set(self.rep_factors)) == 1

    def _require_symmetric(self, op):
        if not self.is_symmetric:
            raise ValueError(f"{op} requires an equal-power, equal-repetition scenario")


@dataclass(frozen=True)
class ExitCurve:
    """Sampled (I_A, I_E) transfer function of one receiver component."""

    i_a: np.ndarray
    i_e: np.ndarray
    component_tag: str

    _TAGS = ("mud", "mud_rep", "mud_rep_vnd", "cnd", "rep")

    def __post_init__(self):
        ia = np.asarray(self.i_a, dtype=float)
        ie = np.asarray(self.i_e, dtype=float)
        if ia.shape != ie.shape or ia.ndim != 1:
            raise ValueError("i_a and i_e must be matching 1-D arrays")
        if np.any(np.diff(ia) <= 0.0):
            raise ValueError("i_a samples must be strictly increasing")
        if np.any((ie < 0.0) | (ie > 1.0)):
            raise ValueError("i_e values must lie in [0, 1]")
        if self.component_tag not in self._TAGS:
            raise ValueError(f"component_tag must be one of {self._TAGS}")
        object.__setattr__(self, "i_a", ia)
        object.__setattr__(self, "i_e", ie)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i_a", "i_e"])
            for a, e in zip(self.i_a, self.i_e):
                writer.writerow([f"{a:.12g}", f"{e:.12g}"])


def default_mi_grid(n_points=201):
    return np.linspace(0.0, 1.0 - 1e-9, n_points)


def mud_update(mu_in, scenario):
    """One detector update: per-user output means given per-user feedback
    means, for arbitrary powers.
    """
    mu_in = np.asarray(mu_in, dtype=float)
    if mu_in.shape != (scenario.n_users,):
        raise ValueError("mu_in must provide one feedback mean per user")
    p = scenario.power_array
    mmse = nm.phi(mu_in)
    total = float(p @ mmse)
    residual = total - p * mmse  # sum over the other users, per user
    return 4.0 * p / (scenario.sigma2 + residual)


def mud_exit_curve(scenario, grid=None):
    """Detector EXIT curve for the symmetric equal-power scenario."""
    scenario._require_symmetric("mud_exit_curve")
    if grid is None:
        grid = default_mi_grid()
    grid = np.asarray(grid, dtype=float)
    n = scenario.n_users
    mu_a = nm.j_inv(grid)
    mu_e = 4.0 / (n * scenario.sigma2 + (n - 1) * nm.phi(mu_a))
    return ExitCurve(i_a=grid, i_e=nm.j_fun(mu_e), component_tag="mud")


def rep_updates(mu_mud, mu_vnd, d_r):
    """Repetition-node outputs toward the detector and the variable nodes."""
    if d_r < 1:
        raise ValueError("repetition factor must be at least 1")
    mu_mud = np.asarray(mu_mud, dtype=float)
    mu_vnd = np.asarray(mu_vnd, dtype=float)
    to_mud = (d_r - 1.0) * mu_mud + mu_vnd
    to_vnd = float(d_r) * mu_mud
    if to_mud.ndim == 0:
        return float(to_mud), float(to_vnd)
    return to_mud, to_vnd


def mud_rep_fixed_point(scenario, d_r, mu_vnd, tol=1e-10, max_iters=200000, start=None):
    """Smallest non-negative fixed point of the detector/repetition inner
    loop for the symmetric scenario.

    ``mu_vnd`` may be an array; the iteration then runs on all entries at
    once.  ``start`` optionally warm-starts the iteration and must be a
    known lower bound on the fixed point (e.g. the fixed point for a smaller
    ``mu_vnd``); the iteration is monotone from below, so the result is
    unchanged.
    """
    scenario._require_symmetric("mud_rep_fixed_point")
    if d_r < 1:
        raise ValueError("repetition factor must be at least 1")
    mu_vnd = np.asarray(mu_vnd, dtype=float)
    scalar = mu_vnd.ndim == 0
    mu_vnd = np.atleast_1d(mu_vnd)
    n = scenario.n_users
    ceiling = 4.0 / (n * scenario.sigma2)
    shape = mu_vnd.shape
    flat_v = mu_vnd.ravel()
    mu = np.zeros_like(flat_v) if start is None else np.array(start, dtype=float, copy=True).ravel()
    active = np.arange(mu.size)
    threshold = tol * max(1.0, ceiling)
    for _ in range(max_iters):
        cur = mu[active]
        nxt = 4.0 / (n * scenario.sigma2 + (n - 1) * nm.phi((d_r - 1.0) * cur + flat_v[active]))
        mu[active] = nxt
        still = np.abs(nxt - cur) > threshold
        if not np.any(still):
            break
        active = active[still]
    mu = mu.reshape(shape)
    if scalar:
        return float(mu[0])
    return mu


def vnd_update(profile, mu_ch, mu_cnd):
    """Variable-node update for a check-regular ensemble.

    Returns the per-degree means toward the check nodes and the
    lambda-weighted mutual information used when plotting a single curve.
    ``mu_ch`` may be a scalar or one entry per degree (degree-resolved
    channel input from the repetition stage).
    """
    degs = profile.degree_array
    mu_ch = np.asarray(mu_ch, dtype=float)
    per_degree = mu_ch + (degs - 1.0) * mu_cnd
    mi = float(profile.fraction_array @ nm.j_fun(per_degree))
    return per_degree, mi


def cnd_update(d_c, vnd_edge_mmse):
    """Check-node update in the MMSE domain."""
    if not 0.0 <= vnd_edge_mmse <= 1.0:
        raise ValueError("edge-average MMSE must lie in [0, 1]")
    if vnd_edge_mmse == 1.0:
        return 0.0
    target = -np.expm1((d_c - 1) * np.log1p(-vnd_edge_mmse))
    return nm.phi_inv(max(target, 1e-300))


def vnd_to_rep(profile, mu_cnd):
    """Per-degree message from the variable nodes back to the repetition
    stage: all check-edge messages combine (the repetition edge is the
    extrinsic direction)."""
    return profile.degree_array * float(mu_cnd)


@dataclass
class DeTrace:
    """Per-iteration record of a density-evolution run."""

    converged: bool
    iterations: int
    mu_front_end: list = field(default_factory=list)  # lambda-weighted detector output mean
    mu_cnd: list = field(default_factory=list)
    mi_cnd: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "mu_mud", "mu_cnd", "mi_cnd"])
            for k, (a, b, c) in enumerate(zip(self.mu_front_end, self.mu_cnd, self.mi_cnd)):
                writer.writerow([k, f"{a:.12g}", f"{b:.12g}", f"{c:.12g}"])


def de_evolve(profile, scenario, d_r=None, max_iters=2000, stall_eps=1e-9, record=True):
    """Full density-evolution recursion.

    Each outer iteration solves the detector/repetition fixed point per
    variable-node degree (feedback ``i * mu_cnd``), applies the variable-node
    and check-node updates, and stops on success (check-side mutual
    information above ``MI_SUCCESS``), stall, or the iteration cap.
    Non-convergence is a result, not an error.
    """
    scenario._require_symmetric("de_evolve")
    if d_r is None:
        d_r = scenario.rep_factors[0]
    degs = profile.degree_array
    lam = profile.fraction_array
    mu_cnd = 0.0
    mi_prev = 0.0
    fp = np.zeros_like(degs)
    trace = DeTrace(converged=False, iterations=0)
    for it in range(1, max_iters + 1):
        # Warm start is safe: the fixed point grows with the feedback mean.
        fp = mud_rep_fixed_point(scenario, d_r, degs * mu_cnd, start=fp)
        mu_ch = d_r * fp
        per_degree, _ = vnd_update(profile, mu_ch, mu_cnd)
        mmse = float(lam @ nm.phi(per_degree))
        mu_cnd = cnd_update(profile.d_c, mmse)
        mi = nm.j_fun(mu_cnd)
        if record:
            trace.mu_front_end.append(float(lam @ fp))
            trace.mu_cnd.append(float(mu_cnd))
            trace.mi_cnd.append(float(mi))
        trace.iterations = it
        if mi > MI_SUCCESS:
            trace.converged = True
            return trace
        if mi - mi_prev < stall_eps:
            return trace
        mi_prev = mi
    return trace


def _sigma2_from_ebn0_db(ebn0_db, r_sum):
    # Unit total power: Eb/N0 = 1 / (r_sum * sigma2).
    return 1.0 / (r_sum * 10.0 ** (ebn0_db / 10.0))


def de_threshold(
    profile,
    n_users,
    d_r,
    r_sum,
    bracket_db=(-2.0, 12.0),
    tol_db=0.01,
    max_iters=2000,
    stall_eps=1e-9,
):
    """Smallest Eb/N0 (dB) at which density evolution converges.

    Returns ``inf`` when even the top of the bracket fails (threshold open
    above the bracket).
    """
    if r_sum <= 0.0:
        raise ValueError("sum rate must be positive")

    def converges(ebn0_db):
        scen = MacScenario.equal_power(n_users, sigma2=_sigma2_from_ebn0_db(ebn0_db, r_sum), d_r=d_r)
        return de_evolve(profile, scen, d_r, max_iters=max_iters, stall_eps=stall_eps, record=False).converged

    lo, hi = bracket_db
    if not converges(hi):
        return np.inf
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if converges(mid):
            hi = mid
        else:
            lo = mid
    return hi


def tunnel_margin(profile, scenario, d_r, n_grid=256, mu_top=None):
    """Minimum decoding-tunnel clearance in the MMSE domain.

    For each check-to-variable mean ``mu`` on a grid covering [0, success],
    computes ``(1 - sum_i lambda_i phi(mu_vc_i)) - (1 - phi(mu))^(1/(d_c-1))``.
    Density evolution makes progress at ``mu`` exactly when this is positive;
    the minimum over the grid is the sampled tunnel clearance.
    """
    scenario._require_symmetric("tunnel_margin")
    if mu_top is None:
        mu_top = nm.j_inv(MI_SUCCESS)
    grid = np.concatenate([[0.0], np.geomspace(1e-4, mu_top, n_grid - 1)])
    degs = profile.degree_array
    lam = profile.fraction_array
    fp = mud_rep_fixed_point(scenario, d_r, degs[:, None] * grid[None, :])
    mu_vc = d_r * fp + (degs[:, None] - 1.0) * grid[None, :]
    lhs = 1.0 - lam @ nm.phi(mu_vc)
    with np.errstate(under="ignore", divide="ignore"):
        rhs = np.exp(np.log1p(-nm.phi(grid)) / (profile.d_c - 1))
    return float(np.min(lhs - rhs))


def rep_exit_curve(scenario, d_r, grid=None):
    """Repetition-node transfer toward the detector with no outer code."""
    if grid is None:
        grid = default_mi_grid()
    grid = np.asarray(grid, dtype=float)
    mu_a = nm.j_inv(grid)
    return ExitCurve(i_a=grid, i_e=nm.j_fun((d_r - 1.0) * mu_a), component_tag="rep")


def cnd_exit_curve(d_c, grid=None):
    """Check-node transfer curve."""
    if grid is None:
        grid = default_mi_grid()
    grid = np.asarray(grid, dtype=float)
    out = np.empty_like(grid)
    for k, ia in enumerate(grid):
        mmse = nm.phi(nm.j_inv(ia))
        out[k] = nm.j_fun(cnd_update(d_c, mmse))
    return ExitCurve(i_a=grid, i_e=out, component_tag="cnd")


def front_end_exit_curve(scenario, d_r, grid=None):
    """Merged detector + repetition transfer toward the variable nodes."""
    scenario._require_symmetric("front_end_exit_curve")
    if grid is None:
        grid = default_mi_grid()
    grid = np.asarray(grid, dtype=float)
    mu_a = nm.j_inv(grid)
    fp = mud_rep_fixed_point(scenario, d_r, mu_a)
    return ExitCurve(i_a=grid, i_e=nm.j_fun(d_r * fp), component_tag="mud_rep")


def composite_exit_curve(profile, scenario, d_r, grid=None):
    """Merged detector + repetition + variable-node transfer, as seen by the
    check nodes: a-priori mutual information on the check-to-variable edge
    in, lambda-averaged variable-to-check mutual information out."""
    scenario._require_symmetric("composite_exit_curve")
    if grid is None:
        grid = default_mi_grid()
    grid = np.asarray(grid, dtype=float)
    degs = profile.degree_array
    out = np.empty_like(grid)
    fp = np.zeros_like(degs)
    for k, ia in enumerate(grid):
        mu_cnd = nm.j_inv(ia)
        fp = mud_rep_fixed_point(scenario, d_r, degs * mu_cnd, start=fp if k else None)
        _, mi = vnd_update(profile, d_r * fp, mu_cnd)
        out[k] = mi
    return ExitCurve(i_a=grid, i_e=out, component_tag="mud_rep_vnd")
