"""Monte-Carlo multi-user link simulation.

Transmit chain per user: LDPC encode (optional), repetition encode,
user-specific interleaving, BPSK mapping with per-chip phase scrambling,
power scaling.  All users superimpose on one complex AWGN or Rayleigh
observation.  The receiver sweeps the users with soft interference
cancellation, per-user demapping, repetition combining, and one
(configurable) belief-propagation pass per outer iteration; soft estimates
refresh serially within the sweep, decoder state carries across outer
iterations, and frames exit early once every syndrome passes.

Users may carry different repetition factors (including quasi-regular
fractional averages); the common frame length is the least common multiple
of the per-user block lengths, so higher-rate users simply send more code
blocks per frame.

Frames are independent units of work: every frame derives its random
streams from (master seed, frame index) only, so results are bit-identical
for any worker count.
"""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codes as cd

__all__ = [
    "UserConfig",
    "SimPoint",
    "SimReport",
    "LinkSimulator",
    "soic_cancel",
    "demap_llr",
    "estimate_interference",
    "measure_mi",
    "balanced_rep_factors",
    "quasi_regular_counts",
    "measure_trajectory",
    "simulate_ber",
    "uniform_users",
    "two_group_users",
]


@dataclass(frozen=True)
class UserConfig:
    """Per-user transmit parameters.

    ``rep`` is an integer factor or a per-symbol count vector whose length
    matches the code block (quasi-regular repetition).
    """

    power: float
    rep: object = 1

    def __post_init__(self):
        if not self.power > 0.0:
            raise ValueError("user power must be positive")
        if np.isscalar(self.rep):
            if int(self.rep) < 1:
                raise ValueError("repetition factor must be at least 1")
        else:
            counts = np.asarray(self.rep, dtype=np.int64)
            if counts.ndim != 1 or np.any(counts < 1):
                raise ValueError("repetition counts must be positive integers")
            object.__setattr__(self, "rep", counts)

    def chip_count(self, block_len):
        if np.isscalar(self.rep):
            return int(self.rep) * block_len
        if len(self.rep) != block_len:
            raise ValueError("repetition counts must match the block length")
        return int(np.sum(self.rep))


def uniform_users(n_users, d_r):
    """Equal power split with a common repetition factor."""
    return [UserConfig(power=1.0 / n_users, rep=d_r) for _ in range(n_users)]


def two_group_users(n_users, power_ratio, rep_strong, rep_weak):
    """Half strong / half weak users; total power 1."""
    if n_users % 2:
        raise ValueError("two-group split needs an even user count")
    p_weak = 2.0 / (n_users * (1.0 + power_ratio))
    p_strong = power_ratio * p_weak
    half = n_users // 2
    return [UserConfig(power=p_strong, rep=rep_strong) for _ in range(half)] + [
        UserConfig(power=p_weak, rep=rep_weak) for _ in range(half)
    ]


def balanced_rep_factors(d_r_base, power_ratio):
    """Repetition factors balancing per-user energy across a two-group
    power split: the weak group repeats ``power_ratio`` times more while the
    harmonic mean of the factors keeps the base value.

    Returns ``(rep_strong, rep_weak)``; non-integer values are valid and can
    be realized with :func:`quasi_regular_counts`.
    """
    if power_ratio <= 0.0:
        raise ValueError("power ratio must be positive")
    rep_strong = d_r_base * (1.0 + power_ratio) / (2.0 * power_ratio)
    rep_weak = power_ratio * rep_strong
    return rep_strong, rep_weak


def quasi_regular_counts(average_factor, block_len):
    """Deterministic per-symbol repetition counts with the requested average.

    ``average_factor * block_len`` must be an integer; the extra repetitions
    are spread evenly over the block.
    """
    total = average_factor * block_len
    if abs(total - round(total)) > 1e-9:
        raise ValueError("average factor times block length must be integral")
    total = int(round(total))
    base = total // block_len
    if base < 1:
        raise ValueError("average repetition factor must be at least 1")
    counts = np.full(block_len, base, dtype=np.int64)
    extra = total - base * block_len
    if extra:
        counts[np.linspace(0, block_len - 1, extra).astype(int)] += 1
    return counts


def soic_cancel(y, soft_symbols, gains, powers, target):
    """Residual observation for one user after removing the soft estimates
    of all the others."""
    contributions = np.sqrt(np.asarray(powers)[:, None]) * gains * soft_symbols
    total = contributions.sum(axis=0)
    return y - (total - contributions[target])


def demap_llr(y_res, gain, phase, power, sigma2_i, sigma2_n):
    """Chip LLR from a residual observation, treating residual interference
    as Gaussian."""
    denom = np.maximum(sigma2_i + sigma2_n, 1e-12)
    return 4.0 * np.sqrt(power) * np.real(y_res * np.conj(gain) * np.exp(-1j * phase)) / denom


def estimate_interference(soft_amplitudes, gains_sq, powers, per_chip):
    """Residual interference power after cancellation.

    ``soft_amplitudes`` holds tanh(L/2) per user and chip.  With ``per_chip``
    the estimate keeps the chip axis (fading channels); otherwise the
    expectation runs over the frame.  Returns the total across users; the
    per-user value is the total minus the user's own contribution.
    """
    residual = 1.0 - soft_amplitudes**2
    p = np.asarray(powers)[:, None]
    if per_chip:
        contrib = p * gains_sq * residual
        return contrib.sum(axis=0), contrib
    contrib = (p * gains_sq * residual).mean(axis=1, keepdims=True)
    return contrib.sum(axis=0), contrib


def measure_mi(llrs, true_bits):
    """Mutual-information estimate from LLR samples against known bits."""
    signs = 1.0 - 2.0 * np.asarray(true_bits, dtype=float)
    x = np.asarray(llrs, dtype=float) * signs
    return float(1.0 - np.mean(np.logaddexp(0.0, -x)) / np.log(2.0))


@dataclass
class FrameResult:
    bits: int = 0
    bit_errors: int = 0
    frame_errors: int = 0
    user_frames: int = 0
    undetected_frames: int = 0
    outer_iters: int = 0
    trajectory: np.ndarray = None  # (iters, 2): measured (i_a, i_e)


@dataclass
class SimPoint:
    ebn0_db: float
    frames: int = 0
    bits: int = 0
    bit_errors: int = 0
    frame_errors: int = 0
    user_frames: int = 0
    undetected_frames: int = 0
    sum_outer_iters: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self):
        return self.frame_errors / self.user_frames if self.user_frames else 0.0

    @property
    def mean_outer_iters(self):
        return self.sum_outer_iters / self.frames if self.frames else 0.0


@dataclass
class SimReport:
    points: list = field(default_factory=list)
    master_seed: int = 0
    trajectory: np.ndarray = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["ebn0_db", "frames", "bits", "bit_errors", "frame_errors", "ber", "fer", "mean_outer_iters"]
            )
            for p in self.points:
                writer.writerow(
                    [
                        f"{p.ebn0_db:.6g}",
                        p.frames,
                        p.bits,
                        p.bit_errors,
                        p.frame_errors,
                        f"{p.ber:.6g}",
                        f"{p.fer:.6g}",
                        f"{p.mean_outer_iters:.6g}",
                    ]
                )

    def write_trajectory_csv(self, path):
        if self.trajectory is None:
            raise ValueError("no trajectory was recorded")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "i_a_measured", "i_e_measured"])
            for k, (ia, ie) in enumerate(self.trajectory):
                writer.writerow([k + 1, f"{ia:.6g}", f"{ie:.6g}"])


class LinkSimulator:
    """End-to-end transceiver for one user population and code.

    ``h`` may be None for a repetition-only system, in which case
    ``info_block_len`` sets the per-block payload size.
    """

    def __init__(
        self,
        users,
        h=None,
        info_block_len=None,
        channel="awgn",
        master_seed=0,
        outer_iters=200,
        inner_bp_iters=1,
        phase_mode="per_chip",
        variance_mode="per_chip",
        all_zero_payload=False,
    ):
        if channel not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel {channel!r}")
        if phase_mode not in ("per_chip", "per_user", "none"):
            raise ValueError(f"unknown phase mode {phase_mode!r}")
        if variance_mode not in ("per_chip", "frame_mean"):
            raise ValueError(f"unknown variance mode {variance_mode!r}")
        self.variance_mode = variance_mode
        self.users = list(users)
        self.n_users = len(self.users)
        self.h = h
        self.channel = channel
        self.master_seed = int(master_seed)
        self.outer_iters = int(outer_iters)
        self.inner_bp_iters = int(inner_bp_iters)
        self.phase_mode = phase_mode
        self.all_zero_payload = bool(all_zero_payload)

        if h is not None:
            self.encoder = cd.LdpcEncoder(h)
            self.block_len = h.n_cols
            self.info_len = self.encoder.k
        else:
            if info_block_len is None:
                raise ValueError("info_block_len is required without an outer code")
            self.encoder = None
            self.block_len = int(info_block_len)
            self.info_len = int(info_block_len)

        chips_per_block = [u.chip_count(self.block_len) for u in self.users]
        frame_chips = chips_per_block[0]
        for c in chips_per_block[1:]:
            frame_chips = frame_chips * c // math.gcd(frame_chips, c)
        self.frame_chips = frame_chips
        self.blocks_per_user = [frame_chips // c for c in chips_per_block]
        self.total_blocks = int(sum(self.blocks_per_user))
        self.powers = np.array([u.power for u in self.users])
        self.info_bits_per_frame = self.info_len * self.total_blocks
        self.sum_rate = self.info_bits_per_frame / self.frame_chips

        # User-specific interleavers, one per code block.
        self.interleavers = []
        for u_idx, user in enumerate(self.users):
            per_block = []
            chips = user.chip_count(self.block_len)
            for b in range(self.blocks_per_user[u_idx]):
                per_block.append(cd.make_interleaver(u_idx * 4096 + b, self.master_seed, chips))
            self.interleavers.append(per_block)

        # Flattened (user, block) bookkeeping for the batched decoder.
        self.block_user = np.repeat(np.arange(self.n_users), self.blocks_per_user)

    def sigma2_for_ebn0(self, ebn0_db):
        """Noise variance giving the requested Eb/N0 at this population's
        realized sum rate (total received power is 1)."""
        total_power = float(self.powers.sum())
        return total_power / (self.sum_rate * 10.0 ** (ebn0_db / 10.0))

    # -- per-frame pipeline -------------------------------------------------

    def _frame_rngs(self, frame_idx):
        root = np.random.SeedSequence((self.master_seed, int(frame_idx)))
        children = root.spawn(3)
        return (
            np.random.default_rng(children[0]),  # payloads
            np.random.default_rng(children[1]),  # channel noise / fading
            np.random.default_rng(children[2]),  # phase scrambling
        )

    def transmit(self, frame_idx):
        """Generate one frame; returns a dict with everything the receiver
        and the scoring need."""
        rng_data, rng_chan, rng_phase = self._frame_rngs(frame_idx)
        info = np.zeros((self.total_blocks, self.info_len), dtype=np.uint8)
        if not self.all_zero_payload:
            info[:] = rng_data.integers(0, 2, info.shape, dtype=np.uint8)

        chips = np.empty((self.n_users, self.frame_chips))
        chip_bits = np.empty((self.n_users, self.frame_chips), dtype=np.uint8)
        blk = 0
        for u_idx, user in enumerate(self.users):
            parts = []
            for b in range(self.blocks_per_user[u_idx]):
                block = self.encoder.encode(info[blk]) if self.encoder else info[blk]
                repeated = cd.rep_encode(block, user.rep)
                parts.append(self.interleavers[u_idx][b].apply(repeated))
                blk += 1
            chip_bits[u_idx] = np.concatenate(parts)
            chips[u_idx] = 1.0 - 2.0 * chip_bits[u_idx].astype(float)

        if self.phase_mode == "per_chip":
            phases = rng_phase.uniform(0.0, np.pi, size=(self.n_users, self.frame_chips))
        elif self.phase_mode == "per_user":
            phases = np.broadcast_to(
                rng_phase.uniform(0.0, np.pi, size=(self.n_users, 1)), (self.n_users, self.frame_chips)
            ).copy()
        else:
            phases = np.zeros((self.n_users, self.frame_chips))
        if self.channel == "rayleigh":
            gains = (
                rng_chan.normal(size=(self.n_users, self.frame_chips))
                + 1j * rng_chan.normal(size=(self.n_users, self.frame_chips))
            ) / np.sqrt(2.0)
            phases = np.zeros_like(phases)  # scrambling is redundant under fading
        else:
            gains = np.ones((self.n_users, self.frame_chips), dtype=complex)
        return {
            "info": info,
            "chips": chips,
            "chip_bits": chip_bits,
            "phases": phases,
            "gains": gains,
            "rng_chan": rng_chan,
        }

    def receive(self, y, tx, sigma2, record_trajectory=False):
        """Iterative reception with serial per-user cancellation refresh.

        Within each outer sweep the users are processed in order; every
        user's soft estimate and residual-power contribution are replaced
        immediately after its decode step.  The parallel (simultaneous)
        refresh oscillates at high load, while the serial sweep converges
        and tracks the mean-evolution analysis.
        """
        gains = tx["gains"]
        phases = tx["phases"]
        gains_sq = np.abs(gains) ** 2
        sqrt_p = np.sqrt(self.powers)
        per_chip = self.variance_mode == "per_chip"
        phasors = np.exp(1j * phases)
        rotators = np.conj(gains) * np.conj(phasors)  # matched-filter rotation per chip

        feedback = np.zeros((self.n_users, self.frame_chips))
        chip_llr = np.zeros_like(feedback)
        amp = np.zeros_like(feedback)
        contributions = np.zeros((self.n_users, self.frame_chips), dtype=complex)
        total_est = contributions.sum(axis=0)
        if per_chip:
            resid = self.powers[:, None] * gains_sq
        else:
            resid = np.repeat(self.powers[:, None] * gains_sq.mean(axis=1, keepdims=True), self.frame_chips, axis=1)
        sigma_total = resid.sum(axis=0)

        bp_state = np.zeros((self.total_blocks, self.h.n_edges)) if self.encoder is not None else None
        decided = np.zeros((self.total_blocks, self.info_len), dtype=np.uint8)
        syn_ok = np.zeros(self.total_blocks, dtype=bool)
        block_of_user = np.concatenate([[0], np.cumsum(self.blocks_per_user)])
        trajectory = []
        iters_used = self.outer_iters

        for it in range(1, self.outer_iters + 1):
            if record_trajectory:
                trajectory.append([measure_mi(feedback, tx["chip_bits"]), 0.0])
            for u_idx, user in enumerate(self.users):
                y_res = y - (total_est - contributions[u_idx])
                denom = np.maximum((sigma_total - resid[u_idx]) + sigma2, 1e-12)
                chip_llr[u_idx] = np.clip(
                    4.0 * sqrt_p[u_idx] * np.real(y_res * rotators[u_idx]) / denom,
                    -cd.LLR_CLAMP,
                    cd.LLR_CLAMP,
                )
                chips_u = user.chip_count(self.block_len)
                n_blocks = self.blocks_per_user[u_idx]
                deint = np.empty((n_blocks, chips_u))
                block_llrs = np.empty((n_blocks, self.block_len))
                for b in range(n_blocks):
                    sl = slice(b * chips_u, (b + 1) * chips_u)
                    deint[b] = self.interleavers[u_idx][b].invert(chip_llr[u_idx, sl])
                    block_llrs[b], _ = cd.rep_combine(deint[b], user.rep)
                lo, hi = block_of_user[u_idx], block_of_user[u_idx + 1]
                if self.encoder is not None:
                    res = cd.bp_decode(
                        self.h, block_llrs, n_iters=self.inner_bp_iters, state=bp_state[lo:hi]
                    )
                    bp_state[lo:hi] = res.state
                    ext = np.atleast_2d(res.extrinsic)
                    decided[lo:hi] = np.atleast_2d(res.hard)[:, self.encoder.info_cols]
                    syn_ok[lo:hi] = res.syndrome_ok
                else:
                    ext = np.zeros_like(block_llrs)
                    decided[lo:hi] = (block_llrs < 0.0).astype(np.uint8)
                for b in range(n_blocks):
                    sl = slice(b * chips_u, (b + 1) * chips_u)
                    _, chip_ext = cd.rep_combine(deint[b], user.rep, ext[b])
                    feedback[u_idx, sl] = self.interleavers[u_idx][b].apply(chip_ext)
                feedback[u_idx] = np.clip(feedback[u_idx], -cd.LLR_CLAMP, cd.LLR_CLAMP)

                amp[u_idx] = np.tanh(0.5 * feedback[u_idx])
                new_contrib = sqrt_p[u_idx] * gains[u_idx] * amp[u_idx] * phasors[u_idx]
                total_est = total_est + (new_contrib - contributions[u_idx])
                contributions[u_idx] = new_contrib
                res_u = self.powers[u_idx] * gains_sq[u_idx] * (1.0 - amp[u_idx] ** 2)
                if not per_chip:
                    res_u = np.full(self.frame_chips, res_u.mean())
                sigma_total = sigma_total + (res_u - resid[u_idx])
                resid[u_idx] = res_u

            if record_trajectory:
                trajectory[-1][1] = measure_mi(chip_llr, tx["chip_bits"])
            if self.encoder is not None and bool(np.all(syn_ok)):
                iters_used = it
                break

        return decided, iters_used, (np.array(trajectory) if record_trajectory else None)

    def run_frame(self, frame_idx, sigma2, record_trajectory=False):
        tx = self.transmit(frame_idx)
        rng_chan = tx["rng_chan"]
        clean = (np.sqrt(self.powers)[:, None] * tx["gains"] * np.exp(1j * tx["phases"]) * tx["chips"]).sum(axis=0)
        noise = np.sqrt(sigma2 / 2.0) * (
            rng_chan.normal(size=self.frame_chips) + 1j * rng_chan.normal(size=self.frame_chips)
        )
        y = clean + noise

        decided, iters_used, trajectory = self.receive(y, tx, sigma2, record_trajectory)
        errors_per_block = np.sum(decided != tx["info"], axis=1)
        result = FrameResult(
            bits=self.info_bits_per_frame,
            bit_errors=int(errors_per_block.sum()),
            frame_errors=int(np.count_nonzero(errors_per_block)),
            user_frames=self.total_blocks,
            undetected_frames=0,
            outer_iters=iters_used,
            trajectory=trajectory,
        )
        if self.encoder is not None and iters_used < self.outer_iters and result.bit_errors:
            result.undetected_frames = int(np.count_nonzero(errors_per_block))
        return result


_POOL_SIM = None
_POOL_SIGMA2 = None
_POOL_TRAJ = False


def _pool_init(sim, sigma2, record_trajectory):
    global _POOL_SIM, _POOL_SIGMA2, _POOL_TRAJ
    _POOL_SIM = sim
    _POOL_SIGMA2 = sigma2
    _POOL_TRAJ = record_trajectory


def _pool_frame(frame_idx):
    return frame_idx, _POOL_SIM.run_frame(frame_idx, _POOL_SIGMA2, _POOL_TRAJ)


def measure_trajectory(sim, sigma2, n_frames=10):
    """Average measured (I_A, I_E) staircase over frames at fixed noise.

    I_A samples the detector prior at the start of each sweep; because the
    sweep refreshes estimates serially, the prior effectively consumed
    mid-sweep lies between consecutive samples.
    """
    trajs = []
    for f in range(n_frames):
        fr = sim.run_frame(f, sigma2, record_trajectory=True)
        if fr.trajectory is not None:
            trajs.append(fr.trajectory)
    n = min(len(t) for t in trajs)
    return np.mean([t[:n] for t in trajs], axis=0)


def simulate_ber(
    sim,
    ebn0_db_list,
    min_bit_errors=200,
    max_frames=2000,
    workers=1,
    record_trajectory=False,
    chunk=8,
):
    """Sweep Eb/N0 points, stopping each at the error or frame budget.

    Results are deterministic in (master seed, frame index) regardless of the
    worker count; trajectories are averaged in frame order.
    """
    report = SimReport(master_seed=sim.master_seed)
    traj_sum = None
    traj_frames = 0
    for ebn0_db in ebn0_db_list:
        sigma2 = sim.sigma2_for_ebn0(ebn0_db)
        point = SimPoint(ebn0_db=ebn0_db)
        frame_idx = 0
        results = []
        if workers <= 1:
            while point.frames < max_frames and point.bit_errors < min_bit_errors:
                results.append((frame_idx, sim.run_frame(frame_idx, sigma2, record_trajectory)))
                _accumulate(point, results[-1][1])
                frame_idx += 1
        else:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_pool_init, initargs=(sim, sigma2, record_trajectory)
            ) as pool:
                while point.frames < max_frames and point.bit_errors < min_bit_errors:
                    n_next = min(chunk * workers, max_frames - point.frames)
                    batch = list(pool.map(_pool_frame, range(frame_idx, frame_idx + n_next)))
                    batch.sort(key=lambda kv: kv[0])
                    for _, fr in batch:
                        _accumulate(point, fr)
                    results.extend(batch)
                    frame_idx += n_next
        if record_trajectory:
            for _, fr in sorted(results, key=lambda kv: kv[0]):
                if fr.trajectory is not None and len(fr.trajectory):
                    padded = fr.trajectory
                    if traj_sum is None:
                        traj_sum = np.zeros_like(padded)
                    if len(padded) < len(traj_sum):
                        # A frame that exited early holds its final values.
                        pad = np.repeat(padded[-1:], len(traj_sum) - len(padded), axis=0)
                        padded = np.vstack([padded, pad])
                    elif len(padded) > len(traj_sum):
                        pad = np.repeat(traj_sum[-1:], len(padded) - len(traj_sum), axis=0)
                        traj_sum = np.vstack([traj_sum, pad])
                    traj_sum += padded
                    traj_frames += 1
        report.points.append(point)
    if traj_sum is not None and traj_frames:
        report.trajectory = traj_sum / traj_frames
    return report


def _accumulate(point, fr):
    point.frames += 1
    point.bits += fr.bits
    point.bit_errors += fr.bit_errors
    point.frame_errors += fr.frame_errors
    point.user_frames += fr.user_frames
    point.undetected_frames += fr.undetected_frames
    point.sum_outer_iters += fr.outer_iters
