"""Finite-length code machinery: parity-check matrix sampling, girth-based
selection, encoding, batched sum-product decoding, repetition combining, and
seeded user-specific interleavers.

Parity-check matrices are stored as edge lists grouped by check node, which
is the layout the flooding decoder wants; adjacency in the other direction
is derived on demand.  All randomized constructions are deterministic
functions of their seeds.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParityCheckMatrix",
    "Interleaver",
    "BpResult",
    "LdpcEncoder",
    "sample_parity_check",
    "select_best_matrix",
    "average_girth",
    "ldpc_encode",
    "bp_decode",
    "rep_encode",
    "rep_combine",
    "make_interleaver",
    "write_alist",
    "read_alist",
    "LLR_CLAMP",
]

LLR_CLAMP = 50.0

_GIRTH_DEPTH_CAP = 12  # cycles longer than this count as 14
_GIRTH_BEYOND_CAP = 14


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse binary parity-check matrix as an edge list grouped by row."""

    n_rows: int
    n_cols: int
    edge_vn: np.ndarray  # column index per edge, grouped by row
    edge_cn: np.ndarray  # row index per edge, non-decreasing
    seed: int = 0
    profile_tag: str = ""

    def __post_init__(self):
        ev = np.ascontiguousarray(np.asarray(self.edge_vn, dtype=np.int64))
        ec = np.ascontiguousarray(np.asarray(self.edge_cn, dtype=np.int64))
        if ev.shape != ec.shape or ev.ndim != 1:
            raise ValueError("edge arrays must be matching 1-D sequences")
        if np.any(np.diff(ec) < 0):
            raise ValueError("edges must be grouped by row")
        if len(ev) and (ev.min() < 0 or ev.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if len(ec) and (ec.min() < 0 or ec.max() >= self.n_rows):
            raise ValueError("row index out of range")
        pairs = ec * self.n_cols + ev
        if len(np.unique(pairs)) != len(pairs):
            raise ValueError("parallel edges are not allowed")
        object.__setattr__(self, "edge_vn", ev)
        object.__setattr__(self, "edge_cn", ec)
        object.__setattr__(self, "_row_starts", np.searchsorted(ec, np.arange(self.n_rows)))
        object.__setattr__(self, "_flat_vn_cache", {})

    @property
    def n_edges(self):
        return len(self.edge_vn)

    def row_starts(self):
        return self._row_starts

    def _flat_vn(self, batch):
        cached = self._flat_vn_cache.get(batch)
        if cached is None:
            cached = (np.arange(batch)[:, None] * self.n_cols + self.edge_vn[None, :]).ravel()
            self._flat_vn_cache[batch] = cached
        return cached

    def column_degrees(self):
        return np.bincount(self.edge_vn, minlength=self.n_cols)

    def row_degrees(self):
        return np.bincount(self.edge_cn, minlength=self.n_rows)

    def to_dense(self):
        dense = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        dense[self.edge_cn, self.edge_vn] = 1
        return dense

    def adjacency(self):
        """CSR adjacency of the bipartite graph; variable nodes come first,
        check nodes are offset by ``n_cols``."""
        n_nodes = self.n_cols + self.n_rows
        degrees = np.concatenate([self.column_degrees(), self.row_degrees()])
        indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(degrees, out=indptr[1:])
        indices = np.empty(2 * self.n_edges, dtype=np.int64)
        fill = indptr[:-1].copy()
        order_v = np.argsort(self.edge_vn, kind="stable")
        sorted_cn = self.edge_cn[order_v] + self.n_cols
        counts_v = self.column_degrees()
        pos = 0
        for v in range(self.n_cols):
            c = counts_v[v]
            indices[fill[v] : fill[v] + c] = sorted_cn[pos : pos + c]
            pos += c
        starts = self.row_starts()
        for r in range(self.n_rows):
            lo = starts[r]
            hi = starts[r + 1] if r + 1 < self.n_rows else self.n_edges
            indices[fill[self.n_cols + r] : fill[self.n_cols + r] + (hi - lo)] = self.edge_vn[lo:hi]
        return indptr, indices


def _largest_remainder(fractions, total):
    raw = np.asarray(fractions, dtype=float) * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def sample_parity_check(profile, length, seed):
    """Configuration-model realization of a degree profile.

    Variable-node counts come from largest-remainder quantization of the
    node-perspective fractions; sockets are matched uniformly at random and
    parallel edges are repaired by re-drawing the offending endpoints.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x1D4)))
    degs = profile.degree_array.astype(int)
    lam = profile.fraction_array
    node_frac = (lam / degs) / np.sum(lam / degs)
    counts = _largest_remainder(node_frac, length)
    vn_degrees = np.repeat(degs, counts)
    n_edges = int(vn_degrees.sum())
    d_c = profile.d_c

    base_rows = n_edges // d_c
    rem = n_edges - base_rows * d_c
    row_degrees = np.full(base_rows, d_c, dtype=int)
    if rem == 1:
        row_degrees[-1] += 1
    elif rem > 1:
        row_degrees = np.append(row_degrees, rem)
    n_rows = len(row_degrees)

    vn_sockets = np.repeat(np.arange(length, dtype=np.int64), vn_degrees)
    cn_sockets = np.repeat(np.arange(n_rows, dtype=np.int64), row_degrees)
    vn_sockets = rng.permutation(vn_sockets)

    for attempt in range(400):
        pairs = cn_sockets * np.int64(length) + vn_sockets
        order = np.argsort(pairs, kind="stable")
        dup = np.zeros(n_edges, dtype=bool)
        dup[order[1:]] = pairs[order[1:]] == pairs[order[:-1]]
        n_dup = int(dup.sum())
        if n_dup == 0:
            break
        # Swap each duplicate's variable socket with a random other socket.
        swap_with = rng.integers(0, n_edges, size=n_dup)
        dup_idx = np.where(dup)[0]
        vn_sockets[dup_idx], vn_sockets[swap_with] = (
            vn_sockets[swap_with].copy(),
            vn_sockets[dup_idx].copy(),
        )
    else:
        raise RuntimeError("could not repair parallel edges; profile too dense for this length")

    order = np.argsort(cn_sockets, kind="stable")
    return ParityCheckMatrix(
        n_rows=n_rows,
        n_cols=length,
        edge_vn=vn_sockets[order],
        edge_cn=cn_sockets[order],
        seed=int(seed),
        profile_tag=f"dc{d_c}",
    )


def _expand_ranges(starts, ends):
    counts = ends - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    rep = np.repeat(np.arange(len(starts)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return rep, starts[rep] + offsets


def local_girths(h):
    """Shortest cycle length through every variable node, capped.

    Breadth-first search from each variable node with branch labels: a node
    reached by two different first-edge branches closes a cycle through the
    root.  Cycles longer than the cap are reported as the beyond-cap value.
    """
    indptr, indices = h.adjacency()
    n_nodes = h.n_cols + h.n_rows
    stamp = np.full(n_nodes, -1, dtype=np.int64)
    dist = np.zeros(n_nodes, dtype=np.int64)
    label = np.zeros(n_nodes, dtype=np.int64)
    out = np.full(h.n_cols, _GIRTH_BEYOND_CAP, dtype=np.int64)
    max_level = _GIRTH_DEPTH_CAP // 2

    for v in range(h.n_cols):
        root_nb = indices[indptr[v] : indptr[v + 1]]
        stamp[v] = v
        stamp[root_nb] = v
        dist[root_nb] = 1
        label[root_nb] = np.arange(len(root_nb))
        frontier = root_nb
        best = _GIRTH_BEYOND_CAP + 2
        depth = 1
        while len(frontier) and depth <= max_level:
            rep, edge_pos = _expand_ranges(indptr[frontier], indptr[frontier + 1])
            targets = indices[edge_pos]
            src_label = label[frontier][rep]
            keep = targets != v
            targets, src_label = targets[keep], src_label[keep]
            visited = stamp[targets] == v
            # Meets with already-visited nodes of a different branch.
            meet = visited & (label[targets] != src_label)
            if np.any(meet):
                best = min(best, int(np.min(dist[targets[meet]] + depth + 1)))
            new_t = targets[~visited]
            new_l = src_label[~visited]
            if len(new_t):
                uniq, first = np.unique(new_t, return_index=True)
                stamp[uniq] = v
                dist[uniq] = depth + 1
                label[uniq] = new_l[first]
                # Same-level duplicates from a different branch also meet.
                dup_mask = np.ones(len(new_t), dtype=bool)
                dup_mask[first] = False
                clash = label[new_t[dup_mask]] != new_l[dup_mask]
                if np.any(clash):
                    best = min(best, 2 * depth + 2)
                frontier = uniq
            else:
                frontier = new_t
            if best <= 2 * depth:
                break
            depth += 1
        out[v] = best if best <= _GIRTH_DEPTH_CAP else _GIRTH_BEYOND_CAP
    return out


def average_girth(h):
    return float(np.mean(local_girths(h)))


def select_best_matrix(profile, length, n_candidates, seed):
    """Sample candidates and keep the one with the largest average local
    girth; ties go to the earliest candidate."""
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    best = None
    best_girth = -1.0
    for k in range(n_candidates):
        h = sample_parity_check(profile, length, seed=int(seed) + k)
        g = average_girth(h)
        if g > best_girth + 1e-12:
            best, best_girth = h, g
    return best


class LdpcEncoder:
    """Systematic encoder from Gauss-Jordan elimination over GF(2).

    Dependent rows are dropped from the encoding constraints (they are
    redundant checks); the realized rate reflects the actual rank.
    """

    def __init__(self, h):
        self.h = h
        n = h.n_cols
        words = (n + 63) // 64
        packed = np.zeros((h.n_rows, words), dtype=np.uint64)
        np.bitwise_or.at(
            packed,
            (h.edge_cn, h.edge_vn // 64),
            np.uint64(1) << (h.edge_vn % 64).astype(np.uint64),
        )
        rank = 0
        pivot_cols = []
        for col in range(n):
            w, b = col // 64, np.uint64(col % 64)
            colbits = (packed[rank:, w] >> b) & np.uint64(1)
            hits = np.nonzero(colbits)[0]
            if len(hits) == 0:
                continue
            pivot = rank + hits[0]
            if pivot != rank:
                packed[[rank, pivot]] = packed[[pivot, rank]]
            mask = ((packed[:, w] >> b) & np.uint64(1)).astype(bool)
            mask[rank] = False
            if np.any(mask):
                packed[mask] ^= packed[rank]
            pivot_cols.append(col)
            rank += 1
            if rank == h.n_rows:
                break
        self.rank = rank
        self.pivot_cols = np.array(pivot_cols, dtype=np.int64)
        info_mask = np.ones(n, dtype=bool)
        info_mask[self.pivot_cols] = False
        self.info_cols = np.nonzero(info_mask)[0]
        self.k = n - rank
        self.realized_rate = self.k / n
        # Parity pattern per info bit: which pivot positions it toggles.
        pat = np.zeros((self.k, rank), dtype=bool)
        for j, col in enumerate(self.info_cols):
            w, b = col // 64, np.uint64(col % 64)
            pat[j] = ((packed[:rank, w] >> b) & np.uint64(1)).astype(bool)
        self._patterns = np.packbits(pat, axis=1, bitorder="little")

    def encode(self, info_bits):
        info_bits = np.asarray(info_bits, dtype=np.uint8)
        if info_bits.shape != (self.k,):
            raise ValueError(f"expected {self.k} information bits")
        acc = np.bitwise_xor.reduce(self._patterns[info_bits.astype(bool)], axis=0) if np.any(info_bits) else np.zeros(self._patterns.shape[1], dtype=np.uint8)
        parity = np.unpackbits(acc, count=self.rank, bitorder="little")
        word = np.zeros(self.h.n_cols, dtype=np.uint8)
        word[self.info_cols] = info_bits
        word[self.pivot_cols] = parity
        return word


def ldpc_encode(h, info_bits, encoder=None):
    """Encode information bits; ``encoder`` may be passed to reuse the
    one-time elimination."""
    if encoder is None:
        encoder = LdpcEncoder(h)
    return encoder.encode(info_bits)


def syndrome_ok(h, hard_bits):
    hard_bits = np.atleast_2d(hard_bits)
    starts = h.row_starts()
    par = np.add.reduceat(hard_bits[:, h.edge_vn].astype(np.int64), starts, axis=1) % 2
    return ~np.any(par, axis=1)


@dataclass
class BpResult:
    extrinsic: np.ndarray
    app: np.ndarray
    hard: np.ndarray
    syndrome_ok: np.ndarray
    state: np.ndarray


def _log_tanh_half(a):
    # log(tanh(a/2)) for a > 0, stable at both ends.
    with np.errstate(divide="ignore"):
        q = np.exp(-a)
        return np.log1p(-q) - np.log1p(q)


def bp_decode(h, channel_llrs, prior_llrs=None, n_iters=1, state=None, clamp=LLR_CLAMP):
    """Flooding sum-product decoding, batched over leading axes.

    ``channel_llrs`` has shape (n,) or (batch, n).  The extrinsic output is
    the accumulated check-to-variable information (posterior minus input),
    suitable for feeding back to an outer stage.  ``state`` carries the
    check-to-variable messages across calls for turbo-style schedules.
    """
    x = np.atleast_2d(np.asarray(channel_llrs, dtype=float))
    squeeze = np.asarray(channel_llrs).ndim == 1
    batch, n = x.shape
    if n != h.n_cols:
        raise ValueError("LLR frame length does not match the code length")
    total = x if prior_llrs is None else x + np.atleast_2d(np.asarray(prior_llrs, dtype=float))
    total = np.clip(total, -clamp, clamp)
    if n_iters < 1:
        raise ValueError("need at least one iteration")

    e = h.n_edges
    starts = h.row_starts()
    c2v = np.zeros((batch, e)) if state is None else np.array(state, dtype=float, copy=True)
    if c2v.shape != (batch, e):
        raise ValueError("state shape mismatch")
    flat_vn = h._flat_vn(batch)

    def vn_sums(msgs):
        return np.bincount(flat_vn, weights=msgs.ravel(), minlength=batch * n).reshape(batch, n)

    for _ in range(n_iters):
        sums = vn_sums(c2v)
        v2c = np.clip((total + sums)[:, h.edge_vn] - c2v, -clamp, clamp)

        mag = np.abs(v2c)
        zero = mag < 1e-300
        logt = np.where(zero, 0.0, _log_tanh_half(np.where(zero, 1.0, mag)))
        neg = (v2c < 0.0) & ~zero

        seg_logt = np.add.reduceat(logt, starts, axis=1)
        seg_neg = np.add.reduceat(neg.astype(np.int64), starts, axis=1)
        seg_zero = np.add.reduceat(zero.astype(np.int64), starts, axis=1)

        edge_seg_logt = seg_logt[:, h.edge_cn]
        edge_seg_neg = seg_neg[:, h.edge_cn]
        edge_seg_zero = seg_zero[:, h.edge_cn]

        others_zero = edge_seg_zero - zero.astype(np.int64)
        m_excl = edge_seg_logt - logt
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out_mag = np.log1p(np.exp(m_excl)) - np.log(-np.expm1(np.minimum(m_excl, -1e-300)))
        out_mag = np.where(m_excl >= 0.0, clamp, out_mag)
        sign = 1.0 - 2.0 * ((edge_seg_neg - neg.astype(np.int64)) % 2)
        c2v = np.where(others_zero > 0, 0.0, sign * np.minimum(out_mag, clamp))

    sums = vn_sums(c2v)
    app = total + sums
    hard = (app < 0.0).astype(np.uint8)
    ok = syndrome_ok(h, hard)
    result = BpResult(
        extrinsic=sums[0] if squeeze else sums,
        app=app[0] if squeeze else app,
        hard=hard[0] if squeeze else hard,
        syndrome_ok=bool(ok[0]) if squeeze else ok,
        state=c2v,
    )
    return result


def _as_counts(factors, n_info):
    if np.isscalar(factors):
        if factors < 1:
            raise ValueError("repetition factor must be at least 1")
        return np.full(n_info, int(factors), dtype=np.int64)
    counts = np.asarray(factors, dtype=np.int64)
    if counts.ndim != 1 or np.any(counts < 1):
        raise ValueError("repetition counts must be positive integers")
    if n_info is not None and len(counts) != n_info:
        raise ValueError("repetition counts length mismatch")
    return counts


def rep_encode(bits, factors):
    """Repeat each symbol by its factor (scalar or per-symbol counts)."""
    bits = np.asarray(bits)
    counts = _as_counts(factors, len(bits))
    return np.repeat(bits, counts)


def rep_combine(chip_llrs, factors, ldpc_extrinsic=None):
    """Combine repeated-chip LLRs.

    Returns ``(info_llrs, chip_extrinsics)``: the decoder-side sum over each
    symbol's replicas, and the detector-side leave-one-out extrinsic per chip
    (other replicas plus the outer-decoder extrinsic).
    """
    chip_llrs = np.asarray(chip_llrs, dtype=float)
    if np.isscalar(factors):
        if len(chip_llrs) % int(factors):
            raise ValueError("chip frame length not divisible by the repetition factor")
        n_info = len(chip_llrs) // int(factors)
    else:
        n_info = len(factors)
    counts = _as_counts(factors, n_info)
    if counts.sum() != len(chip_llrs):
        raise ValueError("chip frame length does not match the repetition counts")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    info = np.add.reduceat(chip_llrs, starts)
    if ldpc_extrinsic is None:
        ldpc_extrinsic = np.zeros(n_info)
    ldpc_extrinsic = np.asarray(ldpc_extrinsic, dtype=float)
    chip_ext = np.repeat(info + ldpc_extrinsic, counts) - chip_llrs
    return info, chip_ext


@dataclass(frozen=True)
class Interleaver:
    """Seeded user-specific permutation."""

    perm: np.ndarray
    user_id: int
    seed: int
    inv_perm: np.ndarray = field(default=None, repr=False)

    def apply(self, x):
        return np.asarray(x)[..., self.perm]

    def invert(self, y):
        return np.asarray(y)[..., self.inv_perm]


def make_interleaver(user_id, seed, length):
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(user_id), 0x17EA)))
    perm = rng.permutation(length)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(length)
    return Interleaver(perm=perm, user_id=int(user_id), seed=int(seed), inv_perm=inv)


def write_alist(h, path):
    """Standard alist text format (1-indexed, zero-padded rows)."""
    col_deg = h.column_degrees()
    row_deg = h.row_degrees()
    max_col, max_row = int(col_deg.max()), int(row_deg.max())
    by_col = [[] for _ in range(h.n_cols)]
    by_row = [[] for _ in range(h.n_rows)]
    for vn, cn in zip(h.edge_vn, h.edge_cn):
        by_col[vn].append(int(cn) + 1)
        by_row[cn].append(int(vn) + 1)
    lines = [
        f"{h.n_cols} {h.n_rows}",
        f"{max_col} {max_row}",
        " ".join(str(int(d)) for d in col_deg),
        " ".join(str(int(d)) for d in row_deg),
    ]
    for entries in by_col:
        padded = sorted(entries) + [0] * (max_col - len(entries))
        lines.append(" ".join(map(str, padded)))
    for entries in by_row:
        padded = sorted(entries) + [0] * (max_row - len(entries))
        lines.append(" ".join(map(str, padded)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_alist(path):
    with open(path) as fh:
        tokens = [[int(t) for t in line.split()] for line in fh if line.strip()]
    n_cols, n_rows = tokens[0]
    col_deg = tokens[2]
    edge_vn, edge_cn = [], []
    for r, row in enumerate(tokens[4 + n_cols : 4 + n_cols + n_rows]):
        for v in row:
            if v:
                edge_cn.append(r)
                edge_vn.append(v - 1)
    h = ParityCheckMatrix(
        n_rows=n_rows,
        n_cols=n_cols,
        edge_vn=np.array(edge_vn, dtype=np.int64),
        edge_cn=np.array(edge_cn, dtype=np.int64),
    )
    if list(h.column_degrees()) != col_deg:
        raise ValueError("alist degree lists inconsistent with adjacency")
    return h
