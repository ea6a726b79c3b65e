"""Output distributions of non-adaptive query lists under random deletions.

A query list is described by its successive differences ``diffs``. For a
string ``s`` of length ``nu`` the shift-invariant frequency of an output
``b`` averages, over a uniform shift ``i`` in ``1..nu`` and a random
pattern instance, the probability that the corrupted string read at
``i, i + d1, ..., i + d1 + ... + d_{r-1}`` equals ``b``. If any of those
positions is past the end of the corrupted string the outcome is ``ERR``.

Exact mode enumerates every (shift, instance) pair with integer counts and
returns ``Fraction`` values; Monte Carlo mode samples them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .codeword import BINARY, Alphabet, chunks
from .delpat import ERR, NO_DELETION, LayeredPattern, Pattern, PrefixPeriodicPattern, _layered_runs, _realize, induce_from_runs, induced_batch
from .errors import CapExceeded, NonDividing, SupportMismatch

DEFAULT_CAP = 10**7

# instances * nu * r cells per vectorized slice during enumeration
_SLICE = 1 << 21


def offsets(diffs: Sequence[int]) -> np.ndarray:
    """Query offsets ``0, d1, d1 + d2, ...`` relative to the shift."""
    diffs = tuple(int(d) for d in diffs)
    if any(d < 1 for d in diffs):
        raise ValueError(f"differences must be >= 1, got {diffs}")
    return np.concatenate([[0], np.cumsum(diffs, dtype=np.int64)]).astype(np.int64)


def _decode(code: int, r: int, alphabet: Alphabet) -> str:
    q = len(alphabet)
    if code == q**r:
        return ERR
    out = []
    for _ in range(r):
        code, d = divmod(code, q)
        out.append(alphabet.symbols[d])
    return "".join(reversed(out))


def _encode_outcome(b: str, alphabet: Alphabet) -> int:
    q = len(alphabet)
    if b == ERR:
        raise ValueError("ERR has no symbol code")
    v = 0
    for s in b:
        v = v * q + alphabet.index(s)
    return v


def _codes(sym: np.ndarray, valid: np.ndarray, q: int) -> np.ndarray:
    """Outcome codes from gathered symbols (last axis = query); ERR -> q**r."""
    r = sym.shape[-1]
    code = sym[..., 0].astype(np.int64)
    for j in range(1, r):
        code *= q
        code += sym[..., j]
    return np.where(valid, code, q**r)


# ------------------------------------------------------------------ exact


def _instance_draws(p: LayeredPattern, nu: int):
    """``(start offset, cap)`` for every chunk whose mark count is random."""
    slots = []
    for a, cap in enumerate(p.caps(), start=1):
        if cap:
            width = p.kappa**a
            slots.extend((start, cap) for start in range(0, nu, width))
    return slots


def _exact_blocks(nu: int, diffs, p: LayeredPattern, cap: int, rows: int = 1):
    """Yield ``(orig, valid)`` over every (instance, shift) pair, in slices.

    ``orig`` has shape ``(n, nu, r)`` with 0-based original positions and
    ``valid`` shape ``(n, nu)``. ``rows`` scales the slice size down for
    callers that gather from several chunks at once.
    """
    p.check_length(nu)
    off = offsets(diffs)
    r = len(off)
    joint = p.instance_count(nu) * nu
    if joint > cap:
        raise CapExceeded(f"joint space {joint} exceeds cap {cap}")
    slots = _instance_draws(p, nu)
    shifts = np.arange(1, nu + 1)[:, None] + off[None, :]  # (nu, r), 1-based corrupted positions
    idx = np.minimum(shifts, nu) - 1
    if not slots:
        yield idx[None], (shifts[:, -1] <= nu)[None]
        return
    starts = np.array([s for s, _ in slots])
    ranges = [range(c + 1) for _, c in slots]
    per_slice = max(1, _SLICE // (nu * r * rows))
    it = itertools.product(*ranges)
    while True:
        block = list(itertools.islice(it, per_slice))
        if not block:
            break
        draws = np.array(block, dtype=np.int64)
        n = draws.shape[0]
        d = np.zeros((n, nu + 1), dtype=np.int64)
        np.add.at(d, (slice(None), starts), 1)
        np.add.at(d, (np.arange(n)[:, None].repeat(len(starts), 1), starts + draws), -1)
        kept = ~_realize(np.cumsum(d, axis=1)[:, :nu])
        alive = kept.sum(axis=1)
        # stable argsort puts surviving positions first, in order
        surv = np.argsort(~kept, axis=1, kind="stable")
        yield surv[:, idx], shifts[None, :, -1] <= alive[:, None]


def _exact_counts(z: np.ndarray, diffs, p: LayeredPattern, q: int, cap: int) -> tuple[np.ndarray, int]:
    """Outcome counts over every (instance, shift) pair and their total."""
    table, joint = _exact_table(z[None, :], diffs, p, q, cap)
    return table[0], joint


def _exact_table(zc: np.ndarray, diffs, p: LayeredPattern, q: int, cap: int) -> tuple[np.ndarray, int]:
    """``_exact_counts`` for every row of ``zc`` (chunks of equal length)."""
    nch, nu = zc.shape
    r = len(diffs) + 1
    n_out = q**r + 1
    table = np.zeros((nch, n_out), dtype=np.int64)
    base = (np.arange(nch) * n_out)[:, None]
    for orig, valid in _exact_blocks(nu, diffs, p, cap, rows=nch):
        code = _codes(zc[:, orig], valid[None], q).reshape(nch, -1)
        table += np.bincount((base + code).ravel(), minlength=nch * n_out).reshape(nch, n_out)
    return table, p.instance_count(nu) * nu


def exact_dist(
    s: str, diffs: Sequence[int], p: LayeredPattern = NO_DELETION, alphabet: Alphabet = BINARY, cap: int = DEFAULT_CAP
) -> dict:
    """Exact shift-invariant output distribution ``{outcome: Fraction}`` incl. ``ERR``."""
    if not isinstance(p, LayeredPattern):
        raise CapExceeded("continuous patterns cannot be enumerated exactly")
    z = alphabet.to_array(s)
    counts, total = _exact_counts(z, diffs, p, len(alphabet), cap)
    r = len(diffs) + 1
    return {_decode(c, r, alphabet): Fraction(int(v), total) for c, v in enumerate(counts) if v}


def exact_freq(
    b: str, s: str, diffs: Sequence[int], p: LayeredPattern = NO_DELETION, alphabet: Alphabet = BINARY, cap: int = DEFAULT_CAP
) -> Fraction:
    if len(b) != len(diffs) + 1:
        raise ValueError(f"pattern {b!r} does not have {len(diffs) + 1} symbols")
    return exact_dist(s, diffs, p, alphabet, cap).get(b, Fraction(0))


def err_prob(
    s: str, diffs: Sequence[int], p: LayeredPattern = NO_DELETION, alphabet: Alphabet = BINARY, cap: int = DEFAULT_CAP
) -> Fraction:
    return exact_dist(s, diffs, p, alphabet, cap).get(ERR, Fraction(0))


# ------------------------------------------------------------ Monte Carlo


def worker_seeds(seed: int, workers: int) -> list[np.random.SeedSequence]:
    if workers <= 1:
        return [np.random.SeedSequence(seed)]
    return [np.random.SeedSequence([seed, w]) for w in range(workers)]


def _split(samples: int, workers: int) -> list[int]:
    base, extra = divmod(samples, workers)
    return [base + (w < extra) for w in range(workers)]


def _mc_counts(z, p, q, r, make_queries, samples, seed, workers) -> np.ndarray:
    """Outcome counts from ``samples`` draws split over ``workers`` seed streams.

    The result is identical for fixed ``(seed, workers)``; different worker
    counts give different (equally valid) estimates.
    """
    workers = max(1, int(workers))
    counts = np.zeros(q**r + 1, dtype=np.int64)
    for ss, n in zip(worker_seeds(seed, workers), _split(samples, workers)):
        if n == 0:
            continue
        rng = np.random.default_rng(ss)
        qs = make_queries(rng, n)
        orig = induced_batch(p, len(z), qs, rng)
        valid = (orig > 0).all(axis=1)
        sym = z[np.maximum(orig, 1) - 1]
        counts += np.bincount(_codes(sym, valid, q), minlength=q**r + 1)
    return counts


def mc_dist(
    s: str,
    diffs: Sequence[int],
    p: Pattern = NO_DELETION,
    samples: int = 100_000,
    seed: int = 0,
    alphabet: Alphabet = BINARY,
    workers: int = 1,
) -> dict:
    """Monte Carlo estimate of the shift-invariant output distribution."""
    z = alphabet.to_array(s)
    off = offsets(diffs)
    nu = len(z)

    def make(rng, n):
        return rng.integers(1, nu + 1, n)[:, None] + off[None, :]

    counts = _mc_counts(z, p, len(alphabet), len(off), make, samples, seed, workers)
    r = len(off)
    return {_decode(c, r, alphabet): v / samples for c, v in enumerate(counts.tolist()) if v}


def induced_table(
    nu: int, diffs: Sequence[int], p: Pattern = NO_DELETION, mode: str = "exact", samples: int = 100_000, seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Distribution of the original positions read by a shifted query list.

    Returns ``(tuples, counts, total)``: distinct rows of 1-based original
    positions (all zeros for ``ERR``) and how often each occurs. The table
    does not depend on the string, so it yields the output distribution of
    every length-``nu`` string at once. Monte Carlo uses the same draws as
    ``mc_dist`` with one worker.
    """
    return induced_tables(nu, [diffs], p, mode, samples, seed, cap)[0]


def induced_tables(nu: int, diff_lists, p: Pattern = NO_DELETION, mode: str = "exact", samples: int = 100_000,
                   seed: int = 0, cap: int = DEFAULT_CAP) -> list:
    """``induced_table`` for several lists; Monte Carlo lists share one set of draws."""
    diff_lists = [tuple(d) for d in diff_lists]
    if mode == "exact":
        if not isinstance(p, LayeredPattern):
            raise CapExceeded("continuous patterns cannot be enumerated exactly")
        out = []
        for diffs in diff_lists:
            r = len(diffs) + 1
            parts = [np.where(valid[..., None], orig + 1, 0).reshape(-1, r) for orig, valid in _exact_blocks(nu, diffs, p, cap)]
            out.append(_histogram(np.concatenate(parts), nu))
        return out
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(worker_seeds(seed, 1)[0])
    span = max(sum(d) for d in diff_lists) if diff_lists else 0
    # pattern draws do not depend on the queries, so one batch serves every list
    cols = rng.integers(1, nu + 1, samples)[:, None] + np.arange(span + 1)[None, :]
    orig = induced_batch(p, nu, cols, rng)
    out = []
    for diffs in diff_lists:
        rows = orig[:, offsets(diffs)]
        rows[(rows == 0).any(axis=1)] = 0
        out.append(_histogram(rows, nu))
    return out


def _histogram(rows: np.ndarray, nu: int) -> tuple[np.ndarray, np.ndarray, int]:
    # rows as base-(nu+1) integers; a bincount beats a row-wise unique
    base = nu + 1
    weights = base ** np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64)
    hist = np.bincount(rows @ weights, minlength=1)
    keys = np.flatnonzero(hist)
    tuples = (keys[:, None] // weights[None, :]) % base
    return tuples, hist[keys], int(hist.sum())


def table_counts(strings: np.ndarray, tuples: np.ndarray, counts: np.ndarray, q: int) -> np.ndarray:
    """Outcome counts for each row of ``strings`` from an ``induced_table``."""
    valid = (tuples > 0).all(axis=1)
    sym = strings[:, np.maximum(tuples, 1) - 1]
    code = _codes(sym, valid[None, :], q)
    n_out = q ** tuples.shape[1] + 1
    flat = (np.arange(len(strings))[:, None] * n_out + code).ravel()
    w = np.broadcast_to(counts, code.shape).ravel()
    return np.bincount(flat, weights=w, minlength=len(strings) * n_out).reshape(len(strings), n_out).astype(np.int64)


def mc_freq(b: str, s: str, diffs, p: Pattern = NO_DELETION, samples: int = 100_000, seed: int = 0, alphabet=BINARY) -> float:
    return mc_dist(s, diffs, p, samples, seed, alphabet).get(b, 0.0)


# ---------------------------------------------------------- distributions


@dataclass
class OutputDist:
    probs: dict
    meta: dict = field(default_factory=dict)

    def __getitem__(self, outcome):
        return self.probs.get(outcome, 0)

    def total(self):
        return sum(self.probs.values())

    def support(self) -> set:
        return {o for o, v in self.probs.items() if v}

    def to_json(self) -> dict:
        return {o: float(v) for o, v in sorted(self.probs.items())}

    def csv_rows(self) -> list[tuple]:
        return [(o, float(v)) for o, v in sorted(self.probs.items())]


def mc_output_dist(
    z: str,
    qs: Sequence[int],
    p: Pattern = NO_DELETION,
    samples: int = 100_000,
    seed: int = 0,
    alphabet: Alphabet = BINARY,
    workers: int = 1,
) -> OutputDist:
    """Empirical distribution of reading fixed corrupted positions ``qs``."""
    arr = alphabet.to_array(z)
    qv = np.asarray(qs, dtype=np.int64)
    if qv.ndim != 1 or (qv < 1).any() or (np.diff(qv) <= 0).any():
        raise ValueError("queries must be positive and strictly increasing")

    def make(rng, n):
        return np.broadcast_to(qv, (n, len(qv)))

    counts = _mc_counts(arr, p, len(alphabet), len(qv), make, samples, seed, workers)
    probs = {_decode(c, len(qv), alphabet): v / samples for c, v in enumerate(counts.tolist()) if v}
    return OutputDist(probs, {"samples": samples, "seed": seed, "workers": workers})


def exact_output_dist(z: str, qs: Sequence[int], p: LayeredPattern = NO_DELETION, alphabet=BINARY, cap=DEFAULT_CAP) -> OutputDist:
    """Exact distribution of reading fixed positions ``qs`` (enumerates instances)."""
    nu = len(z)
    qv = tuple(int(v) for v in qs)
    arr = alphabet.to_array(z)
    p.check_length(nu)
    if p.instance_count(nu) > cap:
        raise CapExceeded(f"{p.instance_count(nu)} instances exceed cap {cap}")
    counts = np.zeros(len(alphabet) ** len(qv) + 1, dtype=np.int64)
    slots = _instance_draws(p, nu)
    starts = np.array([s for s, _ in slots], dtype=np.int64)
    q = len(alphabet)
    for draw in itertools.product(*[range(c + 1) for _, c in slots]):
        d = np.zeros(nu + 1, dtype=np.int64)
        np.add.at(d, starts, 1)
        np.add.at(d, starts + np.array(draw, dtype=np.int64), -1)
        kept = np.flatnonzero(~_realize(np.cumsum(d)[:nu]))
        if qv[-1] > len(kept):
            counts[-1] += 1
        else:
            sym = arr[kept[np.array(qv) - 1]]
            counts[_codes(sym[None, :], np.array([True]), q)[0]] += 1
    total = int(counts.sum())
    return OutputDist({_decode(c, len(qv), alphabet): Fraction(int(v), total) for c, v in enumerate(counts) if v})


def tv_distance(d1, d2, strict_support: bool = False) -> float:
    """Half the L1 distance between two outcome distributions.

    Both arguments may be ``OutputDist`` or plain mappings; missing
    outcomes count as probability zero. With ``strict_support`` the two
    must be over the same query count, else ``SupportMismatch``.
    """
    p1 = d1.probs if isinstance(d1, OutputDist) else dict(d1)
    p2 = d2.probs if isinstance(d2, OutputDist) else dict(d2)
    lengths = {len(o) for o in itertools.chain(p1, p2) if o != ERR}
    if len(lengths) > 1:
        raise SupportMismatch(f"outcomes of different lengths {sorted(lengths)}")
    if strict_support and set(p1) != set(p2):
        raise SupportMismatch("supports differ")
    keys = set(p1) | set(p2)
    return sum(abs(p1.get(k, 0) - p2.get(k, 0)) for k in keys) / 2


# --------------------------------------------------------- approximation


@dataclass
class ApproxReport:
    gap: object
    sum_ok: bool
    per_b: dict
    mode: str
    chunk_length: int

    def approximates(self, delta) -> bool:
        return self.sum_ok and self.gap < delta

    def to_json(self) -> dict:
        return {
            "gap": float(self.gap),
            "sum_ok": self.sum_ok,
            "per_b": {b: float(v) for b, v in sorted(self.per_b.items())},
            "mode": self.mode,
            "chunk_length": self.chunk_length,
        }


def chunk_dist(s: str, diffs, p: Pattern, mode: str, alphabet=BINARY, cap=DEFAULT_CAP, samples=10_000, seed=0) -> dict:
    if mode == "exact":
        return exact_dist(s, diffs, p, alphabet, cap)
    if mode == "mc":
        return mc_dist(s, diffs, p, samples, seed, alphabet)
    raise ValueError(f"unknown mode {mode!r}")


def approx_gap(
    z: str,
    nu: int,
    diffs_a: Sequence[int],
    diffs_b: Sequence[int],
    p: Pattern = NO_DELETION,
    mode: str = "exact",
    alphabet: Alphabet = BINARY,
    cap: int = DEFAULT_CAP,
    samples: int = 10_000,
    seed: int = 0,
) -> ApproxReport:
    """Chunk-averaged approximation gap of ``diffs_a`` against ``diffs_b``.

    Per chunk: ``max_b |freq_a(b) - freq_b(b)| + err_a + err_b``; the
    report's ``per_b`` holds the chunk-averaged ``|freq_a(b) - freq_b(b)|``.
    """
    if len(diffs_a) != len(diffs_b):
        raise ValueError("difference lists must have the same length")
    if nu <= 0 or len(z) % nu:
        raise NonDividing(f"chunk length {nu} does not divide {len(z)}")
    parts = chunks(z, nu)
    zero = Fraction(0) if mode == "exact" else 0.0
    total = zero
    per_b: dict = {}
    for j, c in enumerate(parts):
        da = chunk_dist(c, diffs_a, p, mode, alphabet, cap, samples, seed + 2 * j)
        db = chunk_dist(c, diffs_b, p, mode, alphabet, cap, samples, seed + 2 * j + 1)
        outs = (set(da) | set(db)) - {ERR}
        diffs = {b: abs(da.get(b, zero) - db.get(b, zero)) for b in outs}
        for b, v in diffs.items():
            per_b[b] = per_b.get(b, zero) + v
        total += max(diffs.values(), default=zero) + da.get(ERR, zero) + db.get(ERR, zero)
    k = len(parts)
    gap = total / k
    per_b = {b: v / k for b, v in per_b.items()}
    return ApproxReport(gap, sum(diffs_a) <= sum(diffs_b), per_b, mode, nu)


# ------------------------------------------------------ vectorized tables


def freq_table(
    z: np.ndarray,
    L: int,
    diffs: Sequence[int],
    p: Pattern,
    q: int,
    mode: str = "auto",
    cap: int = DEFAULT_CAP,
    samples: int = 2_000,
    rng: np.random.Generator | None = None,
    codes: np.ndarray | None = None,
    draws: dict | None = None,
) -> tuple[np.ndarray, int]:
    """Per-chunk outcome weights for every length-``L`` chunk of ``z``.

    Returns ``(table, denom)``; ``table[j, c] / denom`` is the frequency of
    outcome code ``c`` (last column = ``ERR``) in chunk ``j``. Exact tables
    hold integer counts; Monte Carlo tables hold probabilities with
    ``denom == 1``. ``codes`` may carry a precomputed ``start_codes``;
    ``draws`` is a cache of Monte Carlo shifts and deletion runs, shared
    by every call that passes the same dict (common random numbers).
    """
    M = len(z)
    if L <= 0 or M % L:
        raise NonDividing(f"chunk length {L} does not divide {M}")
    off = offsets(diffs)
    r = len(off)
    n_out = q**r + 1
    nch = M // L
    trivial = isinstance(p, LayeredPattern) and p.is_trivial()
    if trivial:
        D = int(off[-1])
        table = np.zeros((nch, n_out), dtype=np.int64)
        if D < L:
            if codes is None:
                codes = start_codes(z, diffs, q)
            padded = np.full(M, n_out - 1, dtype=np.int64)
            padded[: len(codes)] = codes
            block = padded.reshape(nch, L)[:, : L - D]
            flat = (np.arange(nch)[:, None] * n_out + block).ravel()
            table += np.bincount(flat, minlength=nch * n_out).reshape(nch, n_out)
        table[:, -1] += min(D, L)
        return table, L
    if mode == "auto":
        # enumerate only when it is cheaper than sampling
        joint = p.instance_count(L) * L if isinstance(p, LayeredPattern) else cap + 1
        mode = "exact" if joint <= min(cap, 64 * samples) else "mc"
    if mode == "exact":
        return _exact_table(z.reshape(nch, L), diffs, p, q, cap)
    rng = rng or np.random.default_rng(0)
    if draws is not None and isinstance(p, LayeredPattern):
        key = (p, L, nch, samples)
        if key not in draws:
            shifts = rng.integers(1, L + 1, (nch * samples, 1))
            draws[key] = (shifts,) + _layered_runs(p, L, rng, nch * samples)
        shifts, before, run = draws[key]
        w0 = p.kappa ** next(a for a, c in enumerate(p.caps(), start=1) if c)
        orig = induce_from_runs(before, run, w0, L, shifts + off).reshape(nch, samples, r)
    else:
        qs = rng.integers(1, L + 1, (nch, samples))[..., None] + off
        orig = induced_batch(p, L, qs.reshape(-1, r), rng).reshape(nch, samples, r)
    valid = (orig > 0).all(axis=2)
    sym = z[(np.arange(nch) * L)[:, None, None] + np.maximum(orig, 1) - 1]
    code = _codes(sym, valid, q)
    flat = (np.arange(nch)[:, None] * n_out + code).ravel()
    return np.bincount(flat, minlength=nch * n_out).reshape(nch, n_out) / samples, 1


def start_codes(z: np.ndarray, diffs: Sequence[int], q: int) -> np.ndarray:
    """Outcome code of the undeleted query tuple at every in-range start."""
    off = offsets(diffs)
    n = len(z) - int(off[-1])
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    sym = np.stack([z[o : o + n] for o in off], axis=-1)
    return _codes(sym, np.ones(n, dtype=bool), q)


def binomial_sigma(prob: float, samples: int) -> float:
    return math.sqrt(max(prob * (1 - prob), 0.0) / samples)
