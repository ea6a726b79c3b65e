"""End-to-end experiments: decoders under deletions, entropy checks, attacks."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .adversary import RepFamily, compress
from .codeword import BINARY, Alphabet, Code
from .delpat import ERR, NO_DELETION, PrefixPeriodicPattern, induced_batch, pattern_from_json
from .querydist import binomial_sigma, mc_output_dist, tv_distance

EXHAUSTIVE_MESSAGES = 2**10


@dataclass(frozen=True)
class SubstitutionChannel:
    """Control channel: every read symbol is replaced with probability ``rate``.

    The replacement is uniform over the other symbols. Positions never move.
    """

    rate: float

    def to_json(self) -> dict:
        return {"type": "substitution", "rate": self.rate}


def channel_json(ch) -> dict:
    return ch.to_json()


def channel_from_json(d: dict):
    if d.get("type") == "substitution":
        return SubstitutionChannel(float(d["rate"]))
    return pattern_from_json(d)


@dataclass
class Decoder:
    """Non-adaptive ``k``-query decoder.

    ``plan(i, rng)`` returns ``k`` strictly increasing 1-based positions in
    the received string; ``combine(i, out)`` maps the read symbols (a
    length-``k`` string, or ``ERR``) to a guess. ``plan_batch(i, rng, n)``
    is an optional vectorized ``plan`` returning an ``(n, k)`` array.
    """

    k: int
    plan: Callable
    combine: Callable
    plan_batch: Callable | None = None
    name: str = "decoder"

    def plans(self, i: int, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.plan_batch is not None:
            out = np.asarray(self.plan_batch(i, rng, n), dtype=np.int64)
        else:
            out = np.array([tuple(self.plan(i, rng)) for _ in range(n)], dtype=np.int64).reshape(n, self.k)
        if out.shape != (n, self.k) or (out < 1).any() or (np.diff(out, axis=1) <= 0).any():
            raise ValueError(f"{self.name}: plan must emit {self.k} strictly increasing positive positions")
        return out


def direct_decoder(alphabet: Alphabet = BINARY) -> Decoder:
    """Reads position ``i`` itself (for the identity code)."""
    return Decoder(
        1,
        lambda i, rng: (i,),
        lambda i, out: alphabet.zero if out == ERR else out,
        lambda i, rng, n: np.full((n, 1), i),
        "direct",
    )


def constant_decoder(symbol: str, length: int) -> Decoder:
    """Ignores what it reads and always guesses ``symbol``."""
    return Decoder(
        1,
        lambda i, rng: (int(rng.integers(1, length + 1)),),
        lambda i, out: symbol,
        lambda i, rng, n: rng.integers(1, length + 1, (n, 1)),
        f"constant-{symbol}",
    )


def hadamard_decoder(n: int) -> Decoder:
    """Standard 2-query Hadamard decoder: reads ``y`` and ``y xor e_i``, returns the XOR.

    Bit ``i`` of ``y`` (1-based, most significant first) matches message
    symbol ``i``; codeword position of ``y`` is ``y + 1``. An out-of-range
    read guesses ``0``.
    """

    def plan_batch(i, rng, size):
        y = rng.integers(0, 2**n, size)
        y2 = y ^ (1 << (n - i))
        return np.sort(np.stack([y, y2], axis=1), axis=1) + 1

    def combine(i, out):
        if out == ERR:
            return "0"
        return "1" if out[0] != out[1] else "0"

    return Decoder(2, lambda i, rng: tuple(plan_batch(i, rng, 1)[0]), combine, plan_batch, "hadamard-2q")


def _evaluation_messages(code: Code, max_messages: int, seed: int) -> list[str]:
    count = code.message_count()
    if count <= EXHAUSTIVE_MESSAGES:
        return list(code.messages())
    rng = np.random.default_rng([seed, 0xE5])
    return [code.message(int(v)) for v in rng.integers(0, count, max_messages)]


def _guess_table(dec: Decoder, i: int, alphabet: Alphabet) -> np.ndarray:
    """Guess (symbol index) for every outcome code; last entry is ``ERR``."""
    outs = ["".join(t) for t in itertools.product(alphabet.symbols, repeat=dec.k)] + [ERR]
    return np.array([alphabet.index(dec.combine(i, o)) for o in outs], dtype=np.int64)


def _read(z: np.ndarray, pos: np.ndarray, channel, q: int, rng) -> np.ndarray:
    """Outcome codes for corrupted-string positions ``pos`` (shape ``(n, k)``)."""
    M = len(z)
    n, k = pos.shape
    if isinstance(channel, SubstitutionChannel):
        orig = np.where(pos <= M, pos, 0)
    else:
        orig = induced_batch(channel, M, pos, rng)
    valid = (orig > 0).all(axis=1)
    sym = z[np.maximum(orig, 1) - 1].astype(np.int64)
    if isinstance(channel, SubstitutionChannel):
        flip = rng.random((n, k)) < channel.rate
        shift = rng.integers(1, q, (n, k))
        sym = np.where(flip, (sym + shift) % q, sym)
    code = np.zeros(n, dtype=np.int64)
    for j in range(k):
        code = code * q + sym[:, j]
    return np.where(valid, code, q**k)


def eval_decoder(
    code: Code,
    dec: Decoder,
    channel=NO_DELETION,
    i: int = 1,
    trials: int = 1_000,
    seed: int = 0,
    messages: Sequence[str] | None = None,
    max_messages: int = 256,
) -> dict:
    """Success rate of ``dec`` on message symbol ``i`` for each evaluated message."""
    if not 1 <= i <= code.n:
        raise ValueError(f"index {i} outside 1..{code.n}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alphabet = code.alphabet
    q = len(alphabet)
    msgs = list(messages) if messages is not None else _evaluation_messages(code, max_messages, seed)
    guess = _guess_table(dec, i, alphabet)
    rates = {}
    for mi, x in enumerate(msgs):
        rng = np.random.default_rng([seed, i, mi])
        z = alphabet.to_array(code.encode(x))
        pos = dec.plans(i, rng, trials)
        hits = guess[_read(z, pos, channel, q, rng)] == alphabet.index(x[i - 1])
        rates[x] = float(hits.mean())
    return rates


@dataclass
class AttackReport:
    rates: dict  # (i, x) -> rate
    trials: int
    channel: dict
    eps: float
    seed: int
    worst_index: int = 0
    worst_message: str = ""
    worst_rate: float = 1.0
    failing: list = field(default_factory=list)

    @property
    def threshold(self) -> float:
        return 0.5 + self.eps

    @property
    def failed(self) -> bool:
        return bool(self.failing)

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "channel": self.channel,
            "eps": self.eps,
            "threshold": self.threshold,
            "failure_threshold": 0.5 - self.eps,
            "worst_index": self.worst_index,
            "worst_message": self.worst_message,
            "worst_rate": self.worst_rate,
            "worst_failure_prob": 1 - self.worst_rate,
            "sigma": binomial_sigma(self.worst_rate, self.trials),
            "failing_indices": self.failing,
            "rates": [{"index": i, "message": x, "rate": r} for (i, x), r in sorted(self.rates.items())],
        }

    def csv_rows(self) -> list[tuple]:
        return [(i, x, r) for (i, x), r in sorted(self.rates.items())]


def attack_report(
    code: Code,
    decoders,
    channel=NO_DELETION,
    trials: int = 1_000,
    seed: int = 0,
    eps: float = 0.1,
    indices: Sequence[int] | None = None,
    max_messages: int = 256,
) -> AttackReport:
    """Evaluate one decoder per index; an index fails if some message scores below ``1/2 + eps``.

    ``decoders`` is a ``Decoder`` (shared by all indices) or a callable
    ``i -> Decoder``.
    """
    pick = (lambda i: decoders) if isinstance(decoders, Decoder) else decoders
    indices = list(indices) if indices is not None else list(range(1, code.n + 1))
    rates = {}
    failing = []
    for i in indices:
        per = eval_decoder(code, pick(i), channel, i, trials, seed, max_messages=max_messages)
        rates.update({(i, x): r for x, r in per.items()})
        # the bar is ">= 1/2 + eps"; a tie passes
        if min(per.values()) < 0.5 + eps:
            failing.append(i)
    (wi, wx), wr = min(rates.items(), key=lambda kv: (kv[1], kv[0]))
    return AttackReport(rates, trials, channel_json(channel), eps, seed, wi, wx, wr, failing)


# -------------------------------------------------------- information


def _log2_exact(q: int):
    """``log2 q`` as an int when ``q`` is a power of two, else a float."""
    if q > 0 and q & (q - 1) == 0:
        return q.bit_length() - 1
    return math.log2(q)


def fano_check(kbar: int, n: int, eps, alphabet_size: int = 2) -> dict:
    """Is ``n`` message symbols compatible with a ``kbar``-symbol record?

    Rearranging ``n <= kbar + (1 - eps^6) n`` gives ``n <= kbar log2|S| / eps^6``;
    beyond that threshold decoding must fail somewhere.
    """
    if n < 1 or kbar < 0 or alphabet_size < 2:
        raise ValueError("need n >= 1, kbar >= 0 and alphabet size >= 2")
    e = Fraction(str(eps))
    if not 0 < e <= 1:
        raise ValueError("eps must lie in (0, 1]")
    lg = _log2_exact(alphabet_size)
    if isinstance(lg, int):
        threshold = Fraction(kbar * lg) / e**6
        out = int(threshold) if threshold.denominator == 1 else float(threshold)
    else:
        threshold = kbar * lg / float(e) ** 6
        out = threshold
    return {
        "feasible": not n > threshold,
        "threshold": out,
        "kbar": kbar,
        "n": n,
        "eps": float(e),
        "alphabet": alphabet_size,
    }


def _entropy(counts: Counter) -> float:
    total = sum(counts.values())
    return -sum(c / total * math.log2(c / total) for c in counts.values())


def mutual_info_estimate(
    code: Code,
    rep: RepFamily | None,
    samples: int = 1_000,
    seed: int = 0,
    compressor: Callable | None = None,
) -> dict:
    """Plug-in estimate of I(X; f(C(X))) in bits over ``samples`` (message, draw) pairs.

    ``compressor(z, seed)`` overrides the record function (default: the
    adversary's ``compress`` over ``rep``).
    """
    rng = np.random.default_rng(seed)
    count = code.message_count()
    if compressor is None:
        if rep is None:
            raise ValueError("need rep or compressor")

        def compressor(z, s):
            rec = compress(z, rep, s, code.alphabet)
            return tuple(rec.values[qv] for qv in rep.Q)

    xs = Counter()
    ys = Counter()
    joint = Counter()
    encoded = {}
    for s in range(samples):
        xi = int(rng.integers(0, count))
        if xi not in encoded:
            encoded[xi] = code.encode(code.message(xi))
        y = compressor(encoded[xi], int(rng.integers(0, 2**63)))
        xs[xi] += 1
        ys[y] += 1
        joint[(xi, y)] += 1
    bits = _entropy(xs) + _entropy(ys) - _entropy(joint)
    lg = math.log2(len(code.alphabet))
    kbar = rep.kbar if rep is not None else None
    bound = code.n * lg if kbar is None else min(code.n * lg, kbar * lg)
    return {"bits": max(bits, 0.0), "samples": samples, "seed": seed, "kbar": kbar, "bound": bound}


# --------------------------------------------------------------- LCC


@dataclass
class LccAttack:
    pair: tuple  # indices into the image
    words: tuple
    deletions: tuple  # 1-based positions deleted from each word
    corrupted: str
    distance: int
    limit: float

    def to_json(self) -> dict:
        return {
            "pair": list(self.pair),
            "words": list(self.words),
            "deletions": [list(d) for d in self.deletions],
            "corrupted": self.corrupted,
            "distance": self.distance,
            "limit": self.limit,
            "verified": True,
        }


def lcc_distance_attack(code, eps_prime: float, alphabet: Alphabet | None = None) -> LccAttack | None:
    """Find two codewords within Hamming distance ``< eps_prime * M`` and merge them.

    Deleting the differing positions from both words leaves one common
    string, so no decoder can tell them apart. Returns the closest such
    pair (exhaustive scan), or ``None``.
    """
    if isinstance(code, Code):
        alphabet = alphabet or code.alphabet
        image = code.image()
    else:
        image = list(code)
        alphabet = alphabet or BINARY
    if len(image) < 2:
        return None
    M = len(image[0])
    limit = eps_prime * M
    arr = np.stack([alphabet.to_array(w) for w in image])
    best = None
    for a in range(len(image) - 1):
        dist = (arr[a + 1 :] != arr[a]).sum(axis=1)
        ok = np.flatnonzero((dist >= 1) & (dist < limit))
        if ok.size:
            j = ok[np.argmin(dist[ok])]
            if best is None or dist[j] < best[2]:
                best = (a, a + 1 + int(j), int(dist[j]))
    if best is None:
        return None
    a, b, d = best
    diff = (np.flatnonzero(arr[a] != arr[b]) + 1).tolist()
    keep = np.ones(M, dtype=bool)
    keep[np.asarray(diff) - 1] = False
    ca = "".join(np.array(list(image[a]))[keep])
    cb = "".join(np.array(list(image[b]))[keep])
    if ca != cb or not len(diff) < limit:
        raise AssertionError("distance attack produced unequal strings")
    return LccAttack((a, b), (image[a], image[b]), (tuple(diff), tuple(diff)), ca, d, limit)


# ------------------------------------------------------- block strings


def block_string(n: int) -> str:
    """``sqrt(n)`` runs of length ``sqrt(n)``, alternating 0s and 1s."""
    root = math.isqrt(n)
    if root * root != n or root % 2:
        raise ValueError(f"n={n} must be a perfect square with an even root")
    return ("0" * root + "1" * root) * (root // 2)


def ab_string(n: int, alpha: int, beta: int) -> str:
    """Alternating blocks of length ``2^beta``: runs of ``2^alpha`` (type A) then ``0101...`` (type B)."""
    width = 2**beta
    if n % (2 * width) or alpha >= beta:
        raise ValueError("need alpha < beta and n a multiple of 2^(beta+1)")
    a = ("0" * 2**alpha + "1" * 2**alpha) * (width // 2 ** (alpha + 1))
    b = "01" * (width // 2)
    return (a + b) * (n // (2 * width))


def _tv_table(dists: dict) -> list[dict]:
    out = []
    for (ga, da), (gb, db) in itertools.combinations(dists.items(), 2):
        out.append({"a": ga, "b": gb, "tv": tv_distance(da, db)})
    return out


def block_string_experiment(
    n: int,
    gaps: Sequence[int] = (4, 8, 4096),
    eps: float = 0.1,
    samples: int = 100_000,
    seed: int = 0,
    base: int | None = None,
    workers: int = 1,
) -> dict:
    """Output distributions of ``(base, base + D)`` on the block string, one per gap ``D``."""
    z = block_string(n)
    root = math.isqrt(n)
    base = base if base is not None else n // 4
    p = PrefixPeriodicPattern(eps)
    dists = {}
    for D in gaps:
        dists[D] = mc_output_dist(z, (base, base + D), p, samples, seed, workers=workers).probs
    regime = {D: ("small" if D <= root / 8 else "large" if D >= 8 * root else "middle") for D in gaps}
    pairs = _tv_table(dists)
    for row in pairs:
        row["same_regime"] = regime[row["a"]] == regime[row["b"]]
    return {
        "n": n,
        "eps": eps,
        "base": base,
        "samples": samples,
        "seed": seed,
        "workers": workers,
        "sigma": 1 / (2 * math.sqrt(samples)),
        "regime": {str(k): v for k, v in regime.items()},
        "dists": {str(k): {o: float(v) for o, v in sorted(d.items())} for k, d in dists.items()},
        "pairs": pairs,
    }


def ab_experiment(
    n: int = 2**14,
    alpha: int = 2,
    beta: int = 8,
    d1: int = 32,
    d2: int = 4096,
    eps: float = 0.1,
    samples: int = 100_000,
    seed: int = 0,
    base: int | None = None,
    workers: int = 1,
) -> dict:
    """Four-query ``(0, 1, D, D+1)`` distributions on the A/B string for ``D`` in ``(d1, d2)``."""
    z = ab_string(n, alpha, beta)
    base = base if base is not None else n // 4
    p = PrefixPeriodicPattern(eps)
    dists = {}
    for D in (d1, d2):
        qs = (base, base + 1, base + D, base + D + 1)
        dists[D] = mc_output_dist(z, qs, p, samples, seed, workers=workers).probs
    return {
        "n": n,
        "alpha": alpha,
        "beta": beta,
        "eps": eps,
        "base": base,
        "samples": samples,
        "seed": seed,
        "workers": workers,
        "dists": {str(k): {o: float(v) for o, v in sorted(d.items())} for k, d in dists.items()},
        "tv": tv_distance(dists[d1], dists[d2]),
    }
