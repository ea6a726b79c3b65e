"""Construction of the layered adversary and its representative query family.

The builder assigns a deletion fraction to every layer ``1..m`` while
growing families ``F[r]`` of difference lists (``r`` = query count):

1. preliminary layers get ``preliminary_fraction`` and ``F`` is seeded
   with every list over a small difference set ``S``;
2. a sweep over the middle layers corrupts a window around every layer
   that is significant for some family list, and splices new
   differences from that window's grid into longer lists;
3. the top ``window`` layers get ``final_fraction`` and layer ``m`` gets
   ``top_fraction``.

The theory values of every constant are astronomically large; each one is
a field of ``AdversaryParams`` instead (theory value in the comment).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .codeword import BINARY, Alphabet, Code, log_power
from .delpat import ERR, LayeredPattern, sample_instance, total_corruption_bound
from .errors import BudgetExceeded, NoMatch, QTooLarge
from .layers import scan_layers
from .querydist import mc_output_dist, tv_distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdversaryParams:
    kappa: int = 4
    m: int = 6
    k: int = 2
    preliminary_fraction: float = 0.01  # theory: kappa^-(kappa^2)
    significant_fraction: float = 0.01  # theory: kappa^-(kappa^3 r^r)
    final_fraction: float = 0.01  # theory: kappa^-(kappa^3)
    top_fraction: float = 0.02  # theory: kappa^-5
    grid: int = 4  # theory: kappa^(2 kappa^2) (r^r in the sweep)
    window: int = 2  # theory: kappa^kappa
    rho: float = 0.1  # theory: 2^-kappa
    budget: float = 0.1  # theory: 2^-kappa plus the top layer
    small_cap: int | None = None  # theory: kappa^3; default kappa
    zero_layers: int = 1  # layers with no deletion; theory: kappa^3
    preliminary_top: int = 2  # theory: 2 kappa^kappa
    sweep_lo: int | None = None  # default preliminary_top + 1
    sweep_hi: int | None = None  # default m - window
    stride: int | None = None  # theory: kappa^(m - 1.75 kappa^kappa); default kappa^(m-2)
    max_q: int = 200_000
    growth_limit: int = 64
    image_samples: int = 16
    samples: int = 1_000
    seed: int = 0

    def __post_init__(self):
        for name in ("preliminary_fraction", "significant_fraction", "final_fraction", "top_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} must lie in (0, 1)")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.kappa < 2 or self.m < 1 or self.k < 1:
            raise ValueError("kappa >= 2, m >= 1 and k >= 1 required")

    @property
    def length(self) -> int:
        return self.kappa**self.m

    def resolved(self) -> dict:
        d = asdict(self)
        d["small_cap"] = self.small_cap if self.small_cap is not None else self.kappa
        d["sweep_lo"] = self.sweep_lo if self.sweep_lo is not None else self.preliminary_top + 1
        d["sweep_hi"] = self.sweep_hi if self.sweep_hi is not None else self.m - self.window
        d["stride"] = self.stride if self.stride is not None else self.kappa ** max(self.m - 2, 0)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "AdversaryParams":
        return cls(**d)


@dataclass
class RepFamily:
    F: dict
    G: list
    Q: list
    pattern: LayeredPattern
    params: AdversaryParams
    events: list = field(default_factory=list)
    image_mode: str = "explicit"

    @property
    def kbar(self) -> int:
        return kbar_bound(self.params)

    def sizes(self) -> dict:
        return {r: len(v) for r, v in sorted(self.F.items())}

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern.to_json(),
            "F": {str(r): [list(d) for d in v] for r, v in sorted(self.F.items())},
            "G": list(self.G),
            "Q": [list(q) for q in self.Q],
            "params": asdict(self.params),
            "events": self.events,
            "image_mode": self.image_mode,
            "kbar": self.kbar,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RepFamily":
        p = d["pattern"]
        return cls(
            F={int(r): [tuple(x) for x in v] for r, v in d["F"].items()},
            G=list(d["G"]),
            Q=[tuple(q) for q in d["Q"]],
            pattern=LayeredPattern(int(p["kappa"]), tuple(p["f_del"])),
            params=AdversaryParams.from_json(d["params"]),
            events=list(d.get("events", [])),
            image_mode=d.get("image_mode", "explicit"),
        )


def _grid_values(kappa: int, layers, grid: int, limit: int) -> set:
    out = set()
    for a in layers:
        for i in range(1, grid + 1):
            v = (kappa**a * (grid + i)) // grid
            if 1 <= v < limit:
                out.add(v)
    return out


def base_layer(diffs: Sequence[int], kappa: int) -> int:
    """Smallest layer ``t >= 1`` whose chunks are longer than the list's span."""
    span = sum(diffs)
    t = 1
    while kappa**t <= span:
        t += 1
    return t


def _splices(F: dict, S_a: Sequence[int], length: int, limit: int) -> list[tuple]:
    """Difference lists of ``length`` built as ``L0 s1 L1 s2 ... Lj`` with ``j >= 1``.

    Each ``L`` is a family list (possibly empty) and each ``s`` comes from
    ``S_a``. Enumeration stops after ``limit`` candidates.
    """
    by_len: dict = {}
    for r, lists in F.items():
        by_len.setdefault(r - 1, []).extend(lists)

    def gen(rem: int, placed: bool):
        for n in range(0, rem + 1):
            for L in by_len.get(n, ()):
                if n == rem:
                    if placed:
                        yield tuple(L)
                    continue
                for s in S_a:
                    for tail in gen(rem - n - 1, True):
                        yield tuple(L) + (s,) + tail

    return list(dict.fromkeys(itertools.islice(gen(length, False), limit)))


def _select_image(code, params: AdversaryParams, alphabet: Alphabet):
    if not isinstance(code, Code):
        image = list(code)
        if len(image) > params.image_samples:
            rng = np.random.default_rng(params.seed)
            pick = sorted(rng.choice(len(image), params.image_samples, replace=False).tolist())
            return [image[i] for i in pick], "sampled"
        return image, "explicit"
    if code.message_count() <= params.image_samples:
        return code.image(), "exhaustive"
    rng = np.random.default_rng(params.seed)
    idx = rng.choice(code.message_count(), params.image_samples, replace=False)
    return [code.encode(code.message(int(i))) for i in sorted(idx.tolist())], "sampled"


def build_adversary(code, params: AdversaryParams = AdversaryParams(), alphabet: Alphabet | None = None) -> RepFamily:
    """Run the three construction phases and derive ``G`` and ``Q``."""
    alphabet = alphabet or (code.alphabet if isinstance(code, Code) else BINARY)
    cfg = params.resolved()
    kappa, m, k, window = params.kappa, params.m, params.k, params.window
    M = kappa**m
    image, image_mode = _select_image(code, params, alphabet)
    if any(len(z) != M for z in image):
        raise ValueError(f"codewords must have length kappa^m = {M}; pad them first")
    arrays = [alphabet.to_array(z) for z in image]
    q = len(alphabet)

    # phase 1: preliminary layers and the seed family
    f = [0.0] * (m + 1)  # f[a] for layer a; index 0 unused
    prelim = range(params.zero_layers + 1, min(params.preliminary_top, m) + 1)
    for a in prelim:
        f[a] = params.preliminary_fraction
    S = set(range(1, cfg["small_cap"] + 1)) | _grid_values(kappa, prelim, params.grid, M)
    S = sorted(v for v in S if v < M)
    F: dict = {1: [()]}
    for r in range(2, k + 2):
        F[r] = [tuple(t) for t in itertools.product(S, repeat=r - 1)]

    # phase 2: sweep
    events = []
    scans: dict = {}
    draws: dict = {}
    rng = np.random.default_rng(params.seed)
    for a in range(cfg["sweep_lo"], cfg["sweep_hi"] + 1):
        limit = kappa ** (a - window / 2)
        triggered = []
        for r in sorted(F):
            for diffs in F[r]:
                if sum(diffs) >= limit:
                    continue
                tau = base_layer(diffs, kappa)
                key = (diffs, tuple(f[1 : tau + 1]))
                if key not in scans:
                    pattern = LayeredPattern(kappa, tuple(f[1 : m + 1]))
                    res = scan_layers(arrays, diffs, pattern, params.rho, tau, window, kappa, q,
                                      samples=params.samples, seed=params.seed, conditional=True,
                                      draws=draws)
                    # layers found by the threshold test, not the unconditional window
                    scans[key] = {t for s in res.values() for t in s.found[len(_window(tau, window, m)):]}
                if a in scans[key]:
                    triggered.append((r, diffs))
        if not triggered:
            continue
        r_min = min(r for r, _ in triggered)
        for a2 in range(max(1, a - window), min(m, a + window - 1) + 1):
            f[a2] = max(f[a2], params.significant_fraction)
        S_a = sorted(_grid_values(kappa, range(a - window, a + window), params.grid, M))
        added = {}
        for r2 in range(r_min + 1, k + 2):
            cands = [d for d in _splices(F, S_a, r2 - 1, 50 * params.growth_limit) if d not in set(F[r2])]
            if len(cands) > params.growth_limit:
                pick = sorted(rng.choice(len(cands), params.growth_limit, replace=False).tolist())
                cands = [cands[i] for i in pick]
            F[r2] = F[r2] + cands
            added[r2] = len(cands)
        events.append({"layer": a, "r": r_min, "trigger": list(triggered[0][1]), "added": added})
        log.debug("layer %d significant (r=%d), added %s", a, r_min, added)

    # phase 3: top layers
    for a in range(max(1, m - window + 1), m + 1):
        f[a] = max(f[a], params.final_fraction)
    f[m] = params.top_fraction
    pattern = LayeredPattern(kappa, tuple(f[1:]))
    total = total_corruption_bound(pattern)
    if total > params.budget:
        raise BudgetExceeded(f"sum of f_del = {total:.6g} exceeds budget {params.budget}")
    G, Q = derive_G_Q(F, k, cfg["stride"], M, params.max_q)
    return RepFamily(F, G, Q, pattern, params, events, image_mode)


def _window(tau: int, window: int, m: int) -> list[int]:
    return [t for t in range(tau, tau + window) if 1 <= t <= m]


def derive_G_Q(F: dict, k: int, stride: int, M: int, max_q: int = 200_000) -> tuple[list, list]:
    """Difference set ``G`` and the query lists ``Q`` of its ``k``-fold prefix sums.

    ``G`` holds every difference used in a family list plus every multiple
    of ``stride`` up to ``M``. Query lists whose last position exceeds
    ``M`` are dropped.
    """
    G = {d for lists in F.values() for diffs in lists for d in diffs}
    if stride > 0:
        G.update(range(stride, M + 1, stride))
    G = sorted(G)
    if len(G) ** k > 50 * max_q:
        raise QTooLarge(f"|G|^k = {len(G) ** k} candidate query lists; increase the stride")
    Q = []
    for t in itertools.product(G, repeat=k):
        pos = tuple(itertools.accumulate(t))
        if pos[-1] <= M:
            Q.append(pos)
    if len(Q) > max_q:
        raise QTooLarge(f"|Q| = {len(Q)} exceeds cap {max_q}")
    return G, sorted(Q)


def _count_prefix_sums(G: Sequence[int], k: int, M: int) -> int:
    # ways[s] = number of ordered j-tuples over G summing to s
    ways = np.zeros(M + 1, dtype=np.int64)
    ways[0] = 1
    for _ in range(k):
        nxt = np.zeros(M + 1, dtype=np.int64)
        for g in G:
            nxt[g:] += ways[: M + 1 - g]
        ways = nxt
    return int(ways[1:].sum())


def kbar_bound(params: AdversaryParams) -> int:
    """Record length ``k * |Q|`` for the largest ``Q`` these parameters allow.

    Depends on the parameters only, never on the code: every difference
    the builder can emit lies in the seed set, in some sweep grid, or
    among the stride multiples.
    """
    cfg = params.resolved()
    kappa, M = params.kappa, params.length
    prelim = range(params.zero_layers + 1, min(params.preliminary_top, params.m) + 1)
    G = set(range(1, cfg["small_cap"] + 1)) | _grid_values(kappa, prelim, params.grid, M)
    sweep = range(cfg["sweep_lo"] - params.window, cfg["sweep_hi"] + params.window)
    G |= _grid_values(kappa, sweep, params.grid, M)
    G = {g for g in G if g < M}
    if cfg["stride"] > 0:
        G.update(range(cfg["stride"], M + 1, cfg["stride"]))
    return params.k * min(_count_prefix_sums(sorted(G), params.k, M), params.max_q)


def family_bound(F: dict, params: AdversaryParams) -> dict:
    """Parameterized analog of the family-size bound, per ``r``."""
    out = {}
    for r in sorted(F):
        prev = max((len(F[s]) for s in F if s < r), default=0)
        out[r] = (params.grid * params.window * (1 + prev)) ** r
    return out


# ------------------------------------------------------------ compression


@dataclass
class CompressedRecord:
    values: dict
    k: int
    seed: int
    kbar: int

    def to_json(self) -> dict:
        return {"seed": self.seed, "kbar": self.kbar,
                "values": [[list(q), v] for q, v in sorted(self.values.items())]}


def compress(z: str, rep: RepFamily, seed: int, alphabet: Alphabet = BINARY) -> CompressedRecord:
    """Apply one draw of the adversary and read every list in ``Q``."""
    M = len(z)
    if M != rep.params.length:
        raise ValueError(f"string length {M} != kappa^m = {rep.params.length}")
    alphabet.validate(z)
    inst = sample_instance(rep.pattern, M, seed)
    surv = np.asarray(inst.survivor_map, dtype=np.int64)
    arr = np.frombuffer(z.encode("latin-1"), dtype=np.uint8)
    values = {}
    if rep.Q:
        Qa = np.asarray(rep.Q, dtype=np.int64)
        ok = (Qa[:, -1] <= len(surv)).tolist()
        idx = surv[np.minimum(Qa, len(surv)) - 1] - 1 if len(surv) else np.zeros_like(Qa)
        for qv, good, row in zip(rep.Q, ok, arr[idx]):
            values[qv] = row.tobytes().decode("latin-1") if good else ERR
    return CompressedRecord(values, rep.params.k, seed, rep.kbar)


def structural_distance(a: Sequence[int], b: Sequence[int]) -> float:
    """Sum of log-ratio distances between corresponding gaps (first gap = first position)."""
    ga = [a[0]] + [y - x for x, y in zip(a, a[1:])]
    gb = [b[0]] + [y - x for x, y in zip(b, b[1:])]
    return sum(abs(math.log2(x) - math.log2(y)) for x, y in zip(ga, gb))


class Matcher:
    """Chooses the ``Q`` element that stands in for an arbitrary query list.

    ``structural`` picks the nearest list by gap log-ratios. ``empirical``
    takes the ``candidates`` structurally nearest lists and keeps the one
    whose measured output distribution under the adversary is closest in
    total variation to that of the query itself, averaged over the
    supplied codewords. Both sides share pattern draws, scores are rounded
    to ``resolution`` and ties go to the structurally nearer list.
    """

    def __init__(self, rep: RepFamily, mode: str = "structural", image: Sequence[str] = (),
                 alphabet: Alphabet = BINARY, candidates: int = 16, samples: int = 4_000,
                 resolution: float | None = None, seed: int = 0):
        if mode not in ("structural", "empirical"):
            raise ValueError(f"unknown matching mode {mode!r}")
        if mode == "empirical" and not image:
            raise ValueError("empirical matching needs codewords")
        self.rep, self.mode, self.image, self.alphabet = rep, mode, list(image), alphabet
        self.candidates, self.samples, self.seed = candidates, samples, seed
        self.resolution = resolution if resolution is not None else 2 / math.sqrt(samples)
        self._Q = set(rep.Q)
        self._dists: dict = {}

    def _dist(self, qs: tuple) -> list:
        if qs not in self._dists:
            self._dists[qs] = [mc_output_dist(z, qs, self.rep.pattern, self.samples, self.seed, self.alphabet).probs
                               for z in self.image]
        return self._dists[qs]

    def score(self, cand: tuple, qs: tuple) -> float:
        pairs = zip(self._dist(cand), self._dist(qs))
        return sum(tv_distance(a, b) for a, b in pairs) / len(self.image)

    def match(self, qs: Sequence[int]) -> tuple:
        qs = tuple(int(v) for v in qs)
        if not self.rep.Q:
            raise NoMatch("Q is empty")
        if qs in self._Q:
            return qs
        same_k = [c for c in self.rep.Q if len(c) == len(qs)]
        if not same_k:
            raise NoMatch(f"no query list of length {len(qs)} in Q")
        ranked = sorted(same_k, key=lambda c: (structural_distance(c, qs), c))
        if self.mode == "structural":
            return ranked[0]
        pool = ranked[: self.candidates]
        res = self.resolution
        return min(pool, key=lambda c: (round(self.score(c, qs) / res), structural_distance(c, qs), c))


def simulate_query(record: CompressedRecord, qs: Sequence[int], rep: RepFamily, mode: str = "structural",
                   matcher: Matcher | None = None, **matcher_kw) -> str:
    """Answer query list ``qs`` from a compressed record alone."""
    matcher = matcher or Matcher(rep, mode, **matcher_kw)
    return record.values[matcher.match(qs)]
