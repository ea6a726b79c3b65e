"""Multi-scale weights, critical layers and significant layers.

Layer ``l`` cuts a length ``kappa**m`` string into chunks of length
``kappa**l``. The weight of an output pattern ``b`` at layer ``l`` is the
chunk-average of the squared shift-invariant frequency of ``b`` inside
each chunk; the cumulative weight averages that over a code's image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .codeword import BINARY, Alphabet, Code, code_image, log_power
from .delpat import NO_DELETION, LayeredPattern, Pattern
from .querydist import DEFAULT_CAP, _encode_outcome, freq_table, start_codes

TOP_SENTINEL = -1
BOTTOM_SENTINEL = 2


def _kappa(p: Pattern, kappa: int | None) -> int:
    if kappa is not None:
        return kappa
    if isinstance(p, LayeredPattern):
        return p.kappa
    return 2


def _restricted(p: Pattern, top: int) -> Pattern:
    return p.restrict(top) if isinstance(p, LayeredPattern) else p


def layer_freqs(
    z: np.ndarray,
    ell: int,
    kappa: int,
    diffs: Sequence[int],
    p: Pattern,
    q: int,
    mode: str = "exact",
    cap: int = DEFAULT_CAP,
    samples: int = 2_000,
    rng=None,
):
    """``(table, denom)`` of outcome weights for every length-``kappa**ell`` chunk."""
    return freq_table(z, kappa**ell, diffs, _restricted(p, ell), q, mode, cap, samples, rng)


def _weight_from_table(table, denom, col, exact: bool):
    f = table[:, col]
    if exact:
        return Fraction(int((f.astype(object) ** 2).sum()), denom * denom * len(f))
    return float(np.mean((f / denom) ** 2))


def weight(
    b: str,
    z: str,
    diffs: Sequence[int],
    p: Pattern,
    ell: int,
    kappa: int | None = None,
    mode: str = "exact",
    alphabet: Alphabet = BINARY,
    samples: int = 2_000,
    seed: int = 0,
):
    """Chunk-average of ``freq(b)**2`` at layer ``ell``.

    The pattern is restricted to layers ``<= ell``. Exact mode returns a
    ``Fraction``.
    """
    kappa = _kappa(p, kappa)
    arr = alphabet.to_array(z)
    table, denom = layer_freqs(arr, ell, kappa, diffs, p, len(alphabet), mode, samples=samples, rng=np.random.default_rng(seed))
    return _weight_from_table(table, denom, _encode_outcome(b, alphabet), mode == "exact")


@dataclass
class WeightProfile:
    values: dict
    b: str
    diffs: tuple
    pattern: dict
    mode: str
    image_mode: str = "explicit"

    @property
    def top(self) -> int:
        return max(self.values)

    def at(self, t: int):
        """Weight at layer ``t`` with sentinels outside ``1..top``."""
        if t <= 0:
            return BOTTOM_SENTINEL
        if t > self.top:
            return TOP_SENTINEL
        return self.values[t]

    def to_json(self) -> dict:
        return {
            "b": self.b,
            "diffs": list(self.diffs),
            "pattern": self.pattern,
            "mode": self.mode,
            "image_mode": self.image_mode,
            "weights": {str(t): float(v) for t, v in sorted(self.values.items())},
        }


def cumulative_profile(
    b: str,
    code: "Code | Sequence[str]",
    diffs: Sequence[int] = (),
    p: Pattern = NO_DELETION,
    kappa: int | None = None,
    mode: str = "exact",
    alphabet: Alphabet | None = None,
    samples: int = 2_000,
    seed: int = 0,
) -> WeightProfile:
    """Cumulative weight at every layer ``1..m`` of a code (or explicit image)."""
    kappa = _kappa(p, kappa)
    alphabet = alphabet or (code.alphabet if isinstance(code, Code) else BINARY)
    image, image_mode = code_image(code, seed=seed)
    m = log_power(len(image[0]), kappa)
    col = _encode_outcome(b, alphabet)
    rng = np.random.default_rng(seed)
    exact = mode == "exact"
    sums = {t: Fraction(0) if exact else 0.0 for t in range(1, m + 1)}
    for z in image:
        arr = alphabet.to_array(z)
        for t in range(1, m + 1):
            table, denom = layer_freqs(arr, t, kappa, diffs, p, len(alphabet), mode, samples=samples, rng=rng)
            sums[t] += _weight_from_table(table, denom, col, exact)
    values = {t: v / len(image) for t, v in sums.items()}
    pj = p.to_json() if hasattr(p, "to_json") else {}
    return WeightProfile(values, b, tuple(diffs), pj, mode, image_mode)


def cumulative_weight(b, code, diffs=(), p: Pattern = NO_DELETION, ell: int = 1, kappa=None, mode="exact", alphabet=None, samples=2_000, seed=0):
    return cumulative_profile(b, code, diffs, p, kappa, mode, alphabet, samples, seed).values[ell]


def _floor_div(x, delta) -> int:
    return int((Fraction(x) / delta).__floor__())


def critical_layers(b: str, code, delta, kappa: int = 2, alphabet: Alphabet | None = None, profile: WeightProfile | None = None) -> list[int]:
    """Layers ``t`` where ``W(t+1) < k * delta <= W(t)`` for some integer ``k``.

    Uses the single-query, no-deletion cumulative weight; ``W(m+1)`` is the
    top sentinel -1.
    """
    delta = Fraction(delta).limit_denominator(10**9)
    if (1 / delta).denominator != 1:
        raise ValueError("1/delta must be an integer")
    prof = profile or cumulative_profile(b, code, (), NO_DELETION, kappa, "exact", alphabet)
    found = []
    for t in range(1, prof.top + 1):
        hi, lo = Fraction(prof.at(t)), Fraction(prof.at(t + 1))
        k = _floor_div(hi, delta)
        if k * delta > lo:
            found.append(t)
    return found


@dataclass
class LayerScan:
    tau: int
    window: int
    found: list
    rho: float
    refinements: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "window": self.window,
            "rho": self.rho,
            "found": list(self.found),
            "refinements": {f"{a}->{c}": float(v) for (a, c), v in sorted(self.refinements.items())},
        }


class _ScaleCache:
    """Per-codeword, per-layer frequency columns under ``del_{tau|l}``."""

    def __init__(self, arrays, diffs, p, tau, kappa, q, mode, samples, rng, conditional=False, draws=None):
        self.arrays, self.diffs, self.p, self.tau = arrays, tuple(diffs), p, tau
        self.conditional, self.draws = conditional, draws
        self.kappa, self.q, self.mode, self.samples, self.rng = kappa, q, mode, samples, rng
        self._cache: dict = {}
        self._codes: dict = {}

    def freqs(self, ell: int) -> list[np.ndarray]:
        """One ``(chunks, outcomes)`` float array per codeword."""
        if ell not in self._cache:
            p = _restricted(self.p, min(self.tau, ell))
            out = []
            for w, arr in enumerate(self.arrays):
                codes = None
                if isinstance(p, LayeredPattern) and p.is_trivial():
                    if w not in self._codes:
                        self._codes[w] = start_codes(arr, self.diffs, self.q)
                    codes = self._codes[w]
                table, denom = freq_table(arr, self.kappa**ell, self.diffs, p, self.q, self.mode,
                                          samples=self.samples, rng=self.rng, codes=codes, draws=self.draws)
                f = table / denom
                if self.conditional:
                    # frequencies among in-range reads; ERR column kept as is
                    ok = 1.0 - f[:, -1:]
                    f = np.concatenate([np.divide(f[:, :-1], ok, out=np.zeros_like(f[:, :-1]), where=ok > 0), f[:, -1:]], axis=1)
                out.append(f)
            self._cache[ell] = out
        return self._cache[ell]

    def refinement(self, lo: int, hi: int) -> np.ndarray:
        """``E_{z, j at lo} |f_hi(parent(j)) - f_lo(j)|`` for every outcome column."""
        step = self.kappa ** (hi - lo)
        acc = None
        for f_lo, f_hi in zip(self.freqs(lo), self.freqs(hi)):
            parent = np.arange(len(f_lo)) // step
            v = np.abs(f_hi[parent] - f_lo).mean(axis=0)
            acc = v if acc is None else acc + v
        return acc / len(self.arrays)


def scan_layers(
    arrays: Sequence[np.ndarray],
    diffs: Sequence[int],
    p: Pattern,
    rho: float,
    tau: int,
    window: int,
    kappa: int,
    q: int,
    columns: Sequence[int] | None = None,
    mode: str = "auto",
    samples: int = 2_000,
    seed: int = 0,
    conditional: bool = False,
    draws: dict | None = None,
) -> dict:
    """Significant-layer scan for several output columns at once.

    Returns ``{column: LayerScan}``. ``arrays`` are symbol-index arrays of
    the codewords to average over. With ``conditional`` the frequencies are
    taken among in-range reads only, which removes the chunk-boundary
    ``ERR`` mass that dominates at small scales. ``draws`` shares Monte
    Carlo draws across calls (see ``freq_table``).
    """
    m = log_power(len(arrays[0]), kappa)
    r = len(diffs) + 1
    columns = list(range(q**r)) if columns is None else list(columns)
    cache = _ScaleCache(arrays, diffs, p, tau, kappa, q, mode, samples, np.random.default_rng(seed), conditional, draws)
    base = [t for t in range(tau, tau + window) if 1 <= t <= m]
    scans = {c: LayerScan(tau, window, list(base), rho) for c in columns}
    active = {c: (base[-1] if base else tau) for c in columns}
    # layers at or below tau - 1 never serve as refinement bases
    while active:
        nxt = {}
        for c, lo in active.items():
            if lo < 1 or lo >= m:
                continue
            for hi in range(lo + 1, m + 1):
                v = float(cache.refinement(lo, hi)[c])
                scans[c].refinements[(lo, hi)] = v
                if v > rho:
                    scans[c].found.append(hi)
                    nxt[c] = hi
                    break
        active = nxt
    return scans


def significant_layers(
    b: str,
    code,
    diffs: Sequence[int],
    p: Pattern,
    rho: float,
    tau: int,
    window: int,
    kappa: int | None = None,
    alphabet: Alphabet | None = None,
    mode: str = "auto",
    samples: int = 2_000,
    seed: int = 0,
) -> LayerScan:
    """Significant layers for output ``b``.

    Layers ``tau .. tau + window - 1`` are included unconditionally. After
    the last found layer ``l``, the next one is the smallest ``l' > l``
    whose code-averaged refinement difference
    ``E |freq(b; parent chunk at l') - freq(b; chunk at l)|`` exceeds
    ``rho``. Frequencies at layer ``t`` use the pattern restricted to layers
    ``<= min(tau, t)``.
    """
    if tau < 1 or window < 0:
        raise ValueError("tau must be >= 1 and window >= 0")
    kappa = _kappa(p, kappa)
    alphabet = alphabet or (code.alphabet if isinstance(code, Code) else BINARY)
    image, _ = code_image(code, seed=seed)
    arrays = [alphabet.to_array(z) for z in image]
    col = _encode_outcome(b, alphabet)
    return scan_layers(arrays, diffs, p, rho, tau, window, kappa, len(alphabet), [col], mode, samples, seed)[col]


def weight_telescoping_check(
    b: str,
    code,
    diffs: Sequence[int] = (),
    p: Pattern = NO_DELETION,
    ell_lo: int = 1,
    ell_hi: int = 2,
    kappa: int | None = None,
    alphabet: Alphabet | None = None,
) -> dict:
    """Compare ``CW(lo) - CW(hi)`` with the mean sub-chunk variance.

    All three quantities are exact rationals. For a single query without
    deletions they coincide; ``holds`` reports whether they do.
    """
    if ell_lo >= ell_hi:
        raise ValueError("need ell_lo < ell_hi")
    kappa = _kappa(p, kappa)
    alphabet = alphabet or (code.alphabet if isinstance(code, Code) else BINARY)
    image, image_mode = code_image(code)
    col = _encode_outcome(b, alphabet)
    q = len(alphabet)
    step = kappa ** (ell_hi - ell_lo)
    cw_lo = cw_hi = var = sq = Fraction(0)
    for z in image:
        arr = alphabet.to_array(z)
        t_lo, d_lo = layer_freqs(arr, ell_lo, kappa, diffs, p, q)
        t_hi, d_hi = layer_freqs(arr, ell_hi, kappa, diffs, p, q)
        f_lo = [Fraction(int(v), d_lo) for v in t_lo[:, col]]
        f_hi = [Fraction(int(v), d_hi) for v in t_hi[:, col]]
        cw_lo += sum(v * v for v in f_lo) / len(f_lo)
        cw_hi += sum(v * v for v in f_hi) / len(f_hi)
        sq += sum((v - f_hi[j // step]) ** 2 for j, v in enumerate(f_lo)) / len(f_lo)
        groups = [f_lo[g * step : (g + 1) * step] for g in range(len(f_hi))]
        var += sum(sum(v * v for v in g) / step - (sum(g) / step) ** 2 for g in groups) / len(groups)
    n = len(image)
    cw_diff = (cw_lo - cw_hi) / n
    var, sq = var / n, sq / n
    return {
        "ell_lo": ell_lo,
        "ell_hi": ell_hi,
        "cw_diff": cw_diff,
        "mean_variance": var,
        "mean_sq_refinement": sq,
        "holds": cw_diff == var == sq,
        "image_mode": image_mode,
    }


def monotone_weights_exact(z: str, kappa: int = 2, b: str = "0", alphabet: Alphabet = BINARY) -> list[Fraction]:
    """Single-query no-deletion weights for layers ``1..m`` via integer counts."""
    arr = alphabet.to_array(z) == alphabet.index(b)
    M = len(arr)
    m = log_power(M, kappa)
    out = []
    for t in range(1, m + 1):
        L = kappa**t
        c = arr.reshape(-1, L).sum(axis=1).astype(object)
        out.append(Fraction(int((c * c).sum()), L * M))
    return out
