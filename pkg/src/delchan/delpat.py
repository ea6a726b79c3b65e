"""Randomized deletion processes.

Two families are provided:

* ``LayeredPattern``: at every layer ``alpha`` the string is cut into
  chunks of length ``kappa**alpha``; each chunk independently marks its
  first ``I`` symbols, ``I`` uniform on ``0..floor(f_del(alpha) * kappa**alpha)``.
  Marks are then realized by a left-to-right counter sweep.
* ``PrefixPeriodicPattern``: delete a uniformly random prefix of up to
  ``eps/2`` of the string, then every ``floor(1/eps2)``-th survivor.

Positions are 1-based. ``ERR`` marks a query that ran past the end of the
corrupted string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import BadLength, LengthMismatch

ERR = "ERR"

# rows * nu above this are processed in slices to bound memory
_BATCH_CELLS = 1 << 22


@dataclass(frozen=True)
class LayeredPattern:
    kappa: int
    f_del: tuple = ()
    extended_length: int | None = None

    def __post_init__(self):
        if self.kappa < 2:
            raise ValueError("kappa must be >= 2")
        object.__setattr__(self, "f_del", tuple(float(f) for f in self.f_del))
        for f in self.f_del:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"deletion fraction {f} outside [0, 1]")

    @property
    def depth(self) -> int:
        return len(self.f_del)

    def caps(self) -> list[int]:
        """Largest mark count per chunk for each layer 1..depth."""
        # tiny slack so that e.g. 0.3 * 10 floors to 3, not 2
        return [math.floor(f * self.kappa ** (a + 1) + 1e-9) for a, f in enumerate(self.f_del)]

    def restrict(self, top: int) -> "LayeredPattern":
        """Keep only layers ``1..top``."""
        return LayeredPattern(self.kappa, self.f_del[: max(top, 0)])

    def is_trivial(self) -> bool:
        return not any(self.caps())

    def check_length(self, nu: int) -> None:
        if nu < 1 or nu % self.kappa**self.depth:
            raise BadLength(f"length {nu} is not a multiple of kappa^depth = {self.kappa ** self.depth}")

    def instance_count(self, nu: int) -> int:
        n = 1
        for a, c in enumerate(self.caps(), start=1):
            n *= (c + 1) ** (nu // self.kappa**a)
        return n

    def to_json(self) -> dict:
        d = {"kind": "layered", "kappa": self.kappa, "f_del": list(self.f_del)}
        if self.extended_length is not None:
            d["extended_length"] = self.extended_length
        return d


@dataclass(frozen=True)
class PrefixPeriodicPattern:
    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    def to_json(self) -> dict:
        return {"kind": "prefix_periodic", "eps": self.eps}


Pattern = Union[LayeredPattern, PrefixPeriodicPattern]

NO_DELETION = LayeredPattern(2, ())


def no_deletion(kappa: int = 2) -> LayeredPattern:
    return LayeredPattern(kappa, ())


def pattern_from_json(d: Mapping) -> Pattern:
    kind = d.get("kind", "layered")
    try:
        if kind == "layered":
            return LayeredPattern(int(d["kappa"]), tuple(d.get("f_del", ())), d.get("extended_length"))
        if kind == "prefix_periodic":
            return PrefixPeriodicPattern(float(d["eps"]))
    except KeyError as e:
        raise ValueError(f"{kind} pattern is missing field {e.args[0]!r}") from None
    raise ValueError(f"unknown pattern kind {kind!r}")


def total_corruption_bound(p: LayeredPattern) -> float:
    return math.fsum(p.f_del)


@dataclass(frozen=True)
class PatternInstance:
    nu: int
    deleted: tuple
    survivor_map: tuple
    marks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "nu": self.nu,
            "marks": [[a, i, v] for (a, i), v in sorted(self.marks.items()) if v],
            "deleted": list(self.deleted),
        }


def instance_from_deleted(nu: int, deleted, marks: dict | None = None) -> PatternInstance:
    dset = sorted(set(int(d) for d in deleted))
    if dset and not (1 <= dset[0] and dset[-1] <= nu):
        raise ValueError("deleted index outside 1..nu")
    keep = np.ones(nu + 1, dtype=bool)
    keep[0] = False
    keep[dset] = False
    return PatternInstance(nu, tuple(dset), tuple(np.flatnonzero(keep).tolist()), marks or {})


# ---------------------------------------------------------------- realization


def _realize(counts: np.ndarray) -> np.ndarray:
    """Deletion mask from per-position mark counts (last axis = position).

    The counter sweep ``c += t; if c > 0: delete, c -= 1`` is a Lindley
    recursion, so it has the closed form
    ``c_t = S_t - min(0, min_{s<=t} S_s)`` with ``S`` the running sum of
    ``t - 1``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    s = np.cumsum(counts - 1, axis=-1)
    c = s - np.minimum(np.minimum.accumulate(s, axis=-1), 0)
    prev = np.zeros_like(c)
    prev[..., 1:] = c[..., :-1]
    return (prev + counts) > 0


def realize_deletions(marks: Union[Mapping[int, int], Sequence[int]], nu: int) -> set:
    """Deleted positions given mark counts per position.

    ``marks`` is either a mapping ``position -> count`` or a length-``nu``
    sequence of counts. Any counter left over at the end is discarded.
    """
    counts = np.zeros(nu, dtype=np.int64)
    if isinstance(marks, Mapping):
        for pos, t in marks.items():
            counts[int(pos) - 1] += int(t)
    else:
        if len(marks) != nu:
            raise LengthMismatch(f"{len(marks)} mark counts for length {nu}")
        counts[:] = marks
    return set((np.flatnonzero(_realize(counts)) + 1).tolist())


def mark_counts(marks: Mapping[tuple, int], kappa: int, nu: int) -> np.ndarray:
    """Per-position mark counts from chunk marks ``(layer, chunk) -> I``."""
    d = np.zeros(nu + 1, dtype=np.int64)
    for (a, i), v in marks.items():
        start = (i - 1) * kappa**a
        d[start] += 1
        d[start + v] -= 1
    return np.cumsum(d)[:nu]


def _layer_stream(seed: int, alpha: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, alpha], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_instance(p: LayeredPattern, nu: int, seed: int) -> PatternInstance:
    """One realization of ``p`` on a string of length ``nu``.

    Layer ``alpha`` draws its per-chunk counts from an independent Philox
    stream keyed by ``(seed, alpha)``; chunk ``i`` always gets the
    ``i``-th draw, so the result does not depend on evaluation order.
    """
    p.check_length(nu)
    marks = {}
    for a, cap in enumerate(p.caps(), start=1):
        n_chunks = nu // p.kappa**a
        draws = _layer_stream(seed, a).integers(0, cap + 1, n_chunks) if cap else np.zeros(n_chunks, int)
        for i, v in enumerate(draws.tolist(), start=1):
            marks[(a, i)] = v
    counts = mark_counts(marks, p.kappa, nu)
    deleted = np.flatnonzero(_realize(counts)) + 1
    return instance_from_deleted(nu, deleted.tolist(), marks)


def prefix_periodic_deleted(M: int, eps1: float, eps2: float) -> set:
    """Deleted positions for fixed prefix fraction ``eps1`` and rate ``eps2``."""
    prefix = min(M, math.floor(eps1 * M + 1e-9))
    deleted = set(range(1, prefix + 1))
    period = _period(eps2, M)
    if period:
        rest = M - prefix
        deleted.update(prefix + j for j in range(period, rest + 1, period))
    return deleted


def _period(eps2: float, M: int) -> int:
    if eps2 < 1.0 / M:
        return 0
    return math.floor(1.0 / eps2 + 1e-9)


def sample_prefix_periodic(M: int, eps: float, seed: int) -> set:
    rng = np.random.default_rng(seed)
    eps1, eps2 = rng.uniform(0.0, eps / 2, 2)
    return prefix_periodic_deleted(M, float(eps1), float(eps2))


def sample_any(p: Pattern, nu: int, seed: int) -> PatternInstance:
    if isinstance(p, LayeredPattern):
        return sample_instance(p, nu, seed)
    return instance_from_deleted(nu, sample_prefix_periodic(nu, p.eps, seed))


def apply(z: str, inst: PatternInstance) -> tuple[str, tuple]:
    if len(z) != inst.nu:
        raise LengthMismatch(f"string length {len(z)} != instance length {inst.nu}")
    return "".join(z[j - 1] for j in inst.survivor_map), inst.survivor_map


def induced_indices(inst: PatternInstance, qs: Sequence[int]):
    """Original positions of corrupted-string queries, or ``ERR``."""
    if any(q < 1 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
        raise ValueError("queries must be positive and strictly increasing")
    n_alive = len(inst.survivor_map)
    if any(q > n_alive for q in qs):
        return ERR
    return tuple(inst.survivor_map[q - 1] for q in qs)


# ------------------------------------------------------------ batched draws


def _layered_deletion_masks(p: LayeredPattern, nu: int, rng: np.random.Generator, size: int) -> np.ndarray:
    d = np.zeros((size, nu + 1), dtype=np.int32)
    rows = np.arange(size)[:, None]
    for a, cap in enumerate(p.caps(), start=1):
        if not cap:
            continue
        width = p.kappa**a
        starts = np.arange(0, nu, width)
        draws = rng.integers(0, cap + 1, (size, len(starts)))
        d[:, starts] += 1
        np.add.at(d, (np.broadcast_to(rows, draws.shape), starts + draws), -1)
    counts = np.cumsum(d, axis=1)[:, :nu]
    return _realize(counts)


def induced_batch(p: Pattern, nu: int, queries, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Induced original positions for many independent pattern draws.

    ``queries`` is either one tuple of 1-based corrupted positions (used for
    every draw) or an integer array of shape ``(size, k)``. Returns an
    ``int64`` array of shape ``(size, k)`` where 0 means out of bounds.
    """
    q = np.asarray(queries, dtype=np.int64)
    if q.ndim == 1:
        if size is None:
            raise ValueError("size is required with a single query tuple")
        q = np.broadcast_to(q, (size, q.shape[0]))
    size, k = q.shape
    if isinstance(p, PrefixPeriodicPattern):
        return _prefix_periodic_batch(p, nu, q, rng)
    p.check_length(nu)
    if p.is_trivial():
        return np.where(q <= nu, q, 0)
    out = np.empty((size, k), dtype=np.int64)
    w0 = p.kappa ** next(a for a, c in enumerate(p.caps(), start=1) if c)
    step = max(1, _BATCH_CELLS // max(nu // w0, 1))
    for lo in range(0, size, step):
        hi = min(size, lo + step)
        before, run = _layered_runs(p, nu, rng, hi - lo)
        out[lo:hi] = induce_from_runs(before, run, w0, nu, q[lo:hi])
    return out


def induce_from_runs(before: np.ndarray, run: np.ndarray, w0: int, nu: int, q: np.ndarray) -> np.ndarray:
    """Induced positions (0 = out of range) for queries ``q`` given drawn runs."""
    alive = nu - before[:, -1:] - run[:, -1:]
    # survivors preceding each chunk start
    first = np.arange(0, nu, w0)[None, :] - before
    out = np.empty(q.shape, dtype=np.int64)
    for j in range(q.shape[1]):
        t = q[:, j : j + 1]
        e = (first < t).sum(axis=1, keepdims=True) - 1
        pos = t + np.take_along_axis(before + run, e, axis=1)
        out[:, j : j + 1] = np.where(t <= alive, pos, 0)
    return out


def _layered_runs(p: LayeredPattern, nu: int, rng: np.random.Generator, size: int):
    """Deletion runs at the starts of the finest marked chunks.

    Marks only ever cover a prefix of a chunk, so every deletion run starts
    at a chunk start of the finest layer with a nonzero cap (width ``w0``).
    Lumping each start's marks there leaves the counter sweep unchanged,
    and across starts the carry obeys the same recursion with ``w0`` in
    place of 1. Returns ``(deleted_before, run_length)``, each
    ``(size, nu // w0)``. Draws match ``_layered_deletion_masks``.
    """
    caps = p.caps()
    a0 = next(a for a, c in enumerate(caps, start=1) if c)
    w0 = p.kappa**a0
    lump = np.zeros((size, nu // w0), dtype=np.int64)
    for a, cap in enumerate(caps, start=1):
        if not cap:
            continue
        draws = rng.integers(0, cap + 1, (size, nu // p.kappa**a))
        lump[:, :: p.kappa ** (a - a0)] += draws
    s = np.cumsum(lump - w0, axis=1)
    carry = s - np.minimum(np.minimum.accumulate(s, axis=1), 0)
    prev = np.zeros_like(carry)
    prev[:, 1:] = carry[:, :-1]
    run = np.minimum(prev + lump, w0)
    before = np.cumsum(run, axis=1) - run
    return before, run


def _prefix_periodic_batch(p: PrefixPeriodicPattern, M: int, q: np.ndarray, rng) -> np.ndarray:
    size = q.shape[0]
    eps1 = rng.uniform(0.0, p.eps / 2, size)
    eps2 = rng.uniform(0.0, p.eps / 2, size)
    prefix = np.minimum(np.floor(eps1 * M + 1e-9).astype(np.int64), M)[:, None]
    with np.errstate(divide="ignore"):
        period = np.where(eps2 >= 1.0 / M, np.floor(1.0 / np.maximum(eps2, 1e-300) + 1e-9), 0).astype(np.int64)
    period = period[:, None]
    # q-th survivor among the post-prefix positions skips every period-th one
    j = np.where(period > 0, q + (q - 1) // np.maximum(period - 1, 1), q)
    orig = prefix + j
    return np.where(orig <= M, orig, 0)
