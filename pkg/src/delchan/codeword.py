"""Alphabets, codewords and the toy codes used as attack targets.

Codewords are plain ``str`` values with one character per symbol. All
positions are 1-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import BadMessage, NonDividing, OutOfRange

CODE_KINDS = ("identity", "repetition", "hadamard", "random")


@dataclass(frozen=True)
class Alphabet:
    symbols: str = "01"
    zero: str | None = None

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ValueError("alphabet needs at least two symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in {self.symbols!r}")
        if self.zero is None:
            object.__setattr__(self, "zero", self.symbols[0])
        if self.zero not in self.symbols:
            raise ValueError(f"zero symbol {self.zero!r} not in alphabet")

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, s):
        return s in self.symbols

    def index(self, s: str) -> int:
        return self.symbols.index(s)

    def validate(self, z: str) -> None:
        bad = set(z) - set(self.symbols)
        if bad:
            raise BadMessage(f"symbols {sorted(bad)} not in alphabet {self.symbols!r}")

    def to_array(self, z: str) -> np.ndarray:
        """Symbol indices of ``z`` as a uint8 array."""
        lut = np.zeros(256, dtype=np.uint8)
        for k, s in enumerate(self.symbols):
            lut[ord(s)] = k
        return lut[np.frombuffer(z.encode("latin-1"), dtype=np.uint8)]

    def from_array(self, a) -> str:
        return "".join(self.symbols[int(v)] for v in a)

    def words(self, r: int) -> Iterator[str]:
        for t in itertools.product(self.symbols, repeat=r):
            yield "".join(t)


BINARY = Alphabet("01")


def chunk(z: str, nu: int, i: int) -> str:
    """The ``i``-th (1-based) length-``nu`` chunk of ``z``."""
    if nu <= 0 or len(z) % nu:
        raise NonDividing(f"chunk length {nu} does not divide {len(z)}")
    if not 1 <= i <= len(z) // nu:
        raise OutOfRange(f"chunk index {i} outside 1..{len(z) // nu}")
    return z[(i - 1) * nu : i * nu]


def chunks(z: str, nu: int) -> list[str]:
    if nu <= 0 or len(z) % nu:
        raise NonDividing(f"chunk length {nu} does not divide {len(z)}")
    return [z[j : j + nu] for j in range(0, len(z), nu)]


def is_power(length: int, kappa: int) -> bool:
    if length < 1:
        return False
    while length % kappa == 0:
        length //= kappa
    return length == 1


def log_power(length: int, kappa: int) -> int:
    """Exponent ``m`` with ``kappa**m == length``; ValueError otherwise."""
    m, v = 0, 1
    while v < length:
        v *= kappa
        m += 1
    if v != length:
        raise ValueError(f"{length} is not a power of {kappa}")
    return m


def pad_to_power(z: str, kappa: int, zero: str = "0") -> str:
    """Right-pad ``z`` with ``zero`` up to the next power of ``kappa``."""
    if kappa < 2:
        raise ValueError("kappa must be >= 2")
    target = 1
    while target < len(z):
        target *= kappa
    return z + zero * (target - len(z))


@dataclass(frozen=True)
class Code:
    """A deterministic toy encoder ``Sigma^n -> Sigma^M``.

    ``params`` holds kind-specific settings: ``factor`` for repetition,
    ``length`` and ``seed`` for random.
    """

    kind: str
    n: int
    alphabet: Alphabet = BINARY
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CODE_KINDS:
            raise ValueError(f"unknown code kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("message length must be positive")
        if self.kind == "hadamard" and len(self.alphabet) != 2:
            raise ValueError("hadamard code is binary only")
        if self.kind == "random" and "length" not in self.params:
            raise ValueError("random code needs params['length']")

    @property
    def length(self) -> int:
        if self.kind == "identity":
            return self.n
        if self.kind == "repetition":
            return self.n * int(self.params.get("factor", 3))
        if self.kind == "hadamard":
            return 2**self.n
        return int(self.params["length"])

    def message_count(self) -> int:
        return len(self.alphabet) ** self.n

    def message(self, index: int) -> str:
        """Message number ``index`` in lexicographic order over the alphabet."""
        q = len(self.alphabet)
        digits = []
        for _ in range(self.n):
            index, d = divmod(index, q)
            digits.append(self.alphabet.symbols[d])
        return "".join(reversed(digits))

    def messages(self) -> Iterator[str]:
        return self.alphabet.words(self.n)

    def encode(self, x: str) -> str:
        if len(x) != self.n:
            raise BadMessage(f"message length {len(x)} != n={self.n}")
        self.alphabet.validate(x)
        if self.kind == "identity":
            return x
        if self.kind == "repetition":
            f = int(self.params.get("factor", 3))
            return "".join(s * f for s in x)
        if self.kind == "hadamard":
            bits = np.array([self.alphabet.index(s) for s in x], dtype=np.int64)
            ys = (np.arange(2**self.n)[:, None] >> np.arange(self.n - 1, -1, -1)) & 1
            return self.alphabet.from_array((ys @ bits) & 1)
        # random: one independent stream per message
        idx = sum(self.alphabet.index(s) * len(self.alphabet) ** k for k, s in enumerate(reversed(x)))
        rng = np.random.default_rng([int(self.params.get("seed", 0)), idx])
        return self.alphabet.from_array(rng.integers(0, len(self.alphabet), self.length))

    def image(self) -> list[str]:
        return [self.encode(x) for x in self.messages()]

    def to_json(self) -> dict:
        return {"kind": self.kind, "n": self.n, "alphabet": self.alphabet.symbols, "params": dict(self.params)}

    @classmethod
    def from_json(cls, d: dict) -> "Code":
        return cls(d["kind"], int(d["n"]), Alphabet(d.get("alphabet", "01")), dict(d.get("params", {})))


def code_image(
    code: "Code | Sequence[str]",
    exhaustive_max_n: int = 12,
    samples: int = 1024,
    seed: int = 0,
) -> tuple[list[str], str]:
    """Codewords to average over, plus the mode used ("explicit", "exhaustive", "sampled")."""
    if not isinstance(code, Code):
        return list(code), "explicit"
    if code.n <= exhaustive_max_n:
        return code.image(), "exhaustive"
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, code.message_count(), samples)
    return [code.encode(code.message(int(i))) for i in idx], "sampled"
