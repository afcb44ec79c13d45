"""Bit-packed Pauli-string algebra.

A word on ``n`` qubits is stored as two integer masks ``x`` and ``z``; bit ``q``
refers to qubit ``q`` (the ``q``-th character of the text form, counted from the
left). The word denotes the tensor product of its letters, i.e. the operator
``i^{|x & z|} X^x Z^z``. Phases of products are tracked exactly as powers of
``i`` and never as floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from math import comb
from typing import Iterable, Sequence

import numpy as np

LETTERS = "IXZY"  # index = x_bit + 2 * z_bit
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
PHASES = np.array([1, 1j, -1, -1j], dtype=complex)
_PHASE_TEXT = ("+", "+i", "-", "-i")


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True, slots=True)
class PauliString:
    """Unsigned Pauli word on ``n_qubits`` qubits."""

    n_qubits: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        full = (1 << self.n_qubits) - 1
        if self.x & ~full or self.z & ~full:
            raise ValueError("mask has bits beyond n_qubits")

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        label = label.strip().upper()
        if not label:
            raise ValueError("empty Pauli word")
        x = z = 0
        for q, ch in enumerate(label):
            if ch not in _LETTER_BITS:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}")
            bx, bz = _LETTER_BITS[ch]
            x |= bx << q
            z |= bz << q
        return cls(len(label), x, z)

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits)

    @property
    def label(self) -> str:
        return "".join(
            LETTERS[((self.x >> q) & 1) + 2 * ((self.z >> q) & 1)] for q in range(self.n_qubits)
        )

    @property
    def key(self) -> int:
        """Integer packing ``x | z << n`` used to index words in arrays."""
        return self.x | (self.z << self.n_qubits)

    @property
    def support(self) -> int:
        return self.x | self.z

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __mul__(self, other: PauliString) -> PhasedPauli:
        return multiply(self, other)

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


@dataclass(frozen=True, slots=True)
class PhasedPauli:
    """``i**phase_exp`` times a Pauli word."""

    phase_exp: int
    word: PauliString

    def __post_init__(self):
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    @property
    def phase(self) -> complex:
        return complex(PHASES[self.phase_exp])

    @property
    def is_hermitian(self) -> bool:
        return self.phase_exp in (0, 2)

    @property
    def n_qubits(self) -> int:
        return self.word.n_qubits

    def __str__(self) -> str:
        return f"{_PHASE_TEXT[self.phase_exp]}{self.word.label}"


def _check_same_size(*ps: PauliString) -> None:
    n = ps[0].n_qubits
    for p in ps[1:]:
        if p.n_qubits != n:
            raise ValueError(f"qubit-count mismatch: {n} vs {p.n_qubits}")


def multiply(a: PauliString, b: PauliString) -> PhasedPauli:
    """Exact product ``a @ b`` as a phased word."""
    _check_same_size(a, b)
    x, z = a.x ^ b.x, a.z ^ b.z
    exp = _popcount(a.x & a.z) + _popcount(b.x & b.z) + 2 * _popcount(a.z & b.x) - _popcount(x & z)
    return PhasedPauli(exp, PauliString(a.n_qubits, x, z))


def commutes(a: PauliString, b: PauliString) -> bool:
    _check_same_size(a, b)
    return (_popcount(a.x & b.z) + _popcount(a.z & b.x)) % 2 == 0


def weight(p: PauliString) -> int:
    return p.weight


def sandwich(g_i: PauliString, h_k: PauliString, g_j: PauliString) -> PhasedPauli:
    """``g_i @ h_k @ g_j`` as a phased word."""
    _check_same_size(g_i, h_k, g_j)
    left = multiply(g_i, h_k)
    right = multiply(left.word, g_j)
    return PhasedPauli(left.phase_exp + right.phase_exp, right.word)


def count_up_to_weight(n: int, w: int) -> int:
    return sum(comb(n, k) * 3**k for k in range(w + 1))


def enumerate_up_to_weight(n: int, w: int) -> list[PauliString]:
    """All words of weight ``<= w``: identity first, then by weight, sites, letters."""
    if n < 1:
        raise ValueError("n must be positive")
    if w < 0 or w > n:
        raise ValueError(f"max weight {w} outside [0, {n}]")
    out = [PauliString(n)]
    for k in range(1, w + 1):
        for sites in combinations(range(n), k):
            for letters in product("XYZ", repeat=k):
                x = z = 0
                for q, ch in zip(sites, letters):
                    bx, bz = _LETTER_BITS[ch]
                    x |= bx << q
                    z |= bz << q
                out.append(PauliString(n, x, z))
    return out


def word_from_key(key: int, n_qubits: int) -> PauliString:
    full = (1 << n_qubits) - 1
    return PauliString(n_qubits, key & full, key >> n_qubits)


@dataclass(frozen=True)
class ObservableSum:
    """Real-weighted sum of Pauli words with duplicates merged."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...]

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[float, PauliString | str]], n_qubits: int | None = None) -> ObservableSum:
        merged: dict[PauliString, float] = {}
        for coeff, word in terms:
            if isinstance(word, str):
                word = PauliString.from_label(word)
            if isinstance(coeff, complex):
                if coeff.imag != 0:
                    raise ValueError(f"non-real coefficient {coeff} for {word.label}")
                coeff = coeff.real
            if n_qubits is None:
                n_qubits = word.n_qubits
            elif word.n_qubits != n_qubits:
                raise ValueError(f"inconsistent qubit count: {word.label} on {n_qubits} qubits")
            merged[word] = merged.get(word, 0.0) + float(coeff)
        if not merged:
            raise ValueError("no terms")
        return cls(n_qubits, tuple((c, w) for w, c in merged.items()))

    @classmethod
    def single(cls, word: PauliString | str, coeff: float = 1.0) -> ObservableSum:
        return cls.from_terms([(coeff, word)])

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    @property
    def words(self) -> list[PauliString]:
        return [w for _, w in self.terms]

    @property
    def max_weight(self) -> int:
        return max(w.weight for _, w in self.terms)

    def to_text(self) -> str:
        return "".join(f"{c!r} {w.label}\n" for c, w in self.terms)


class WordArray:
    """Vectorised set of words (parallel ``x``/``z`` int64 masks)."""

    __slots__ = ("n_qubits", "x", "z")

    def __init__(self, n_qubits: int, x: np.ndarray, z: np.ndarray):
        self.n_qubits = n_qubits
        self.x = np.asarray(x, dtype=np.int64)
        self.z = np.asarray(z, dtype=np.int64)

    @classmethod
    def from_words(cls, words: Sequence[PauliString]) -> WordArray:
        if not words:
            raise ValueError("empty word list")
        n = words[0].n_qubits
        for w in words:
            if w.n_qubits != n:
                raise ValueError("qubit-count mismatch in word list")
        return cls(n, [w.x for w in words], [w.z for w in words])

    def __len__(self) -> int:
        return len(self.x)

    @property
    def keys(self) -> np.ndarray:
        return self.x | (self.z << self.n_qubits)

    @property
    def weights(self) -> np.ndarray:
        return np.bitwise_count(self.x | self.z).astype(np.int64)

    def to_words(self) -> list[PauliString]:
        return [PauliString(self.n_qubits, int(a), int(b)) for a, b in zip(self.x, self.z)]


def multiply_arrays(ax, az, bx, bz) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Broadcasting product of mask arrays; returns ``(phase_exp, x, z)``."""
    x = ax ^ bx
    z = az ^ bz
    exp = (
        np.bitwise_count(ax & az).astype(np.int64)
        + np.bitwise_count(bx & bz)
        + 2 * np.bitwise_count(az & bx).astype(np.int64)
        - np.bitwise_count(x & z)
    )
    return exp % 4, x, z


def commutes_array(words: WordArray, other: PauliString) -> np.ndarray:
    anti = np.bitwise_count(words.x & other.z) + np.bitwise_count(words.z & other.x)
    return anti % 2 == 0
