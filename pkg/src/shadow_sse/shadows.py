"""Local-Clifford (random Pauli basis) classical shadows and estimator modes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .pauli import PHASES, PauliString, PhasedPauli, WordArray
from .sim import State, StateVector, pauli_expectations

# basis letter codes: 0 = X, 1 = Y, 2 = Z
BASIS_LETTERS = "XYZ"
_BASIS_X = np.array([1, 1, 0], dtype=np.int64)
_BASIS_Z = np.array([0, 1, 1], dtype=np.int64)

_SQ2 = 1 / np.sqrt(2)
# rotate the measured Pauli's eigenbasis onto Z: X -> H, Y -> H S^dagger
_ROTATE = [
    np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    np.array([[_SQ2, -1j * _SQ2], [_SQ2, 1j * _SQ2]], dtype=complex),
    np.eye(2, dtype=complex),
]


@dataclass(frozen=True)
class Snapshot:
    bases: str
    outcomes: tuple[int, ...]  # +1 / -1 eigenvalues

    def __post_init__(self):
        if len(self.bases) != len(self.outcomes):
            raise ValueError("bases and outcomes differ in length")


@dataclass
class ShadowSet:
    """``bases[s, q]`` in {0,1,2} (X,Y,Z), ``bits[s, q]`` in {0,1} (outcome ``(-1)**bit``)."""

    n_qubits: int
    bases: np.ndarray
    bits: np.ndarray
    seed: int = 0
    _hist: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.int8)
        self.bits = np.asarray(self.bits, dtype=np.int8)
        if self.bases.ndim != 2 or self.bases.shape != self.bits.shape or self.bases.shape[1] != self.n_qubits:
            raise ValueError("bases/bits must both be (N_s, n_qubits)")
        if len(self.bases) < 1:
            raise ValueError("a shadow set needs at least one snapshot")

    def __len__(self) -> int:
        return len(self.bases)

    def snapshot(self, s: int) -> Snapshot:
        return Snapshot(
            "".join(BASIS_LETTERS[b] for b in self.bases[s]),
            tuple(int(1 - 2 * b) for b in self.bits[s]),
        )

    def _masks(self):
        w = np.int64(1) << np.arange(self.n_qubits, dtype=np.int64)
        b = self.bases.astype(np.int64)
        return (_BASIS_X[b] * w).sum(1), (_BASIS_Z[b] * w).sum(1), (self.bits.astype(np.int64) * w).sum(1)

    def histogram(self):
        """Distinct (basis x-mask, basis z-mask, outcome mask) rows with counts."""
        if self._hist is None:
            sx, sz, sb = self._masks()
            rows = np.stack([sx, sz, sb], axis=1)
            uniq, counts = np.unique(rows, axis=0, return_counts=True)
            self._hist = (uniq[:, 0], uniq[:, 1], uniq[:, 2], counts)
        return self._hist

    def dump(self, path: str | Path) -> None:
        lines = [f"n={self.n_qubits} N_s={len(self)} seed={self.seed}"]
        for bas, bit in zip(self.bases, self.bits):
            lines.append("".join(BASIS_LETTERS[b] for b in bas) + " " + "".join(str(int(v)) for v in bit))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> ShadowSet:
        lines = Path(path).read_text().splitlines()
        header = dict(item.split("=", 1) for item in lines[0].split())
        n, count, seed = int(header["n"]), int(header["N_s"]), int(header["seed"])
        bases, bits = [], []
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            try:
                b, o = line.split()
                bases.append([BASIS_LETTERS.index(ch) for ch in b])
                bits.append([int(ch) for ch in o])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed snapshot line {line!r}") from None
            if len(bases[-1]) != n or len(bits[-1]) != n or set(bits[-1]) - {0, 1}:
                raise ValueError(f"{path}:{lineno}: malformed snapshot line {line!r}")
        if len(bases) != count:
            raise ValueError(f"{path}: header says {count} snapshots, found {len(bases)}")
        return cls(n, np.array(bases), np.array(bits), seed)


def _rotated_probabilities(state: State, bases: np.ndarray) -> np.ndarray:
    n = state.n_qubits
    if isinstance(state, StateVector):
        t = state.amplitudes.reshape((2,) * n)
        for q, b in enumerate(bases):
            if b != 2:
                ax = n - 1 - q
                t = np.moveaxis(np.tensordot(_ROTATE[b], t, axes=([1], [ax])), 0, ax)
        return np.abs(t.reshape(-1)) ** 2
    t = state.matrix.reshape((2,) * (2 * n))
    for q, b in enumerate(bases):
        if b != 2:
            u = _ROTATE[b]
            for ax, m in ((n - 1 - q, u), (2 * n - 1 - q, u.conj())):
                t = np.moveaxis(np.tensordot(m, t, axes=([1], [ax])), 0, ax)
    dim = 1 << n
    return np.clip(np.real(np.diag(t.reshape(dim, dim))), 0.0, None)


def sample_shadows(state: State, n_snapshots: int, seed: int) -> ShadowSet:
    """Uniform random X/Y/Z basis per qubit, outcomes from the exact Born rule."""
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    n = state.n_qubits
    rng = np.random.default_rng(seed)
    bases = rng.integers(0, 3, size=(n_snapshots, n), dtype=np.int8)
    u = rng.random(n_snapshots)
    code = (bases.astype(np.int64) * (3 ** np.arange(n, dtype=np.int64))).sum(1)
    bits = np.empty((n_snapshots, n), dtype=np.int8)
    shifts = np.arange(n, dtype=np.int64)
    for c in np.unique(code):
        rows = np.flatnonzero(code == c)
        probs = _rotated_probabilities(state, bases[rows[0]])
        cdf = np.cumsum(probs)
        cdf /= cdf[-1]
        idx = np.minimum(np.searchsorted(cdf, u[rows], side="right"), len(cdf) - 1)
        bits[rows] = (idx[:, None] >> shifts) & 1
    return ShadowSet(n, bases, bits, seed)


def snapshot_values(shadows: ShadowSet, word: PauliString) -> np.ndarray:
    """Single-snapshot estimator 3^w * prod(outcomes) on matching support, else 0."""
    if word.n_qubits != shadows.n_qubits:
        raise ValueError("qubit-count mismatch")
    sx, sz, sb = shadows._masks()
    supp = word.support
    match = ((sx & supp) == word.x) & ((sz & supp) == word.z)
    sign = 1 - 2 * (np.bitwise_count(sb & supp) & 1).astype(np.int64)
    return np.where(match, 3.0**word.weight * sign, 0.0)


def shadow_means(shadows: ShadowSet, words: WordArray) -> np.ndarray:
    """Mean single-snapshot estimate for each word (vectorised over a snapshot histogram)."""
    if words.n_qubits != shadows.n_qubits:
        raise ValueError("qubit-count mismatch")
    hx, hz, hb, counts = shadows.histogram()
    chunk = max(1, 2_000_000 // len(hx))
    total = counts.sum()
    out = np.empty(len(words))
    scale = 3.0 ** words.weights
    for s in range(0, len(words), chunk):
        x, z = words.x[s : s + chunk, None], words.z[s : s + chunk, None]
        supp = x | z
        match = ((hx & supp) == x) & ((hz & supp) == z)
        sign = 1 - 2 * (np.bitwise_count(hb & supp) & 1).astype(np.int64)
        out[s : s + chunk] = (match * sign) @ counts / total
    return out * scale


def estimate_pauli(shadows: ShadowSet, p: PhasedPauli) -> float:
    if not p.is_hermitian:
        raise ValueError(f"non-Hermitian phase in {p}")
    sign = 1.0 if p.phase_exp == 0 else -1.0
    if p.word.is_identity:
        return sign
    return sign * float(shadow_means(shadows, WordArray.from_words([p.word]))[0])


def theoretical_variance(w: int, exact_value: float) -> float:
    """Single-snapshot variance ``3^w - <P>^2``."""
    return 3.0**w - exact_value**2


# ---------------------------------------------------------------------------
# estimator modes


@dataclass(frozen=True)
class Exact:
    def label(self) -> str:
        return "exact"


@dataclass(frozen=True)
class GaussianEps:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("GaussianEps needs eps > 0")

    def label(self) -> str:
        return f"gauss:{self.eps!r}"


@dataclass(frozen=True)
class ShadowVariance:
    n_snapshots: int

    def __post_init__(self):
        if self.n_snapshots < 1:
            raise ValueError("ShadowVariance needs N_s >= 1")

    def label(self) -> str:
        return f"shadowvar:{self.n_snapshots}"


@dataclass(frozen=True)
class SampledShadows:
    """Estimate from sampled snapshots; ``shadows`` is drawn lazily when ``None``."""

    n_snapshots: int
    shadows: ShadowSet | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_snapshots < 1:
            raise ValueError("SampledShadows needs N_s >= 1")

    def label(self) -> str:
        return f"sampled:{self.n_snapshots}"


EstimatorMode = Exact | GaussianEps | ShadowVariance | SampledShadows


def parse_mode(text: str) -> EstimatorMode:
    """``exact`` | ``gauss:<eps>`` | ``shadowvar:<Ns>`` | ``sampled:<Ns>``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "exact" and not arg:
            return Exact()
        if name in ("gauss", "gaussian"):
            return GaussianEps(float(arg))
        if name == "shadowvar":
            return ShadowVariance(int(float(arg)))
        if name == "sampled":
            return SampledShadows(int(float(arg)))
    except ValueError as exc:
        raise ValueError(f"bad estimator mode {text!r}: {exc}") from None
    raise ValueError(f"unknown estimator mode {text!r}")


def is_noiseless(mode: EstimatorMode) -> bool:
    return isinstance(mode, Exact)


def _noise_draw(mode: EstimatorMode, exact: float, w: int, rng: np.random.Generator) -> complex:
    if isinstance(mode, GaussianEps):
        re, im = rng.normal(0.0, mode.eps / np.sqrt(2), 2)
        return complex(exact + re, im)
    if isinstance(mode, ShadowVariance):
        var = max(theoretical_variance(w, exact), 0.0) / mode.n_snapshots
        return complex(exact + rng.normal(0.0, np.sqrt(var)))
    return complex(exact)


def estimate(mode: EstimatorMode, state: State | None, p: PhasedPauli, rng: np.random.Generator | None = None) -> complex:
    """One estimate of ``phase * <word>``; noise (if any) is drawn from ``rng``."""
    word = p.word
    if isinstance(mode, SampledShadows):
        if mode.shadows is None:
            raise ValueError("SampledShadows mode without a shadow set")
        val = 1.0 if word.is_identity else float(shadow_means(mode.shadows, WordArray.from_words([word]))[0])
        return p.phase * val
    exact = 1.0 if word.is_identity else float(pauli_expectations(state, WordArray.from_words([word]))[0])
    if word.is_identity or is_noiseless(mode):
        return p.phase * complex(exact)
    if rng is None:
        raise ValueError("a noisy mode needs an rng")
    return p.phase * _noise_draw(mode, exact, word.weight, rng)


class Estimator:
    """Caches one (possibly noisy) value per distinct Pauli word.

    Noise for the word with packed key ``k`` comes from its own generator
    seeded by ``(seed, k)``, so values do not depend on query order or batching.
    The identity is always exactly 1.
    """

    def __init__(self, mode: EstimatorMode, state: State | None, seed: int = 0):
        if isinstance(mode, SampledShadows) and mode.shadows is None:
            if state is None:
                raise ValueError("cannot sample shadows without a state")
            mode = SampledShadows(mode.n_snapshots, sample_shadows(state, mode.n_snapshots, seed))
        if state is None and not isinstance(mode, SampledShadows):
            raise ValueError(f"mode {mode.label()} needs a state")
        self.mode = mode
        self.state = state
        self.seed = int(seed)
        self.n_qubits = state.n_qubits if state is not None else mode.shadows.n_qubits
        self._cache: dict[int, complex] = {}
        self.exact_cache: dict[int, float] = {}

    @property
    def n_distinct(self) -> int:
        return len(self._cache)

    def _fill(self, keys: np.ndarray) -> None:
        n = self.n_qubits
        full = (1 << n) - 1
        words = WordArray(n, keys & full, keys >> n)
        if isinstance(self.mode, SampledShadows):
            vals = shadow_means(self.mode.shadows, words)
            for k, v in zip(keys.tolist(), vals):
                self._cache[k] = complex(v)
            return
        exact = pauli_expectations(self.state, words)
        noisy = not is_noiseless(self.mode)
        weights = words.weights
        for k, v, w in zip(keys.tolist(), exact, weights.tolist()):
            self.exact_cache[k] = float(v)
            if k == 0:
                self._cache[k] = 1.0 + 0j
            elif noisy:
                rng = np.random.default_rng([self.seed, k])
                self._cache[k] = _noise_draw(self.mode, float(v), w, rng)
            else:
                self._cache[k] = complex(v)

    def values(self, keys: np.ndarray) -> np.ndarray:
        """Estimated ``<P>`` (no phase) for packed word keys; any shape."""
        keys = np.asarray(keys, dtype=np.int64)
        uniq, inv = np.unique(keys, return_inverse=True)
        missing = np.array([k for k in uniq.tolist() if k not in self._cache], dtype=np.int64)
        if len(missing):
            self._fill(missing)
        vals = np.array([self._cache[k] for k in uniq.tolist()], dtype=complex)
        return vals[inv].reshape(keys.shape)

    def phased(self, phase_exp: np.ndarray, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return PHASES[phase_exp] * self.values(x | (z << self.n_qubits))

    def __call__(self, p: PhasedPauli) -> complex:
        return complex(p.phase * self.values(np.array([p.word.key]))[0])


def batch_estimate(
    mode: EstimatorMode, state: State | None, paulis: Sequence[PhasedPauli], seed: int = 0, estimator: Estimator | None = None
) -> np.ndarray:
    """Estimates of ``phase * <word>`` for each entry; repeated words share one value."""
    est = estimator or Estimator(mode, state, seed)
    if not paulis:
        return np.zeros(0, dtype=complex)
    keys = np.array([p.word.key for p in paulis], dtype=np.int64)
    phases = PHASES[np.array([p.phase_exp for p in paulis])]
    return phases * est.values(keys)
