"""Exact state-vector / density-matrix simulation and problem Hamiltonians.

Basis index convention: bit ``q`` of a computational-basis index is qubit ``q``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .pauli import PHASES, ObservableSum, PauliString, WordArray

log = logging.getLogger(__name__)

MAX_DENSE_QUBITS = 12
MAX_SPARSE_QUBITS = 14

ONE_QUBIT_GATES = {"RX", "RY", "RZ", "H", "X", "Y", "Z", "S", "SDG"}
TWO_QUBIT_GATES = {"CNOT", "CZ"}
ROTATIONS = {"RX", "RY", "RZ"}

_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}


def rotation(kind: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])
    raise ValueError(f"not a rotation: {kind}")


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if kind in ONE_QUBIT_GATES:
            if len(self.targets) != 1:
                raise ValueError(f"{kind} acts on one qubit")
        elif kind in TWO_QUBIT_GATES:
            if len(self.targets) != 2 or self.targets[0] == self.targets[1]:
                raise ValueError(f"{kind} needs two distinct targets")
        else:
            raise ValueError(f"unknown gate {kind!r}")
        if kind in ROTATIONS and self.angle is None:
            raise ValueError(f"{kind} requires an angle")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind in ROTATIONS:
            return rotation(self.kind, self.angle)
        return _FIXED[self.kind]


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        for t in g.targets:
            if not 0 <= t < self.n_qubits:
                raise ValueError(f"target {t} out of range for {self.n_qubits} qubits")

    def append(self, kind: str, *targets: int, angle: float | None = None) -> Circuit:
        g = Gate(kind, targets, angle)
        self._check(g)
        self.gates.append(g)
        return self

    @property
    def gate_counts(self) -> tuple[int, int]:
        n2 = sum(1 for g in self.gates if len(g.targets) == 2)
        return len(self.gates) - n2, n2


def load_circuit(path: str | Path, n_qubits: int) -> Circuit:
    """Parse ``RY q0 0.314`` / ``CNOT q0 q1`` lines."""
    circ = Circuit(n_qubits)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind = parts[0].upper()
            qubits = [int(p[1:]) for p in parts[1:] if p.lower().startswith("q")]
            rest = [p for p in parts[1:] if not p.lower().startswith("q")]
            angle = float(rest[0]) if rest else None
            circ.append(kind, *qubits, angle=angle)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: bad gate line {raw!r}: {exc}") from None
    return circ


@dataclass(frozen=True)
class NoiseModel:
    """Depolarising probabilities after 1q / 2q gates (replacement by the maximally mixed marginal)."""

    p1: float
    p2: float | None = None

    def __post_init__(self):
        if self.p2 is None:
            object.__setattr__(self, "p2", 5.0 * self.p1)
        for p in (self.p1, self.p2):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"depolarising probability {p} outside [0, 1]")


def circuit_fault_rate(circuit: Circuit, noise: NoiseModel | None) -> float:
    if noise is None:
        return 0.0
    n1, n2 = circuit.gate_counts
    return n1 * noise.p1 + n2 * noise.p2


def noise_for_fault_rate(circuit: Circuit, lam: float, ratio: float = 5.0) -> NoiseModel:
    """Invert ``circuit_fault_rate`` with ``p2 = ratio * p1``."""
    n1, n2 = circuit.gate_counts
    denom = n1 + ratio * n2
    if lam < 0:
        raise ValueError("fault rate must be non-negative")
    if lam == 0:
        return NoiseModel(0.0, 0.0)
    if denom == 0:
        raise ValueError("circuit has no gates; fault rate unreachable")
    p1 = lam / denom
    if p1 > 1 or ratio * p1 > 1:
        raise ValueError(f"fault rate {lam} unreachable with probabilities in [0, 1]")
    return NoiseModel(p1, ratio * p1)


# ---------------------------------------------------------------------------
# states


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != 1 << self.n_qubits:
            raise ValueError("amplitude count does not match n_qubits")

    @classmethod
    def zero(cls, n_qubits: int) -> StateVector:
        amp = np.zeros(1 << n_qubits, dtype=complex)
        amp[0] = 1.0
        return cls(n_qubits, amp)

    @classmethod
    def random(cls, n_qubits: int, rng: np.random.Generator) -> StateVector:
        amp = rng.standard_normal(1 << n_qubits) + 1j * rng.standard_normal(1 << n_qubits)
        return cls(n_qubits, amp / np.linalg.norm(amp))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density_matrix(self) -> DensityMatrix:
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        dim = 1 << self.n_qubits
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (dim, dim):
            raise ValueError("matrix shape does not match n_qubits")

    @classmethod
    def zero(cls, n_qubits: int) -> DensityMatrix:
        return StateVector.zero(n_qubits).to_density_matrix()

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.matrix)), 0.0, None)

    def check(self, atol: float = 1e-10) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=atol):
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(m) - 1) > atol:
            raise ValueError("density matrix trace != 1")
        if np.linalg.eigvalsh(m).min() < -1e-9:
            raise ValueError("density matrix not positive semidefinite")


State = StateVector | DensityMatrix


def _apply_1q(tensor: np.ndarray, u: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(u, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _apply_2q(tensor: np.ndarray, u: np.ndarray, a0: int, a1: int) -> np.ndarray:
    u4 = u.reshape(2, 2, 2, 2)
    out = np.tensordot(u4, tensor, axes=([2, 3], [a0, a1]))
    return np.moveaxis(out, [0, 1], [a0, a1])


def _apply_gate_tensor(tensor: np.ndarray, gate: Gate, n: int, offset: int = 0, conj: bool = False) -> np.ndarray:
    u = gate.matrix.conj() if conj else gate.matrix
    axes = [offset + n - 1 - t for t in gate.targets]
    if len(axes) == 1:
        return _apply_1q(tensor, u, axes[0])
    # the 4x4 matrices are written with the first target as the high bit
    return _apply_2q(tensor, u, axes[0], axes[1])


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    if state.n_qubits != circuit.n_qubits:
        raise ValueError("qubit-count mismatch between state and circuit")
    n = state.n_qubits
    t = state.amplitudes.reshape((2,) * n)
    for g in circuit.gates:
        t = _apply_gate_tensor(t, g, n)
    return StateVector(n, t.reshape(-1))


def _depolarize(t: np.ndarray, qubits: Sequence[int], p: float, n: int) -> np.ndarray:
    if p == 0:
        return t
    mixed = t
    for q in qubits:
        ar, ac = n - 1 - q, 2 * n - 1 - q
        red = np.trace(mixed, axis1=ar, axis2=ac)
        full = 0.5 * np.multiply.outer(red, np.eye(2))
        # trace removed axes ar < ac; the two new axes sit at the end
        mixed = np.moveaxis(full, [-2, -1], [ar, ac])
    return (1 - p) * t + p * mixed


def apply_noisy_circuit(dm: DensityMatrix, circuit: Circuit, noise: NoiseModel | None = None) -> DensityMatrix:
    """Gate-by-gate evolution with depolarising noise after every gate."""
    if dm.n_qubits != circuit.n_qubits:
        raise ValueError("qubit-count mismatch between state and circuit")
    n = dm.n_qubits
    t = dm.matrix.reshape((2,) * (2 * n))
    for g in circuit.gates:
        t = _apply_gate_tensor(t, g, n)
        t = _apply_gate_tensor(t, g, n, offset=n, conj=True)
        if noise is not None:
            p = noise.p1 if len(g.targets) == 1 else noise.p2
            t = _depolarize(t, g.targets, p, n)
    dim = 1 << n
    return DensityMatrix(n, t.reshape(dim, dim))


# ---------------------------------------------------------------------------
# Pauli expectations


def _index_parities(n: int, z: np.ndarray) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    return 1 - 2 * (np.bitwise_count(idx[None, :] & z[:, None]) & 1).astype(np.int8)


def pauli_expectations(state: State, words: WordArray, chunk: int = 2048) -> np.ndarray:
    """Real parts of ``<P>`` for every word (each Pauli word is Hermitian)."""
    n = state.n_qubits
    if words.n_qubits != n:
        raise ValueError("qubit-count mismatch between state and words")
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.empty(len(words))
    yph = PHASES[np.bitwise_count(words.x & words.z) % 4]
    for s in range(0, len(words), chunk):
        x, z = words.x[s : s + chunk], words.z[s : s + chunk]
        flipped = idx[None, :] ^ x[:, None]
        sign = _index_parities(n, z)
        if isinstance(state, StateVector):
            psi = state.amplitudes
            # <psi|P|psi> = i^y sum_b conj(psi[b^x]) (-1)^{b.z} psi[b]
            vals = np.einsum("wb,wb->w", psi.conj()[flipped], sign * psi[None, :])
        else:
            rho = state.matrix
            # Tr(P rho) = i^y sum_b (-1)^{b.z} rho[b, b^x]
            vals = np.einsum("wb,wb->w", sign, rho[idx[None, :], flipped])
        full = yph[s : s + chunk] * vals
        out[s : s + chunk] = full.real
    return out


def expectation(state: State, obs: ObservableSum) -> float:
    if obs.n_qubits != state.n_qubits:
        raise ValueError("qubit-count mismatch between state and observable")
    vals = pauli_expectations(state, WordArray.from_words(obs.words))
    return float(np.dot(obs.coeffs, vals))


def pauli_matrix(word: PauliString, sparse: bool = False):
    n = word.n_qubits
    idx = np.arange(1 << n, dtype=np.int64)
    ph = PHASES[bin(word.x & word.z).count("1") % 4]
    vals = ph * (1 - 2 * (np.bitwise_count(idx & word.z) & 1).astype(np.int64))
    # P|b> = i^y (-1)^{b.z} |b ^ x>
    m = scipy.sparse.csr_matrix((vals, (idx ^ word.x, idx)), shape=(1 << n, 1 << n))
    return m if sparse else m.toarray()


def observable_matrix(obs: ObservableSum, sparse: bool = False):
    n = obs.n_qubits
    total = scipy.sparse.csr_matrix((1 << n, 1 << n), dtype=complex)
    for c, w in obs.terms:
        total = total + c * pauli_matrix(w, sparse=True)
    return total if sparse else total.toarray()


def exact_spectrum(h: ObservableSum, count: int | None = None) -> np.ndarray:
    """Ascending eigenvalues (all, or the lowest ``count``)."""
    n = h.n_qubits
    if n <= MAX_DENSE_QUBITS:
        evals = scipy.linalg.eigvalsh(observable_matrix(h))
        return evals if count is None else evals[:count]
    if n > MAX_SPARSE_QUBITS or count is None or count >= (1 << n) - 1:
        raise ValueError(f"dimension too large for exact spectrum ({n} qubits)")
    evals = scipy.sparse.linalg.eigsh(observable_matrix(h, sparse=True), k=count, which="SA")[0]
    return np.sort(evals)


def ground_state(h: ObservableSum) -> tuple[float, StateVector]:
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError("ground_state supports dense sizes only")
    evals, evecs = scipy.linalg.eigh(observable_matrix(h))
    return float(evals[0]), StateVector(h.n_qubits, evecs[:, 0])


# ---------------------------------------------------------------------------
# Hamiltonians


def build_spin_ring(
    n: int,
    J: float = 0.1,
    onsite: Sequence[float] | None = None,
    seed: int | None = None,
    periodic: bool = True,
) -> ObservableSum:
    """Heisenberg ring ``J sum (XX + YY + ZZ) + sum_i c_i Z_i``.

    The on-site fields are taken from ``onsite`` if given, otherwise drawn
    uniformly from [-1, 1] with ``seed``.
    """
    if n < 3:
        raise ValueError("spin ring needs at least 3 qubits")
    if onsite is None:
        if seed is None:
            raise ValueError("give either onsite fields or a seed")
        onsite = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    onsite = np.asarray(onsite, dtype=float)
    if onsite.shape != (n,):
        raise ValueError(f"need {n} on-site fields")
    pairs = [(i, (i + 1) % n) for i in range(n if periodic else n - 1)]
    terms = []
    for i, j in pairs:
        for letter in "XYZ":
            lab = ["I"] * n
            lab[i] = lab[j] = letter
            terms.append((J, "".join(lab)))
    for i in range(n):
        lab = ["I"] * n
        lab[i] = "Z"
        terms.append((float(onsite[i]), "".join(lab)))
    return ObservableSum.from_terms(terms, n_qubits=n)


def parse_hamiltonian(text: str, source: str = "<string>") -> ObservableSum:
    terms = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{source}:{lineno}: expected '<coeff> <pauli-word>', got {raw!r}")
        try:
            coeff = complex(parts[0].replace("i", "j"))
        except ValueError:
            raise ValueError(f"{source}:{lineno}: bad coefficient {parts[0]!r}") from None
        if coeff.imag != 0:
            raise ValueError(f"{source}:{lineno}: non-real coefficient {parts[0]!r}")
        try:
            word = PauliString.from_label(parts[1])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
        if n is None:
            n = word.n_qubits
        elif word.n_qubits != n:
            raise ValueError(f"{source}:{lineno}: inconsistent qubit count ({word.n_qubits} vs {n})")
        terms.append((coeff.real, word))
    if not terms:
        raise ValueError(f"{source}: no terms")
    return ObservableSum.from_terms(terms)


def load_hamiltonian(path: str | Path) -> ObservableSum:
    path = Path(path)
    return parse_hamiltonian(path.read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------------------
# VQE


@dataclass(frozen=True)
class Ansatz:
    """Parametrised circuit; ``slots[k]`` is the parameter index of gate ``k`` (or -1)."""

    n_qubits: int
    gates: tuple[Gate, ...]
    slots: tuple[int, ...]
    n_params: int

    def bind(self, params: np.ndarray) -> Circuit:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters")
        gates = [
            Gate(g.kind, g.targets, float(params[s])) if s >= 0 else g
            for g, s in zip(self.gates, self.slots)
        ]
        return Circuit(self.n_qubits, gates)


def hardware_efficient_ansatz(n_qubits: int, layers: int = 2) -> Ansatz:
    """Ry-Rz on every qubit, then a ring of CNOTs; repeated, plus a final rotation layer."""
    gates, slots = [], []
    k = 0

    def rot_layer():
        nonlocal k
        for q in range(n_qubits):
            for kind in ("RY", "RZ"):
                gates.append(Gate(kind, (q,), 0.0))
                slots.append(k)
                k += 1

    for _ in range(layers):
        rot_layer()
        ring = [(q, q + 1) for q in range(n_qubits - 1)]
        if n_qubits > 2:
            ring.append((n_qubits - 1, 0))
        for a, b in ring:
            gates.append(Gate("CNOT", (a, b)))
            slots.append(-1)
    rot_layer()
    return Ansatz(n_qubits, tuple(gates), tuple(slots), k)


@dataclass
class VqeResult:
    params: np.ndarray
    state: StateVector
    energies: list[float]


def run_vqe(
    h: ObservableSum,
    ansatz: Ansatz,
    steps: int,
    seed: int,
    learning_rate: float = 0.1,
    init_scale: float = 0.1,
) -> VqeResult:
    """Parameter-shift gradient descent.

    A step is accepted only if it lowers the energy; otherwise the learning
    rate is halved and the parameters are kept, so the recorded energies
    never increase.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = np.random.default_rng(seed)
    params = rng.normal(0.0, init_scale, ansatz.n_params)
    zero = StateVector.zero(h.n_qubits)
    words = WordArray.from_words(h.words)
    coeffs = h.coeffs

    def energy(p):
        st = apply_circuit(zero, ansatz.bind(p))
        return float(coeffs @ pauli_expectations(st, words)), st

    e, state = energy(params)
    trace = [e]
    lr = learning_rate
    shift = np.pi / 2
    for _ in range(steps):
        grad = np.empty_like(params)
        for k in range(ansatz.n_params):
            d = np.zeros_like(params)
            d[k] = shift
            grad[k] = 0.5 * (energy(params + d)[0] - energy(params - d)[0])
        trial = params - lr * grad
        e_new, st_new = energy(trial)
        if e_new < e:
            params, e, state = trial, e_new, st_new
        else:
            lr *= 0.5
        trace.append(e)
    return VqeResult(params, state, trace)
