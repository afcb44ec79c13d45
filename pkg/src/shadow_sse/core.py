"""Shadow subspace expansion: filtering, assembly, regularised GEVP, symmetry handling."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .pauli import PHASES, ObservableSum, PauliString, WordArray, commutes, multiply_arrays
from .shadows import Estimator, EstimatorMode, Exact, is_noiseless
from .sim import State

log = logging.getLogger(__name__)


class SseError(RuntimeError):
    """Numerical failure inside the expansion pipeline."""


class MixedSymmetryError(ValueError):
    """A basis operator commutes with some symmetry terms and anticommutes with others."""


@dataclass
class FilterResult:
    ranked: list[tuple[PauliString, float]]  # non-identity operators, descending improvement
    k_kept: int
    identity: PauliString
    direct_energy: float = 0.0

    @property
    def basis(self) -> list[PauliString]:
        """Identity followed by the top ``k_kept - 1`` ranked operators."""
        return [self.identity] + [g for g, _ in self.ranked[: self.k_kept - 1]]

    def truncate(self, k: int) -> FilterResult:
        return replace(self, k_kept=min(k, len(self.ranked) + 1))


@dataclass
class SseMatrices:
    S: np.ndarray
    H: np.ndarray
    basis: list[PauliString]
    A: np.ndarray | None = None
    transform: np.ndarray | None = None  # columns map this frame back to the basis
    e_direct: float = 0.0

    @property
    def K(self) -> int:
        return self.S.shape[0]

    def leading(self, k: int) -> SseMatrices:
        """Sub-problem on the first ``k`` basis operators."""
        if self.transform is not None:
            raise ValueError("cannot take a leading block of a transformed problem")
        return SseMatrices(
            self.S[:k, :k].copy(),
            self.H[:k, :k].copy(),
            self.basis[:k],
            None if self.A is None else self.A[:k, :k].copy(),
            None,
            self.e_direct,
        )


@dataclass
class RegularizationConfig:
    eigenvalue_floor: float = 1e-12
    window: int = 5
    k_tilde_max: int | None = None
    scan_step: int = 1
    # auto: keep every eigenvalue above the floor for noiseless data, otherwise moving variance
    truncation: str = "auto"
    # first_rise: first confirmed minimum of the moving variance; last_valley: latest stable stretch
    stop_rule: str = "first_rise"

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.eigenvalue_floor < 0:
            raise ValueError("eigenvalue_floor must be >= 0")
        if self.scan_step < 1:
            raise ValueError("scan_step must be >= 1")
        if self.k_tilde_max is not None and self.k_tilde_max < 1:
            raise ValueError("k_tilde_max must be >= 1")
        if self.truncation not in ("auto", "moving_variance", "full"):
            raise ValueError(f"unknown truncation mode {self.truncation!r}")
        if self.stop_rule not in ("last_valley", "first_rise"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")


@dataclass
class SseResult:
    E_direct: float
    E_sse: float
    E_reported: float
    K: int
    K_tilde: int
    levels: list[int]
    energies: list[float]
    weights: np.ndarray
    spectrum: list[float]
    s_eigenvalues: np.ndarray  # retained overlap eigenvalues, descending
    truncation_warning: bool = False

    @property
    def E_per_level(self) -> list[tuple[int, float]]:
        return list(zip(self.levels, self.energies))

    @property
    def improvement(self) -> float:
        return self.E_direct - self.E_reported


# ---------------------------------------------------------------------------
# filtering


def _direct_energy(h: ObservableSum, est: Estimator) -> tuple[float, np.ndarray]:
    hw = WordArray.from_words(h.words)
    vals = est.values(hw.keys).real
    return float(h.coeffs @ vals), vals


def local_filter(
    basis: Sequence[PauliString],
    h: ObservableSum,
    est: Estimator,
    k: int,
    degenerate_tol: float = 1e-9,
) -> FilterResult:
    """Rank operators by the energy gain of the two-dimensional expansion ``{I, G}``."""
    if k < 1:
        raise ValueError("keep count K must be >= 1")
    ident = [g for g in basis if g.is_identity]
    if not ident:
        raise ValueError("basis must contain the identity")
    ops = [g for g in basis if not g.is_identity]
    e_direct, hvals = _direct_energy(h, est)
    if not ops:
        return FilterResult([], 1, ident[0], e_direct)
    G = WordArray.from_words(ops)
    Hw = WordArray.from_words(h.words)
    beta = h.coeffs
    n = G.n_qubits

    g = est.values(G.keys).real
    hx, hz = Hw.x[None, :], Hw.z[None, :]
    gx, gz = G.x[:, None], G.z[:, None]
    ph, x, z = multiply_arrays(hx, hz, gx, gz)  # H_k G
    hg = (PHASES[ph] * est.values(x | (z << n))) @ beta
    ph, x, z = multiply_arrays(gx, gz, hx, hz)  # G H_k
    gh = (PHASES[ph] * est.values(x | (z << n))) @ beta
    anti = (np.bitwise_count(gx & hz) + np.bitwise_count(gz & hx)) % 2
    h22 = (np.where(anti == 1, -1.0, 1.0) * hvals[None, :]) @ beta

    h11 = e_direct
    h12 = 0.5 * (hg + gh.conj())
    a = 1.0 - g**2
    b = -(h11 + h22) + 2.0 * (h12 * g).real
    c = h11 * h22 - np.abs(h12) ** 2
    ok = np.abs(g) < 1.0 - degenerate_tol
    disc = np.clip(b**2 - 4 * a * c, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_min = np.where(ok, (-b - np.sqrt(disc)) / (2 * np.where(ok, a, 1.0)), h11)
    gain = np.where(ok, h11 - e_min, 0.0)
    order = np.argsort(-gain, kind="stable")
    ranked = [(ops[i], float(gain[i])) for i in order]
    return FilterResult(ranked, min(k, len(ops) + 1), ident[0], e_direct)


# ---------------------------------------------------------------------------
# assembly


def operator_matrix(basis: Sequence[PauliString], obs: ObservableSum | None, est: Estimator) -> np.ndarray:
    """``M_ij = sum_k c_k Tr(G_i O_k G_j rho)``; with ``obs=None`` the overlap ``Tr(G_i G_j rho)``."""
    B = WordArray.from_words(basis)
    n = B.n_qubits
    bx, bz = B.x, B.z
    if obs is None:
        ph, x, z = multiply_arrays(bx[:, None], bz[:, None], bx[None, :], bz[None, :])
        return PHASES[ph] * est.values(x | (z << n))
    if obs.n_qubits != n:
        raise ValueError("qubit-count mismatch between basis and observable")
    out = np.zeros((len(B), len(B)), dtype=complex)
    for coeff, word in obs.terms:
        ph1, x1, z1 = multiply_arrays(bx, bz, np.int64(word.x), np.int64(word.z))
        ph2, x, z = multiply_arrays(x1[:, None], z1[:, None], bx[None, :], bz[None, :])
        out += coeff * PHASES[(ph1[:, None] + ph2) % 4] * est.values(x | (z << n))
    return out


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def assemble_matrices(
    basis: Sequence[PauliString] | FilterResult,
    h: ObservableSum,
    est: Estimator,
    symmetry: ObservableSum | None = None,
) -> SseMatrices:
    if isinstance(basis, FilterResult):
        basis = basis.basis
    basis = list(basis)
    if not basis or not basis[0].is_identity:
        raise ValueError("basis must be non-empty with the identity first")
    S = hermitize(operator_matrix(basis, None, est))
    H = hermitize(operator_matrix(basis, h, est))
    A = hermitize(operator_matrix(basis, symmetry, est)) if symmetry is not None else None
    return SseMatrices(S, H, basis, A, None, float(H[0, 0].real))


# ---------------------------------------------------------------------------
# regularised generalised eigenproblem


def _moving_variance(energies: np.ndarray, window: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(energies, window)
    return view.var(axis=1)


def choose_truncation(energies: Sequence[float], window: int, rule: str = "first_rise") -> tuple[int, bool]:
    """Return ``(level, warned)`` where ``level`` is 1-based into ``energies``.

    ``v[l]`` is the variance of the ``window`` energies ending at level ``l``.

    ``first_rise`` (default): the first local minimum of ``v`` followed by
    ``window`` non-decreasing values that end strictly higher.

    ``last_valley``: the largest level whose ``v`` is minimal among the
    ``window`` neighbours on each side (clipped at the ends), i.e. the last
    stretch of slowly varying energies before the scan turns unstable. It
    tends to keep more levels and is usually more accurate at moderate noise.

    Both fall back to the last global minimum of ``v``. With fewer energies
    than ``window`` the last level is returned and ``warned`` is set.
    """
    e = np.asarray(energies, dtype=float)
    if len(e) == 0:
        raise ValueError("no energies to choose from")
    if len(e) < window:
        return len(e), True
    v = _moving_variance(e, window)
    finite = np.isfinite(e)
    scale = max(1.0, float(np.max(np.abs(e[finite])))) if finite.any() else 1.0
    atol = (1e-12 * scale) ** 2
    v = np.where(np.isfinite(v), v, np.inf)
    if rule == "last_valley":
        for m in range(len(v) - 1, -1, -1):
            if v[m] <= v[max(0, m - window) : m + window + 1].min() + atol:
                return m + window, False
    elif rule == "first_rise":
        for m in range(len(v) - window):
            if m > 0 and v[m] > v[m - 1] + atol:
                continue
            steps = np.diff(v[m : m + window + 1])
            if np.all(steps >= -atol) and v[m + window] > v[m] + atol:
                return m + window, False
    else:
        raise ValueError(f"unknown truncation rule {rule!r}")
    last = int(np.flatnonzero(v <= v.min() + atol)[-1])
    return last + window, False


def _level_energy(Ht: np.ndarray, inv_sqrt: np.ndarray, l: int) -> float:
    M = Ht[:l, :l] * np.outer(inv_sqrt[:l], inv_sqrt[:l])
    return float(scipy.linalg.eigvalsh(hermitize(M), subset_by_index=[0, 0])[0])


def regularized_gevp(m: SseMatrices, cfg: RegularizationConfig | None = None, noiseless: bool = False) -> SseResult:
    """Solve ``H w = E S w`` on the leading eigenvectors of ``S``.

    The energies ``E_0^l`` are computed for every retained level ``l`` and the
    effective dimension is picked by ``cfg.truncation``. ``E_reported`` is left
    equal to ``E_sse``; see :func:`clamp_to_direct`.
    """
    cfg = cfg or RegularizationConfig()
    if not np.allclose(m.S, m.S.conj().T, atol=1e-12 * max(1.0, np.abs(m.S).max())):
        raise ValueError("overlap matrix is not Hermitian")
    lam, V = scipy.linalg.eigh(m.S)
    lam, V = lam[::-1], V[:, ::-1]
    valid = int(np.count_nonzero(lam > cfg.eigenvalue_floor))
    if valid == 0:
        raise SseError("overlap matrix fully degenerate")
    L = valid if cfg.k_tilde_max is None else min(valid, cfg.k_tilde_max)
    Q = V[:, :L]
    Ht = hermitize(Q.conj().T @ m.H @ Q)
    inv_sqrt = 1.0 / np.sqrt(lam[:L])

    levels = list(range(1, L + 1, cfg.scan_step))
    if levels[-1] != L:
        levels.append(L)
    energies = [_level_energy(Ht, inv_sqrt, l) for l in levels]

    rule = cfg.truncation
    if rule == "auto":
        rule = "full" if noiseless else "moving_variance"
    warned = False
    if rule == "full":
        pick = len(levels)
    else:
        pick, warned = choose_truncation(energies, cfg.window, cfg.stop_rule)
    k_tilde = levels[pick - 1]

    M = hermitize(Ht[:k_tilde, :k_tilde] * np.outer(inv_sqrt[:k_tilde], inv_sqrt[:k_tilde]))
    evals, evecs = scipy.linalg.eigh(M)
    w = Q[:, :k_tilde] @ (inv_sqrt[:k_tilde] * evecs[:, 0])
    if m.transform is not None:
        w = m.transform @ w
    if abs(w[0]) > 1e-14:
        w = w * (abs(w[0]) / w[0])
    e_sse = float(evals[0])
    return SseResult(
        E_direct=m.e_direct,
        E_sse=e_sse,
        E_reported=e_sse,
        K=len(m.basis),
        K_tilde=k_tilde,
        levels=levels,
        energies=energies,
        weights=w,
        spectrum=[float(v) for v in evals],
        s_eigenvalues=lam[:valid].copy(),
        truncation_warning=warned,
    )


def clamp_to_direct(e_sse: float, e_direct: float) -> float:
    return min(e_sse, e_direct)


def apply_clamp(result: SseResult) -> SseResult:
    return replace(result, E_reported=clamp_to_direct(result.E_sse, result.E_direct))


def reconstruct_observable(
    o: ObservableSum, result: SseResult, m: SseMatrices, est: Estimator, floor: float = 1e-12
) -> float:
    """``w^dag O w / w^dag S w`` with ``O_ij = Tr(G_i O G_j rho)`` estimated on the basis of ``m``."""
    w = result.weights
    S = m.S if m.transform is None else None
    if S is None or len(w) != len(m.basis):
        S = hermitize(operator_matrix(m.basis, None, est))
    norm = float((w.conj() @ S @ w).real)
    if norm <= floor:
        raise SseError("expansion state has zero norm")
    O = hermitize(operator_matrix(m.basis, o, est))
    return float((w.conj() @ O @ w).real) / norm


# ---------------------------------------------------------------------------
# symmetry


def symmetry_commuting_filter(basis: Sequence[PauliString], a: ObservableSum) -> list[PauliString]:
    """Keep operators commuting with every term of ``a`` (identity always kept)."""
    out = []
    for g in basis:
        if g.is_identity:
            out.append(g)
            continue
        flags = {commutes(g, w) for c, w in a.terms if c != 0}
        if len(flags) > 1:
            raise MixedSymmetryError(f"{g.label} has mixed commutation with the symmetry terms")
        if flags != {False}:
            out.append(g)
    return out


def symmetry_project(
    m: SseMatrices, target: float, tol: float = 1e-6, floor: float = 1e-12
) -> SseMatrices:
    """Restrict to generalised eigenvectors of ``A w = a S w`` with ``|a - target| <= tol``.

    ``tol`` is widened by 1e-9 relative to the largest ``|a|`` to absorb
    round-off in the eigensolve.
    """
    if m.A is None:
        raise ValueError("symmetry matrix A was not assembled")
    lam, V = scipy.linalg.eigh(m.S)
    keep = lam > floor
    if not keep.any():
        raise SseError("overlap matrix fully degenerate")
    W = V[:, keep] / np.sqrt(lam[keep])
    At = hermitize(W.conj().T @ m.A @ W)
    a, U = scipy.linalg.eigh(At)
    slack = 1e-9 * max(1.0, float(np.abs(a).max()))
    sel = np.abs(a - target) <= tol + slack
    if not sel.any():
        raise SseError("empty symmetry sector")
    Qs = W @ U[:, sel]
    S2 = hermitize(Qs.conj().T @ m.S @ Qs)
    H2 = hermitize(Qs.conj().T @ m.H @ Qs)
    A2 = hermitize(Qs.conj().T @ m.A @ Qs)
    transform = Qs if m.transform is None else m.transform @ Qs
    return SseMatrices(S2, H2, m.basis, A2, transform, m.e_direct)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    hamiltonian: ObservableSum
    state: State | None
    max_weight: int = 2
    k: int = 50
    mode: EstimatorMode = field(default_factory=Exact)
    seed: int = 0
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    basis: list[PauliString] | None = None
    symmetry: ObservableSum | None = None
    symmetry_target: float | None = None
    symmetry_tol: float = 1e-6
    # filter: drop non-commuting operators; project: sector projection; auto: filter, project on mixed terms
    symmetry_method: str = "auto"
    fresh_assembly_data: bool = False
    clamp: bool = True


@dataclass
class PipelineRun:
    config: PipelineConfig
    filter: FilterResult
    matrices: SseMatrices
    result: SseResult
    estimator: Estimator

    def record(self) -> dict:
        return result_record(self.result, self.filter.basis, self.config.seed, self.config.mode.label())


def make_estimator(cfg: PipelineConfig, stream: int = 0) -> Estimator:
    return Estimator(cfg.mode, cfg.state, cfg.seed + stream)


def run_pipeline(cfg: PipelineConfig, estimator: Estimator | None = None, ranking: FilterResult | None = None) -> PipelineRun:
    """enumerate -> filter -> (symmetry) -> assemble -> regularised GEVP -> clamp."""
    from .pauli import enumerate_up_to_weight

    h = cfg.hamiltonian
    est = estimator or make_estimator(cfg)
    basis = cfg.basis if cfg.basis is not None else enumerate_up_to_weight(h.n_qubits, cfg.max_weight)

    method = cfg.symmetry_method
    if cfg.symmetry is not None and method in ("auto", "filter"):
        try:
            basis = symmetry_commuting_filter(basis, cfg.symmetry)
        except MixedSymmetryError:
            if method == "filter":
                raise
            log.info("mixed symmetry commutation; using sector projection")
            method = "project"

    if ranking is None:
        ranking = local_filter(basis, h, est, cfg.k)
    else:
        ranking = ranking.truncate(cfg.k)
    assembly_est = make_estimator(cfg, stream=1) if cfg.fresh_assembly_data else est
    want_A = cfg.symmetry is not None and method == "project"
    mats = assemble_matrices(ranking.basis, h, assembly_est, cfg.symmetry if want_A else None)
    solve_on = mats
    if want_A:
        if cfg.symmetry_target is None:
            raise ValueError("symmetry projection needs a target eigenvalue")
        solve_on = symmetry_project(mats, cfg.symmetry_target, cfg.symmetry_tol, cfg.regularization.eigenvalue_floor)
    result = regularized_gevp(solve_on, cfg.regularization, noiseless=is_noiseless(cfg.mode))
    if cfg.clamp:
        result = apply_clamp(result)
    return PipelineRun(cfg, ranking, mats, result, est)


def result_record(result: SseResult, basis: Sequence[PauliString], seed: int, mode: str) -> dict:
    hist = Counter(g.weight for g in basis)
    return {
        "E_direct": result.E_direct,
        "E_sse": result.E_sse,
        "E_reported": result.E_reported,
        "K": result.K,
        "K_tilde": result.K_tilde,
        "energies_per_level": [[l, e] for l, e in result.E_per_level],
        "spectrum": result.spectrum,
        "basis_weights_histogram": {str(k): hist[k] for k in sorted(hist)},
        "seed": seed,
        "mode": mode,
    }
