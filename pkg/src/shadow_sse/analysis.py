"""Error-propagation bound and overlap-matrix diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import SseError, SseMatrices, hermitize
from .pauli import ObservableSum


@dataclass(frozen=True)
class NoiseBoundInput:
    n_snapshots: int
    w: int  # largest Hamiltonian-term weight
    w_prime: int  # largest expansion-operator weight
    K: int
    s_inv_frobenius: float
    h_inf_upper: float

    def __post_init__(self):
        if self.n_snapshots < 1 or self.K < 1:
            raise ValueError("N_s and K must be positive")
        if self.w < 0 or self.w_prime < 0:
            raise ValueError("weights must be non-negative")
        if self.s_inv_frobenius <= 0 or self.h_inf_upper < 0:
            raise ValueError("norms must be positive")


def shot_noise_bound(inp: NoiseBoundInput) -> float:
    """Upper bound on the summed entry variance of ``S^-1 H`` from shot noise."""
    s2 = inp.s_inv_frobenius**2
    return (
        3.0 ** (2 * inp.w_prime)
        * inp.K
        * (inp.h_inf_upper * s2**2 + 3.0**inp.w * s2)
        / inp.n_snapshots
    )


def bound_report(inp: NoiseBoundInput) -> dict:
    return {"inputs": asdict(inp), "epsilon_M_squared_bound": shot_noise_bound(inp)}


def h_norm_upper(h: ObservableSum) -> tuple[float, bool]:
    """``(sum |beta_k|, is_exact)``; the flag is False because this is the triangle bound."""
    return float(np.abs(h.coeffs).sum()), False


def h_norm_exact(h: ObservableSum) -> float:
    from .sim import exact_spectrum

    ev = exact_spectrum(h)
    return float(max(abs(ev[0]), abs(ev[-1])))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # descending
    floor: float

    @property
    def n_above_floor(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > self.floor))

    @property
    def negative(self) -> np.ndarray:
        return self.eigenvalues < 0

    def csv_rows(self) -> list[tuple[int, float]]:
        return [(i, float(v)) for i, v in enumerate(self.eigenvalues)]


def spectrum_report(m: SseMatrices | np.ndarray, floor: float = 1e-12) -> SpectrumReport:
    S = m.S if isinstance(m, SseMatrices) else np.asarray(m)
    ev = scipy.linalg.eigvalsh(hermitize(S))[::-1]
    return SpectrumReport(ev.copy(), floor)


def regularized_frame(S: np.ndarray, floor: float = 1e-12, k_tilde: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of ``S`` above ``floor`` (optionally at most ``k_tilde``)."""
    lam, V = scipy.linalg.eigh(hermitize(S))
    lam, V = lam[::-1], V[:, ::-1]
    keep = int(np.count_nonzero(lam > floor))
    if k_tilde is not None:
        keep = min(keep, k_tilde)
    if keep == 0:
        raise SseError("singular reference overlap matrix")
    return lam[:keep], V[:, :keep]


def s_inv_frobenius(S: np.ndarray, floor: float = 1e-12, k_tilde: int | None = None) -> float:
    """Frobenius norm of the inverse of the regularised overlap matrix."""
    lam, _ = regularized_frame(S, floor, k_tilde)
    return float(np.sqrt(np.sum(lam**-2.0)))


def empirical_matrix_noise(
    runs: Sequence[SseMatrices], reference: SseMatrices, floor: float = 1e-12, k_tilde: int | None = None
) -> float:
    """Summed per-entry sample variance of ``S~^-1 H~`` in the reference's regularised frame."""
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    _, Q = regularized_frame(reference.S, floor, k_tilde)
    Ms = []
    for r in runs:
        St = Q.conj().T @ r.S @ Q
        Ht = Q.conj().T @ r.H @ Q
        try:
            Ms.append(np.linalg.solve(St, Ht))
        except np.linalg.LinAlgError:
            raise SseError("run overlap matrix singular in the reference frame") from None
    Ms = np.array(Ms)
    Ms = Ms - Ms[0]  # shift first so identical runs give exactly zero
    dev = Ms - Ms.mean(axis=0)
    return float((np.abs(dev) ** 2).sum(axis=0).sum() / (len(runs) - 1))
