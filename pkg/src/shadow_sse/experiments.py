"""Experiment drivers shared by the CLI and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .core import FilterResult, PipelineConfig, PipelineRun, local_filter, run_pipeline
from .pauli import ObservableSum, WordArray, enumerate_up_to_weight
from .shadows import (
    Estimator,
    GaussianEps,
    SampledShadows,
    ShadowVariance,
    theoretical_variance,
)
from .sim import (
    MAX_DENSE_QUBITS,
    Circuit,
    DensityMatrix,
    State,
    StateVector,
    apply_circuit,
    apply_noisy_circuit,
    build_spin_ring,
    exact_spectrum,
    ground_state,
    hardware_efficient_ansatz,
    load_circuit,
    load_hamiltonian,
    noise_for_fault_rate,
    run_vqe,
)

log = logging.getLogger(__name__)


def build_problem(cfg: ExperimentConfig) -> ObservableSum:
    p = cfg.problem
    if p.kind == "file":
        return load_hamiltonian(p.hamiltonian_file)
    return build_spin_ring(p.n_qubits, p.J, onsite=p.onsite, seed=p.onsite_seed, periodic=p.periodic)


def prepare_circuit(cfg: ExperimentConfig, h: ObservableSum) -> Circuit | None:
    """State-preparation circuit, or None when the state is not circuit-prepared."""
    init = cfg.init
    n = h.n_qubits
    if init.kind == "circuit":
        return load_circuit(init.circuit_file, n)
    if init.kind == "vqe":
        ansatz = hardware_efficient_ansatz(n, init.layers)
        vqe = run_vqe(h, ansatz, init.vqe_steps, cfg.vqe_seed, init.learning_rate)
        log.info("VQE energy %.10g after %d steps", vqe.energies[-1], init.vqe_steps)
        return ansatz.bind(vqe.params)
    if init.kind == "zero":
        return Circuit(n, [])
    return None


def perturbed_ground_state(h: ObservableSum, amount: float, seed: int) -> StateVector:
    _, gs = ground_state(h)
    rnd = StateVector.random(h.n_qubits, np.random.default_rng(seed))
    amp = gs.amplitudes + amount * rnd.amplitudes
    return StateVector(h.n_qubits, amp / np.linalg.norm(amp))


def prepare_state(cfg: ExperimentConfig, h: ObservableSum, circuit: Circuit | None = None) -> State:
    """Initial state, with the configured gate noise applied if any."""
    if cfg.init.kind == "ground_perturbed":
        psi = perturbed_ground_state(h, cfg.init.perturbation, cfg.vqe_seed)
        return psi.to_density_matrix() if cfg.gate_noise is not None else psi
    if circuit is None:
        circuit = prepare_circuit(cfg, h)
    if cfg.gate_noise is not None:
        return apply_noisy_circuit(DensityMatrix.zero(h.n_qubits), circuit, cfg.gate_noise)
    return apply_circuit(StateVector.zero(h.n_qubits), circuit)


def pipeline_config(cfg: ExperimentConfig, h: ObservableSum, state: State, **overrides) -> PipelineConfig:
    basis = None
    if cfg.n_g_cap is not None:
        basis = enumerate_up_to_weight(h.n_qubits, cfg.max_weight)[: cfg.n_g_cap]
    pc = PipelineConfig(
        hamiltonian=h,
        state=state,
        max_weight=cfg.max_weight,
        k=cfg.k,
        mode=cfg.mode,
        seed=cfg.estimation_seed,
        regularization=cfg.regularization,
        basis=basis,
        symmetry=cfg.symmetry,
        symmetry_target=cfg.symmetry_target,
        symmetry_tol=cfg.symmetry_tol,
        symmetry_method=cfg.symmetry_method,
        fresh_assembly_data=cfg.fresh_assembly_data,
    )
    return replace(pc, **overrides)


def exact_ground_energy(h: ObservableSum) -> float | None:
    if h.n_qubits > MAX_DENSE_QUBITS:
        return None
    return float(exact_spectrum(h, 1)[0])


@dataclass
class RunOutput:
    run: PipelineRun
    E_exact: float | None

    def record(self) -> dict:
        rec = self.run.record()
        rec["E_exact"] = self.E_exact
        return rec


def run_experiment(cfg: ExperimentConfig) -> RunOutput:
    h = build_problem(cfg)
    state = prepare_state(cfg, h)
    run = run_pipeline(pipeline_config(cfg, h, state))
    return RunOutput(run, exact_ground_energy(h))


def median_std(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(np.median(a)), float(a.std(ddof=1)) if a.size > 1 else 0.0


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log|y| against log x; nan when fewer than two usable points."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _shared_ranking(pc: PipelineConfig, est: Estimator, k: int) -> FilterResult:
    basis = pc.basis if pc.basis is not None else enumerate_up_to_weight(pc.hamiltonian.n_qubits, pc.max_weight)
    return local_filter(basis, pc.hamiltonian, est, k)


def sweep_k(
    cfg: ExperimentConfig,
    h: ObservableSum,
    state: State,
    k_values: Sequence[int],
    seeds: Sequence[int],
    e_exact: float | None = None,
) -> list[dict]:
    """One row per (K, seed).  All K share the ranking and estimates of a seed."""
    rows = []
    for seed in seeds:
        pc = pipeline_config(cfg.with_seed(seed), h, state)
        est = Estimator(pc.mode, state, pc.seed)
        ranking = None
        if pc.symmetry is None:
            ranking = _shared_ranking(pc, est, max(k_values))
        for k in k_values:
            run = run_pipeline(replace(pc, k=k), estimator=est, ranking=ranking)
            r = run.result
            rows.append(
                {
                    "K_requested": k,
                    "K": r.K,
                    "seed": seed,
                    "E_direct": r.E_direct,
                    "E_sse": r.E_sse,
                    "E_reported": r.E_reported,
                    "K_tilde": r.K_tilde,
                    "error": (r.E_reported - e_exact) if e_exact is not None else float("nan"),
                    "abs_error": abs(r.E_reported - e_exact) if e_exact is not None else float("nan"),
                }
            )
    return rows


def _with_noise_level(mode, level: float):
    if isinstance(mode, GaussianEps):
        return GaussianEps(level)
    if isinstance(mode, ShadowVariance):
        return ShadowVariance(int(level))
    if isinstance(mode, SampledShadows):
        return SampledShadows(int(level))
    raise ValueError("noise sweep needs a gauss, shadowvar or sampled estimator mode")


def mean_word_variance(est: Estimator, n_qubits: int) -> float:
    """Mean per-word variance ``(3^w - <P>^2)/N_s`` over the words estimated so far."""
    mode = est.mode
    cache = est.exact_cache
    if not isinstance(mode, ShadowVariance) or not cache:
        return float("nan")
    keys = np.fromiter(cache.keys(), dtype=np.int64, count=len(cache))
    vals = np.array([cache[k] for k in keys.tolist()], dtype=float)
    mask = (1 << n_qubits) - 1
    w = np.bitwise_count((keys & mask) | (keys >> n_qubits)).astype(np.int64)
    var = np.array([theoretical_variance(int(a), float(b)) for a, b in zip(w, vals)])
    return float(var.mean() / mode.n_snapshots)


def sweep_noise(
    cfg: ExperimentConfig,
    h: ObservableSum,
    state: State,
    levels: Sequence[float],
    seeds: Sequence[int],
    e_exact: float | None = None,
) -> list[dict]:
    rows = []
    for level in levels:
        mode = _with_noise_level(cfg.mode, level)
        for seed in seeds:
            pc = pipeline_config(cfg.with_seed(seed), h, state, mode=mode)
            run = run_pipeline(pc)
            r = run.result
            rows.append(
                {
                    "noise": level,
                    "seed": seed,
                    "E_direct": r.E_direct,
                    "E_sse": r.E_sse,
                    "E_reported": r.E_reported,
                    "K_tilde": r.K_tilde,
                    "error": (r.E_reported - e_exact) if e_exact is not None else float("nan"),
                    "abs_error": abs(r.E_reported - e_exact) if e_exact is not None else float("nan"),
                    "mean_word_variance": mean_word_variance(run.estimator, h.n_qubits),
                }
            )
    return rows


def gate_noise_sweep(
    cfg: ExperimentConfig,
    h: ObservableSum,
    circuit: Circuit,
    lambdas: Sequence[float],
    seeds: Sequence[int],
    ratio: float = 5.0,
) -> list[dict]:
    """Noisy state preparation at each total fault rate ``lambda``; one row per (lambda, seed)."""
    rows = []
    for lam in lambdas:
        noise = noise_for_fault_rate(circuit, lam, ratio)
        rho = apply_noisy_circuit(DensityMatrix.zero(h.n_qubits), circuit, noise)
        for seed in seeds:
            run = run_pipeline(pipeline_config(cfg.with_seed(seed), h, rho))
            r = run.result
            rows.append(
                {
                    "lambda": lam,
                    "p1": noise.p1,
                    "p2": noise.p2,
                    "seed": seed,
                    "E_direct_noisy": r.E_direct,
                    "E_sse": r.E_sse,
                    "E_reported": r.E_reported,
                    "improvement": r.improvement,
                    "K_tilde": r.K_tilde,
                }
            )
    return rows


def summarize(rows: list[dict], by: str, fields: Sequence[str]) -> list[dict]:
    """Median and sample standard deviation of ``fields`` grouped by ``by`` (first-seen order)."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(row[by], []).append(row)
    out = []
    for key, grp in groups.items():
        rec = {by: key, "n": len(grp)}
        for f in fields:
            med, sd = median_std([g[f] for g in grp])
            rec[f"{f}_median"] = med
            rec[f"{f}_std"] = sd
        out.append(rec)
    return out


def word_array(h: ObservableSum) -> WordArray:
    return WordArray.from_words(h.words)
