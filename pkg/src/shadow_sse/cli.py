"""Command-line experiment runner.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from . import analysis
from .config import ConfigError, ExperimentConfig, load_config
from .core import SseError, local_filter
from .experiments import (
    build_problem,
    exact_ground_energy,
    gate_noise_sweep,
    loglog_slope,
    pipeline_config,
    prepare_circuit,
    prepare_state,
    run_experiment,
    summarize,
    sweep_k,
    sweep_noise,
)
from .pauli import enumerate_up_to_weight
from .shadows import Estimator, SampledShadows, ShadowVariance, parse_mode

log = logging.getLogger("shadow_sse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MAX_DM_QUBITS = 8


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], footer: Sequence[str] = ()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        for line in footer:
            fh.write(f"# {line}\n")


def write_dict_csv(path: Path, records: list[dict], footer: Sequence[str] = ()) -> None:
    header = list(records[0]) if records else []
    write_csv(path, header, [[r[k] for k in header] for r in records], footer)


def write_complex_matrix(path: Path, m: np.ndarray) -> None:
    """Row-major; each entry is written as two columns ``re,im``."""
    rows = [[v for z in row for v in (z.real, z.imag)] for row in np.asarray(m, dtype=complex)]
    write_csv(path, [f"{part}{j}" for j in range(m.shape[1]) for part in ("re", "im")], rows)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if np.isfinite(f) else None
    return o


def write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _seeds(cfg: ExperimentConfig) -> list[int]:
    base = cfg.estimation_seed
    return [base + i for i in range(cfg.sweep.repeats)]


# ---------------------------------------------------------------------------
# verbs


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    res = run_experiment(cfg)
    r = res.run.result
    write_json(out / "result.json", res.record())
    srep = analysis.spectrum_report(res.run.matrices, cfg.regularization.eigenvalue_floor)
    write_csv(out / "spectrum.csv", ["index", "eigenvalue"], srep.csv_rows())
    write_csv(out / "energies_per_level.csv", ["level", "energy"], r.E_per_level)
    if cfg.dump_matrices:
        write_complex_matrix(out / "S.csv", res.run.matrices.S)
        write_complex_matrix(out / "H.csv", res.run.matrices.H)
    if r.truncation_warning:
        log.warning("truncation level chosen at the scan boundary")
    print(f"E_direct={r.E_direct:.12g} E_sse={r.E_sse:.12g} E_reported={r.E_reported:.12g} K={r.K} K_tilde={r.K_tilde}")
    return EXIT_OK


def cmd_sweep_k(cfg: ExperimentConfig, out: Path, values: list[float] | None) -> int:
    ks = [int(v) for v in values] if values else cfg.sweep.k_values
    if ks != sorted(ks) or min(ks) < 1:
        raise ConfigError("k values must be positive and ascending")
    h = build_problem(cfg)
    state = prepare_state(cfg, h)
    rows = sweep_k(cfg, h, state, ks, _seeds(cfg), exact_ground_energy(h))
    write_dict_csv(out / "sweep_k.csv", rows)
    write_dict_csv(out / "sweep_k_summary.csv", summarize(rows, "K_requested", ["E_reported", "K_tilde", "error", "abs_error"]))
    return EXIT_OK


def cmd_sweep_noise(cfg: ExperimentConfig, out: Path, values: list[float] | None) -> int:
    levels = values or cfg.sweep.noise_values
    if min(levels) <= 0:
        raise ConfigError("noise values must be positive")
    h = build_problem(cfg)
    state = prepare_state(cfg, h)
    rows = sweep_noise(cfg, h, state, levels, _seeds(cfg), exact_ground_energy(h))
    summary = summarize(rows, "noise", ["error", "abs_error", "K_tilde", "mean_word_variance"])
    slope = loglog_slope([s["noise"] for s in summary], [s["abs_error_median"] for s in summary])
    write_dict_csv(out / "sweep_noise.csv", rows)
    write_dict_csv(out / "sweep_noise_summary.csv", summary, [f"loglog_slope_error_vs_noise,{fmt(slope)}"])
    return EXIT_OK


def cmd_gate_noise(cfg: ExperimentConfig, out: Path, values: list[float] | None) -> int:
    lambdas = values or cfg.sweep.lambda_values
    if min(lambdas) < 0:
        raise ConfigError("lambda values must be non-negative")
    h = build_problem(cfg)
    if h.n_qubits > MAX_DM_QUBITS:
        raise ConfigError(f"gate-noise runs need at most {MAX_DM_QUBITS} qubits")
    circuit = prepare_circuit(cfg, h)
    if circuit is None:
        raise ConfigError("gate-noise needs a circuit-prepared initial state (init type vqe, circuit or zero)")
    rows = gate_noise_sweep(cfg, h, circuit, lambdas, _seeds(cfg), cfg.sweep.fault_ratio)
    write_dict_csv(out / "gate_noise.csv", rows)
    write_dict_csv(
        out / "gate_noise_summary.csv",
        summarize(rows, "lambda", ["E_direct_noisy", "E_sse", "E_reported", "improvement", "K_tilde"]),
    )
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, out: Path) -> int:
    res = run_experiment(cfg)
    m = res.run.matrices
    floor = cfg.regularization.eigenvalue_floor
    srep = analysis.spectrum_report(m, floor)
    write_csv(out / "spectrum.csv", ["index", "eigenvalue"], srep.csv_rows())
    h = res.run.config.hamiltonian
    report: dict = {"n_above_floor": srep.n_above_floor, "n_negative": int(srep.negative.sum()), "K": m.K}
    mode = cfg.mode
    if isinstance(mode, (ShadowVariance, SampledShadows)):
        h_norm = analysis.h_norm_exact(h) if h.n_qubits <= 12 else analysis.h_norm_upper(h)[0]
        k_tilde = res.run.result.K_tilde
        inp = analysis.NoiseBoundInput(
            n_snapshots=mode.n_snapshots,
            w=h.max_weight,
            w_prime=max(g.weight for g in res.run.filter.basis),
            K=k_tilde,
            s_inv_frobenius=analysis.s_inv_frobenius(m.S, floor, k_tilde),
            h_inf_upper=h_norm,
        )
        report["bound"] = analysis.bound_report(inp)
    write_json(out / "spectrum_report.json", report)
    return EXIT_OK


def cmd_filter_report(cfg: ExperimentConfig, out: Path) -> int:
    h = build_problem(cfg)
    state = prepare_state(cfg, h)
    pc = pipeline_config(cfg, h, state)
    est = Estimator(pc.mode, state, pc.seed)
    basis = pc.basis if pc.basis is not None else enumerate_up_to_weight(h.n_qubits, cfg.max_weight)
    fr = local_filter(basis, h, est, cfg.k)
    rows = [(i + 1, g.label, g.weight, de) for i, (g, de) in enumerate(fr.ranked)]
    write_csv(out / "filter_report.csv", ["rank", "pauli", "weight", "delta_e"], rows)
    print(f"E_direct={fr.direct_energy:.12g} kept={fr.k_kept} ranked={len(fr.ranked)}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shadow-sse", description="Shadow subspace expansion experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "sweep-k", "sweep-noise", "gate-noise", "spectrum", "filter-report"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] dir)")
        sp.add_argument("--seed-override", type=int, default=None, help="replaces the shadow and noise seeds")
        sp.add_argument("--mode", default=None, help="exact | gauss:<eps> | shadowvar:<Ns> | sampled:<Ns>")
        if verb in ("sweep-k", "sweep-noise", "gate-noise"):
            sp.add_argument("--values", type=float, nargs="+", default=None, help="sweep points")
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.mode is not None:
        try:
            cfg = replace(cfg, mode=parse_mode(args.mode))
        except ValueError as exc:
            raise ConfigError(f"--mode: {exc}") from None
    if args.seed_override is not None:
        if not 0 <= args.seed_override < 2**64:
            raise ConfigError("--seed-override must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed_override)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = args.out or cfg.out_dir
        values = getattr(args, "values", None)
        if cfg.gate_noise is not None and build_problem(cfg).n_qubits > MAX_DM_QUBITS:
            raise ConfigError(f"gate noise needs at most {MAX_DM_QUBITS} qubits")
        handlers = {
            "run": lambda: cmd_run(cfg, out),
            "sweep-k": lambda: cmd_sweep_k(cfg, out, values),
            "sweep-noise": lambda: cmd_sweep_noise(cfg, out, values),
            "gate-noise": lambda: cmd_gate_noise(cfg, out, values),
            "spectrum": lambda: cmd_spectrum(cfg, out),
            "filter-report": lambda: cmd_filter_report(cfg, out),
        }
        return handlers[args.verb]()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SseError, np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # input files (Hamiltonian, circuit) and unreachable fault rates
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
