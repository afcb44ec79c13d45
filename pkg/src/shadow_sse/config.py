"""INI experiment configuration.

Example::

    [problem]
    type = spin_ring
    n_qubits = 4
    J = 0.1
    onsite_seed = 7

    [init]
    type = vqe
    vqe_steps = 40

    [basis]
    max_weight = 2

    [filter]
    k = 50

    [estimator]
    mode = gauss:1e-3

    [seeds]
    vqe = 1
    shadows = 2
    noise = 3
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import RegularizationConfig
from .pauli import ObservableSum, PauliString
from .shadows import EstimatorMode, Exact, SampledShadows, parse_mode
from .sim import MAX_DENSE_QUBITS, NoiseModel


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    kind: str = "spin_ring"
    n_qubits: int = 4
    J: float = 0.1
    onsite: list[float] | None = None
    onsite_seed: int = 0
    periodic: bool = True
    hamiltonian_file: Path | None = None


@dataclass
class InitConfig:
    kind: str = "vqe"  # vqe | circuit | ground_perturbed | zero
    vqe_steps: int = 40
    layers: int = 2
    learning_rate: float = 0.1
    circuit_file: Path | None = None
    perturbation: float = 0.5


@dataclass
class SweepConfig:
    k_values: list[int] = field(default_factory=lambda: [5, 10, 20, 50])
    noise_values: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    lambda_values: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.3, 1.0])
    repeats: int = 5
    fault_ratio: float = 5.0


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    init: InitConfig = field(default_factory=InitConfig)
    max_weight: int = 2
    n_g_cap: int | None = None
    k: int = 50
    mode: EstimatorMode = field(default_factory=Exact)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    gate_noise: NoiseModel | None = None
    symmetry: ObservableSum | None = None
    symmetry_target: float | None = None
    symmetry_tol: float = 1e-6
    symmetry_method: str = "auto"
    fresh_assembly_data: bool = False
    vqe_seed: int = 0
    shadow_seed: int = 0
    noise_seed: int = 0
    out_dir: Path = Path("out")
    dump_matrices: bool = False
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def estimation_seed(self) -> int:
        return self.shadow_seed if isinstance(self.mode, SampledShadows) else self.noise_seed

    def with_seed(self, seed: int) -> ExperimentConfig:
        from dataclasses import replace

        return replace(self, shadow_seed=seed, noise_seed=seed)


class _Reader:
    """Typed access to a ConfigParser that reports the offending line."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None

    def line_of(self, section: str, key: str) -> int | None:
        current = None
        for lineno, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            m = re.match(r"\[(.+)\]", line)
            if m:
                current = m.group(1).strip()
                continue
            if current == section and re.match(rf"{re.escape(key)}\s*[=:]", line):
                return lineno
        return None

    def line_of_section(self, section: str) -> int | None:
        for lineno, raw in enumerate(self.text.splitlines(), 1):
            if raw.strip() == f"[{section}]":
                return lineno
        return None

    def fail(self, section: str, key: str, msg: str):
        lineno = self.line_of(section, key)
        where = f"{self.source}:{lineno}" if lineno else self.source
        raise ConfigError(f"{where}: [{section}] {key}: {msg}")

    def has(self, section: str, key: str) -> bool:
        return self.cp.has_option(section, key)

    def get(self, section: str, key: str, conv, default=None):
        if not self.has(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.fail(section, key, f"invalid value {raw!r} ({exc})")

    def check_known(self, section: str, keys: set[str]) -> None:
        if not self.cp.has_section(section):
            return
        for key in self.cp.options(section):
            if key not in keys:
                self.fail(section, key, "unknown key")


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(raw: str) -> int:
    return int(raw.strip())


def _seed(raw: str) -> int:
    v = int(raw.strip())
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _floats(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    return [int(float(v)) for v in raw.replace(",", " ").split()]


_KNOWN = {
    "problem": {"type", "n_qubits", "J", "onsite", "onsite_seed", "periodic", "hamiltonian_file"},
    "init": {"type", "vqe_steps", "layers", "learning_rate", "circuit_file", "perturbation"},
    "basis": {"max_weight", "n_g_cap"},
    "filter": {"k"},
    "estimator": {"mode", "fresh_assembly_data"},
    "regularization": {"eigenvalue_floor", "window", "k_tilde_max", "scan_step", "truncation", "stop_rule"},
    "gate_noise": {"p1", "p2"},
    "symmetry": {"word", "target", "tol", "method"},
    "seeds": {"vqe", "shadows", "noise"},
    "output": {"dir", "dump_matrices"},
    "sweep": {"k_values", "noise_values", "lambda_values", "repeats", "fault_ratio"},
}


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    r = _Reader(text, source)
    for section in r.cp.sections():
        if section not in _KNOWN:
            raise ConfigError(f"{source}:{r.line_of_section(section)}: unknown section [{section}]")
        r.check_known(section, _KNOWN[section])
    base = base_dir or Path(".")

    def path(raw: str) -> Path:
        p = Path(raw.strip())
        return p if p.is_absolute() else base / p

    prob = ProblemConfig(
        kind=r.get("problem", "type", str.strip, "spin_ring"),
        n_qubits=r.get("problem", "n_qubits", _int, 4),
        J=r.get("problem", "J", float, 0.1),
        onsite=r.get("problem", "onsite", _floats, None),
        onsite_seed=r.get("problem", "onsite_seed", _seed, 0),
        periodic=r.get("problem", "periodic", _bool, True),
        hamiltonian_file=r.get("problem", "hamiltonian_file", path, None),
    )
    if prob.kind not in ("spin_ring", "file"):
        r.fail("problem", "type", f"expected spin_ring or file, got {prob.kind!r}")
    if prob.kind == "file" and prob.hamiltonian_file is None:
        r.fail("problem", "type", "type = file needs hamiltonian_file")
    if prob.kind == "spin_ring":
        if prob.n_qubits < 3 or prob.n_qubits > MAX_DENSE_QUBITS:
            r.fail("problem", "n_qubits", f"spin ring needs 3..{MAX_DENSE_QUBITS} qubits")
        if prob.onsite is not None and len(prob.onsite) != prob.n_qubits:
            r.fail("problem", "onsite", f"need {prob.n_qubits} values")

    init = InitConfig(
        kind=r.get("init", "type", str.strip, "vqe"),
        vqe_steps=r.get("init", "vqe_steps", _int, 40),
        layers=r.get("init", "layers", _int, 2),
        learning_rate=r.get("init", "learning_rate", float, 0.1),
        circuit_file=r.get("init", "circuit_file", path, None),
        perturbation=r.get("init", "perturbation", float, 0.5),
    )
    if init.kind not in ("vqe", "circuit", "ground_perturbed", "zero"):
        r.fail("init", "type", f"unknown init type {init.kind!r}")
    if init.kind == "circuit" and init.circuit_file is None:
        r.fail("init", "type", "type = circuit needs circuit_file")
    if init.vqe_steps < 0:
        r.fail("init", "vqe_steps", "must be >= 0")

    cfg = ExperimentConfig(problem=prob, init=init)
    cfg.max_weight = r.get("basis", "max_weight", _int, 2)
    if cfg.max_weight < 0:
        r.fail("basis", "max_weight", "must be >= 0")
    cfg.n_g_cap = r.get("basis", "n_g_cap", _int, None)
    cfg.k = r.get("filter", "k", _int, 50)
    if cfg.k < 1:
        r.fail("filter", "k", "must be >= 1")
    cfg.mode = r.get("estimator", "mode", parse_mode, Exact())
    cfg.fresh_assembly_data = r.get("estimator", "fresh_assembly_data", _bool, False)

    reg = {}
    for key, conv in (
        ("eigenvalue_floor", float),
        ("window", _int),
        ("k_tilde_max", _int),
        ("scan_step", _int),
        ("truncation", str.strip),
        ("stop_rule", str.strip),
    ):
        if r.has("regularization", key):
            reg[key] = r.get("regularization", key, conv)
    try:
        cfg.regularization = RegularizationConfig(**reg)
    except ValueError as exc:
        key = next(iter(reg), "window")
        r.fail("regularization", key, str(exc))

    if r.cp.has_section("gate_noise"):
        p1 = r.get("gate_noise", "p1", float, 0.0)
        p2 = r.get("gate_noise", "p2", float, None)
        try:
            cfg.gate_noise = NoiseModel(p1, p2)
        except ValueError as exc:
            r.fail("gate_noise", "p1", str(exc))

    if r.cp.has_section("symmetry"):
        word = r.get("symmetry", "word", lambda s: PauliString.from_label(s.strip()), None)
        if word is None:
            r.fail("symmetry", "word", "missing symmetry word")
        cfg.symmetry = ObservableSum.single(word)
        cfg.symmetry_target = r.get("symmetry", "target", float, None)
        cfg.symmetry_tol = r.get("symmetry", "tol", float, 1e-6)
        cfg.symmetry_method = r.get("symmetry", "method", str.strip, "auto")
        if cfg.symmetry_method not in ("auto", "filter", "project"):
            r.fail("symmetry", "method", "expected auto, filter or project")
        if cfg.symmetry_method == "project" and cfg.symmetry_target is None:
            r.fail("symmetry", "target", "projection needs a target eigenvalue")

    cfg.vqe_seed = r.get("seeds", "vqe", _seed, 0)
    cfg.shadow_seed = r.get("seeds", "shadows", _seed, 0)
    cfg.noise_seed = r.get("seeds", "noise", _seed, 0)
    cfg.out_dir = r.get("output", "dir", path, base / "out")
    cfg.dump_matrices = r.get("output", "dump_matrices", _bool, False)

    sw = SweepConfig()
    sw.k_values = r.get("sweep", "k_values", _ints, sw.k_values)
    if sw.k_values != sorted(sw.k_values) or min(sw.k_values) < 1:
        r.fail("sweep", "k_values", "must be positive and ascending")
    sw.noise_values = r.get("sweep", "noise_values", _floats, sw.noise_values)
    if min(sw.noise_values) <= 0:
        r.fail("sweep", "noise_values", "must be positive")
    sw.lambda_values = r.get("sweep", "lambda_values", _floats, sw.lambda_values)
    if min(sw.lambda_values) < 0:
        r.fail("sweep", "lambda_values", "must be non-negative")
    sw.repeats = r.get("sweep", "repeats", _int, sw.repeats)
    if sw.repeats < 1:
        r.fail("sweep", "repeats", "must be >= 1")
    sw.fault_ratio = r.get("sweep", "fault_ratio", float, sw.fault_ratio)
    cfg.sweep = sw
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)
