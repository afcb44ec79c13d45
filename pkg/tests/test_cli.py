import csv
import json
import subprocess
import sys

import pytest

from shadow_sse.cli import main
from shadow_sse.config import ConfigError, parse_config
from shadow_sse.shadows import GaussianEps
from shadow_sse.sim import build_spin_ring, exact_spectrum

BASE = """\
[problem]
type = spin_ring
n_qubits = 3
J = 0.1
onsite_seed = 7

[init]
type = vqe
vqe_steps = 5
layers = 1

[basis]
max_weight = {w}

[filter]
k = {k}

[estimator]
mode = {mode}

[seeds]
vqe = 1
shadows = 2
noise = 3

[sweep]
repeats = {repeats}
"""


def write_cfg(tmp_path, w=3, k=64, mode="exact", repeats=3, extra=""):
    f = tmp_path / "exp.ini"
    f.write_text(BASE.format(w=w, k=k, mode=mode, repeats=repeats) + extra)
    return f


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# ---------------------------------------------------------------------------
# config


def test_config_defaults_and_values(tmp_path):
    cfg = parse_config(BASE.format(w=2, k=10, mode="gauss:1e-3", repeats=4), base_dir=tmp_path)
    assert cfg.problem.n_qubits == 3 and cfg.max_weight == 2 and cfg.k == 10
    assert cfg.mode == GaussianEps(1e-3)
    assert (cfg.vqe_seed, cfg.shadow_seed, cfg.noise_seed) == (1, 2, 3)
    assert cfg.estimation_seed == 3
    assert cfg.sweep.repeats == 4
    assert cfg.out_dir == tmp_path / "out"


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[filter]\nk = many\n", "<config>:2: [filter] k"),
        ("[problem]\nn_qubits = 3\n\n[basis]\nmax_weigth = 2\n", "<config>:5: [basis] max_weigth: unknown key"),
        ("[problem]\nn_qubits = 3\n[bogus]\nx = 1\n", "<config>:3: unknown section"),
        ("[estimator]\nmode = gauss:-1\n", "<config>:2: [estimator] mode"),
        ("[seeds]\n\nvqe = -4\n", "<config>:3: [seeds] vqe"),
        ("[sweep]\nk_values = 10, 5\n", "<config>:2: [sweep] k_values"),
        ("[problem]\nn_qubits = 40\n", "<config>:2: [problem] n_qubits"),
        ("[symmetry]\nword = ZZZ\nmethod = project\n", "[symmetry] target"),
        ("[regularization]\nwindow = 1\n", "<config>:2: [regularization] window"),
    ],
)
def test_config_errors_name_the_line(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


# ---------------------------------------------------------------------------
# run


def test_run_full_basis_exact_and_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    rec = json.loads((tmp_path / "a" / "result.json").read_text())
    e0 = exact_spectrum(build_spin_ring(3, 0.1, seed=7))[0]
    assert abs(rec["E_reported"] - e0) <= 1e-8
    for key in ("E_direct", "E_sse", "E_reported", "K", "K_tilde", "energies_per_level", "spectrum",
                "basis_weights_histogram", "seed", "mode"):
        assert key in rec
    for name in ("result.json", "spectrum.csv", "energies_per_level.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    eig_rows = read_rows(tmp_path / "a" / "spectrum.csv")
    assert list(eig_rows[0]) == ["index", "eigenvalue"] and len(eig_rows) == 64


def test_run_dumps_matrices(tmp_path):
    cfg = write_cfg(tmp_path, w=1, k=5, extra="\n[output]\ndump_matrices = true\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "S.csv")
    assert len(rows) == 5 and list(rows[0])[:2] == ["re0", "im0"]
    assert float(rows[0]["re0"]) == 1.0


def test_seed_and_mode_overrides(tmp_path):
    cfg = write_cfg(tmp_path, w=2, k=20)
    args = ["run", "--config", str(cfg), "--mode", "gauss:1e-2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--seed-override", "99"]) == 0
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    assert a["mode"] == "gauss:0.01" and a["seed"] == 3 and b["seed"] == 99
    assert a["E_direct"] != b["E_direct"]


def test_bad_hamiltonian_file_exit_2(tmp_path, capsys):
    (tmp_path / "h.txt").write_text("1.0 ZZ\n0.5 XQ\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[problem]\ntype = file\nhamiltonian_file = h.txt\n\n[init]\ntype = zero\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "h.txt:2:" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[filter]\nk = 0\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "c.ini:2:" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", "--config", str(write_cfg(tmp_path)), "--mode", "nope"]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path, w=1, k=4, extra="\n[regularization]\neigenvalue_floor = 100\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "fully degenerate" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, w=1, k=4)
    proc = subprocess.run(
        [sys.executable, "-m", "shadow_sse.cli", "run", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "E_reported=" in proc.stdout


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_k_exact_nested(tmp_path):
    cfg = write_cfg(tmp_path, w=3, repeats=1)
    assert main(["sweep-k", "--config", str(cfg), "--out", str(tmp_path / "o"), "--values", "1", "4", "8", "16", "32", "64"]) == 0
    rows = read_rows(tmp_path / "o" / "sweep_k.csv")
    err = [float(r["error"]) for r in rows]
    assert all(b <= a + 1e-10 for a, b in zip(err, err[1:]))
    assert rows[0]["E_reported"] == rows[0]["E_direct"]
    assert abs(err[-1]) <= 1e-8
    # 17 significant digits
    assert all(len(r["E_sse"].replace("-", "").replace(".", "").split("e")[0]) >= 15 for r in rows[1:])


def test_sweep_k_noise_ordering(tmp_path):
    cfg = write_cfg(tmp_path, w=2, repeats=5)
    out = {}
    for eps in ("1e-2", "1e-4"):
        d = tmp_path / eps
        assert main(["sweep-k", "--config", str(cfg), "--out", str(d), "--mode", f"gauss:{eps}", "--values", "10", "37"]) == 0
        summ = read_rows(d / "sweep_k_summary.csv")
        out[eps] = float(summ[-1]["abs_error_median"])
    assert out["1e-4"] <= out["1e-2"]


def test_sweep_k_rejects_descending(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["sweep-k", "--config", str(cfg), "--values", "10", "5"]) == 2


def test_sweep_noise_gauss(tmp_path):
    cfg = write_cfg(tmp_path, w=2, k=37, mode="gauss:1e-3", repeats=10)
    d = tmp_path / "o"
    assert main(["sweep-noise", "--config", str(cfg), "--out", str(d), "--values", "1e-2", "1e-3", "1e-4", "1e-9"]) == 0
    summ = read_rows(d / "sweep_noise_summary.csv")
    med = [float(r["abs_error_median"]) for r in summ]
    assert med[0] >= med[1] >= med[2]
    footer = [l for l in (d / "sweep_noise_summary.csv").read_text().splitlines() if l.startswith("#")]
    assert footer and footer[0].startswith("# loglog_slope_error_vs_noise,")

    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "ex"), "--mode", "exact"]) == 0
    rec = json.loads((tmp_path / "ex" / "result.json").read_text())
    assert abs(float(summ[-1]["error_median"]) - (rec["E_reported"] - rec["E_exact"])) <= 1e-6


def test_sweep_noise_shadowvar_variance_halves(tmp_path):
    cfg = write_cfg(tmp_path, w=2, k=20, mode="shadowvar:1000", repeats=2)
    d = tmp_path / "o"
    assert main(["sweep-noise", "--config", str(cfg), "--out", str(d), "--values", "1000", "2000"]) == 0
    summ = read_rows(d / "sweep_noise_summary.csv")
    v1, v2 = (float(r["mean_word_variance_median"]) for r in summ)
    assert v2 == pytest.approx(v1 / 2, rel=1e-12)


def test_gate_noise(tmp_path):
    cfg = write_cfg(tmp_path, w=3, k=64, mode="shadowvar:1000000", repeats=2)
    d = tmp_path / "o"
    assert main(["gate-noise", "--config", str(cfg), "--out", str(d), "--values", "0", "0.3"]) == 0
    rows = read_rows(d / "gate_noise.csv")
    assert list(rows[0])[:1] == ["lambda"]
    assert all(float(r["improvement"]) >= 0 for r in rows)
    assert float(rows[-1]["p2"]) == pytest.approx(5 * float(rows[-1]["p1"]))

    # lambda = 0 reduces to the noiseless pure-state run with the same seed
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "pure"), "--seed-override", "3"]) == 0
    pure = json.loads((tmp_path / "pure" / "result.json").read_text())
    assert float(rows[0]["improvement"]) == pytest.approx(pure["E_direct"] - pure["E_reported"], abs=1e-9)


def test_gate_noise_unreachable_lambda(tmp_path):
    cfg = write_cfg(tmp_path, w=1, k=4)
    assert main(["gate-noise", "--config", str(cfg), "--out", str(tmp_path / "o"), "--values", "1e6"]) == 2


def test_spectrum_and_filter_report(tmp_path):
    cfg = write_cfg(tmp_path, w=2, k=20, mode="shadowvar:10000")
    d = tmp_path / "o"
    assert main(["spectrum", "--config", str(cfg), "--out", str(d)]) == 0
    rep = json.loads((d / "spectrum_report.json").read_text())
    assert rep["bound"]["epsilon_M_squared_bound"] > 0
    ev = [float(r["eigenvalue"]) for r in read_rows(d / "spectrum.csv")]
    assert ev == sorted(ev, reverse=True)

    assert main(["filter-report", "--config", str(cfg), "--out", str(d)]) == 0
    rows = read_rows(d / "filter_report.csv")
    assert len(rows) == 36
    de = [float(r["delta_e"]) for r in rows]
    assert de == sorted(de, reverse=True)
