"""Independent dense oracles shared by the test modules."""

from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

PAULI_2x2 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_pauli(label: str) -> np.ndarray:
    # qubit 0 is the least significant index bit, i.e. the last kron factor
    return reduce(np.kron, [PAULI_2x2[c] for c in reversed(label)])


def kron_hamiltonian(terms) -> np.ndarray:
    """``terms``: iterable of (coefficient, label)."""
    terms = list(terms)
    return sum(c * kron_pauli(lab) for c, lab in terms)


def spin_ring_oracle(n: int, J: float, c: np.ndarray) -> np.ndarray:
    """Dense ring Hamiltonian built from labels, independent of the package."""
    terms = []
    for i in range(n):
        j = (i + 1) % n
        for p in "XYZ":
            lab = ["I"] * n
            lab[i] = lab[j] = p
            terms.append((J, "".join(lab)))
    for i in range(n):
        lab = ["I"] * n
        lab[i] = "Z"
        terms.append((c[i], "".join(lab)))
    return kron_hamiltonian(terms)


def random_state(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion in the terminal summary

_CRITERIA: dict[int, tuple[bool, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    num, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    _CRITERIA[num] = (rep.passed, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, title, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
