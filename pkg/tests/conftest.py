import numpy as np
import pytest

from sleepfields.core import Dataset, LabelAlphabet, LabelSequence, ObservationSequence


def make_dataset(lengths, m, L, seed=0, scale=1.0):
    """Random features and labels; every label is forced to appear."""
    rng = np.random.default_rng(seed)
    seqs = []
    for i, n in enumerate(lengths):
        y = rng.integers(L, size=n)
        seqs.append((ObservationSequence(f"s{i}", scale * rng.normal(size=(n, m))), LabelSequence(y)))
    alphabet = LabelAlphabet(tuple(f"l{k}" for k in range(L)))
    return Dataset(tuple(seqs), alphabet)


def xor_dataset(sequences=10, length=40, seed=0):
    """Per-epoch XOR of feature signs, two labels."""
    rng = np.random.default_rng(seed)
    seqs = []
    for i in range(sequences):
        x = rng.uniform(-1, 1, size=(length, 2))
        x += 0.2 * np.sign(x)
        y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(int)
        seqs.append((ObservationSequence(f"x{i}", x), LabelSequence(y)))
    return Dataset(tuple(seqs), LabelAlphabet(("A", "B")))


@pytest.fixture
def toy3():
    return make_dataset([4, 3, 5], m=3, L=3, seed=11)


_verdicts = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
        _verdicts.append(f"{'PASS' if report.passed else 'FAIL'} criterion {name.replace('_', ' ', 1)}")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda v: int(v.split()[2])):
            terminalreporter.write_line(line)
