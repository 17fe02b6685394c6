import numpy as np
import pytest


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random proper rotation via sign-fixed QR."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_sim3(rng: np.random.Generator):
    from egostitch import Sim3

    return Sim3(float(rng.uniform(0.2, 3.0)), random_rotation(rng), rng.normal(size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion after the run."""
    entries = []
    for status, passed in (("passed", True), ("failed", False), ("error", False)):
        for report in terminalreporter.stats.get(status, []):
            nodeid = str(getattr(report, "nodeid", ""))
            if "test_acceptance" in nodeid and getattr(report, "when", "call") == "call":
                entries.append((nodeid.split("::")[-1], passed))
    if entries:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, passed in sorted(entries):
            terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")
