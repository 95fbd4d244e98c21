"""Shared pytest hooks: one summary line per acceptance criterion."""
import pytest

CRITERIA = {
    1: "1-D Skorokhod map equals the running-minimum formula",
    2: "completely-S audit against principal-submatrix grid search",
    3: "per-step LCP against active-set enumeration",
    4: "reflected Brownian motion terminal mean",
    5: "stationary law of reflected Brownian motion with drift",
    6: "submartingale suite on the demo problems",
    7: "pushing-hull property",
    8: "boundary occupation shrinks to zero",
    9: "pipeline determinism across worker counts",
}

RESULTS = {}


@pytest.fixture
def record_criterion():
    """Call ``record_criterion(k, passed, detail)`` once per acceptance criterion."""
    def record(k, passed, detail=""):
        RESULTS[k] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k, title in CRITERIA.items():
        if k in RESULTS:
            ok, detail = RESULTS[k]
            status = "PASS" if ok else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        line = f"C{k} {status:7s} {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
