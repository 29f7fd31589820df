import numpy as np
import pytest

from hdnoma.channel import LinkBudget, draw_channel, dbm_to_w


def default_channel(seed: int, dbm: float = 40.0):
    P = float(dbm_to_w(dbm))
    H = draw_channel(np.random.default_rng(seed), LinkBudget(max_power_w=P), 6, 6, 4)
    return H, P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> list of (clause, passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}
ACCEPTANCE_TITLES = {
    1: "AO convergence",
    2: "optimality gap vs exhaustive oracle",
    3: "sum-rate ordering",
    4: "BER ordering at 40 dBm",
    5: "decoder exactness",
    6: "math-core oracle suite",
    7: "structural suite",
    8: "determinism across worker counts",
}


def record(criterion: int, clause: str, passed: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((clause, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_TITLES):
        clauses = ACCEPTANCE.get(n)
        if not clauses:
            terminalreporter.write_line(f"criterion {n} {ACCEPTANCE_TITLES[n]}: NOT RUN")
            continue
        verdict = "PASS" if all(ok for _, ok, _ in clauses) else "FAIL"
        parts = "; ".join(f"{c} {'ok' if ok else 'FAIL'}{' (' + d + ')' if d else ''}" for c, ok, d in clauses)
        terminalreporter.write_line(f"criterion {n} {ACCEPTANCE_TITLES[n]}: {verdict} | {parts}")
