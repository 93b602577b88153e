import os

import pytest

# criterion number -> list of (label, ok, detail), filled by test_acceptance
ACCEPTANCE: dict = {}

# skip the slow acceptance suite with SEQINFER_SKIP_ACCEPTANCE=1
SKIP_ACCEPTANCE = os.environ.get("SEQINFER_SKIP_ACCEPTANCE") == "1"


def record(criterion: int, label: str, ok: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))
    return ok


def pytest_collection_modifyitems(config, items):
    if SKIP_ACCEPTANCE:
        skip = pytest.mark.skip(reason="SEQINFER_SKIP_ACCEPTANCE=1")
        for item in items:
            if "test_acceptance" in item.nodeid:
                item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        ok = all(k[1] for k in checks)
        tr.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}")
        for label, good, detail in checks:
            tr.write_line(f"    [{'ok' if good else 'FAIL'}] {label} {detail}")
