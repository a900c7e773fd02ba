import pytest

# filled by test_acceptance: criterion number -> (verdict, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}  {detail}")
