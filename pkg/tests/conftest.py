import os

from hypothesis import HealthCheck, settings

# the analysis fan-out would otherwise start one process per CPU inside the test run
os.environ.setdefault("LINDEY_THREADS", "1")

settings.register_profile(
    "lindey", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lindey")

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}: {detail}")
