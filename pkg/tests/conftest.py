import pytest


def pytest_configure(config):
    config.acceptance = {}


@pytest.fixture
def record(request):
    """record(criterion, part, ok, detail): one entry per checked part."""
    log = request.config.acceptance

    def add(criterion, part, ok, detail, expected_fail=False):
        log.setdefault(criterion, []).append((part, bool(ok), detail, expected_fail))
        print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")

    return add


def pytest_terminal_summary(terminalreporter, config):
    log = getattr(config, "acceptance", {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        parts = log[k]
        ok = all(p[1] for p in parts)
        tag = "PASS" if ok else ("FAIL (expected, see xfail)" if all(p[1] or p[3] for p in parts) else "FAIL")
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'fail'} {p[2]}" for p in parts)
        terminalreporter.write_line(f"criterion {k:>2}: {tag} | {detail}")
