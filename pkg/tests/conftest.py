"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the criterion summary."""
    def record(text):
        request.node.user_properties.append(("detail", text))
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    parts = _criteria.setdefault(number, {})
    part = parts.setdefault(title, {"ok": True, "details": []})
    part["ok"] = part["ok"] and rep.passed
    if rep.when == "call":
        part["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        parts = _criteria[number]
        ok = all(p["ok"] for p in parts.values())
        titles = list(parts)
        head = titles[0] if len(titles) == 1 else f"{len(titles)} parts"
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {head}")
        for title, part in parts.items():
            if len(titles) > 1:
                status = "pass" if part["ok"] else "FAIL"
                terminalreporter.write_line(f"    {status}: {title}")
            for text in part["details"]:
                terminalreporter.write_line(f"        {text}")
