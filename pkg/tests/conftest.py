import re

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    match = re.match(r"test_criterion_(\d+)([a-z]?)", item.name)
    if match is None or call.when != "call":
        return
    key = (int(match.group(1)), match.group(2))
    title = (item.function.__doc__ or "").strip().splitlines()[0]
    _CRITERIA[key] = call.excinfo is None, title


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, part), (passed, title) in sorted(_CRITERIA.items()):
        label = f"{number}{part}"
        terminalreporter.write_line(
            f"criterion {label:>3}: {'PASS' if passed else 'FAIL'}  {title}")
