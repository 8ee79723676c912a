"""Per-criterion PASS/FAIL summary for the acceptance suite.

Tests tagged ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; a
criterion passes only if every test carrying its number passes. Tests may
attach a measured value with ``record_property("detail", ...)``.
"""

from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")
    config.addinivalue_line("markers", "supplementary(title): extra check outside the criteria")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "setup" and rep.passed:
        return
    if rep.when == "teardown" and rep.passed:
        return
    for name in ("criterion", "supplementary"):
        marker = item.get_closest_marker(name)
        if marker is None:
            continue
        if name == "criterion":
            key, title = marker.args
        else:
            key, title = f"S:{marker.args[0]}", marker.args[0]
        _TITLES[key] = title
        details = [v for k, v in item.user_properties if k == "detail"]
        _RESULTS[key].append((item.name, rep.passed, "; ".join(details)))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    numbered = sorted((k for k in _RESULTS if isinstance(k, int)))
    extra = sorted(k for k in _RESULTS if not isinstance(k, int))
    if numbered:
        tr.section("acceptance criteria")
        for key in numbered:
            _line(tr, f"criterion {key}", key)
    if extra:
        tr.section("supplementary checks")
        for key in extra:
            _line(tr, "supplementary", key)


def _line(tr, label, key):
    runs = _RESULTS[key]
    ok = all(passed for _, passed, _ in runs)
    detail = " | ".join(d for _, _, d in runs if d)
    tr.write_line(f"{'PASS' if ok else 'FAIL'} {label}: {_TITLES[key]}" +
                  (f" [{detail}]" if detail else ""))
