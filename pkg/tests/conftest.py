import pytest

from cutscreen import BalancePolicy, Route, RoutingPolicy, balance, build_flow, bundled_case, solve_dc

# two hand-routed 5-bus flows: each source to its nearest sink, and one with a 1-3-2 detour
DIRECT_POLICY = RoutingPolicy.scripted(Route(5, 3), Route(4, 3), Route(4, 2), Route(1, 2))
DETOUR_POLICY = RoutingPolicy.scripted(
    Route(5, 2), Route(1, 2, 60.0), Route(1, 2, path=(1, 3, 2)), Route(1, 3), Route(4, 3)
)


@pytest.fixture(scope="session")
def net5():
    return balance(bundled_case("case5"), BalancePolicy.strict())


@pytest.fixture(scope="session")
def dc5(net5):
    return solve_dc(net5)


@pytest.fixture(scope="session")
def direct_flow(net5):
    return build_flow(net5, DIRECT_POLICY)


@pytest.fixture(scope="session")
def detour_flow(net5):
    return build_flow(net5, DETOUR_POLICY)


@pytest.fixture(scope="session")
def raw39():
    return bundled_case("case39")


# --------------------------------------------------------------------------
# one summary line per acceptance criterion

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            number, title = value
            _criteria[number] = ("PASS" if report.outcome == "passed" else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
