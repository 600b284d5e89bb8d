import pytest

from dpa.env import TreasureGame, builtin_map, parse_map

from helpers import CORRIDOR


@pytest.fixture
def corridor():
    return TreasureGame(parse_map(CORRIDOR, "corridor"), seed=0)


@pytest.fixture(params=["domain1", "domain2", "domain3", "domain4", "domain5"])
def any_env(request):
    return TreasureGame(builtin_map(request.param), seed=11)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
