import sys
from pathlib import Path

# The acceptance suite borrows fixtures from sibling test modules via
# "from tests.xxx import ...", which needs the repo root importable even
# when pytest is launched from its console script.
_root = str(Path(__file__).resolve().parent.parent)
if _root not in sys.path:
    sys.path.insert(0, _root)


def pytest_terminal_summary(terminalreporter):
    # Acceptance verdicts are buffered by the gate module; echo them after
    # capture ends so they show up in default (captured) runs too.
    for name in ("tests.test_acceptance", "test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "VERDICT_LINES", None):
            terminalreporter.section("acceptance gate")
            for line in mod.VERDICT_LINES:
                terminalreporter.write_line(line)
            break
