import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

VERDICTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
