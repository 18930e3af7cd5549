import json

import pytest

from neuromaps import cli


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process; returns (exit code, stdout, parsed stderr JSON or None)."""

    def _run(*argv):
        code = cli.run([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, json.loads(err) if err.strip() else None

    return _run


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return _write


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
