import io
import os
import subprocess
import sys

import pytest

from lmd import cli


def run_cli(*args):
    """Run the CLI in-process; returns (exit code, stdout text)."""
    out = io.StringIO()
    code = cli.main([str(a) for a in args], out=out)
    return code, out.getvalue()


def run_cli_subprocess(*args, threads=1):
    """Run the CLI in a fresh interpreter with BLAS pinned to ``threads``."""
    env = dict(os.environ)
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = str(threads)
    return subprocess.run(
        [sys.executable, "-m", "lmd", "--threads", str(threads), *map(str, args)],
        capture_output=True, env=env, check=False,
    )


@pytest.fixture
def cli_run():
    return run_cli


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "criterion":
            _CRITERIA.append((value, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for text, outcome in sorted(_CRITERIA, key=lambda item: int(item[0].split()[0][1:])):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {text}")
