"""Acceptance suite: every criterion at its stated tolerance and time budget.

Runs ``srblab verify`` once with the default configuration, then a second
time with ``--against`` the first output directory, which is criterion 11
(byte-identical CSVs for the same seed). One pass/fail line per criterion
is printed in the terminal summary.
"""
import json

import pytest

from srblab.acceptance import TITLES
from srblab.cli import main

LINES = {}


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify_a")
    code = main(["verify", "--out", str(out), "--criteria", ",".join(map(str, range(1, 11))), "--quiet"])
    man = json.loads((out / "manifest_verify.json").read_text())
    return out, code, {c["number"]: c for c in man["criteria"]}


@pytest.fixture(scope="module")
def second_run(first_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("verify_b")
    code = main(["verify", "--out", str(out), "--against", str(first_run[0]), "--quiet"])
    man = json.loads((out / "manifest_verify.json").read_text())
    return out, code, {c["number"]: c for c in man["criteria"]}


def report(c):
    status = "PASS" if c["passed"] else "FAIL"
    failed = [k for k, v in c["checks"].items() if not v]
    if c["runtime_seconds"] > c["budget_seconds"]:
        failed.append(f"runtime {c['runtime_seconds']:.1f}s > {c['budget_seconds']:.0f}s")
    line = f"criterion {c['number']:2d} {status} [{c['runtime_seconds']:7.1f}s] {c['title']}"
    if failed:
        line += "  failed: " + ", ".join(failed)
    if c.get("note"):
        line += f"  ({c['note']})"
    LINES[c["number"]] = line
    print(line)
    return failed


@pytest.mark.parametrize("number", range(0, 11), ids=[f"criterion_{i:02d}" for i in range(0, 11)])
def test_criterion(first_run, number):
    c = first_run[2][number]
    assert c["title"] == TITLES[number]
    failed = report(c)
    assert c["passed"], f"criterion {number} failed: {failed}"


def test_criterion_11_determinism(first_run, second_run):
    c = second_run[2][11]
    failed = report(c)
    # every criterion must reproduce its own verdict on the second run
    for n in range(0, 11):
        assert second_run[2][n]["checks"] == first_run[2][n]["checks"]
    assert c["passed"], f"criterion 11 failed: {failed}; summary {c['summary']}"
