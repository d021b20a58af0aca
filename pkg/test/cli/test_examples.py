"""Example-driven tests for psvgp CLI commands.

This module parses markdown files in test/cli/examples/ and runs them as tests.
Each `##` section is one scenario with:
- Optional psvgp.toml content (a toml block)
- A bash block; every line is a command, run in order in the same directory
- Expected/Not Expected stdout patterns of the last command
- Optional exit code and expected stderr of the last command
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import pytest

from psvgp.cli import main
from psvgp.config import CONFIG_FILENAME

if TYPE_CHECKING:
    from pytest import CaptureFixture

EXAMPLES_DIR = Path(__file__).parent / "examples"


@dataclass
class ExampleCase:
    """A single test case parsed from markdown."""

    name: str
    config: str | None = None
    commands: list[list[str]] = field(default_factory=list)
    expected: list[str] = field(default_factory=list)
    not_expected: list[str] = field(default_factory=list)
    expected_stderr: list[str] = field(default_factory=list)
    exit_code: int = 0
    source_file: str = ""


def _fenced(lines: list[str], i: int) -> tuple[list[str], int]:
    """Body of the next fenced block at or after line i, and the line after it."""
    while i < len(lines) and not lines[i].startswith("```"):
        i += 1
    i += 1
    body: list[str] = []
    while i < len(lines) and not lines[i].startswith("```"):
        body.append(lines[i])
        i += 1
    return body, i + 1


def _command(line: str) -> list[str]:
    args = shlex.split(line)
    # main() is called directly
    return args[1:] if args and args[0] == "psvgp" else args


def parse_markdown_examples(path: Path) -> list[ExampleCase]:
    """Parse a markdown file into test cases."""
    cases: list[ExampleCase] = []
    for section in re.split(r"^## ", path.read_text(), flags=re.MULTILINE)[1:]:
        lines = section.split("\n")
        case = ExampleCase(name=lines[0].strip(), source_file=path.name)

        i = 1
        while i < len(lines):
            line = lines[i]
            if line.startswith("```toml"):
                body, i = _fenced(lines, i)
                case.config = "\n".join(body)
            elif line.startswith("```bash"):
                body, i = _fenced(lines, i)
                case.commands = [_command(cmd) for cmd in body if cmd.strip()]
            elif line.startswith("**Expected Stderr**"):
                body, i = _fenced(lines, i + 1)
                case.expected_stderr = [b for b in body if b.strip()]
            elif line.startswith("**Not Expected**"):
                body, i = _fenced(lines, i + 1)
                case.not_expected = [b for b in body if b.strip()]
            elif line.startswith("**Expected**"):
                body, i = _fenced(lines, i + 1)
                case.expected = [b for b in body if b.strip()]
            elif match := re.search(r"\*\*Exit Code:\*\*\s*(\d+)", line):
                case.exit_code = int(match.group(1))
                i += 1
            else:
                i += 1

        if case.commands:
            cases.append(case)
    return cases


def collect_all_examples() -> list[ExampleCase]:
    """Collect all test cases from all example files."""
    cases = []
    for md_file in sorted(EXAMPLES_DIR.glob("*.md")):
        cases.extend(parse_markdown_examples(md_file))
    return cases


ALL_CASES = collect_all_examples()


def case_id(case: ExampleCase) -> str:
    """Generate a test ID for a case."""
    name = re.sub(r"[^a-z0-9]+", "_", case.name.lower()).strip("_")
    return f"{case.source_file}::{name}"


@pytest.mark.parametrize("case", ALL_CASES, ids=case_id)
def test_example(
    case: ExampleCase,
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
    capsys: CaptureFixture[str],
) -> None:
    """Run a single example test case."""
    if case.config is not None:
        (tmp_path / CONFIG_FILENAME).write_text(case.config)
    monkeypatch.chdir(tmp_path)

    *setup, last = case.commands
    for args in setup:
        assert main(args) == 0, f"setup command failed: {args}"
    capsys.readouterr()

    result = main(last)
    captured = capsys.readouterr()

    assert result == case.exit_code, (
        f"Expected exit code {case.exit_code}, got {result}\n"
        f"stdout: {captured.out}\n"
        f"stderr: {captured.err}"
    )
    for pattern in case.expected:
        assert pattern in captured.out, (
            f"Expected '{pattern}' in stdout\n"
            f"stdout: {captured.out}\n"
            f"File: {case.source_file}, test: {case.name}"
        )
    for pattern in case.not_expected:
        assert pattern not in captured.out, (
            f"Did not expect '{pattern}' in stdout\n"
            f"stdout: {captured.out}\n"
            f"File: {case.source_file}, test: {case.name}"
        )
    # stderr patterns are case-insensitive
    for pattern in case.expected_stderr:
        assert pattern.lower() in captured.err.lower(), (
            f"Expected '{pattern}' in stderr\n"
            f"stderr: {captured.err}\n"
            f"File: {case.source_file}, test: {case.name}"
        )
