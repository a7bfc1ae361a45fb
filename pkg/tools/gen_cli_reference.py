"""Regenerate docs/cli-reference.md from the argument parser."""

from pathlib import Path

from qore.cli import cli_reference

OUT = Path(__file__).resolve().parents[1] / "docs" / "cli-reference.md"

if __name__ == "__main__":
    OUT.write_text(cli_reference() + "\n")
    print(f"wrote {OUT}")
