#!/usr/bin/env python3
"""Cut the first N stanzas out of official KAT response files.

Usage: subset_kat.py SRC_DIR DEST_DIR

SRC_DIR holds the full kat_MLKEM_*.rsp / kat_MLDSA_*_det_pure.rsp files (as
shipped in the ``cryptography_vectors`` distribution). Writes subsets plus a
SHA256SUMS manifest into DEST_DIR.
"""

import hashlib
import sys
from pathlib import Path

COUNTS = {
    "kat_MLKEM_768.rsp": 10,
    "kat_MLDSA_65_det_pure.rsp": 10,
    "kat_MLKEM_512.rsp": 3,
    "kat_MLKEM_1024.rsp": 3,
    "kat_MLDSA_44_det_pure.rsp": 3,
    "kat_MLDSA_87_det_pure.rsp": 3,
}


def subset(src: Path, n: int) -> str:
    out, seen = [], 0
    for line in src.read_text().splitlines():
        if line.startswith("count = "):
            seen += 1
            if seen > n:
                break
        out.append(line)
    header = [
        f"# source: {src.name} (official known-answer response file), first {n} vectors",
        "# format: count-delimited stanzas of 'key = hex' lines",
    ]
    return "\n".join(header + out).rstrip() + "\n"


def main() -> None:
    src_dir, dest_dir = Path(sys.argv[1]), Path(sys.argv[2])
    dest_dir.mkdir(parents=True, exist_ok=True)
    sums = []
    for name, n in COUNTS.items():
        text = subset(next(src_dir.rglob(name)), n)
        (dest_dir / name).write_text(text)
        sums.append(f"{hashlib.sha256(text.encode()).hexdigest()}  {name}")
    (dest_dir / "SHA256SUMS").write_text("\n".join(sums) + "\n")


if __name__ == "__main__":
    main()
