#!/usr/bin/env python3
"""Deformed Jordan-block and similarity-correspondence reports.

Writes JSON reports for (a) single deformed blocks of sizes 2..6 — the
conserved-operator correspondence across the deformation and the
divergence obstruction for the magnetization — and (b) the full-chain
similarity checks at a representative anisotropy.
"""

import pathlib
import sys

from epchain.cli import main

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def run() -> int:
    OUT.mkdir(exist_ok=True)
    for N in (2, 3, 4, 5, 6):
        out = OUT / f"block_N{N}.json"
        code = main(["block", "--N", str(N), "--delta", "0.3",
                     "-o", str(out)])
        if code:
            return code
        print(f"wrote {out}")
    out = OUT / "correspondence_L4.json"
    code = main(["correspondence", "--L", "4", "--delta", "0.5",
                 "-o", str(out)])
    if code == 0:
        print(f"wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(run())
