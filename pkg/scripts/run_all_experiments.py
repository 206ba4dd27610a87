#!/usr/bin/env python3
"""Generate the demo dataset and run every shipped experiment spec over it.

Desk-scale pass over all experiment families: unimodal suite, query/key
sweeps for both attention-fusion roles, modality decrease, attention-key
exclusion, and the efficiency table. Run from the repo root.
"""

import subprocess
import sys
from pathlib import Path

SPECS = Path(__file__).resolve().parent / "specs"

ORDER = [
    ("synth", "synth_small.json"),
    ("run", "unimodal_suite.json"),
    ("run", "single_mmhsd.json"),
    ("run", "qk_sweep_cma_s.json"),
    ("run", "qk_sweep_cma_lf.json"),
    ("run", "modality_decrease.json"),
    ("run", "cma_key_ablation.json"),
    ("run", "efficiency.json"),
]


def main():
    for command, spec in ORDER:
        args = [sys.executable, "-m", "cmafuse.cli", command, str(SPECS / spec)]
        print("+", " ".join(args[2:]), flush=True)
        proc = subprocess.run(args)
        if proc.returncode != 0:
            print(f"failed on {spec} (exit {proc.returncode})", file=sys.stderr)
            return proc.returncode
    print("all experiment families completed; see runs/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
