"""Run every shipped experiment config and print the speedup tables.

    python scripts/run_suite.py --out runs/suite --workers 4

Equivalent to ``bebop bench configs`` but skips the smoke config.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

from bebop.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="runs/suite")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--skip", nargs="*", default=["smoke"], help="config stems to leave out")
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        for p in sorted(Path(args.configs).glob("*.yaml")):
            if p.stem not in args.skip:
                shutil.copy(p, tmp)
        return cli_main(["bench", tmp, "--out", args.out, "--workers", str(args.workers)])


if __name__ == "__main__":
    sys.exit(main())
