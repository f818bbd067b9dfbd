"""Run every preset in scripts/configs through the CLI.

    python3 scripts/run_experiments.py [--out results] [name ...]

Each preset writes its CSV tables and summary.json to OUT/<name>/.
"""

import argparse
import sys
from pathlib import Path

import yaml

from heatgp.cli import EXIT_OK, main

CONFIGS = Path(__file__).parent / "configs"


def run(names, out: Path) -> int:
    failed = []
    for path in sorted(CONFIGS.glob("*.yaml")):
        if names and path.stem not in names:
            continue
        cmd = yaml.safe_load(path.read_text())["experiment"]
        print(f"== {path.stem} ({cmd})", flush=True)
        if main([cmd, "--config", str(path), "--out", str(out / path.stem)]) != EXIT_OK:
            failed.append(path.stem)
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("names", nargs="*", help="preset names (default: all)")
    args = p.parse_args()
    sys.exit(run(set(args.names), args.out))
