"""Run every experiment with the default (or given) config and print the acceptance checks.

    python scripts/run_all.py [--config configs/example.ini] [--out results] [--workers 4]
"""
import sys

from spfem.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["all", *sys.argv[1:]]))
