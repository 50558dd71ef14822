"""Run the acceptance criteria and print one PASS/FAIL line for each.

Usage: python3 scripts/run_acceptance.py [N ...]
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "tests"))

from test_acceptance import CRITERIA, run_criterion  # noqa: E402


def main(argv):
    chosen = [int(a) for a in argv] or sorted(CRITERIA)
    results = [run_criterion(i) for i in chosen]
    print(f"{sum(results)}/{len(results)} criteria passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
