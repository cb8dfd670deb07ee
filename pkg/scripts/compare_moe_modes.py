#!/usr/bin/env python3
"""Sensitivity check: Wald half-width vs the as-written composition.

The platform defaults to the standard 95% Wald half-width
1.96*sqrt(p(1-p)/n). The alternative composition divides by sqrt(n) a
second time; this script tabulates how far the two drift apart across
group sizes so operators can judge which to report.
"""

import argparse

from relabelkit.metrics import margin_of_error


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--p", type=float, default=0.75, help="group accuracy")
    args = parser.parse_args()

    print(f"p = {args.p}")
    print(f"{'n':>6}  {'wald':>10}  {'as-written':>12}  {'ratio':>8}")
    for n in (2, 5, 10, 25, 50, 100, 500, 1000, 5000):
        wald = margin_of_error(args.p, n)
        literal = margin_of_error(args.p, n, as_written=True)
        print(f"{n:>6}  {wald:>10.5f}  {literal:>12.6f}  {wald / literal:>8.1f}")


if __name__ == "__main__":
    main()
