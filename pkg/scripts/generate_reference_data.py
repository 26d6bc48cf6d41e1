"""Regenerate the reference CSV artifacts in data/.

Runs the three experiments consumed by the figure package: the decay sweep
over ring sizes, the reduction scan over the scale parameter, and one grid
refinement history.  The refinement takes several minutes at n = 128.
"""

import pathlib
import sys

from fracbubbles import cli

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def main() -> int:
    DATA.mkdir(exist_ok=True)
    jobs = [
        ["--kind", "decay", "--k", "8,16,32,64,128", "--delta", "1",
         "--out", str(DATA / "decay_reference.csv")],
        ["--kind", "reduction", "--k", "32,64,128", "--deltas", "3,4.5,6,9,12",
         "--out", str(DATA / "reduction_reference.csv")],
        ["--kind", "refine", "--k", "8", "--delta", "6", "--grid-n", "128",
         "--out", str(DATA / "refine_reference.csv")],
    ]
    worst = 0
    for job in jobs:
        print("fracbubbles", " ".join(job))
        worst = max(worst, cli.main(job))
    return worst


if __name__ == "__main__":
    sys.exit(main())
