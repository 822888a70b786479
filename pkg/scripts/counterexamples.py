"""Forward constructions of the two scalar counterexamples."""
import argparse

import numpy as np

from markov_bsde import RateModel
from markov_bsde.comparison import run_counterexample


def rate_one(n):
    A = np.ones((n, n))
    np.fill_diagonal(A, -(n - 1.0))
    return RateModel.homogeneous(A, 1.0, 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    for which, n in (("ex41", 2), ("ex42", 3)):
        res = run_counterexample(which, rate_one(n), 1.0, args.paths, args.seed)
        print(res.summary())
        if which == "ex42":
            counts = np.unique(np.round(res.yT[:, 0], 6), return_counts=True)
            print("terminal Y1 values (rounded) and counts:", dict(zip(counts[0].tolist()[:8], counts[1].tolist()[:8])))
        print()


if __name__ == "__main__":
    main()
