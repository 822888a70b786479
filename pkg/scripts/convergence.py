"""Observed convergence orders: backward RK4 solver and the product integral."""
import math

import numpy as np

from markov_bsde import RateModel, solve_markovian, znorm_driver
from markov_bsde.linear import product_integral


def main():
    A = np.ones((3, 3))
    np.fill_diagonal(A, -2.0)
    model = RateModel.homogeneous(A, 1.0, 1.0)
    F, g = znorm_driver(0.8), [1.0, 0.5, 0.0]
    ref = solve_markovian(model, F, g, step=1e-4).values[0]
    prev = None
    print("solver (F = -0.8 ||Z||):")
    for h in (0.2, 0.1, 0.05, 0.025):
        err = float(np.abs(solve_markovian(model, F, g, step=h).values[0] - ref).max())
        rate = "" if prev is None else f"  order {math.log2(prev / err):.2f}"
        print(f"  h={h:<6} error {err:.3e}{rate}")
        prev = err

    H = lambda u: np.array([[-1.0, 0.5 + u], [0.3, -0.2 * u]])
    exact = product_integral(H, 0.0, 1.0, 2**14, richardson=True)  # reference
    print("product integral (time-dependent 2x2 generator):")
    for label, rich in (("plain", False), ("richardson", True)):
        prev = None
        for n in (16, 32, 64, 128):
            err = float(np.abs(product_integral(H, 0.0, 1.0, n, richardson=rich) - exact).max())
            rate = "" if prev is None else f"  order {math.log2(prev / err):.2f}"
            print(f"  {label:<10} n={n:<4} error {err:.3e}{rate}")
            prev = err


if __name__ == "__main__":
    main()
