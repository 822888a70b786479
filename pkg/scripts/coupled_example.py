"""Difference of two solutions under the coupling [[0, 0], [1, 1]] and its sign-flipped variant.

Prints u1 - u2 from state 0 next to the closed form
[[1, 0], [e^{T-t} - 1, e^{T-t}]] E[Q1 - Q2 | X_t] on a coarse time grid.
"""
import math

import numpy as np

from markov_bsde import RateModel, solve_markovian, table_driver, transition_matrix


def main():
    A = np.ones((3, 3))
    np.fill_diagonal(A, -2.0)
    model = RateModel.homogeneous(A, 1.0, 1.0)
    g1 = np.array([[1.0, 0.2], [0.5, 0.1], [0.0, 0.0]])
    g2 = np.zeros((3, 2))
    F = table_driver(np.zeros((3, 2)), beta=[[0.0, 0.0], [1.0, 1.0]])
    s1, s2 = solve_markovian(model, F, g1, step=1e-3), solve_markovian(model, F, g2, step=1e-3)
    print(f"{'t':>5} {'du_1':>12} {'du_2':>12} {'closed_1':>12} {'closed_2':>12}")
    for k in range(0, len(s1.times), 200):
        t = s1.times[k]
        tau = 1.0 - t
        M = np.array([[1.0, 0.0], [math.exp(tau) - 1.0, math.exp(tau)]])
        closed = M @ (transition_matrix(model, t, 1.0).T @ (g1 - g2))[0]
        du = s1.values[k, 0] - s2.values[k, 0]
        print(f"{t:5.2f} {du[0]:12.8f} {du[1]:12.8f} {closed[0]:12.8f} {closed[1]:12.8f}")

    Ff = table_driver(np.zeros((3, 2)), beta=[[0.0, 0.0], [-1.0, 1.0]])
    q = np.tile([1.0, 0.0], (3, 1))
    f1, f2 = solve_markovian(model, Ff, q, step=1e-3), solve_markovian(model, Ff, g2, step=1e-3)
    print("sign-flipped coupling, Q1 - Q2 = (1, 0) everywhere:")
    print("  u1 - u2 at t=0:", np.array2string(f1.values[0, 0] - f2.values[0, 0], precision=8))


if __name__ == "__main__":
    main()
