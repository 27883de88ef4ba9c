"""
Brute-force reference computations used only by the test-suite.
"""
import itertools

import numpy as np
from scipy.optimize import linprog


def enumerate_vertices(C, d, tol=1e-9):
    """All vertices of {x : Cx <= d} for dimension <= 3."""
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    n = C.shape[1]
    vertices = []
    for rows in itertools.combinations(range(C.shape[0]), n):
        sub = C[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, d[list(rows)])
        if np.all(C @ v <= d + tol):
            vertices.append(v)
    return np.array(vertices)


def random_bounded_polytope(rng, n, rows):
    """Random polytope containing the origin, redrawn until bounded."""
    while True:
        C = rng.normal(size=(rows, n))
        d = 0.5 + rng.random(rows)
        bounded = True
        for i in range(n):
            for sign in (1.0, -1.0):
                res = linprog(-sign * np.eye(n)[i], A_ub=C, b_ub=d, bounds=[(None, None)] * n,
                              method="highs")
                if res.status != 0:
                    bounded = False
        if bounded:
            return C, d


def lp_oracle(C, d, q):
    """min q'x over {Cx <= d} by vertex enumeration."""
    V = enumerate_vertices(C, d)
    values = V @ np.asarray(q, dtype=float)
    return float(values.min())


def support_oracle(C, d, a):
    """max a'x over {Cx <= d} by vertex enumeration."""
    V = enumerate_vertices(C, d)
    return float((V @ np.asarray(a, dtype=float)).max())


def rollout_errors(Phi, rng, sampler, steps, trajectories):
    """Error trajectories e_{l+1} = Phi e_l + w_l from e_0 = 0."""
    n = Phi.shape[0]
    E = np.zeros((trajectories, steps + 1, n))
    for l in range(steps):
        W = np.array([sampler(rng) for _ in range(trajectories)])
        E[:, l + 1] = E[:, l] @ Phi.T + W
    return E
