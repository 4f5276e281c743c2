"""Independent reference computations shared by the unit and acceptance tests."""
from functools import lru_cache

import numpy as np
import sympy

XI, ETA = sympy.symbols("xi eta")
REF = [(1 - ETA, 0), (0, XI), (ETA, 0), (0, 1 - XI)]
REF_CURL = [1, 1, -1, -1]
LOCAL_PAIRS = [(0, 1), (1, 2), (3, 2), (0, 3)]


@lru_cache(maxsize=None)
def ref_moments():
    """Exact int phi_k[i] phi_l[j] over the unit square, shape (4,4,2,2)."""
    out = np.zeros((4, 4, 2, 2))
    for k in range(4):
        for l in range(4):
            for i in range(2):
                for j in range(2):
                    expr = sympy.Integer(1) * REF[k][i] * REF[l][j]
                    out[k, l, i, j] = float(sympy.integrate(expr, (XI, 0, 1), (ETA, 0, 1)))
    return out


@lru_cache(maxsize=None)
def ref_edge_traces():
    """Exact int_0^1 phi_k[i] phi_l[j] dt along each reference edge, shape (4,4,4,2,2)."""
    t = sympy.symbols("t")
    params = [(t, 0), (1, t), (t, 1), (0, t)]
    out = np.zeros((4, 4, 4, 2, 2))
    for m, (xi, eta) in enumerate(params):
        vals = [[sympy.sympify(REF[k][i]).subs({XI: xi, ETA: eta}) for i in range(2)]
                for k in range(4)]
        for k in range(4):
            for l in range(4):
                for i in range(2):
                    for j in range(2):
                        out[m, k, l, i, j] = float(sympy.integrate(vals[k][i] * vals[l][j],
                                                                   (t, 0, 1)))
    return out


def affine_jacobian(X):
    return np.column_stack([X[1] - X[0], X[3] - X[0]])


def oracle_matrices(X):
    """Curl-curl and mass matrices of an affine quad from exact reference moments."""
    J = affine_jacobian(X)
    det = np.linalg.det(J)
    Jinv = np.linalg.inv(J)
    c = np.array(REF_CURL, float)
    A = np.outer(c, c) / abs(det)
    M = np.einsum("klij,ij->kl", ref_moments(), Jinv @ Jinv.T) * abs(det)
    return A, M


def oracle_edge_mass(X, m):
    """int_{e_m} (phi_k . tau)(phi_l . tau) ds on local edge ``m`` of an affine quad."""
    a, b = LOCAL_PAIRS[m]
    tau = X[b] - X[a]
    length = np.linalg.norm(tau)
    w = np.linalg.inv(affine_jacobian(X)) @ (tau / length)
    return np.einsum("klij,i,j->kl", ref_edge_traces()[m], w, w) * length


def random_affine_cell(rng):
    while True:
        a = rng.uniform(-2, 2, 2)
        b = rng.uniform(-2, 2, 2)
        if a[0] * b[1] - a[1] * b[0] > 0.2:
            x0 = rng.uniform(-5, 5, 2)
            return np.array([x0, x0 + a, x0 + a + b, x0 + b])
