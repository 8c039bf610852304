"""Harmonic-oscillator eigenfunctions in the vacuum-variance-1 convention.

psi_n(x) = (2 pi)^{-1/4} (2^n n!)^{-1/2} H_n(x/sqrt 2) exp(-x^2/4), so that
|psi_0|^2 is the standard normal density.  They solve
psi'' = (x^2/4 - (n + 1/2)) psi.
"""

import numpy as np


def hermite_functions(n_max, x):
    """Oscillator eigenfunctions psi_0..psi_n_max on `x`, shape (n_max+1, len(x)).

    Uses the normalized three-term recursion
    psi_{n+1} = (x psi_n - sqrt(n) psi_{n-1}) / sqrt(n+1),
    which keeps values O(1) and is stable for the n, x ranges used here.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size))
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if n_max >= 1:
        out[1] = x * out[0]
    for n in range(1, n_max):
        out[n + 1] = (x * out[n] - np.sqrt(n) * out[n - 1]) / np.sqrt(n + 1)
    return out


def hermite_function_derivatives(psi, x):
    """Exact derivatives psi_n' = sqrt(n) psi_{n-1} - x psi_n / 2."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(psi)
    out[0] = -0.5 * x * psi[0]
    for n in range(1, psi.shape[0]):
        out[n] = np.sqrt(n) * psi[n - 1] - 0.5 * x * psi[n]
    return out
