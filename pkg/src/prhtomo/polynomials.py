"""Conditioning polynomials: exact algebra linking f(n) and phase-averaged
quadrature moments.

The phase-averaged moment operator Xbar^m = (1/2pi) int (X^phi)^m dphi is
diagonal in the Fock basis; expanding (a_phi + a_phi^dag)^m and keeping the
phi-independent words (equal numbers of a and a^dag) expresses Xbar^m as an
exact integer polynomial in the number operator.  Inverting that triangular
system turns any polynomial f(n) of degree <= 5 into an even polynomial in
Xbar whose per-shot evaluation realizes the conditioning weight.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .oscillator import hermite_functions

MAX_NUMBER_DEGREE = 5
MAX_MOMENT_POWER = 2 * MAX_NUMBER_DEGREE


def _as_fraction_tuple(coefficients):
    coeffs = tuple(Fraction(c) for c in coefficients)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    return coeffs


@dataclass(frozen=True)
class NumberPolynomial:
    """Polynomial in the number operator with exact rational coefficients
    (index = power of n)."""

    coefficients: tuple

    def __init__(self, coefficients):
        object.__setattr__(self, "coefficients", _as_fraction_tuple(coefficients))
        if self.degree > MAX_NUMBER_DEGREE:
            raise ValueError(
                f"degree {self.degree} exceeds the supported cap {MAX_NUMBER_DEGREE}"
            )
        if self.degree > 0 and self.coefficients[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def __call__(self, n):
        acc = Fraction(0)
        for c in reversed(self.coefficients):
            acc = acc * n + c
        return acc

    def __mul__(self, other):
        out = [Fraction(0)] * (len(self.coefficients) + len(other.coefficients) - 1)
        for i, a in enumerate(self.coefficients):
            for j, b in enumerate(other.coefficients):
                out[i + j] += a * b
        return NumberPolynomial(out)

    def __eq__(self, other):
        return isinstance(other, NumberPolynomial) and self.coefficients == other.coefficients

    def __hash__(self):
        return hash(self.coefficients)


@dataclass(frozen=True)
class MomentPolynomial:
    """Even polynomial in Xbar; coefficients[j] multiplies Xbar^(2j)."""

    coefficients: tuple

    def __init__(self, coefficients):
        object.__setattr__(self, "coefficients", _as_fraction_tuple(coefficients))

    @property
    def degree(self):
        """Highest power of Xbar (always even)."""
        return 2 * (len(self.coefficients) - 1)

    def evaluate(self, x):
        """Per-shot weight: substitute Xbar^{2j} -> x^{2j} (vectorized)."""
        x = np.asarray(x, dtype=float)
        x2 = x * x
        acc = np.zeros_like(x2)
        for c in reversed(self.coefficients):
            acc = acc * x2 + float(c)
        return acc

    def value_at_zero(self):
        return self.coefficients[0]


def _word_eigen_polynomial(word):
    """Eigenvalue polynomial of a balanced word in (a, a^dag) on |n>.

    Scanning right-to-left, each crossing of the level edge (n+d-1, n+d)
    contributes sqrt(n+d); a closed path crosses every edge an even number of
    times, so the product is an exact polynomial in n.
    """
    d = 0
    crossings = {}
    for s in reversed(word):
        if s == -1:  # annihilation at offset d uses edge d
            crossings[d] = crossings.get(d, 0) + 1
            d -= 1
        else:  # creation at offset d uses edge d+1
            crossings[d + 1] = crossings.get(d + 1, 0) + 1
            d += 1
    assert d == 0
    poly = {0: Fraction(1)}
    for offset, count in crossings.items():
        assert count % 2 == 0
        for _ in range(count // 2):
            new = {}
            for p, c in poly.items():
                new[p + 1] = new.get(p + 1, Fraction(0)) + c
                new[p] = new.get(p, Fraction(0)) + c * offset
            poly = new
    return poly


@lru_cache(maxsize=None)
def moment_to_number(m):
    """Exact expansion of Xbar^m as a NumberPolynomial (m even, <= 10).

    Enumerates the C(m, m/2) phi-independent operator words of
    (a_phi + a_phi^dag)^m and normal-orders each symbolically.
    """
    if m % 2 != 0 or not 0 <= m <= MAX_MOMENT_POWER:
        raise ValueError(f"m must be even and within 0..{MAX_MOMENT_POWER}")
    total = {}
    half = m // 2
    for word in set(itertools.permutations((1,) * half + (-1,) * half)):
        for p, c in _word_eigen_polynomial(word).items():
            total[p] = total.get(p, Fraction(0)) + c
    return NumberPolynomial([total.get(i, Fraction(0)) for i in range(half + 1)])


def number_to_moment(p):
    """Invert the triangular moment system: express f(n) as an even
    polynomial in Xbar with exact rational coefficients."""
    if p.degree > MAX_NUMBER_DEGREE:
        raise ValueError("degree cap exceeded")
    tables = [moment_to_number(2 * j).coefficients for j in range(p.degree + 1)]
    remainder = list(p.coefficients) + [Fraction(0)] * (p.degree + 1 - len(p.coefficients))
    alpha = [Fraction(0)] * (p.degree + 1)
    for j in range(p.degree, -1, -1):
        alpha[j] = remainder[j] / tables[j][j]
        for q in range(j + 1):
            remainder[q] -= alpha[j] * tables[j][q]
    assert all(r == 0 for r in remainder)
    return MomentPolynomial(alpha)


def moment_expansion(p):
    """Expand a MomentPolynomial back into a NumberPolynomial (round trip)."""
    out = {}
    for j, alpha in enumerate(p.coefficients):
        for q, c in enumerate(moment_to_number(2 * j).coefficients):
            out[q] = out.get(q, Fraction(0)) + alpha * c
    deg = max(out) if out else 0
    return NumberPolynomial([out.get(i, Fraction(0)) for i in range(deg + 1)])


def subtraction_polynomial(k, j_max):
    """k-photon-subtraction conditioning polynomial:
    product of (n - j) over j = 0..j_max excluding j = k.

    Zero at every unwanted photon number j <= j_max and nonzero at k; the
    resulting degree is j_max, capped at 5.
    """
    if not 0 <= k <= j_max <= 6:
        raise ValueError("need 0 <= k <= j_max <= 6")
    if j_max > MAX_NUMBER_DEGREE:
        raise ValueError(
            f"resulting degree {j_max} exceeds the supported cap {MAX_NUMBER_DEGREE}"
        )
    poly = NumberPolynomial([1])
    for j in range(j_max + 1):
        if j == k:
            continue
        poly = poly * NumberPolynomial([-j, 1])
    return poly


def fock_weights(p, n_max):
    """Diagonal Fock weights w_n = p(n) for n = 0..n_max."""
    return np.array([float(p(n)) for n in range(n_max + 1)])


def shot_weight(p, x, normalize_at_zero=False):
    """Evaluate a MomentPolynomial on a shot value (or array of values).

    Each shot contributes its single quadrature value; the phase average is
    realized by the ensemble.  With normalize_at_zero the weight is divided
    by its value at x = 0 (Fig.-3-style scaling); that value must be nonzero.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("shot values must be finite")
    w = p.evaluate(x)
    if normalize_at_zero:
        w0 = p.value_at_zero()
        if w0 == 0:
            raise ZeroDivisionError("weight vanishes at x = 0; cannot normalize")
        w = w / float(w0)
    return w if w.shape else float(w)


def moment_oracle(n, m, x_max=None):
    """Independent check of the moment table: numerically integrate
    x^m |psi_n(x)|^2 dx, which must equal moment_to_number(m)(n)."""
    if n > 20 or m > MAX_MOMENT_POWER:
        raise ValueError("supported range: n <= 20, m <= 10")
    if x_max is None:
        x_max = 2.0 * np.sqrt(2.0 * n + 1.0) + 12.0

    def integrand(x):
        psi = hermite_functions(n, np.array([x]))[n, 0]
        return x**m * psi * psi

    val, err = quad(integrand, -x_max, x_max, limit=400, epsabs=1e-12, epsrel=1e-11)
    if err > 1e-6 * max(1.0, abs(val)):
        raise RuntimeError(f"quadrature did not converge: estimate {val}, error {err}")
    return val
