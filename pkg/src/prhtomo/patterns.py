"""Fock-basis pattern functions built from regular and irregular oscillator
wavefunctions.

The radial kernels f_mn are constructed as the symmetrized derivative
    f_mn(x) = (1/2) d/dx [ psi_m phi_n / s_n + psi_n phi_m / s_m ]
where phi_n is the non-normalizable second solution of the oscillator
equation at energy n + 1/2, integrated outward from x = 0, and the scales
s_n are fixed a posteriori by the sum rule  integral f_nn psi_n^2 dx = 1.
That anchor makes the kernels the sampling duals of the Fock projectors:
    rho_mn = E[ f_mn(x) e^{-i (m-n) theta} ]
over phase-randomised records.  The full pattern function carries the phase
factor e^{i(m-n)phi} on top of the radial part.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import NumericalInvariantError
from .oscillator import hermite_function_derivatives, hermite_functions

DEFAULT_M = 12
DEFAULT_X_MAX = 10.0
DEFAULT_H = 0.005
WRONSKIAN_TOL = 1e-6


def _irregular_solution(n, x_positive):
    """Second solution of psi'' = (x^2/4 - n - 1/2) psi on x >= 0.

    Initial conditions are chosen orthogonal to psi_n's parity (phi_n(0)=0
    for even n, phi_n'(0)=0 for odd n) so the Wronskian with psi_n is a
    nonzero constant.  Any admixture of psi_n left by the integration is
    harmless: it drops out of all the parity-even integrals the kernels are
    used in.
    """
    energy = n + 0.5
    y0 = (0.0, 1.0) if n % 2 == 0 else (1.0, 0.0)
    sol = solve_ivp(
        lambda x, y: (y[1], (0.25 * x * x - energy) * y[0]),
        (0.0, x_positive[-1]),
        y0,
        t_eval=x_positive,
        method="DOP853",
        rtol=1e-11,
        atol=1e-13,
    )
    if not sol.success:
        raise NumericalInvariantError(f"irregular-solution integration failed at n={n}")
    return sol.y[0], sol.y[1]


def _derivative_5pt(values, h):
    """Fourth-order centered first derivative on a uniform grid."""
    d = np.empty_like(values)
    d[2:-2] = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * h)
    d[0] = (values[1] - values[0]) / h
    d[1] = (values[2] - values[0]) / (2 * h)
    d[-2] = (values[-1] - values[-3]) / (2 * h)
    d[-1] = (values[-1] - values[-2]) / h
    return d


@dataclass
class WavefunctionTable:
    """Regular (psi) and irregular (phi) oscillator wavefunctions on a
    uniform symmetric grid."""

    x: np.ndarray
    psi: np.ndarray
    phi_irr: np.ndarray
    h: float

    @property
    def m_max(self):
        return self.psi.shape[0] - 1

    @property
    def x_max(self):
        return float(self.x[-1])


def build_wavefunctions(m_max=DEFAULT_M, x_max=DEFAULT_X_MAX, h=DEFAULT_H):
    """Tabulate psi_0..psi_m (stable recursion) and the irregular phi_n
    (adaptive RK outward from 0, mirrored by parity).

    Checks normalization of the psi_n and constancy of each Wronskian
    psi_n phi_n' - psi_n' phi_n across the grid.
    """
    if m_max > 30:
        raise ValueError("m_max above 30 is not supported")
    if x_max < 8.0:
        raise ValueError("x_max must be at least 8")
    if h > 0.01:
        raise ValueError("grid step must be <= 0.01")
    n_pos = int(round(x_max / h))
    x_pos = np.arange(n_pos + 1) * h
    x = np.concatenate([-x_pos[:0:-1], x_pos])
    psi = hermite_functions(m_max, x)
    dpsi = hermite_function_derivatives(psi, x)

    norms = np.trapezoid(psi * psi, x, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-8:
        raise NumericalInvariantError(
            f"psi normalization off by {np.max(np.abs(norms - 1.0)):.2e}; "
            "raise x_max or refine the grid"
        )

    half = len(x_pos)
    phi_irr = np.empty_like(psi)
    pos0 = half - 1  # index of x = 0 in the full grid
    for n in range(m_max + 1):
        p, dp = _irregular_solution(n, x_pos)
        if not np.all(np.isfinite(p)):
            raise NumericalInvariantError(f"irregular solution overflowed at n={n}")
        full = np.empty(len(x))
        full[pos0:] = p
        full[:pos0] = (-1.0) ** (n + 1) * p[:0:-1]
        phi_irr[n] = full
        wronskian = psi[n, pos0:] * dp - dpsi[n, pos0:] * p
        w0 = wronskian[0]
        drift = np.max(np.abs(wronskian - w0)) / abs(w0)
        if drift > WRONSKIAN_TOL:
            raise NumericalInvariantError(
                f"Wronskian drift {drift:.2e} at n={n} exceeds {WRONSKIAN_TOL:.0e}"
            )
    return WavefunctionTable(x=x, psi=psi, phi_irr=phi_irr, h=h)


class PatternTable:
    """Radial pattern kernels f_mn on the grid, sum-rule normalized.

    f_mn = f_nm by construction; the full pattern function is
    F_mn(x, phi) = f_mn(x) e^{i(m-n)phi}.  Off-grid evaluation clamps to the
    edge value and counts the clamped points in `clamp_count`.
    """

    def __init__(self, wavefunctions, diag_bound=10.0):
        wf = wavefunctions
        self.x = wf.x
        self.h = wf.h
        m_max = wf.m_max
        raw = np.empty((m_max + 1, m_max + 1, len(wf.x)))
        scale = np.empty(m_max + 1)
        for n in range(m_max + 1):
            g = _derivative_5pt(wf.psi[n] * wf.phi_irr[n], wf.h)
            s = np.trapezoid(g * wf.psi[n] ** 2, wf.x)
            if s == 0.0:
                raise NumericalInvariantError(f"degenerate sum-rule integral at n={n}")
            scale[n] = 1.0 / s
        for n in range(m_max + 1):
            for m in range(m_max + 1):
                raw[m, n] = _derivative_5pt(wf.psi[m] * wf.phi_irr[n], wf.h) * scale[n]
        self.values = 0.5 * (raw + raw.transpose(1, 0, 2))
        for n in range(m_max + 1):
            peak = np.max(np.abs(self.values[n, n]))
            if peak > diag_bound:
                raise NumericalInvariantError(
                    f"|f_{n}{n}| reaches {peak:.2f}, above the bound {diag_bound}"
                )
        self.clamp_count = 0
        self._splines = {}

    @property
    def m_max(self):
        return self.values.shape[0] - 1

    def _spline(self, m, n):
        key = (min(m, n), max(m, n))
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.x, self.values[key])
        return self._splines[key]

    def evaluate(self, m, n, x):
        """Radial kernel f_mn at arbitrary x (cubic interpolation, clamped)."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.x[0], self.x[-1]
        clipped = np.clip(x, lo, hi)
        n_out = int(np.count_nonzero((x < lo) | (x > hi)))
        if n_out:
            self.clamp_count += n_out
        out = self._spline(m, n)(clipped)
        return out if out.shape else float(out)

    def full(self, m, n, x, phi):
        """Complex pattern function F_mn(x, phi) = f_mn(x) e^{i(m-n)phi}."""
        return self.evaluate(m, n, x) * np.exp(1j * (m - n) * np.asarray(phi))

    def at_grid(self, m, n):
        return self.values[m, n]

    def biorthogonality_error(self, psi_table, m_max=None):
        """max |integral f_mm psi_k^2 dx - delta_mk| over m, k <= m_max."""
        m_max = self.m_max if m_max is None else m_max
        worst = 0.0
        dens = psi_table.psi**2
        for m in range(m_max + 1):
            vals = np.trapezoid(self.values[m, m] * dens[: m_max + 1], self.x, axis=1)
            vals[m] -= 1.0
            worst = max(worst, float(np.max(np.abs(vals))))
        return worst

    def to_csv(self, path, pairs):
        """Write x and the requested f_mn columns (Fig.-3-style export)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x"] + [f"f_{m}{n}" for m, n in pairs])
            for i, xv in enumerate(self.x):
                writer.writerow([f"{xv:.6g}"] + [f"{self.values[m, n][i]:.10g}" for m, n in pairs])


@dataclass
class PatternFunction:
    """One sampled kernel plus its phase rule (frequency m - n in phi)."""

    m: int
    n: int
    table: PatternTable = field(repr=False)

    @property
    def phase_frequency(self):
        return self.m - self.n

    @property
    def grid_values(self):
        return self.table.at_grid(self.m, self.n)

    def __call__(self, x, phi=None):
        if phi is None:
            return self.table.evaluate(self.m, self.n, x)
        return self.table.full(self.m, self.n, x, phi)


def pattern(m, n, table):
    """Pattern function F_mn from a WavefunctionTable or PatternTable."""
    if isinstance(table, WavefunctionTable):
        table = PatternTable(table)
    if not (0 <= m <= table.m_max and 0 <= n <= table.m_max):
        raise ValueError("pattern indices exceed the table order")
    return PatternFunction(m=m, n=n, table=table)


@dataclass(frozen=True)
class ConditionSpec:
    """Conditioning target rho_a^cond with coefficients c[m, n] = <m|rho|n>,
    plus a success-probability estimate pr1 used to scale the weight."""

    c: np.ndarray
    pr1: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("c must be a square matrix")
        residue = np.max(np.abs(c - c.conj().T))
        if residue > 1e-10:
            raise NumericalInvariantError(f"c is not Hermitian (residue {residue:.2e})")
        tr = float(np.trace(c).real)
        if tr > 1.0 + 1e-9:
            raise NumericalInvariantError(f"trace(c) = {tr} exceeds 1")
        ev = np.linalg.eigvalsh(0.5 * (c + c.conj().T))
        if ev.min() < -1e-9:
            raise NumericalInvariantError("c must be positive semidefinite")
        object.__setattr__(self, "c", 0.5 * (c + c.conj().T))
        if not self.pr1 > 0:
            raise ZeroDivisionError("pr1 must be positive")

    @classmethod
    def fock_projector(cls, n, dim=None, pr1=1.0):
        dim = (n + 1) if dim is None else dim
        c = np.zeros((dim, dim))
        c[n, n] = 1.0
        return cls(c=c, pr1=pr1)


def weight_function(spec, table):
    """Per-shot conditioning weight w(x, phi) = (1/pr1) sum c_mn f_mn(x) e^{i(m-n)phi}.

    Hermitian c with the symmetric radial kernels makes the sum real by
    construction (diagonal terms plus 2 Re of the upper triangle).  Diagonal
    specs yield a phi-independent weight.
    """
    if isinstance(table, WavefunctionTable):
        table = PatternTable(table)
    c = spec.c
    dim = c.shape[0]
    if dim - 1 > table.m_max:
        raise ValueError("condition spec order exceeds the pattern table order")
    terms = [(m, n, c[m, n]) for m in range(dim) for n in range(dim) if c[m, n] != 0]
    diagonal_only = all(m == n for m, n, _ in terms)
    inv_pr1 = 1.0 / spec.pr1

    def weight(x, phi=None):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, n, cmn in terms:
            if m == n:
                out += cmn.real * table.evaluate(m, n, x)
            elif m < n:
                if phi is None:
                    raise ValueError("off-diagonal conditioning requires phi")
                ang = (m - n) * np.asarray(phi)
                out += 2.0 * table.evaluate(m, n, x) * (
                    cmn.real * np.cos(ang) - cmn.imag * np.sin(ang)
                )
        return inv_pr1 * out

    weight.diagonal_only = diagonal_only
    return weight


_TABLE_CACHE = {}


def cached_pattern_table(m_max=DEFAULT_M, x_max=DEFAULT_X_MAX, h=DEFAULT_H):
    """Shared PatternTable instances keyed by grid parameters."""
    key = (m_max, float(x_max), float(h))
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = PatternTable(build_wavefunctions(*key))
    return _TABLE_CACHE[key]
