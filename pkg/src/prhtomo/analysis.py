"""Physics metrics on reconstructed states: Wigner grids, fidelity,
photon populations, negativity at the origin.

Wigner functions are evaluated from closed-form Laguerre (Moyal) components,
exact at the truncation order, on output coordinates scaled so the vacuum
has variance 1/4 on both axes (internal quadratures have vacuum variance 1,
so x_out = x_internal / 2).
"""

import json
from dataclasses import dataclass
from math import factorial, sqrt

import numpy as np
from scipy.special import eval_genlaguerre

from .fock import DensityMatrix

DEFAULT_EXTENT = 4.0
DEFAULT_POINTS = 161


@dataclass(frozen=True)
class WignerGridSpec:
    extent: float = DEFAULT_EXTENT
    points: int = DEFAULT_POINTS

    def axis(self):
        return np.linspace(-self.extent, self.extent, self.points)


@dataclass
class WignerGrid:
    """W(x, p) sampled on a square grid in vacuum-variance-1/4 units."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # indexed [ix, ip]

    def integral(self):
        inner = np.trapezoid(self.values, self.p, axis=1)
        return float(np.trapezoid(inner, self.x))

    def at_origin(self):
        ix = int(np.argmin(np.abs(self.x)))
        ip = int(np.argmin(np.abs(self.p)))
        if abs(self.x[ix]) > 1e-12 or abs(self.p[ip]) > 1e-12:
            raise ValueError("grid does not contain the origin")
        return float(self.values[ix, ip])

    def marginal_x(self):
        return np.trapezoid(self.values, self.p, axis=1)

    def to_csv(self, path, extra_header=()):
        with open(path, "w") as fh:
            for line in extra_header:
                fh.write(f"# {line}\n")
            fh.write("x,p,w\n")
            for i, xv in enumerate(self.x):
                for j, pv in enumerate(self.p):
                    fh.write(f"{xv:.6g},{pv:.6g},{self.values[i, j]:.10g}\n")


def _moyal_component(m, n, alpha_conj_2, a2):
    """W_{|m><n|}(alpha) for m >= n, on precomputed 2*conj(alpha) and |alpha|^2."""
    return (
        (2.0 / np.pi)
        * (-1.0) ** n
        * sqrt(factorial(n) / factorial(m))
        * alpha_conj_2 ** (m - n)
        * np.exp(-2.0 * a2)
        * eval_genlaguerre(n, m - n, 4.0 * a2)
    )


def wigner_from_density(rho, grid=WignerGridSpec()):
    """Wigner function of a density matrix on the output grid."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    axis = grid.axis()
    X, P = np.meshgrid(axis, axis, indexing="ij")
    a2 = X * X + P * P
    ac2 = 2.0 * (X - 1j * P)
    dim = mat.shape[0]
    values = np.zeros_like(a2)
    for m in range(dim):
        for n in range(m + 1):
            comp = _moyal_component(m, n, ac2, a2)
            if m == n:
                values += mat[m, n].real * comp.real
            else:
                values += 2.0 * (mat[m, n] * comp).real
    return WignerGrid(x=axis, p=axis.copy(), values=values)


def fidelity(rho1, rho2):
    """Uhlmann fidelity F = (tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2."""
    a = rho1.matrix if isinstance(rho1, DensityMatrix) else np.asarray(rho1, dtype=complex)
    b = rho2.matrix if isinstance(rho2, DensityMatrix) else np.asarray(rho2, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    evals, evecs = np.linalg.eigh(a)
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T
    inner = np.linalg.eigvalsh(root @ b @ root)
    val = float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)
    return min(val, 1.0)


def photon_populations(rho, n_max=7):
    """Diagonal populations p_0..p_n_max."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    d = np.real(np.diag(mat))
    out = np.zeros(n_max + 1)
    out[: min(n_max + 1, d.size)] = d[: n_max + 1]
    return out


def negativity_at_origin(wigner, stderr=None):
    """W(0,0) and its significance |W|/stderr (inf when no error is given)."""
    value = wigner.at_origin()
    if stderr is None or stderr == 0.0:
        return value, float("inf")
    return value, abs(value) / stderr


@dataclass
class StateMetrics:
    """Summary metrics persisted with every reconstruction."""

    populations: np.ndarray
    w_origin: float
    purity: float
    fidelity_vs_reference: float | None = None

    def to_json_dict(self):
        out = {
            "populations": [float(p) for p in self.populations],
            "w_origin": self.w_origin,
            "purity": self.purity,
        }
        if self.fidelity_vs_reference is not None:
            out["fidelity"] = self.fidelity_vs_reference
        return out


def state_metrics(rho, grid=WignerGridSpec(), reference=None, n_max=7):
    wig = wigner_from_density(rho, grid)
    return StateMetrics(
        populations=photon_populations(rho, n_max=n_max),
        w_origin=wig.at_origin(),
        purity=rho.purity() if isinstance(rho, DensityMatrix) else DensityMatrix(rho).purity(),
        fidelity_vs_reference=None if reference is None else fidelity(rho, reference),
    )


def write_metrics_json(path, metrics, extra=None):
    payload = metrics.to_json_dict() if isinstance(metrics, StateMetrics) else dict(metrics)
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
