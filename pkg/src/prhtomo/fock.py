"""Truncated Fock-space states, channels and the brute-force conditioning oracle.

Everything here follows the vacuum-variance-1 quadrature convention
X^phi = a e^{-i phi} + a^dag e^{i phi}.  The beamsplitter convention maps the
input mode 1 with amplitude transmissivity eta into output mode b and
reflects sqrt(1-eta^2) into the conditioning mode a:

    a1^dag -> sqrt(1-eta^2) a_a^dag + eta a_b^dag
    a2^dag -> eta a_a^dag - sqrt(1-eta^2) a_b^dag

so that |2,0> maps to (1-eta^2)|2,0> + sqrt(2 eta^2 (1-eta^2))|1,1> + eta^2|0,2>
with all-positive amplitudes.  The phase-space sign of the sampler covariance
is pinned to this choice (see sampler.covariance and the cross-module tests).
"""

from dataclasses import dataclass
from math import comb, factorial, sqrt

import numpy as np

from .errors import NumericalInvariantError
from .oscillator import hermite_functions

DEFAULT_N_TRUNC = 30
LEAKAGE_TOL = 1e-10

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class FockVector:
    """Pure single-mode state, amplitudes indexed by photon number 0..n_trunc."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amp)
        norm2 = float(np.vdot(amp, amp).real)
        if norm2 > 1.0 + _NORM_TOL:
            raise NumericalInvariantError(f"Fock vector norm^2 = {norm2} exceeds 1")

    @property
    def n_trunc(self):
        return self.amplitudes.size - 1

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def to_density(self):
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class TwoModeState:
    """Pure two-mode state; amplitudes[n_a, n_b], both indices 0..n_trunc."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amp)
        norm2 = float(np.vdot(amp, amp).real)
        if norm2 > 1.0 + _NORM_TOL:
            raise NumericalInvariantError(f"two-mode norm^2 = {norm2} exceeds 1")

    @property
    def n_trunc(self):
        return self.amplitudes.shape[0] - 1

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


class DensityMatrix:
    """Hermitian single-mode density matrix, dimension n_trunc+1.

    The `convention` flag records the internal quadrature units
    (vacuum variance 1).
    """

    convention = "x-var-1"

    def __init__(self, matrix, *, require_physical=False):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise NumericalInvariantError("density matrix is not Hermitian")
        self.matrix = 0.5 * (m + m.conj().T)
        if require_physical:
            self.validate_physical()

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def n_trunc(self):
        return self.dim - 1

    def trace(self):
        return float(np.trace(self.matrix).real)

    def normalized(self):
        tr = np.trace(self.matrix).real
        if abs(tr) < 1e-14:
            raise NumericalInvariantError("cannot normalize: trace ~ 0")
        return DensityMatrix(self.matrix / tr)

    def validate_physical(self, eig_tol=1e-9, trace_tol=1e-9):
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise NumericalInvariantError(f"trace {tr} not within {trace_tol} of 1")
        ev = np.linalg.eigvalsh(self.matrix)
        if ev.min() < -eig_tol:
            raise NumericalInvariantError(f"negative eigenvalue {ev.min()}")
        return self

    def populations(self, n_max=None):
        d = np.real(np.diag(self.matrix))
        return d if n_max is None else d[: n_max + 1]

    def purity(self):
        return float(np.trace(self.matrix @ self.matrix).real)

    def expectation(self, op):
        return complex(np.trace(self.matrix @ op))

    def to_json_dict(self):
        return {
            "dim": self.dim,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
            "convention": self.convention,
        }

    @classmethod
    def from_json_dict(cls, d):
        if d.get("convention") != cls.convention:
            raise NumericalInvariantError(
                f"unsupported density-matrix convention {d.get('convention')!r}"
            )
        m = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        if m.shape != (d["dim"], d["dim"]):
            raise ValueError("dim field inconsistent with matrix shape")
        return cls(m)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, trace={self.trace():.6f})"


def squeezed_vacuum(r, n_trunc=DEFAULT_N_TRUNC, leakage_tol=LEAKAGE_TOL):
    """Squeezed vacuum S(r)|0>, squeezed along the X (theta=0) quadrature.

    c_{2k} = (-tanh r)^k sqrt((2k)!) / (2^k k!) / sqrt(cosh r); odd entries zero.
    For small r this reduces to |0> - gamma |2> with gamma = tanh(r)/sqrt(2).
    Raises if the analytic tail probability above n_trunc exceeds leakage_tol.
    """
    if r < 0:
        raise ValueError("squeezing parameter r must be >= 0")
    if n_trunc < 2:
        raise ValueError("n_trunc must be >= 2")
    t = np.tanh(r)
    amp = np.zeros(n_trunc + 1, dtype=complex)
    for k in range(n_trunc // 2 + 1):
        amp[2 * k] = (
            (-t) ** k * sqrt(factorial(2 * k)) / (2**k * factorial(k)) / sqrt(np.cosh(r))
        )
    # Geometric bound on the tail: |c_{2k}|^2 ~ t^{2k}/(sqrt(pi k) cosh r) decays
    # by at least t^2 per pair, so the mass above K pairs is below the bound here.
    k_last = n_trunc // 2
    if t > 0:
        head = t ** (2 * (k_last + 1)) / (sqrt(np.pi * (k_last + 1)) * np.cosh(r))
        tail_bound = head / (1.0 - t * t)
        if tail_bound > leakage_tol:
            raise NumericalInvariantError(
                f"truncation leakage bound {tail_bound:.3e} exceeds {leakage_tol:.1e} "
                f"for r={r}, n_trunc={n_trunc}"
            )
    return FockVector(amp)


def two_mode_with_vacuum(state):
    """Lift a single-mode FockVector to input-port 1, vacuum on input-port 2."""
    n = state.n_trunc
    amp = np.zeros((n + 1, n + 1), dtype=complex)
    amp[:, 0] = state.amplitudes
    return TwoModeState(amp)


def _bs_coefficients(n_trunc, eta):
    """Dense beamsplitter transfer tensor, cached per (n_trunc, eta)."""
    t = float(eta)
    rr = sqrt(max(0.0, 1.0 - t * t))
    d = n_trunc + 1
    fact = [factorial(i) for i in range(2 * d)]
    mat = np.zeros((d, d, d, d))  # [na, nb, n1, n2]
    for n1 in range(d):
        for n2 in range(d):
            base = 1.0 / sqrt(fact[n1] * fact[n2])
            for j in range(n1 + 1):
                cj = comb(n1, j) * rr**j * t ** (n1 - j)
                if cj == 0.0:
                    continue
                for k in range(n2 + 1):
                    ck = comb(n2, k) * t**k * (-rr) ** (n2 - k)
                    na, nb = j + k, n1 + n2 - j - k
                    if na >= d or nb >= d:
                        continue
                    mat[na, nb, n1, n2] += base * cj * ck * sqrt(fact[na] * fact[nb])
    return mat


_BS_CACHE = {}


def beamsplitter(state, eta):
    """Apply the two-mode beamsplitter with amplitude transmissivity eta.

    Accepts a TwoModeState or a FockVector (lifted with vacuum on port 2).
    Total photon number is conserved, so the map is exactly unitary whenever
    n_a + n_b <= n_trunc for every populated component; otherwise the
    out-of-range part is dropped (truncation leakage).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be within [0, 1]")
    if isinstance(state, FockVector):
        state = two_mode_with_vacuum(state)
    key = (state.n_trunc, float(eta))
    if key not in _BS_CACHE:
        _BS_CACHE[key] = _bs_coefficients(*key)
    out = np.einsum("abnm,nm->ab", _BS_CACHE[key], state.amplitudes)
    return TwoModeState(out)


def kraus_loss_operators(lam, n_trunc):
    """Kraus operators of the pure-loss (beamsplitter) channel, power
    transmissivity lam: K_j |n> = sqrt(C(n,j) lam^{n-j} (1-lam)^j) |n-j>."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("power transmissivity must be within [0, 1]")
    d = n_trunc + 1
    ops = []
    for j in range(d):
        K = np.zeros((d, d))
        for n in range(j, d):
            K[n - j, n] = sqrt(comb(n, j) * lam ** (n - j) * (1.0 - lam) ** j)
        if np.any(K):
            ops.append(K)
    return ops


def loss_channel(rho, lam):
    """Pure-loss channel with power transmissivity lam on a DensityMatrix."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    out = np.zeros_like(mat)
    for K in kraus_loss_operators(lam, mat.shape[0] - 1):
        out += K @ mat @ K.T
    return DensityMatrix(out)


class TwoModeMixture:
    """Two-mode mixed state kept as an ensemble of unnormalized pure branches.

    rho_ab = sum_k |psi_k><psi_k| with |psi_k> given by amplitude matrices.
    Loss channels map pure branches to families of pure branches, so the
    representation stays exact for the squeezed-vacuum + beamsplitter +
    detector-loss states used as oracles.
    """

    def __init__(self, branches):
        self.branches = [np.asarray(b, dtype=complex) for b in branches]
        if not self.branches:
            raise ValueError("mixture needs at least one branch")
        d = self.branches[0].shape
        if any(b.shape != d for b in self.branches):
            raise ValueError("branch shapes differ")

    @classmethod
    def from_pure(cls, state):
        return cls([state.amplitudes])

    @property
    def n_trunc(self):
        return self.branches[0].shape[0] - 1

    def trace(self):
        return float(sum(np.vdot(b, b).real for b in self.branches))

    def apply_loss(self, mode, lam, prune=1e-16):
        """Loss with power transmissivity lam on mode 'a' or 'b'."""
        ops = kraus_loss_operators(lam, self.n_trunc)
        out = []
        for b in self.branches:
            for K in ops:
                nb = K @ b if mode == "a" else b @ K.T
                if np.vdot(nb, nb).real > prune:
                    out.append(nb)
        return TwoModeMixture(out)

    def second_moments(self, phi, theta):
        """(Var X_a^phi, Var X_b^theta, Cov) -- brute-force Fock computation."""
        d = self.n_trunc + 1
        xa = _x_operator(d, phi)
        xb = _x_operator(d, theta)
        va = vb = cv = 0.0
        for b in self.branches:
            va += np.vdot(b, xa @ (xa @ b)).real
            vb += np.vdot(b, (b @ xb.T) @ xb.T).real
            cv += np.vdot(b, xa @ b @ xb.T).real
        tr = self.trace()
        return va / tr, vb / tr, cv / tr

    def reduced_b(self):
        """Unconditioned reduced state of mode b."""
        d = self.n_trunc + 1
        out = np.zeros((d, d), dtype=complex)
        for b in self.branches:
            out += b.conj().T @ b
        return DensityMatrix(out)

    def conditioned_pdf_b(self, cond_matrix, theta, grid):
        """Quadrature density of mode b conditioned on the POVM element
        `cond_matrix` acting on mode a: tr[rho (C x |x_theta><x_theta|)].

        The result is unnormalized (mass = tr[rho (C x 1)]) and can be
        sign-indefinite if C is.
        """
        C = np.asarray(cond_matrix, dtype=complex)
        d = self.n_trunc + 1
        psi = hermite_functions(d - 1, np.asarray(grid, dtype=float))
        phase = np.exp(1j * theta * np.arange(d))
        out = np.zeros(len(grid))
        for b in self.branches:
            M = b.conj().T @ C @ b  # indices [n_b, m_b]
            M = (phase[:, None] * M.T) * phase.conj()[None, :]
            out += np.einsum("mx,mn,nx->x", psi, M, psi).real
        return out


def _x_operator(dim, phi):
    x = np.zeros((dim, dim), dtype=complex)
    n = np.arange(1, dim)
    x[n - 1, n] = np.sqrt(n) * np.exp(-1j * phi)
    x[n, n - 1] = np.sqrt(n) * np.exp(1j * phi)
    return x


def _diagonal_weights(f, n_trunc):
    """Accept a NumberPolynomial, an integer Fock projector, or an array."""
    if hasattr(f, "coefficients"):  # NumberPolynomial duck type
        from .polynomials import fock_weights

        return fock_weights(f, n_trunc)
    if isinstance(f, (int, np.integer)):
        w = np.zeros(n_trunc + 1)
        w[int(f)] = 1.0
        return w
    w = np.asarray(f, dtype=float)
    if w.size != n_trunc + 1:
        raise ValueError("weight array length must equal n_trunc + 1")
    return w


def condition_oracle(state_ab, f):
    """Brute-force conditioning: tr_a[rho_ab (sum_n f(n)|n><n| (x) 1)].

    Returns (DensityMatrix, normalization).  The matrix is unnormalized, and
    for sign-indefinite f it is a quasi-state to be compared at the
    expectation level only.  Raises if |trace| < 1e-14.
    """
    if isinstance(state_ab, TwoModeState):
        state_ab = TwoModeMixture.from_pure(state_ab)
    weights = _diagonal_weights(f, state_ab.n_trunc).astype(complex)
    d = state_ab.n_trunc + 1
    out = np.zeros((d, d), dtype=complex)
    for b in state_ab.branches:
        out += np.einsum("a,am,an->mn", weights, b, b.conj())
    norm = float(np.trace(out).real)
    if abs(norm) < 1e-14:
        raise NumericalInvariantError("conditioning produced zero normalization")
    return DensityMatrix(out), norm


def quadrature_pdf(rho, theta, grid):
    """Quadrature density pr(x) = sum_mn rho_mn e^{i(m-n)theta} psi_m(x) psi_n(x)."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    grid = np.asarray(grid, dtype=float)
    d = mat.shape[0]
    psi = hermite_functions(d - 1, grid)
    phase = np.exp(1j * theta * np.arange(d))
    m = (phase[:, None] * mat) * phase.conj()[None, :]
    return np.einsum("mx,mn,nx->x", psi, m, psi).real


def rotate_state(rho, alpha):
    """Phase-space rotation by alpha: rho_mn -> rho_mn e^{i alpha (m-n)}.

    Shifts the quadrature_pdf angle argument: pdf(rotated, theta) =
    pdf(original, theta + alpha).
    """
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    phase = np.exp(1j * alpha * np.arange(mat.shape[0]))
    return DensityMatrix((phase[:, None] * mat) * phase.conj()[None, :])
