"""Exact bivariate-Gaussian generator of dual-homodyne shot records.

Models the measured pair (X_a^phi, X_b^theta) for a squeezed-vacuum source
split on a weak tap beamsplitter, with detector efficiency entering as
vacuum admixture.  The cross-covariance sign follows the Fock-engine
beamsplitter convention (cross-checked against the brute-force oracle):

    Cov(X_a^phi, X_b^theta) = sqrt(eff_a eff_b) eta sqrt(1-eta^2)
        [ (v_sq - 1) cos phi cos theta + (v_anti - 1) sin phi sin theta ]

with eta^2 = 1 - tap_power.  Phases phi are drawn i.i.d. uniform on
[0, 2pi); the experiment's phase sweep exists only to realize that
uniformity physically.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .errors import InsufficientStatisticsError, NumericalInvariantError

DEFAULT_TAP_POWER = 0.10
DEFAULT_EFFICIENCY = 0.98
DEFAULT_ANGLES_DEG = tuple(range(0, 180, 15))


@dataclass(frozen=True)
class GaussianModel:
    """Second-moment description of the source and measurement chain.

    v_sq / v_anti are the squeezed and anti-squeezed quadrature variances of
    the input (vacuum = 1); tap_power is the power reflectivity toward the
    conditioning arm (1 - eta^2); eff_a, eff_b are homodyne efficiencies.
    """

    v_sq: float
    v_anti: float
    tap_power: float = DEFAULT_TAP_POWER
    eff_a: float = DEFAULT_EFFICIENCY
    eff_b: float = DEFAULT_EFFICIENCY

    def __post_init__(self):
        if not self.v_sq <= 1.0 + 1e-12 or not self.v_anti >= 1.0 - 1e-12:
            raise ValueError("need v_sq <= 1 <= v_anti")
        if self.v_sq * self.v_anti < 1.0 - 1e-9:
            raise ValueError("uncertainty bound violated: v_sq * v_anti < 1")
        if not 0.0 < self.tap_power < 1.0:
            raise ValueError("tap_power must lie strictly between 0 and 1")
        for eff in (self.eff_a, self.eff_b):
            if not 0.0 < eff <= 1.0:
                raise ValueError("efficiencies must lie in (0, 1]")

    @classmethod
    def from_squeezing(cls, r, resource_efficiency=1.0, **kwargs):
        """Pure squeezing r degraded by an optional source transmission."""
        lam = resource_efficiency
        if not 0.0 < lam <= 1.0:
            raise ValueError("resource_efficiency must lie in (0, 1]")
        return cls(
            v_sq=lam * np.exp(-2.0 * r) + (1.0 - lam),
            v_anti=lam * np.exp(2.0 * r) + (1.0 - lam),
            **kwargs,
        )

    @property
    def eta(self):
        """Amplitude transmissivity of the tap beamsplitter."""
        return float(np.sqrt(1.0 - self.tap_power))

    def is_pure(self, tol=1e-9):
        return abs(self.v_sq * self.v_anti - 1.0) < tol


@dataclass(frozen=True)
class QuadratureCovariance:
    """2x2 symmetric covariance of (X_a^phi, X_b^theta)."""

    var_a: float
    var_b: float
    cov: float

    def __post_init__(self):
        det = self.var_a * self.var_b - self.cov * self.cov
        if self.var_a <= 0 or self.var_b <= 0 or det <= 0:
            raise NumericalInvariantError(
                f"covariance not positive definite: va={self.var_a}, "
                f"vb={self.var_b}, cov={self.cov}"
            )

    @property
    def matrix(self):
        return np.array([[self.var_a, self.cov], [self.cov, self.var_b]])


@dataclass(frozen=True)
class AngleSchedule:
    """Tomography angles (radians, within [0, pi)) and samples per angle."""

    angles: tuple = tuple(np.deg2rad(DEFAULT_ANGLES_DEG))
    samples_per_angle: int = 1_000_000

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        if len(set(angles)) != len(angles):
            raise ValueError("angles must be distinct")
        if any(a < 0 or a >= np.pi for a in angles):
            raise ValueError("angles must lie within [0, pi)")
        if self.samples_per_angle <= 0:
            raise ValueError("samples_per_angle must be positive")
        object.__setattr__(self, "angles", angles)

    @property
    def n_angles(self):
        return len(self.angles)

    @property
    def total_records(self):
        return self.n_angles * self.samples_per_angle


@dataclass
class HomodyneRecord:
    """One simulated shot (scalar view of a RecordBatch row)."""

    phi: float
    x_a: float
    theta_index: int
    x_b: float


@dataclass
class RecordBatch:
    """Column-oriented block of shots sharing one tomography angle."""

    phi: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray
    theta_index: int
    theta: float

    def __len__(self):
        return self.phi.size

    def record(self, i):
        return HomodyneRecord(
            phi=float(self.phi[i]),
            x_a=float(self.x_a[i]),
            theta_index=self.theta_index,
            x_b=float(self.x_b[i]),
        )


def covariance(model, phi, theta):
    """Covariance of (X_a^phi, X_b^theta); phi may be an array.

    Detector efficiency enters as Gaussian vacuum admixture:
    Var -> eff * Var + (1 - eff); the cross term scales by sqrt(eff_a eff_b).
    """
    tap = model.tap_power
    eta2 = 1.0 - tap
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    var_in_phi = model.v_sq * cp * cp + model.v_anti * sp * sp
    var_in_theta = model.v_sq * ct * ct + model.v_anti * st * st
    va = model.eff_a * (tap * var_in_phi + eta2) + (1.0 - model.eff_a)
    vb = model.eff_b * (eta2 * var_in_theta + tap) + (1.0 - model.eff_b)
    cov = (
        np.sqrt(model.eff_a * model.eff_b)
        * np.sqrt(eta2 * tap)
        * ((model.v_sq - 1.0) * cp * ct + (model.v_anti - 1.0) * sp * st)
    )
    if np.isscalar(phi) or np.asarray(phi).ndim == 0:
        return QuadratureCovariance(float(va), float(vb), float(cov))
    return va, np.full_like(va, vb), cov


def _angle_rng(seed, theta_index, shard=None):
    """Counter-based generator for one (angle, shard) substream."""
    key = (theta_index,) if shard is None else (theta_index, shard)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def sample_angle(model, theta, n, seed, theta_index=0, shard=None):
    """One batch of n records at tomography angle theta.

    phi ~ Uniform[0, 2pi), then (x_a, x_b) from the bivariate normal with
    covariance(model, phi, theta).  Reproducible from (seed, theta_index,
    shard); shards get provably independent Philox substreams.
    """
    rng = _angle_rng(seed, theta_index, shard)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    va, vb, cov = covariance(model, phi, theta)
    resid = vb - cov * cov / va
    if np.any(va <= 0) or np.any(resid <= 0):
        raise NumericalInvariantError("covariance lost positive definiteness")
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    x_a = np.sqrt(va) * z1
    x_b = (cov / np.sqrt(va)) * z1 + np.sqrt(resid) * z2
    return RecordBatch(phi=phi, x_a=x_a, x_b=x_b, theta_index=theta_index, theta=float(theta))


def sample_records(model, schedule, seed):
    """All scheduled batches, in angle order, reproducible from seed."""
    return [
        sample_angle(model, theta, schedule.samples_per_angle, seed, theta_index=i)
        for i, theta in enumerate(schedule.angles)
    ]


def shard_counts(total, n_shards):
    """Deterministic near-even split of a per-angle record count."""
    base, extra = divmod(total, n_shards)
    return [base + (1 if s < extra else 0) for s in range(n_shards)]


def sample_angle_sharded(model, theta, n, seed, theta_index, n_shards):
    """Per-shard batches whose concatenation carries exactly n records."""
    return [
        sample_angle(model, theta, count, seed, theta_index=theta_index, shard=s)
        for s, count in enumerate(shard_counts(n, n_shards))
    ]


@dataclass(frozen=True)
class PhaseUniformity:
    """Chi-squared assessment of the conditioning-phase distribution.

    `passed` is decided on the distribution folded modulo pi, since diagonal
    (phase-randomised) conditioning weights only see that structure; lack of
    uniformity over the full 2pi range is reported informationally.
    """

    chi2_full: float
    p_value_full: float
    chi2_folded: float
    p_value_folded: float
    n_bins: int = 64
    alpha: float = 0.01
    full_range_uniform: bool = field(default=True)

    @property
    def passed(self):
        return self.p_value_folded > self.alpha


def validate_phase_uniformity(records, n_bins=64, alpha=0.01):
    """Chi-squared test of phi against uniform, on >= 1e4 records."""
    if isinstance(records, RecordBatch):
        phi = records.phi
    elif isinstance(records, np.ndarray):
        phi = records
    else:
        phi = np.concatenate([b.phi for b in records])
    if phi.size < 10_000:
        raise InsufficientStatisticsError(
            f"phase-uniformity check needs >= 1e4 records, got {phi.size}"
        )

    def chi2_stat(values, period):
        counts = np.bincount(
            np.minimum((values % period) / period * n_bins, n_bins - 1).astype(int),
            minlength=n_bins,
        )
        expected = values.size / n_bins
        stat = float(np.sum((counts - expected) ** 2) / expected)
        return stat, float(chi2_dist.sf(stat, n_bins - 1))

    stat_full, p_full = chi2_stat(phi, 2.0 * np.pi)
    stat_fold, p_fold = chi2_stat(phi, np.pi)
    return PhaseUniformity(
        chi2_full=stat_full,
        p_value_full=p_full,
        chi2_folded=stat_fold,
        p_value_folded=p_fold,
        n_bins=n_bins,
        alpha=alpha,
        full_range_uniform=p_full > alpha,
    )
