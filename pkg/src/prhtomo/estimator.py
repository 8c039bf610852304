"""Streaming weighted histograms and density-matrix reconstruction.

Histogram accumulators are exact: per-bin sums of weights are kept as
arbitrary-precision integers in fixed-point (quantum 2^-64), decomposed into
26-bit limbs so the hot path stays vectorized (np.bincount partial sums stay
below 2^53 and are therefore exact in float64).  Integer addition is
associative and commutative, so merging shard histograms is bitwise
identical to accumulating the concatenated stream, for any sharding.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientStatisticsError, NumericalInvariantError

DEFAULT_BIN_RANGE = 8.0
DEFAULT_N_BINS = 401

_SCALE_BITS = 64
_LIMB_BITS = 26
_LIMB = float(1 << _LIMB_BITS)


def _exact_bin_add(totals, idx, values, n_cells):
    """Add round(values * 2^64) into per-cell Python-int totals, exactly."""
    x = np.rint(np.ldexp(np.abs(values), _SCALE_BITS))
    if not np.all(np.isfinite(x)):
        raise NumericalInvariantError("weight magnitude too large for the accumulator")
    signed = np.where(values < 0.0, -1.0, 1.0)
    shift = 0
    while np.any(x):
        low = np.fmod(x, _LIMB)
        part = np.bincount(idx, weights=signed * low, minlength=n_cells)
        for cell in np.nonzero(part)[0]:
            totals[cell] += int(part[cell]) << shift
        x = (x - low) / _LIMB
        shift += _LIMB_BITS
    return totals


def _totals_to_float(totals):
    return np.array([float(t) for t in totals]) * 2.0**-_SCALE_BITS


class WeightedHistogram:
    """Per-angle weighted histogram with exact, order-independent merges.

    Internally each angle row has n_bins + 2 cells: cell 0 collects
    underflow, cell n_bins + 1 overflow; both are counted and reported, and
    they participate in the exact totals.
    """

    def __init__(self, angle_map, bin_range=DEFAULT_BIN_RANGE, n_bins=DEFAULT_N_BINS):
        if not angle_map:
            raise ValueError("angle map must not be empty")
        self.theta_indices = tuple(sorted(angle_map))
        self.thetas = tuple(float(angle_map[i]) for i in self.theta_indices)
        self.edges = np.linspace(-bin_range, bin_range, n_bins + 1)
        self.n_bins = n_bins
        self._row = {idx: r for r, idx in enumerate(self.theta_indices)}
        cells = n_bins + 2
        rows = len(self.theta_indices)
        self._w = [[0] * cells for _ in range(rows)]
        self._w2 = [[0] * cells for _ in range(rows)]
        self.counts = np.zeros((rows, cells), dtype=np.int64)

    # -- accumulation ------------------------------------------------------

    def add_batch(self, batch, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != batch.x_b.shape:
            raise ValueError("weights must align with the batch")
        if not np.all(np.isfinite(weights)):
            bad = int(np.count_nonzero(~np.isfinite(weights)))
            raise NumericalInvariantError(
                f"{bad} non-finite weights in shard at theta_index="
                f"{batch.theta_index}; aborting this shard"
            )
        if batch.theta_index not in self._row:
            raise ValueError(f"theta_index {batch.theta_index} not in this histogram")
        row = self._row[batch.theta_index]
        cells = self.n_bins + 2
        idx = np.digitize(batch.x_b, self.edges)
        _exact_bin_add(self._w[row], idx, weights, cells)
        _exact_bin_add(self._w2[row], idx, weights * weights, cells)
        self.counts[row] += np.bincount(idx, minlength=cells).astype(np.int64)

    def merge(self, other):
        """Exact merge; requires identical binning and angle layout."""
        if (
            self.theta_indices != other.theta_indices
            or self.thetas != other.thetas
            or not np.array_equal(self.edges, other.edges)
        ):
            raise ValueError("histograms have incompatible layouts")
        out = WeightedHistogram(
            dict(zip(self.theta_indices, self.thetas)),
            bin_range=float(self.edges[-1]),
            n_bins=self.n_bins,
        )
        for r in range(len(self.theta_indices)):
            out._w[r] = [a + b for a, b in zip(self._w[r], other._w[r])]
            out._w2[r] = [a + b for a, b in zip(self._w2[r], other._w2[r])]
        out.counts = self.counts + other.counts
        return out

    # -- views -------------------------------------------------------------

    @property
    def n_angles(self):
        return len(self.theta_indices)

    @property
    def bin_width(self):
        return float(self.edges[1] - self.edges[0])

    @property
    def bin_centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def sum_w(self, in_range=True):
        rows = [_totals_to_float(r) for r in self._w]
        full = np.vstack(rows)
        return full[:, 1:-1] if in_range else full

    def sum_w2(self, in_range=True):
        rows = [_totals_to_float(r) for r in self._w2]
        full = np.vstack(rows)
        return full[:, 1:-1] if in_range else full

    def angle_totals(self):
        """Exact per-angle total weight (all cells), as floats."""
        return np.array([float(sum(r)) for r in self._w]) * 2.0**-_SCALE_BITS

    def total_sum_w(self):
        return float(sum(sum(r) for r in self._w)) * 2.0**-_SCALE_BITS

    def total_count(self):
        return int(self.counts.sum())

    def overflow_counts(self):
        """Per-angle (underflow, overflow) record counts."""
        return self.counts[:, 0].copy(), self.counts[:, -1].copy()

    def state_digest(self):
        """Hashable snapshot of the full exact state (for merge tests)."""
        return (
            tuple(tuple(r) for r in self._w),
            tuple(tuple(r) for r in self._w2),
            self.counts.tobytes(),
        )

    def to_csv(self, path, extra_header=()):
        """Raw per-bin sums (in-range cells) for downstream plotting."""
        sw = self.sum_w()
        sw2 = self.sum_w2()
        with open(path, "w") as fh:
            for line in extra_header:
                fh.write(f"# {line}\n")
            fh.write("angle_deg,bin_center,sum_w,sum_w2,count\n")
            for t, theta in enumerate(self.thetas):
                deg = np.degrees(theta)
                for b, c in enumerate(self.bin_centers):
                    fh.write(
                        f"{deg:.4f},{c:.6g},{sw[t, b]:.10g},{sw2[t, b]:.10g},"
                        f"{self.counts[t, b + 1]}\n"
                    )


def accumulate(
    records,
    weight,
    *,
    bin_range=DEFAULT_BIN_RANGE,
    n_bins=DEFAULT_N_BINS,
    histogram=None,
):
    """Single pass over record batches, adding weight(x_a, phi) per shot to
    the x_b bin under the batch angle."""
    records = list(records)
    if histogram is None:
        angle_map = {}
        for b in records:
            angle_map.setdefault(b.theta_index, b.theta)
        histogram = WeightedHistogram(angle_map, bin_range=bin_range, n_bins=n_bins)
    for batch in records:
        w = np.ones(len(batch)) if weight is None else weight(batch.x_a, batch.phi)
        histogram.add_batch(batch, np.broadcast_to(w, batch.x_b.shape))
    return histogram


@dataclass
class ConditionedDistribution:
    """Per-angle normalized conditioned densities with ratio-estimator errors."""

    thetas: tuple
    bin_centers: np.ndarray
    density: np.ndarray  # (n_angles, n_bins)
    stderr: np.ndarray
    acceptance: np.ndarray  # per-angle mean weight (success-probability scale)
    negative_flags: np.ndarray  # bins with density < -3 sigma (finite-sample)

    def integral(self):
        h = self.bin_centers[1] - self.bin_centers[0]
        return self.density.sum(axis=1) * h

    def to_csv(self, path, extra_header=()):
        with open(path, "w") as fh:
            for line in extra_header:
                fh.write(f"# {line}\n")
            fh.write("angle_deg,bin_center,density,stderr\n")
            for t, theta in enumerate(self.thetas):
                deg = np.degrees(theta)
                for c, d, s in zip(self.bin_centers, self.density[t], self.stderr[t]):
                    fh.write(f"{deg:.4f},{c:.6g},{d:.8g},{s:.6g}\n")


def conditioned_pdf(hist, min_global_significance=4.0, min_angle_significance=2.0):
    """Normalized conditioned quadrature density per angle.

    Densities are (sum_w per bin) / (bin width * in-range sum_w per angle);
    pointwise standard errors come from sum_w^2 via the ratio-estimator
    delta method.  Raises InsufficientStatisticsError when the pooled weight
    is not resolved at min_global_significance sigma (conditioning killed
    the ensemble) or any per-angle total is within min_angle_significance
    sigma of zero (its normalization sign would be ambiguous).
    """
    h = hist.bin_width
    sw = hist.sum_w()
    sw2 = hist.sum_w2()
    n_rec = hist.counts[:, 1:-1].sum(axis=1).astype(float)
    totals = sw.sum(axis=1)
    var_t = np.maximum(sw2.sum(axis=1) - totals**2 / np.maximum(n_rec, 1.0), 0.0)
    z_global = abs(totals.sum()) / max(np.sqrt(var_t.sum()), 1e-300)
    if z_global < min_global_significance:
        raise InsufficientStatisticsError(
            f"conditioning killed the ensemble: pooled weight at {z_global:.2f} sigma"
        )
    bad = np.abs(totals) < min_angle_significance * np.sqrt(var_t)
    if np.any(bad):
        which = [round(np.degrees(hist.thetas[i]), 1) for i in np.nonzero(bad)[0]]
        raise InsufficientStatisticsError(
            f"per-angle weight indistinguishable from zero at angles {which} deg"
        )
    density = sw / (h * totals[:, None])
    # delta method: Var(S_b / (h T)) with T = sum_b S_b over the same records
    var_s = np.maximum(sw2 - sw**2 / np.maximum(n_rec, 1.0)[:, None], 0.0)
    p_h = density * h
    cov_st = var_s - (sw * totals[:, None] - sw**2) / np.maximum(n_rec, 1.0)[:, None]
    var_p = (var_s - 2.0 * p_h * cov_st + p_h**2 * var_t[:, None]) / (
        h * totals[:, None]
    ) ** 2
    stderr = np.sqrt(np.maximum(var_p, 0.0))
    negative = density < -3.0 * stderr
    return ConditionedDistribution(
        thetas=hist.thetas,
        bin_centers=hist.bin_centers,
        density=density,
        stderr=stderr,
        acceptance=totals / np.maximum(n_rec, 1.0),
        negative_flags=negative,
    )


@dataclass
class DensityEstimate:
    """Raw (not yet physical) density-matrix estimate with per-element errors."""

    matrix: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    mean_weight: float
    n_records: int

    @property
    def m_max(self):
        return self.matrix.shape[0] - 1


def density_from_quadratures(
    records,
    weight,
    m_max,
    *,
    table=None,
    bin_range=DEFAULT_BIN_RANGE,
    n_bins=DEFAULT_N_BINS,
    histogram=None,
):
    """Density-matrix estimate rho_mn = E[w f_mn(x_b) e^{-i(m-n) theta}] / E[w].

    The per-shot pattern kernels are contracted at histogram bin centers
    (bin width keeps the discretization bias far below statistical error at
    production sizes), so one streaming pass serves every element.  `table`
    is a PatternTable covering m_max; `records` may be pre-accumulated by
    passing `histogram` directly.
    """
    from .patterns import cached_pattern_table

    if table is None:
        table = cached_pattern_table()
    if m_max > table.m_max:
        raise ValueError("pattern table order is below the requested m_max")
    if histogram is None:
        histogram = accumulate(records, weight, bin_range=bin_range, n_bins=n_bins)
    n_angles = histogram.n_angles
    if m_max >= n_angles:
        raise ConfigError(
            f"{n_angles} tomography angles cannot resolve m_max={m_max}; "
            "elements would alias"
        )
    if m_max > n_angles - 2:
        import warnings

        warnings.warn(
            f"m_max={m_max} is at the aliasing edge for {n_angles} angles",
            stacklevel=2,
        )
    thetas = np.asarray(histogram.thetas)
    sw = histogram.sum_w()
    sw2 = histogram.sum_w2()
    total = sw.sum()
    n_rec = histogram.counts[:, 1:-1].sum()
    var_t = sw2.sum() - total**2 / max(n_rec, 1)
    if abs(total) < 4.0 * np.sqrt(max(var_t, 0.0)) or total == 0.0:
        raise InsufficientStatisticsError(
            "conditioned ensemble weight indistinguishable from zero"
        )
    centers = histogram.bin_centers
    dim = m_max + 1
    rho = np.zeros((dim, dim), dtype=complex)
    se_re = np.zeros((dim, dim))
    se_im = np.zeros((dim, dim))
    for m in range(dim):
        for n in range(m, dim):
            fv = table.evaluate(m, n, centers)
            phase = np.exp(-1j * (m - n) * thetas)
            num = complex(np.dot(phase, sw @ fv))
            val = num / total
            rho[m, n] = val
            rho[n, m] = np.conj(val)
            kern_re = np.cos((m - n) * thetas)[:, None] * fv[None, :] - val.real
            kern_im = -np.sin((m - n) * thetas)[:, None] * fv[None, :] - val.imag
            se_re[m, n] = se_re[n, m] = np.sqrt(np.sum(sw2 * kern_re**2)) / abs(total)
            se_im[m, n] = se_im[n, m] = np.sqrt(np.sum(sw2 * kern_im**2)) / abs(total)
    return DensityEstimate(
        matrix=rho,
        stderr_re=se_re,
        stderr_im=se_im,
        mean_weight=float(total / max(n_rec, 1)),
        n_records=int(n_rec),
    )


def project_to_physical(rho_est):
    """Nearest (Frobenius) unit-trace positive-semidefinite matrix.

    Eigenvalues are projected onto the probability simplex (clip below a
    water level chosen so the survivors sum to one); idempotent on states.
    """
    from .fock import DensityMatrix

    if isinstance(rho_est, DensityEstimate):
        mat = rho_est.matrix
    elif isinstance(rho_est, DensityMatrix):
        mat = rho_est.matrix
    else:
        mat = np.asarray(rho_est, dtype=complex)
    mat = 0.5 * (mat + mat.conj().T)
    evals, evecs = np.linalg.eigh(mat)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    cumulative = np.cumsum(evals) - 1.0
    ranks = np.arange(1, evals.size + 1)
    feasible = evals - cumulative / ranks > 0
    k = ranks[feasible][-1]
    level = cumulative[feasible][-1] / k
    clipped = np.clip(evals - level, 0.0, None)
    return DensityMatrix((evecs * clipped) @ evecs.conj().T)


def bootstrap_errors(records, pipeline, b_resamples, seed=0):
    """Nonparametric errors: rerun `pipeline` on B within-angle resamples.

    `pipeline` maps a list of RecordBatch to a dict of scalars; returns the
    empirical standard deviation of each scalar across resamples.  Records
    are resampled with replacement independently per batch (the per-angle
    counts are fixed by the schedule, so the stratified bootstrap is the
    matching scheme).
    """
    from .sampler import RecordBatch

    if b_resamples < 50:
        raise ValueError("bootstrap needs B >= 50")
    records = list(records)
    rng = np.random.default_rng(seed)
    samples = {}
    for _ in range(b_resamples):
        resampled = []
        for batch in records:
            n = len(batch)
            pick = rng.integers(0, n, n)
            resampled.append(
                RecordBatch(
                    phi=batch.phi[pick],
                    x_a=batch.x_a[pick],
                    x_b=batch.x_b[pick],
                    theta_index=batch.theta_index,
                    theta=batch.theta,
                )
            )
        for key, value in pipeline(resampled).items():
            samples.setdefault(key, []).append(value)
    return {k: float(np.std(v, ddof=1)) for k, v in samples.items()}


def bootstrap_binned(batch_arrays, finalize, b_resamples, seed=0):
    """Histogram-level stratified bootstrap for binned pipelines.

    `batch_arrays` is a list of (cell_idx, weights, n_cells) per angle with
    cell 0 / n_cells-1 the under/overflow cells; `finalize` maps the stacked
    per-angle weight sums (n_angles, n_cells) to a dict of scalars.  The
    multinomial per-record counts realize resampling-with-replacement
    without materializing record copies.
    """
    if b_resamples < 50:
        raise ValueError("bootstrap needs B >= 50")
    rng = np.random.default_rng(seed)
    samples = {}
    for _ in range(b_resamples):
        rows = []
        for idx, w, n_cells in batch_arrays:
            n = idx.size
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
            rows.append(np.bincount(idx, weights=w * counts, minlength=n_cells))
        for key, value in finalize(np.vstack(rows)).items():
            samples.setdefault(key, []).append(value)
    return {k: float(np.std(v, ddof=1)) for k, v in samples.items()}
