"""Pipeline orchestration behind the CLI subcommands.

Each stage persists its artifacts (records, conditioned densities, density
matrices, Wigner grids, metrics) and embeds the config hash; identical
config + seed yields bit-identical outputs.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import records as recmod
from .analysis import (
    WignerGridSpec,
    fidelity,
    photon_populations,
    wigner_from_density,
)
from .config import RunConfig
from .errors import ConfigError
from .estimator import (
    accumulate,
    conditioned_pdf,
    density_from_quadratures,
    project_to_physical,
)
from .fock import DensityMatrix
from .patterns import cached_pattern_table
from .polynomials import (
    NumberPolynomial,
    number_to_moment,
    subtraction_polynomial,
)
from .sampler import sample_angle, validate_phase_uniformity


def _staged(label, fn, *args, **kwargs):
    """Run one pipeline stage, prefixing raised errors with its label."""
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        exc.args = (f"[{label}] {exc.args[0] if exc.args else exc!r}",) + exc.args[1:]
        raise


def build_weight(conditioning, reconstruction):
    """Per-shot weight callable w(x_a, phi) for a conditioning config."""
    if conditioning.type == "none":
        return None
    if conditioning.type in ("polynomial", "raw_number_poly"):
        if conditioning.type == "polynomial":
            poly = subtraction_polynomial(conditioning.k, conditioning.j_max)
        else:
            poly = NumberPolynomial(conditioning.coeffs)
        moments = number_to_moment(poly)

        def weight(x_a, phi):
            return moments.evaluate(x_a)

        return weight
    if conditioning.type == "pattern":
        table = cached_pattern_table(
            reconstruction.table_m_max,
            reconstruction.table_x_max,
            reconstruction.table_h,
        )
        n = conditioning.n
        if n > table.m_max:
            raise ConfigError(f"pattern order {n} exceeds the table order {table.m_max}")

        def weight(x_a, phi):
            return table.evaluate(n, n, x_a)

        return weight
    raise ConfigError(f"unsupported conditioning {conditioning.type!r}")


def _angle_batches(cfg, threads=1):
    """Sample all scheduled angles (optionally in a thread pool)."""
    sched = cfg.schedule

    def one(i):
        return sample_angle(
            cfg.model, sched.angles[i], sched.samples_per_angle, cfg.seed, theta_index=i
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(sched.n_angles)))
    return [one(i) for i in range(sched.n_angles)]


def cmd_simulate(cfg, out_dir=None, threads=1):
    """Write the PRHT record file plus a JSON sidecar of the config.

    With threads > 1 the per-angle batches are sampled in a pool (each angle
    has its own counter-based substream) and written in angle order, so the
    file bytes are identical to the sequential path.
    """
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "records.prht")
    writer = recmod.RecordWriter(path, cfg.seed, cfg.model)
    if threads > 1:
        for batch in _angle_batches(cfg, threads=threads):
            writer.write_batch(batch)
    else:
        sched = cfg.schedule
        for i in range(sched.n_angles):
            batch = sample_angle(
                cfg.model, sched.angles[i], sched.samples_per_angle, cfg.seed, theta_index=i
            )
            writer.write_batch(batch)
    writer.close()
    sidecar = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.hash(),
        "n_records": writer.n_records,
        "format": {"magic": "PRHT", "version": recmod.VERSION},
    }
    sidecar_path = os.path.join(out_dir, "records.json")
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path, sidecar_path


@dataclass
class ReconstructionResult:
    label: str
    density: DensityMatrix
    metrics: dict
    artifacts: dict


def _accumulate_sharded(batches, weight, rec, threads):
    """Shard-parallel accumulation; the exact merge makes the result
    identical to a single pass regardless of the shard split."""
    from .estimator import WeightedHistogram
    from .sampler import RecordBatch

    angle_map = {b.theta_index: b.theta for b in batches}
    shards = []
    for s in range(threads):
        shard_batches = []
        for b in batches:
            lo = (len(b) * s) // threads
            hi = (len(b) * (s + 1)) // threads
            shard_batches.append(
                RecordBatch(
                    phi=b.phi[lo:hi],
                    x_a=b.x_a[lo:hi],
                    x_b=b.x_b[lo:hi],
                    theta_index=b.theta_index,
                    theta=b.theta,
                )
            )
        shards.append(shard_batches)

    def one(shard_batches):
        return accumulate(
            shard_batches,
            weight,
            histogram=WeightedHistogram(angle_map, bin_range=rec.bin_range, n_bins=rec.n_bins),
        )

    with ThreadPoolExecutor(max_workers=threads) as pool:
        hists = list(pool.map(one, shards))
    merged = hists[0]
    for h in hists[1:]:
        merged = merged.merge(h)
    return merged


def reconstruct_from_batches(batches, cfg, phase_check=True, threads=1):
    """accumulate -> conditioned_pdf -> density -> projection -> analysis."""
    rec = cfg.reconstruction
    table = cached_pattern_table(rec.table_m_max, rec.table_x_max, rec.table_h)
    weight = _staged("conditioning", build_weight, cfg.conditioning, rec)
    if threads > 1:
        hist = _staged("accumulate", _accumulate_sharded, batches, weight, rec, threads)
    else:
        hist = _staged(
            "accumulate",
            accumulate,
            batches,
            weight,
            bin_range=rec.bin_range,
            n_bins=rec.n_bins,
        )
    dist = _staged("conditioned_pdf", conditioned_pdf, hist)
    estimate = _staged(
        "density_from_quadratures",
        density_from_quadratures,
        None,
        None,
        rec.m_max,
        table=table,
        histogram=hist,
    )
    rho = _staged("project_to_physical", project_to_physical, estimate)
    grid = WignerGridSpec(extent=rec.wigner_extent, points=rec.wigner_points)
    wig = _staged("analysis", wigner_from_density, rho, grid)
    under, over = hist.overflow_counts()
    metrics = {
        "populations": [float(p) for p in photon_populations(rho, n_max=7)],
        "w_origin": wig.at_origin(),
        "purity": rho.purity(),
        "mean_weight": estimate.mean_weight,
        "n_records": estimate.n_records,
        "overflow_records": int(under.sum() + over.sum()),
        "conditioning": cfg.conditioning.to_dict(),
    }
    if phase_check:
        uni = validate_phase_uniformity(batches)
        metrics["phase_uniformity"] = {
            "passed": bool(uni.passed),
            "chi2_folded": uni.chi2_folded,
            "p_value_folded": uni.p_value_folded,
            "full_range_uniform": bool(uni.full_range_uniform),
        }
    return ReconstructionResult(
        label=cfg.conditioning.label(),
        density=rho,
        metrics=metrics,
        artifacts={"histogram": hist, "distribution": dist, "estimate": estimate, "wigner": wig},
    )


def cmd_reconstruct(cfg, records_path, out_dir=None):
    """Reconstruct from a PRHT file and persist all artifacts."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    header = recmod.read_header(records_path)
    angles = {i: theta for i, theta in enumerate(cfg.schedule.angles)}
    max_idx = max(angles)
    batches = recmod.read_batches(records_path, angles)
    if any(b.theta_index > max_idx for b in batches):
        raise ConfigError("record file contains angles outside the configured schedule")
    result = reconstruct_from_batches(batches, cfg)
    tag = result.label
    stamp = [f"config_sha256={cfg.hash()}", f"source_seed={header.seed}"]
    dist_path = os.path.join(out_dir, f"conditioned_pdf_{tag}.csv")
    result.artifacts["distribution"].to_csv(dist_path, extra_header=stamp)
    density_path = os.path.join(out_dir, f"density_{tag}.json")
    with open(density_path, "w") as fh:
        payload = result.density.to_json_dict()
        payload["config_sha256"] = cfg.hash()
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    wigner_path = os.path.join(out_dir, f"wigner_{tag}.csv")
    result.artifacts["wigner"].to_csv(wigner_path, extra_header=stamp)
    metrics_path = os.path.join(out_dir, f"metrics_{tag}.json")
    with open(metrics_path, "w") as fh:
        payload = dict(result.metrics)
        payload["config_sha256"] = cfg.hash()
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return {
        "conditioned_pdf": dist_path,
        "density": density_path,
        "wigner": wigner_path,
        "metrics": metrics_path,
    }


def load_density(path):
    with open(path) as fh:
        payload = json.load(fh)
    payload.pop("config_sha256", None)
    return DensityMatrix.from_json_dict(payload)


def cmd_compare(path_a, path_b, out_path=None):
    """Fidelity report between two persisted density matrices."""
    rho_a = project_to_physical(load_density(path_a))
    rho_b = project_to_physical(load_density(path_b))
    report = {
        "fidelity": fidelity(rho_a, rho_b),
        "inputs": [os.path.basename(path_a), os.path.basename(path_b)],
    }
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return report


def cmd_figures(cfg, out_dir=None):
    """Fig.-3-style CSV bundle: normalized conditioning polynomials against
    their pattern functions, plus a vacuum sanity table."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    rec = cfg.reconstruction
    table = cached_pattern_table(rec.table_m_max, rec.table_x_max, rec.table_h)
    stamp = f"config_sha256={cfg.hash()}"
    xs = np.linspace(-4.0, 4.0, 801)
    paths = {}
    for k, j_max, name in ((1, 3, "k1"), (2, 3, "k2")):
        moments = number_to_moment(subtraction_polynomial(k, j_max))
        poly = moments.evaluate(xs) / float(moments.value_at_zero())
        f_nn = table.evaluate(k, k, xs)
        f_nn = f_nn / f_nn[len(xs) // 2]
        path = os.path.join(out_dir, f"figure3_{name}.csv")
        with open(path, "w") as fh:
            fh.write(f"# {stamp}\n")
            fh.write(f"x,poly_normalized,f_{k}{k}_normalized\n")
            for xv, pv, fv in zip(xs, poly, f_nn):
                fh.write(f"{xv:.6g},{pv:.8g},{fv:.8g}\n")
        paths[name] = path
    vac_path = os.path.join(out_dir, "vacuum_sanity.csv")
    with open(vac_path, "w") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("x,vacuum_pdf,f_00\n")
        pdf = np.exp(-xs * xs / 2.0) / np.sqrt(2.0 * np.pi)
        f00 = table.evaluate(0, 0, xs)
        for xv, pv, fv in zip(xs, pdf, f00):
            fh.write(f"{xv:.6g},{pv:.8g},{fv:.8g}\n")
    paths["vacuum"] = vac_path
    return paths


def cmd_selftest(verbose=True):
    """Fast invariant sweep; returns the list of (name, passed) checks."""
    from fractions import Fraction

    from .estimator import WeightedHistogram
    from .fock import TwoModeMixture, beamsplitter, squeezed_vacuum
    from .polynomials import fock_weights, moment_oracle, moment_to_number
    from .sampler import AngleSchedule, GaussianModel, covariance

    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception as exc:  # noqa: BLE001 - selftest reports, not raises
            ok = False
            name = f"{name} ({exc})"
        checks.append((name, ok))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")

    check(
        "moment table matches the integral oracle",
        lambda: all(
            abs(moment_oracle(n, m) - float(moment_to_number(m)(n))) < 1e-8
            for n in (0, 1, 3)
            for m in (2, 4, 6)
        ),
    )
    check(
        "subtraction polynomial zeroes unwanted photon numbers",
        lambda: list(fock_weights(subtraction_polynomial(1, 3), 4)) == [0.0, 2.0, 0.0, 0.0, 8.0],
    )

    def covariance_vs_oracle():
        model = GaussianModel.from_squeezing(0.35)
        state = beamsplitter(squeezed_vacuum(0.35), model.eta)
        mix = TwoModeMixture.from_pure(state)
        mix = mix.apply_loss("a", model.eff_a).apply_loss("b", model.eff_b)
        for phi, theta in ((0.0, 0.0), (0.7, 0.3)):
            va, vb, cv = mix.second_moments(phi, theta)
            ref = covariance(model, phi, theta)
            if max(abs(va - ref.var_a), abs(vb - ref.var_b), abs(cv - ref.cov)) > 1e-8:
                return False
        return True

    check("sampler covariance matches the Fock oracle", covariance_vs_oracle)

    def biorthogonality():
        table = cached_pattern_table(6, 9.0, 0.01)
        from .patterns import build_wavefunctions

        wf = build_wavefunctions(6, 9.0, 0.01)
        return table.biorthogonality_error(wf, m_max=6) < 1e-5

    check("pattern-function sum rules (coarse grid)", biorthogonality)

    def merge_exact():
        from .sampler import RecordBatch

        rng = np.random.default_rng(5)
        full = RecordBatch(
            phi=rng.uniform(0, 2 * np.pi, 4000),
            x_a=rng.standard_normal(4000),
            x_b=rng.standard_normal(4000),
            theta_index=0,
            theta=0.0,
        )
        halves = [
            RecordBatch(
                phi=full.phi[s], x_a=full.x_a[s], x_b=full.x_b[s], theta_index=0, theta=0.0
            )
            for s in (slice(0, 1500), slice(1500, None))
        ]
        w = lambda x, phi: (x * x - 1.0) / 2.0  # noqa: E731
        whole = accumulate([full], w)
        parts = [accumulate([h], w, histogram=WeightedHistogram({0: 0.0})) for h in halves]
        return parts[0].merge(parts[1]).state_digest() == whole.state_digest()

    check("shard merge is bitwise exact", merge_exact)

    def determinism():
        model = GaussianModel.from_squeezing(0.3)
        sched = AngleSchedule(samples_per_angle=2000)
        a = sample_angle(model, sched.angles[3], 2000, 42, theta_index=3)
        b = sample_angle(model, sched.angles[3], 2000, 42, theta_index=3)
        return np.array_equal(a.x_b, b.x_b) and np.array_equal(a.phi, b.phi)

    check("sampling is deterministic from the seed", determinism)

    return checks
