"""Run configuration: strict parsing, validation, canonical hashing.

Configs are plain JSON documents; unknown keys are rejected at every level
so a run is fully described by its file.  The only environment override is
the output directory (PRHT_OUT_DIR).
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .sampler import AngleSchedule, GaussianModel

DEFAULT_SQUEEZING_R = 0.35
DEFAULT_SAMPLES_PER_ANGLE = 1_000_000
DEFAULT_M_MAX = 7
DEFAULT_TABLE_M = 12


def _take(d, allowed, context):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    return d


def _build_model(raw):
    raw = _take(
        raw,
        {"r", "resource_efficiency", "v_sq", "v_anti", "tap_power", "eff_a", "eff_b"},
        "model",
    )
    common = {
        k: float(raw[k]) for k in ("tap_power", "eff_a", "eff_b") if k in raw
    }
    try:
        if "r" in raw:
            if "v_sq" in raw or "v_anti" in raw:
                raise ConfigError("give either r or (v_sq, v_anti), not both")
            return GaussianModel.from_squeezing(
                float(raw["r"]),
                resource_efficiency=float(raw.get("resource_efficiency", 1.0)),
                **common,
            )
        if "v_sq" in raw or "v_anti" in raw:
            if "v_sq" not in raw or "v_anti" not in raw:
                raise ConfigError("v_sq and v_anti must be given together")
            if "resource_efficiency" in raw:
                raise ConfigError("resource_efficiency applies only with r")
            return GaussianModel(
                v_sq=float(raw["v_sq"]), v_anti=float(raw["v_anti"]), **common
            )
        return GaussianModel.from_squeezing(DEFAULT_SQUEEZING_R, **common)
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc


def _build_schedule(raw):
    raw = _take(raw, {"angles_deg", "samples_per_angle"}, "schedule")
    angles_deg = raw.get("angles_deg", list(range(0, 180, 15)))
    try:
        return AngleSchedule(
            angles=tuple(np.deg2rad(a) for a in angles_deg),
            samples_per_angle=int(raw.get("samples_per_angle", DEFAULT_SAMPLES_PER_ANGLE)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc


@dataclass(frozen=True)
class ConditioningConfig:
    """Conditioning spec: none, a subtraction polynomial, raw polynomial
    coefficients in n, or a diagonal pattern function."""

    type: str = "none"
    k: int | None = None
    j_max: int | None = None
    coeffs: tuple | None = None
    n: int | None = None

    @classmethod
    def from_dict(cls, raw):
        kind = raw.get("type")
        if kind == "none":
            _take(raw, {"type"}, "conditioning")
            return cls(type="none")
        if kind == "polynomial":
            _take(raw, {"type", "k", "j_max"}, "conditioning")
            try:
                return cls(type="polynomial", k=int(raw["k"]), j_max=int(raw["j_max"]))
            except KeyError as exc:
                raise ConfigError(f"polynomial conditioning needs {exc}") from exc
        if kind == "raw_number_poly":
            _take(raw, {"type", "coeffs"}, "conditioning")
            if "coeffs" not in raw or not raw["coeffs"]:
                raise ConfigError("raw_number_poly needs non-empty coeffs")
            return cls(type="raw_number_poly", coeffs=tuple(raw["coeffs"]))
        if kind == "pattern":
            _take(raw, {"type", "n"}, "conditioning")
            if "n" not in raw:
                raise ConfigError("pattern conditioning needs n")
            return cls(type="pattern", n=int(raw["n"]))
        raise ConfigError(f"unknown conditioning type {kind!r}")

    def label(self):
        if self.type == "none":
            return "unconditioned"
        if self.type == "polynomial":
            return f"poly_k{self.k}_jmax{self.j_max}"
        if self.type == "raw_number_poly":
            return "raw_poly"
        return f"pattern_F{self.n}{self.n}"

    def to_dict(self):
        out = {"type": self.type}
        if self.type == "polynomial":
            out.update(k=self.k, j_max=self.j_max)
        elif self.type == "raw_number_poly":
            out.update(coeffs=list(self.coeffs))
        elif self.type == "pattern":
            out.update(n=self.n)
        return out


@dataclass(frozen=True)
class ReconstructionConfig:
    m_max: int = DEFAULT_M_MAX
    bin_range: float = 8.0
    n_bins: int = 401
    wigner_extent: float = 4.0
    wigner_points: int = 161
    table_m_max: int = DEFAULT_TABLE_M
    table_x_max: float = 10.0
    table_h: float = 0.005

    @classmethod
    def from_dict(cls, raw):
        raw = _take(
            raw,
            {
                "m_max",
                "bin_range",
                "n_bins",
                "wigner_extent",
                "wigner_points",
                "table_m_max",
                "table_x_max",
                "table_h",
            },
            "reconstruction",
        )
        kwargs = {}
        for key, cast in (
            ("m_max", int),
            ("bin_range", float),
            ("n_bins", int),
            ("wigner_extent", float),
            ("wigner_points", int),
            ("table_m_max", int),
            ("table_x_max", float),
            ("table_h", float),
        ):
            if key in raw:
                kwargs[key] = cast(raw[key])
        cfg = cls(**kwargs)
        if cfg.m_max > cfg.table_m_max:
            raise ConfigError("m_max cannot exceed table_m_max")
        if cfg.wigner_points % 2 == 0:
            raise ConfigError("wigner_points must be odd so the grid contains the origin")
        return cfg


@dataclass(frozen=True)
class RunConfig:
    model: GaussianModel = field(default_factory=lambda: _build_model({}))
    schedule: AngleSchedule = field(default_factory=lambda: _build_schedule({}))
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    seed: int = 0
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, raw):
        raw = _take(
            raw,
            {"model", "schedule", "conditioning", "reconstruction", "seed", "out_dir"},
            "config",
        )
        return cls(
            model=_build_model(dict(raw.get("model", {}))),
            schedule=_build_schedule(dict(raw.get("schedule", {}))),
            conditioning=ConditioningConfig.from_dict(dict(raw.get("conditioning", {"type": "none"}))),
            reconstruction=ReconstructionConfig.from_dict(dict(raw.get("reconstruction", {}))),
            seed=int(raw.get("seed", 0)),
            out_dir=os.environ.get("PRHT_OUT_DIR", str(raw.get("out_dir", "out"))),
        )

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self):
        return {
            "model": {
                "v_sq": self.model.v_sq,
                "v_anti": self.model.v_anti,
                "tap_power": self.model.tap_power,
                "eff_a": self.model.eff_a,
                "eff_b": self.model.eff_b,
            },
            "schedule": {
                "angles_deg": [float(np.degrees(a)) for a in self.schedule.angles],
                "samples_per_angle": self.schedule.samples_per_angle,
            },
            "conditioning": self.conditioning.to_dict(),
            "reconstruction": {
                "m_max": self.reconstruction.m_max,
                "bin_range": self.reconstruction.bin_range,
                "n_bins": self.reconstruction.n_bins,
                "wigner_extent": self.reconstruction.wigner_extent,
                "wigner_points": self.reconstruction.wigner_points,
                "table_m_max": self.reconstruction.table_m_max,
                "table_x_max": self.reconstruction.table_x_max,
                "table_h": self.reconstruction.table_h,
            },
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()
