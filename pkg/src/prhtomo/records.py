"""PRHT record files: little-endian binary shot storage plus CSV export.

Layout:
    header  {magic "PRHT", version u32, seed u64,
             v_sq f64, v_anti f64, tap_power f64, eff_a f64, eff_b f64,
             n_records u64}                                   -- 64 bytes
    records {phi f64, x_a f64, theta_index u16, pad u16 x 3, x_b f64}  -- 32 bytes
"""

import struct
from dataclasses import dataclass

import numpy as np

from .sampler import GaussianModel, RecordBatch

MAGIC = b"PRHT"
VERSION = 1

_HEADER = struct.Struct("<4sIQ5dQ")
HEADER_SIZE = _HEADER.size  # 64

RECORD_DTYPE = np.dtype(
    [
        ("phi", "<f8"),
        ("x_a", "<f8"),
        ("theta_index", "<u2"),
        ("pad", "<u2", (3,)),
        ("x_b", "<f8"),
    ]
)
assert RECORD_DTYPE.itemsize == 32


@dataclass(frozen=True)
class RecordHeader:
    seed: int
    model: GaussianModel
    n_records: int

    def pack(self):
        return _HEADER.pack(
            MAGIC,
            VERSION,
            self.seed,
            self.model.v_sq,
            self.model.v_anti,
            self.model.tap_power,
            self.model.eff_a,
            self.model.eff_b,
            self.n_records,
        )

    @classmethod
    def unpack(cls, raw):
        magic, version, seed, v_sq, v_anti, tap, eff_a, eff_b, n_records = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"not a PRHT file (magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported PRHT version {version}")
        model = GaussianModel(
            v_sq=v_sq, v_anti=v_anti, tap_power=tap, eff_a=eff_a, eff_b=eff_b
        )
        return cls(seed=seed, model=model, n_records=n_records)


def batch_to_structured(batch):
    out = np.zeros(len(batch), dtype=RECORD_DTYPE)
    out["phi"] = batch.phi
    out["x_a"] = batch.x_a
    out["theta_index"] = batch.theta_index
    out["x_b"] = batch.x_b
    return out


class RecordWriter:
    """Streaming PRHT writer; the record count is patched on close."""

    def __init__(self, path, seed, model):
        self.path = path
        self.seed = seed
        self.model = model
        self.n_records = 0
        self._fh = open(path, "wb")
        self._fh.write(RecordHeader(seed=seed, model=model, n_records=0).pack())

    def write_batch(self, batch):
        arr = batch if isinstance(batch, np.ndarray) else batch_to_structured(batch)
        arr.tofile(self._fh)
        self.n_records += arr.size

    def close(self):
        header = RecordHeader(seed=self.seed, model=self.model, n_records=self.n_records)
        self._fh.seek(0)
        self._fh.write(header.pack())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_records(path, seed, model, batches):
    with RecordWriter(path, seed, model) as writer:
        for batch in batches:
            writer.write_batch(batch)
        return writer.n_records


def read_header(path):
    with open(path, "rb") as fh:
        return RecordHeader.unpack(fh.read(HEADER_SIZE))


def iter_record_chunks(path, chunk_records=2_000_000):
    """Yield structured-array chunks without loading the whole file."""
    header = read_header(path)
    remaining = header.n_records
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        while remaining > 0:
            count = min(chunk_records, remaining)
            arr = np.fromfile(fh, dtype=RECORD_DTYPE, count=count)
            if arr.size == 0:
                raise ValueError("record file truncated relative to its header")
            remaining -= arr.size
            yield arr


def read_batches(path, angles):
    """Load a whole file grouped per tomography angle.

    `angles` maps theta_index -> theta (radians); by default index i means
    15 degrees * i, matching the production schedule.
    """
    groups = {}
    for chunk in iter_record_chunks(path):
        for idx in np.unique(chunk["theta_index"]):
            sel = chunk[chunk["theta_index"] == idx]
            groups.setdefault(int(idx), []).append(sel)
    batches = []
    for idx in sorted(groups):
        arr = np.concatenate(groups[idx])
        batches.append(
            RecordBatch(
                phi=arr["phi"].copy(),
                x_a=arr["x_a"].copy(),
                x_b=arr["x_b"].copy(),
                theta_index=idx,
                theta=float(angles[idx]),
            )
        )
    return batches


def export_csv(path, csv_path, angles):
    """CSV export with columns phi,x_a,theta_deg,x_b."""
    with open(csv_path, "w") as fh:
        fh.write("phi,x_a,theta_deg,x_b\n")
        for chunk in iter_record_chunks(path):
            theta_deg = np.degrees([angles[int(i)] for i in chunk["theta_index"]])
            for row, deg in zip(chunk, theta_deg):
                fh.write(
                    f"{row['phi']:.9g},{row['x_a']:.9g},{deg:.6g},{row['x_b']:.9g}\n"
                )
