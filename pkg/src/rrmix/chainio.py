"""Chain persistence: a columnar binary format, CSV export and run manifests.

Binary layout (little-endian)::

    8 bytes   magic  b"RRMXCHN1"
    u32       format version (1)
    u32       flags  (bit 0: latent traces follow)
    u64       m  retained draws
    u64       P  columns
    u64       n  loans (0 without latent traces)
    u64       H  header length in bytes
    H bytes   UTF-8 JSON header: names, meta, S_mean, invariant_passes
    m*P f64   draws, column-major (one contiguous block per column)
    m*n f64   z trace          (flag bit 0 only)
    m*n i64   z* trace         (flag bit 0 only)

Run-time facts that vary between otherwise identical runs (wall time, thread
count) stay out of the chain file and go to the manifest instead.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .engine import Chain
from .errors import IngestionError

MAGIC = b"RRMXCHN1"
VERSION = 1
_FIXED = struct.Struct("<8sIIQQQQ")
VOLATILE_META = ("wall_time_s",)
VOLATILE_CONFIG = ("threads",)


def _stable_meta(meta):
    out = {k: v for k, v in meta.items() if k not in VOLATILE_META}
    out["config"] = {k: v for k, v in meta["config"].items() if k not in VOLATILE_CONFIG}
    return out


def _header(chain):
    return {
        "names": list(chain.names),
        "meta": _stable_meta(chain.meta),
        "S_mean": None if chain.S_mean is None else [float(v) for v in chain.S_mean],
        "invariant_passes": dict(chain.invariant_passes),
    }


def write_chain(chain: Chain, path):
    path = Path(path)
    header = json.dumps(_header(chain), sort_keys=True, allow_nan=True).encode("utf-8")
    latent = chain.z is not None and chain.zstar is not None
    m, P = chain.draws.shape
    n = chain.z.shape[1] if latent else 0
    with open(path, "wb") as fh:
        fh.write(_FIXED.pack(MAGIC, VERSION, int(latent), m, P, n, len(header)))
        fh.write(header)
        fh.write(np.asfortranarray(chain.draws, dtype="<f8").tobytes(order="F"))
        if latent:
            fh.write(np.ascontiguousarray(chain.z, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(chain.zstar, dtype="<i8").tobytes())
    return path


def read_chain(path) -> Chain:
    """Load a chain written by :func:`write_chain` or :func:`write_chain_csv`."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_FIXED.size)
        if head[:8] != MAGIC:
            fh.close()
            return read_chain_csv(path)
        if len(head) < _FIXED.size:
            raise IngestionError(f"{path}: truncated chain header")
        _, version, flags, m, P, n, H = _FIXED.unpack(head)
        if version != VERSION:
            raise IngestionError(f"{path}: unsupported chain format version {version}")
        hdr = json.loads(fh.read(H).decode("utf-8"))
        raw = fh.read(8 * m * P)
        if len(raw) != 8 * m * P:
            raise IngestionError(f"{path}: truncated draw block")
        draws = np.frombuffer(raw, dtype="<f8").reshape((m, P), order="F").astype(float)
        z = zstar = None
        if flags & 1:
            z = np.frombuffer(fh.read(8 * m * n), dtype="<f8").reshape(m, n).astype(float)
            zstar = np.frombuffer(fh.read(8 * m * n), dtype="<i8").reshape(m, n).astype(np.int64)
    return _assemble(hdr, draws, z, zstar)


def _assemble(hdr, draws, z=None, zstar=None):
    if len(hdr["names"]) != draws.shape[1]:
        raise IngestionError("chain header and draw block disagree on the column count")
    sm = hdr.get("S_mean")
    return Chain(
        names=list(hdr["names"]),
        draws=draws,
        meta=hdr["meta"],
        S_mean=None if sm is None else np.asarray(sm, dtype=float),
        z=z,
        zstar=zstar,
        invariant_passes=hdr.get("invariant_passes", {}),
    )


def _csv_meta_path(path):
    return Path(path).with_suffix(".meta.json")


def write_chain_csv(chain: Chain, path):
    """Draws as CSV (one header row of column names) plus a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(chain.names)
        for row in chain.draws:
            w.writerow([repr(float(v)) for v in row])
    _csv_meta_path(path).write_text(json.dumps(_header(chain), sort_keys=True, indent=1),
                                    encoding="utf-8")
    return path


def read_chain_csv(path) -> Chain:
    path = Path(path)
    meta_path = _csv_meta_path(path)
    if not meta_path.exists():
        raise IngestionError(f"{path}: not a binary chain and no {meta_path.name} sidecar")
    hdr = json.loads(meta_path.read_text(encoding="utf-8"))
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != hdr["names"]:
        raise IngestionError(f"{path}: CSV header does not match the sidecar column names")
    draws = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    draws = draws.reshape(len(rows) - 1, len(hdr["names"]))
    return _assemble(hdr, draws)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest(chains, dataset_path, outputs, extra=None):
    """Run manifest: resolved config, seeds, timings and invariant tallies."""
    first = chains[0]
    doc = {
        "config": first.meta["config"],
        "hyperparams": first.meta["hyperparams"],
        "dataset": str(dataset_path),
        "dataset_sha256": file_sha256(dataset_path) if dataset_path else None,
        "backend": first.meta.get("backend"),
        "chains": [
            {
                "chain_id": c.meta["chain_id"],
                "seed_entropy": c.meta["seed_entropy"],
                "spawn_key": c.meta["spawn_key"],
                "retained": len(c),
                "wall_time_s": c.meta.get("wall_time_s"),
                "invariant_passes": c.invariant_passes,
                "invariant_pass_rate": {
                    k: (v / len(c) if len(c) else None) for k, v in c.invariant_passes.items()
                },
            }
            for c in chains
        ],
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        doc.update(extra)
    return doc


def write_manifest(doc, path):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return path
