"""Binary trajectory files.

Layout: one UTF-8 JSON header line terminated by ``\\n``, followed by raw
little-endian float64 blocks (sample times, positions, velocities) in the
order and shapes listed in the header.  ``content_hash`` is the git blob
SHA-1 of the binary payload.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from ..errors import IoFailure
from ..fileio import atomic_write
from .engine import Trajectory

FORMAT = "iontransport-trajectory"
VERSION = 1
BLOCKS = ("sample_times", "positions", "velocities")
UNITS = {"sample_times": "s", "positions": "l", "velocities": "l*omega_z", "dt": "1/omega_z", "dt_s": "s"}


def git_blob_sha1(payload: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(payload))
    h.update(payload)
    return h.hexdigest()


def _payload(traj: Trajectory):
    blocks, offset, chunks = [], 0, []
    for name in BLOCKS:
        arr = np.ascontiguousarray(getattr(traj, name), dtype="<f8")
        raw = arr.tobytes()
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        offset += len(raw)
        chunks.append(raw)
    return blocks, b"".join(chunks)


def save_trajectory(traj: Trajectory, path) -> str:
    """Write ``traj`` atomically; returns the content hash."""
    blocks, payload = _payload(traj)
    meta = traj.metadata
    header = {
        "format": FORMAT,
        "version": VERSION,
        "n_ions": traj.n_ions,
        "n_samples": traj.n_samples,
        "dt": meta.get("dt"),
        "dt_s": meta.get("dt_s"),
        "seed": meta.get("seed"),
        "units": UNITS,
        "dtype": "float64",
        "byteorder": "little",
        "blocks": blocks,
        "content_hash": git_blob_sha1(payload),
        "metadata": meta,
    }
    line = json.dumps(header, sort_keys=True).encode() + b"\n"
    atomic_write(path, line + payload)
    return header["content_hash"]


def read_header(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return json.loads(fh.readline())
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read trajectory header {path}: {exc}") from exc


def load_trajectory(path) -> Trajectory:
    """Read a trajectory file, verifying the content hash."""
    try:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            payload = fh.read()
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read trajectory {path}: {exc}") from exc
    if header.get("format") != FORMAT:
        raise IoFailure(f"{path} is not a trajectory file")
    if git_blob_sha1(payload) != header["content_hash"]:
        raise IoFailure(f"{path}: content hash mismatch")
    arrays = {}
    for block in header["blocks"]:
        raw = payload[block["offset"]:block["offset"] + block["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(block["shape"]).astype(float)
        arr.setflags(write=False)
        arrays[block["name"]] = arr
    return Trajectory(arrays["sample_times"], arrays["positions"], arrays["velocities"], header["metadata"])
