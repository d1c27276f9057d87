"""Dataset file format ``swssb-dataset/1``.

Line 1 is a JSON header (sorted keys) with the format tag, model params,
campaign config and round count.  Each following line is one round::

    <axes> <rho shot 1> ... <rho shot M_rho> <tilde shot 1> ... <tilde shot M_tilde>

``axes`` is N characters over ``xyz``; each shot is N characters, ``+`` for
outcome +1 and ``-`` for -1.  All round lines have the same width, so the
body is read back as a fixed-width byte matrix.  Paths ending in ``.gz``
are gzip-compressed.
"""
from __future__ import annotations

import gzip
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .protocol import CampaignConfig, MeasurementDataset
from .quantum_core import ModelParams

FORMAT_TAG = "swssb-dataset/1"
_AXIS_BYTES = np.frombuffer(b"xyz", dtype=np.uint8)
_PLUS, _MINUS, _SPACE, _NEWLINE = (ord(c) for c in "+- \n")


def _open(path: Path, mode: str):
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def header_for(dataset: MeasurementDataset) -> dict:
    return {
        "format": FORMAT_TAG,
        "params": asdict(dataset.params),
        "config": asdict(dataset.config),
        "n_rounds": len(dataset),
    }


def encode_rounds(dataset: MeasurementDataset) -> bytes:
    n = dataset.params.n_qubits
    fields = [_AXIS_BYTES[dataset.bases]]
    for shots in (dataset.rho_outcomes, dataset.tilde_outcomes):
        for m in range(shots.shape[1]):
            fields.append(np.where(shots[:, m, :] > 0, _PLUS, _MINUS).astype(np.uint8))
    rounds = len(dataset)
    sep = np.full((rounds, 1), _SPACE, dtype=np.uint8)
    parts = []
    for f in fields:
        parts += [f, sep]
    parts[-1] = np.full((rounds, 1), _NEWLINE, dtype=np.uint8)
    body = np.concatenate(parts, axis=1) if rounds else np.zeros((0, n), dtype=np.uint8)
    return body.tobytes()


def save_dataset(dataset: MeasurementDataset, path) -> None:
    path = Path(path)
    header = json.dumps(header_for(dataset), sort_keys=True, separators=(",", ":"))
    # empty name and mtime=0 keep gzip output byte-identical across runs
    if path.suffix == ".gz":
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(header.encode() + b"\n" + encode_rounds(dataset))
    else:
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n" + encode_rounds(dataset))


def load_dataset(path) -> MeasurementDataset:
    path = Path(path)
    with _open(path, "rb") as fh:
        blob = fh.read()
    head, _, body = blob.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported dataset format {header.get('format')!r}")
    params = ModelParams(**header["params"])
    cfg = header["config"]
    if cfg.get("pair") is not None:
        cfg["pair"] = tuple(cfg["pair"])
    config = CampaignConfig(**cfg)
    n, m_rho, m_tilde = params.n_qubits, config.shots_rho, config.shots_tilde
    rounds = header["n_rounds"]
    width = (1 + m_rho + m_tilde) * (n + 1)
    raw = np.frombuffer(body, dtype=np.uint8)
    if raw.size != rounds * width:
        raise ValueError(f"expected {rounds} rounds of width {width}, got {raw.size} bytes")
    raw = raw.reshape(rounds, width)
    fields = [raw[:, f * (n + 1) : f * (n + 1) + n] for f in range(1 + m_rho + m_tilde)]
    lut = np.full(256, 255, dtype=np.uint8)
    lut[_AXIS_BYTES] = np.arange(3, dtype=np.uint8)
    bases = lut[fields[0]]
    if (bases == 255).any():
        raise ValueError("axis field contains characters outside 'xyz'")

    def decode(chunk):
        if not np.isin(chunk, (_PLUS, _MINUS)).all():
            raise ValueError("outcome field contains characters other than '+'/'-'")
        return np.where(chunk == _PLUS, 1, -1).astype(np.int8)

    rho = np.stack([decode(f) for f in fields[1 : 1 + m_rho]], axis=1) if rounds else np.zeros((0, m_rho, n), np.int8)
    tilde = (
        np.stack([decode(f) for f in fields[1 + m_rho :]], axis=1) if rounds else np.zeros((0, m_tilde, n), np.int8)
    )
    return MeasurementDataset(params, config, bases, rho, tilde)
