"""Flat binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic  b"PRSPCKPT"
    uint32    format version (1)
    uint32    header length H
    H bytes   UTF-8 JSON header: kind, seed, dims, annotator ids, trained-head mask,
              vocabulary, resolved config echo, array table [{name, shape}]
    ...       float64 little-endian arrays, row-major, in array-table order
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from ..features import Vocabulary
from .network import EncoderConfig, MultiTaskModel, param_names
from .svm import SvmModel
from .training import EpochRecord, TrainConfig, TrainedModel

MAGIC = b"PRSPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(trained: TrainedModel) -> list[tuple[str, np.ndarray]]:
    if trained.kind == "svm":
        return [("w", trained.svm.w)]
    net = trained.network
    return [(name, net.params[name]) for name in param_names(net.n_layers)]


def to_bytes(trained: TrainedModel, run_config: dict | None = None) -> bytes:
    arrays = _arrays(trained)
    header = {
        "kind": trained.kind,
        "seed": trained.config.seed,
        "annotator_ids": list(trained.annotator_ids),
        "train_config": dataclasses.asdict(trained.config),
        "vocabulary": {"terms": list(trained.vocab.terms), "df": list(trained.vocab.df),
                       "n_docs": trained.vocab.n_docs},
        "best_epoch": trained.best_epoch,
        "stopping_epoch": trained.stopping_epoch,
        "history": [dataclasses.asdict(r) for r in trained.history],
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
        "config": run_config or {},
    }
    if trained.kind == "svm":
        s = trained.svm
        header["svm"] = {"b": s.b, "lam": s.lam, "platt_a": s.platt_a, "platt_b": s.platt_b}
    else:
        net = trained.network
        header["encoder"] = {"input_dim": net.config.input_dim, "hidden_dims": list(net.config.hidden_dims)}
        header["n_heads"] = net.n_heads
        header["trained_heads"] = [bool(x) for x in net.trained_heads]
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays]
    return b"".join(parts)


def read_header(data: bytes) -> tuple[dict, int]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    version, length = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    return json.loads(data[16:16 + length].decode("utf-8")), 16 + length


def from_bytes(data: bytes) -> TrainedModel:
    header, offset = read_header(data)
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"checkpoint truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    cfg_fields = dict(header["train_config"])
    cfg_fields["hidden_dims"] = tuple(cfg_fields["hidden_dims"])
    config = TrainConfig(**cfg_fields)
    vocab_h = header["vocabulary"]
    vocab = Vocabulary(tuple(vocab_h["terms"]), tuple(vocab_h["df"]), vocab_h["n_docs"])
    trained = TrainedModel(header["kind"], tuple(header["annotator_ids"]), vocab, config,
                           history=[EpochRecord(**r) for r in header["history"]],
                           best_epoch=header["best_epoch"], stopping_epoch=header["stopping_epoch"])
    if header["kind"] == "svm":
        s = header["svm"]
        trained.svm = SvmModel(arrays["w"], s["b"], s["lam"], s["platt_a"], s["platt_b"])
    else:
        enc = EncoderConfig(header["encoder"]["input_dim"], tuple(header["encoder"]["hidden_dims"]))
        trained.network = MultiTaskModel(enc, header["n_heads"], arrays, header["seed"],
                                         np.array(header["trained_heads"], dtype=bool))
    return trained


def save(trained: TrainedModel, path, run_config: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(trained, run_config))


def load(path) -> TrainedModel:
    return from_bytes(Path(path).read_bytes())


def embedded_config(path) -> dict:
    header, _ = read_header(Path(path).read_bytes())
    return header.get("config", {})
