"""MNIST ingestion, pairwise tasks, and model/result persistence."""

from __future__ import annotations

import csv
import gzip
import json
import os
import struct
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mps import MpsTopology
from .tree import TreeTopology, build_tree_topology, parameter_count

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MODEL_FORMAT = "tnqml-model"
MODEL_VERSION = 1

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX image (``0x803``) or label (``0x801``) file.

    Gzip-compressed payloads are detected from their magic bytes.
    """
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 8:
        raise IdxFormatError(f"IDX header truncated: {len(data)} bytes")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IMAGE_MAGIC:
        if len(data) < 16:
            raise IdxFormatError(f"IDX image header truncated: {len(data)} bytes")
        count, rows, cols = struct.unpack(">III", data[4:16])
        shape, offset = (count, rows, cols), 16
    elif magic == LABEL_MAGIC:
        (count,) = struct.unpack(">I", data[4:8])
        shape, offset = (count,), 8
    else:
        raise IdxFormatError(f"bad IDX magic number 0x{magic:08x}")
    expected = int(np.prod(shape))
    actual = len(data) - offset
    if actual != expected:
        raise IdxFormatError(f"IDX payload has {actual} bytes, header dims {shape} need {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(shape)


def read_idx(path: str | os.PathLike) -> np.ndarray:
    return parse_idx(Path(path).read_bytes())


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)


def _find(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found in {directory}")


def load_mnist(directory: str | os.PathLike, split: str = "train") -> Dataset:
    if split not in MNIST_FILES:
        raise ValueError(f"split must be one of {sorted(MNIST_FILES)}")
    directory = Path(directory)
    image_name, label_name = MNIST_FILES[split]
    images = read_idx(_find(directory, image_name))
    labels = read_idx(_find(directory, label_name))
    if images.ndim != 3 or labels.ndim != 1:
        raise IdxFormatError("MNIST files have unexpected dimensionality")
    return Dataset(images, labels, split)


@dataclass
class PairTask:
    """Binary task on two digits, relabelled ``digit_a -> 0``, ``digit_b -> 1``."""

    digit_a: int
    digit_b: int
    train: Dataset
    validation: Dataset
    test: Dataset | None = None

    def relabel_map(self) -> dict[int, int]:
        return {self.digit_a: 0, self.digit_b: 1}


def _filter_pair(ds: Dataset, a: int, b: int) -> Dataset:
    mask = (ds.labels == a) | (ds.labels == b)
    if not np.any(ds.labels[mask] == a) or not np.any(ds.labels[mask] == b):
        raise ValueError(f"digit {a} or {b} absent from the {ds.split} split")
    return Dataset(ds.images[mask], (ds.labels[mask] == b).astype(np.uint8), ds.split)


def make_pair_task(
    dataset: Dataset,
    a: int,
    b: int,
    validation_fraction: float = 0.1,
    seed: int = 0,
    test: Dataset | None = None,
) -> PairTask:
    """Filter to digits ``a`` and ``b``, shuffle, and hold out a validation split.

    The digits are sorted so the smaller one maps to label 0.  ``test`` is
    filtered and relabelled the same way but never shuffled or carved.
    """
    if a == b:
        raise ValueError("pair digits must differ")
    a, b = sorted((int(a), int(b)))
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie in [0, 1)")
    pool = _filter_pair(dataset, a, b)
    order = np.random.default_rng(seed).permutation(len(pool))
    n_val = int(round(validation_fraction * len(pool)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    train = Dataset(pool.images[train_idx], pool.labels[train_idx], "train")
    val = Dataset(pool.images[val_idx], pool.labels[val_idx], "validation")
    test_ds = None
    if test is not None:
        t = _filter_pair(test, a, b)
        test_ds = Dataset(t.images, t.labels, "test")
    return PairTask(a, b, train, val, test_ds)


# ---------------------------------------------------------------------------
# Model documents
# ---------------------------------------------------------------------------


@dataclass
class ModelDocument:
    topology: TreeTopology | MpsTopology
    params: np.ndarray
    mode: str = "discriminative"
    metadata: dict = field(default_factory=dict)


def model_to_dict(doc: ModelDocument) -> dict:
    topo = doc.topology
    params = np.asarray(doc.params, dtype=float)
    block = topo.params_per_node
    out = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    out.update(topo.to_dict())
    out["mode"] = doc.mode
    # float repr is the shortest string that round-trips exactly
    out["nodes"] = [params[i * block : (i + 1) * block].tolist() for i in range(topo.n_nodes)]
    out["metadata"] = doc.metadata
    return out


def model_from_dict(obj: Mapping) -> ModelDocument:
    if not isinstance(obj, Mapping) or obj.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model document")
    if obj.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {obj.get('version')!r}")
    try:
        kind = obj["kind"]
        mode = obj.get("mode", "discriminative")
        if kind == "tree":
            topo = build_tree_topology(int(obj["width"]), int(obj["height"]), int(obj["V"]))
        elif kind == "mps":
            topo = MpsTopology(V=int(obj["V"]), n_inputs=int(obj["n"]), mode=mode)
        else:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        order = list(obj["node_order"])
        nodes = obj["nodes"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if order != list(range(topo.n_nodes)) or len(nodes) != topo.n_nodes:
        raise ModelFormatError("node order does not match the topology")
    if any(len(block) != topo.params_per_node for block in nodes):
        raise ModelFormatError("per-node parameter block has the wrong length")
    params = np.asarray([v for block in nodes for v in block], dtype=float)
    if params.shape != (parameter_count(topo),):
        raise ModelFormatError("parameter count does not match the topology")
    return ModelDocument(topo, params, mode, dict(obj.get("metadata", {})))


def save_model(path: str | os.PathLike, doc: ModelDocument) -> None:
    Path(path).write_text(json.dumps(model_to_dict(doc), indent=1) + "\n")


def load_model(path: str | os.PathLike) -> ModelDocument:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    return model_from_dict(obj)


# ---------------------------------------------------------------------------
# Results tables
# ---------------------------------------------------------------------------

RESULT_COLUMNS = (
    "pair_a",
    "pair_b",
    "seed",
    "architecture",
    "p_a",
    "p_d",
    "epoch",
    "train_loss",
    "validation_accuracy",
    "test_accuracy",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(records: Iterable[Mapping], path: str | os.PathLike) -> None:
    """Write result rows with the fixed :data:`RESULT_COLUMNS` header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            writer.writerow([_cell(rec.get(col)) for col in RESULT_COLUMNS])


_INT_COLUMNS = {"pair_a", "pair_b", "seed"}
_FLOAT_COLUMNS = {"p_a", "p_d", "train_loss", "validation_accuracy", "test_accuracy"}


def read_results(path: str | os.PathLike) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row: dict = {}
            for key, value in raw.items():
                if value == "":
                    row[key] = None
                elif key in _INT_COLUMNS:
                    row[key] = int(value)
                elif key in _FLOAT_COLUMNS:
                    row[key] = float(value)
                elif key == "epoch" and value != "final":
                    row[key] = int(value)
                else:
                    row[key] = value
            rows.append(row)
    return rows
