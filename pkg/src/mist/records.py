"""Scene records and the on-disk dataset store.

A dataset split lives in one directory as a raw tensor file ``images.bin``
(concatenated C-order float32 arrays) plus a human-readable ``index.json``
sidecar listing per-record byte offset, shape, and instance annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INDEX_NAME = "index.json"
IMAGES_NAME = "images.bin"


@dataclass
class Instance:
    """One annotated object: center-format box in pixels plus a class label."""

    box: tuple[float, float, float, float]  # (cx, cy, w, h)
    label: int

    def to_json(self) -> dict:
        return {"box": [float(v) for v in self.box], "label": int(self.label)}

    @staticmethod
    def from_json(obj: dict) -> "Instance":
        return Instance(box=tuple(obj["box"]), label=int(obj["label"]))


@dataclass
class SceneRecord:
    """A generated image with ground-truth instances.

    Annotations are used only for data synthesis and evaluation, never as a
    training signal.
    """

    image: np.ndarray  # (H, W, C) float32 in [0, 1]
    instances: list[Instance]
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.instances)

    def validate(self) -> None:
        if self.image.ndim != 3:
            raise ValueError(f"image must be (H, W, C), got shape {self.image.shape}")
        lo, hi = float(self.image.min(initial=0.0)), float(self.image.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
        h, w = self.image.shape[:2]
        for inst in self.instances:
            cx, cy, bw, bh = inst.box
            if bw <= 0 or bh <= 0:
                raise ValueError(f"degenerate box {inst.box}")
            if cx - bw / 2 < -0.5 or cx + bw / 2 > w - 0.5 or cy - bh / 2 < -0.5 or cy + bh / 2 > h - 0.5:
                raise ValueError(f"box {inst.box} exceeds image bounds {w}x{h}")


class DatasetWriter:
    """Streams SceneRecords into ``<root>/<split>/images.bin`` + ``index.json``."""

    def __init__(self, root: Path | str, split: str, meta: dict | None = None):
        self.dir = Path(root) / split
        self.dir.mkdir(parents=True, exist_ok=True)
        self._bin = open(self.dir / IMAGES_NAME, "wb")
        self._entries: list[dict] = []
        self._offset = 0
        self._meta = dict(meta or {})

    def append(self, record: SceneRecord) -> None:
        arr = np.ascontiguousarray(record.image, dtype=np.float32)
        self._bin.write(arr.tobytes())
        self._entries.append(
            {
                "offset": self._offset,
                "shape": list(arr.shape),
                "dtype": "float32",
                "instances": [inst.to_json() for inst in record.instances],
                "meta": record.meta,
            }
        )
        self._offset += arr.nbytes

    def close(self) -> None:
        self._bin.close()
        index = {"meta": self._meta, "records": self._entries}
        with open(self.dir / INDEX_NAME, "w") as f:
            json.dump(index, f)

    def __enter__(self) -> "DatasetWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class Dataset:
    """Random-access reader over a written split (memory-mapped images)."""

    def __init__(self, root: Path | str, split: str):
        self.dir = Path(root) / split
        with open(self.dir / INDEX_NAME) as f:
            index = json.load(f)
        self.meta = index["meta"]
        self._entries = index["records"]
        self._mmap = np.memmap(self.dir / IMAGES_NAME, dtype=np.uint8, mode="r")

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> SceneRecord:
        e = self._entries[i]
        shape = tuple(e["shape"])
        nbytes = int(np.prod(shape)) * 4
        raw = self._mmap[e["offset"] : e["offset"] + nbytes]
        image = np.frombuffer(raw, dtype=np.float32).reshape(shape).copy()
        instances = [Instance.from_json(o) for o in e["instances"]]
        return SceneRecord(image=image, instances=instances, meta=e.get("meta", {}))

    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self._entries[0]["shape"])


def write_records(root: Path | str, split: str, records, meta: dict | None = None) -> int:
    """Materialize an iterable of records; returns the number written."""
    n = 0
    with DatasetWriter(root, split, meta=meta) as w:
        for rec in records:
            w.append(rec)
            n += 1
    return n
