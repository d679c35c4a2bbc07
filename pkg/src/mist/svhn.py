"""Ingestion of the full-image street-number archive (PNG files plus a
MATLAB-v7.3 ``digitStruct.mat`` with per-digit boxes).

Images are filtered to a fixed digit count, resized to a common shape, and
the test stream additionally drops records with small boxes. Labels are kept
for weak supervision; boxes are kept for evaluation only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import h5py
import numpy as np
from PIL import Image

from .records import Instance, SceneRecord

log = logging.getLogger(__name__)

TARGET_SIZE = (60, 240)  # (H, W)
DIGIT_COUNT_FILTER = 2
MIN_TEST_BOX_HEIGHT = 30.0

BBOX_FIELDS = ("height", "left", "top", "width", "label")


def _read_string(f: h5py.File, ref) -> str:
    return "".join(chr(int(c)) for c in np.asarray(f[ref]).flatten())


def _read_bbox_field(f: h5py.File, group, name: str) -> list[float]:
    ds = group[name]
    if ds.dtype == h5py.ref_dtype:
        return [float(np.asarray(f[ds[j, 0]])[0, 0]) for j in range(ds.shape[0])]
    return [float(np.asarray(ds)[0, 0])]


def write_digit_struct(mat_path: Path | str, entries: list[tuple[str, list[dict]]]) -> None:
    """Write the MATLAB-v7.3 bounding-box metadata layout: ``name``/``bbox``
    are (N, 1) reference arrays; multi-digit box fields are (M, 1) reference
    arrays of (1, 1) doubles, single-digit fields are plain (1, 1) doubles.
    """
    with h5py.File(mat_path, "w") as f:
        root = f.create_group("digitStruct")
        refs = f.create_group("#refs#")
        name_ds = root.create_dataset("name", (len(entries), 1), dtype=h5py.ref_dtype)
        bbox_ds = root.create_dataset("bbox", (len(entries), 1), dtype=h5py.ref_dtype)
        for i, (fname, boxes) in enumerate(entries):
            chars = np.array([[ord(ch)] for ch in fname], dtype=np.uint16)
            nd = refs.create_dataset(f"n{i}", data=chars)
            name_ds[i, 0] = nd.ref
            grp = refs.create_group(f"b{i}")
            for fieldname in BBOX_FIELDS:
                values = [b[fieldname] for b in boxes]
                if len(values) == 1:
                    grp.create_dataset(fieldname, data=np.array([[float(values[0])]]))
                else:
                    fd = grp.create_dataset(fieldname, (len(values), 1), dtype=h5py.ref_dtype)
                    for j, v in enumerate(values):
                        vd = refs.create_dataset(f"b{i}_{fieldname}_{j}", data=np.array([[float(v)]]))
                        fd[j, 0] = vd.ref
            bbox_ds[i, 0] = grp.ref


def synthesize_archive(archive_dir: Path | str, n_images: int = 100, seed: int = 23) -> dict:
    """Build a small archive in the standard layout with a known composition,
    for exercising the ingestion filters end to end. Returns the audit counts.

    Composition: two-digit images (a fixed fraction with boxes that fall
    below the test height threshold after resizing), wrong-digit-count
    images, and corrupt entries (missing or unreadable files).
    """
    archive_dir = Path(archive_dir)
    archive_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    n_corrupt = max(1, n_images // 20)
    n_two = max(2, int(n_images * 0.4))
    n_small = max(1, n_two // 4)
    n_wrong = n_images - n_two - n_corrupt

    kinds = ["two"] * (n_two - n_small) + ["small"] * n_small + ["wrong"] * n_wrong + ["corrupt"] * n_corrupt
    rng.shuffle(kinds)

    entries = []
    for i, kind in enumerate(kinds):
        fname = f"{i + 1}.png"
        h = int(rng.integers(50, 120))
        w = int(rng.integers(100, 300))
        n_digits = 2 if kind in ("two", "small", "corrupt") else int(rng.choice([1, 3, 4]))
        boxes = []
        for d in range(n_digits):
            if kind == "small" and d == 0:
                bh = h * 0.3  # lands below the threshold after resize to height 60
            else:
                bh = h * rng.uniform(0.6, 0.85)
            bw = bh * rng.uniform(0.4, 0.7)
            left = rng.uniform(2, max(3, w - bw - 2))
            top = rng.uniform(1, max(2, h - bh - 1))
            boxes.append(
                {"height": bh, "width": bw, "left": left, "top": top, "label": float(rng.integers(1, 11))}
            )
        entries.append((fname, boxes))
        if kind == "corrupt":
            if i % 2 == 0:
                (archive_dir / fname).write_bytes(b"not a png at all")
            # odd corrupt entries: file simply missing
        else:
            pixels = (rng.random((h, w, 3)) * 255).astype(np.uint8)
            Image.fromarray(pixels).save(archive_dir / fname)

    write_digit_struct(archive_dir / "digitStruct.mat", entries)
    return {
        "total": n_images,
        "two_digit": n_two,
        "small_box": n_small,
        "wrong_count": n_wrong,
        "corrupt": n_corrupt,
        "kept_test": n_two - n_small,
        "kept_train": n_two,
    }


def read_digit_struct(mat_path: Path | str) -> list[tuple[str, list[dict]]]:
    """Parse digitStruct.mat into (filename, [per-digit box dicts]) pairs."""
    out = []
    with h5py.File(mat_path, "r") as f:
        names = f["digitStruct"]["name"]
        bboxes = f["digitStruct"]["bbox"]
        for i in range(names.shape[0]):
            fname = _read_string(f, names[i, 0])
            group = f[bboxes[i, 0]]
            fields = {k: _read_bbox_field(f, group, k) for k in BBOX_FIELDS}
            n = len(fields["label"])
            boxes = [{k: fields[k][j] for k in BBOX_FIELDS} for j in range(n)]
            out.append((fname, boxes))
    return out


@dataclass
class IngestStats:
    kept: int = 0
    excluded_count: int = 0  # digit count != filter
    excluded_small_box: int = 0  # test split only
    skipped_corrupt: int = 0
    warnings: list[str] = field(default_factory=list)


def ingest_svhn(
    archive_dir: Path | str,
    split: str,
    target_size: tuple[int, int] = TARGET_SIZE,
    digit_count_filter: int = DIGIT_COUNT_FILTER,
    min_test_box_height: float = MIN_TEST_BOX_HEIGHT,
    stats: IngestStats | None = None,
) -> Iterator[SceneRecord]:
    """Yield filtered, resized records from an extracted archive directory.

    ``split`` controls only the small-box exclusion ('test' applies it).
    Corrupt entries are skipped with a logged warning and counted in ``stats``.
    """
    archive_dir = Path(archive_dir)
    th, tw = target_size
    entries = read_digit_struct(archive_dir / "digitStruct.mat")
    for fname, boxes in entries:
        path = archive_dir / fname
        try:
            with Image.open(path) as im:
                im = im.convert("RGB")
                w0, h0 = im.size
                resized = im.resize((tw, th), Image.BILINEAR)
            image = np.asarray(resized, dtype=np.float32) / 255.0
        except (OSError, ValueError) as e:
            msg = f"skipping {fname}: {e}"
            log.warning(msg)
            if stats is not None:
                stats.skipped_corrupt += 1
                stats.warnings.append(msg)
            continue
        if len(boxes) != digit_count_filter:
            if stats is not None:
                stats.excluded_count += 1
            continue
        sx, sy = tw / w0, th / h0
        instances = []
        ok = True
        for b in boxes:
            try:
                bw, bh = b["width"] * sx, b["height"] * sy
                cx = (b["left"] + b["width"] / 2.0) * sx
                cy = (b["top"] + b["height"] / 2.0) * sy
                label = int(b["label"]) % 10  # archive convention: label 10 means digit 0
            except (KeyError, TypeError, ValueError) as e:
                msg = f"skipping {fname}: bad box metadata ({e})"
                log.warning(msg)
                if stats is not None:
                    stats.skipped_corrupt += 1
                    stats.warnings.append(msg)
                ok = False
                break
            # clip to bounds; source boxes occasionally overhang the frame
            x0 = max(cx - bw / 2, 0.0)
            x1 = min(cx + bw / 2, tw - 0.5)
            y0 = max(cy - bh / 2, 0.0)
            y1 = min(cy + bh / 2, th - 0.5)
            instances.append(Instance(box=((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0), label=label))
        if not ok:
            continue
        if split == "test" and any(inst.box[3] < min_test_box_height for inst in instances):
            if stats is not None:
                stats.excluded_small_box += 1
            continue
        if stats is not None:
            stats.kept += 1
        yield SceneRecord(image=image, instances=instances, meta={"source": fname})
