"""Directory-tree and CSV scanning for the MURA layout.

Expected layout, per split:
    <root>/<split>/XR_<PART>/patient<NNNNN>/study<K>_<positive|negative>/image<M>.png
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from pathlib import Path

from ..errors import DatasetError, MalformedLabelError
from .types import (
    BodyPart,
    DatasetSummary,
    Manifest,
    Split,
    StudyLabel,
    StudyRecord,
    default_root,
)

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


def _study_label(dir_name: str, path: Path) -> StudyLabel:
    if dir_name.endswith("_positive"):
        return StudyLabel.ABNORMAL
    if dir_name.endswith("_negative"):
        return StudyLabel.NORMAL
    raise MalformedLabelError(path)


def scan_dataset(root: str | Path, split: Split | str) -> Manifest:
    """Walk one split of a MURA-style tree and build a Manifest.

    Studies are ordered lexicographically by path.  The label comes from
    the study directory suffix (`_positive` -> ABNORMAL).  Study folders
    containing no images are skipped and recorded in the manifest's
    diagnostics list.
    """
    if isinstance(split, str):
        split = Split(split.lower())
    root = default_root(root)
    split_dir = root / split.value
    if not split_dir.is_dir():
        raise FileNotFoundError(
            f"split directory {str(split_dir)!r} does not exist"
        )

    studies: list[StudyRecord] = []
    diagnostics: list[str] = []

    for part_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        body_part = BodyPart.from_dir_name(part_dir.name)
        for patient_dir in sorted(p for p in part_dir.iterdir() if p.is_dir()):
            for study_dir in sorted(p for p in patient_dir.iterdir() if p.is_dir()):
                label = _study_label(study_dir.name, study_dir)
                images = tuple(
                    str(p.resolve())
                    for p in sorted(study_dir.iterdir())
                    if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
                )
                if not images:
                    msg = f"skipped empty study directory {study_dir}"
                    log.warning(msg)
                    diagnostics.append(msg)
                    continue
                stem = study_dir.name.rsplit("_", 1)[0]
                study_id = f"{part_dir.name}/{patient_dir.name}/{stem}"
                studies.append(
                    StudyRecord(
                        study_id=study_id,
                        patient_id=patient_dir.name,
                        body_part=body_part,
                        label=label,
                        image_paths=images,
                    )
                )

    return Manifest(
        split=split, root=str(root), studies=studies, diagnostics=diagnostics
    )


def summarize(manifest: Manifest) -> DatasetSummary:
    """Count studies per (body part, label) cell plus study/image totals."""
    cells: Counter = Counter()
    images = 0
    for s in manifest.studies:
        cells[(s.body_part, s.label)] += 1
        images += len(s.image_paths)
    return DatasetSummary(
        split=manifest.split,
        cells=dict(cells),
        total_studies=len(manifest.studies),
        total_images=images,
    )


CSV_COLUMNS = ["study_id", "patient_id", "body_part", "label", "image_path"]


def export_manifest_csv(manifest: Manifest, path: str | Path) -> None:
    """Write the flat manifest CSV (one row per image)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in manifest.studies:
            for p in s.image_paths:
                writer.writerow(
                    [s.study_id, s.patient_id, s.body_part.value, s.label.value, p]
                )


def import_manifest_csv(
    path: str | Path, split: Split | str = Split.VALID, check_paths: bool = True
) -> Manifest:
    """Rebuild a Manifest from the flat CSV written by export_manifest_csv.

    Rows are grouped by study_id in file order; every image path must
    exist on disk unless `check_paths` is disabled.
    """
    if isinstance(split, str):
        split = Split(split.lower())
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise DatasetError(f"manifest CSV missing columns: {sorted(missing)}")
        for row in reader:
            sid = row["study_id"]
            if sid not in groups:
                groups[sid] = {
                    "patient_id": row["patient_id"],
                    "body_part": BodyPart(row["body_part"]),
                    "label": StudyLabel(row["label"]),
                    "paths": [],
                }
                order.append(sid)
            if check_paths and not Path(row["image_path"]).is_file():
                raise FileNotFoundError(
                    f"image listed in manifest does not exist: {row['image_path']!r}"
                )
            groups[sid]["paths"].append(row["image_path"])

    studies = [
        StudyRecord(
            study_id=sid,
            patient_id=g["patient_id"],
            body_part=g["body_part"],
            label=g["label"],
            image_paths=tuple(g["paths"]),
        )
        for sid, g in ((sid, groups[sid]) for sid in order)
    ]
    return Manifest(split=split, root=str(Path(path).parent), studies=studies)


def manifest_from_image_paths_csv(
    csv_path: str | Path, data_root: str | Path, split: Split | str
) -> Manifest:
    """Build a Manifest from a MURA `*_image_paths.csv` file.

    Each line holds one image path like
    `MURA-v1.1/train/XR_WRIST/patient00001/study1_positive/image1.png`,
    relative to the directory that contains `MURA-v1.1`.  The directory
    scan is authoritative when both sources exist; this is a convenience
    for working from the shipped CSVs alone.
    """
    if isinstance(split, str):
        split = Split(split.lower())
    data_root = Path(data_root)
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(csv_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            rel = row[0].strip()
            parts = Path(rel).parts
            # ... / <split> / XR_<PART> / patient / study_label / image
            if len(parts) < 5:
                raise DatasetError(f"unrecognized image path {rel!r}")
            part_dir, patient, study = parts[-4], parts[-3], parts[-2]
            label = _study_label(study, Path(rel))
            stem = study.rsplit("_", 1)[0]
            sid = f"{part_dir}/{patient}/{stem}"
            full = data_root / rel
            if not full.is_file():
                raise FileNotFoundError(f"image does not exist: {str(full)!r}")
            if sid not in groups:
                groups[sid] = {
                    "patient_id": patient,
                    "body_part": BodyPart.from_dir_name(part_dir),
                    "paths": [],
                    "label": label,
                }
                order.append(sid)
            groups[sid]["paths"].append(str(full.resolve()))

    studies = [
        StudyRecord(
            study_id=sid,
            patient_id=g["patient_id"],
            body_part=g["body_part"],
            label=g["label"],
            image_paths=tuple(sorted(g["paths"])),
        )
        for sid, g in ((sid, groups[sid]) for sid in sorted(order))
    ]
    return Manifest(split=split, root=str(data_root), studies=studies)
