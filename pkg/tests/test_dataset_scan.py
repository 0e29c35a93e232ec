"""Directory scanning, census summaries, and manifest CSV round trips."""

from pathlib import Path

import pytest

from radtriage.dataset import (
    BodyPart,
    Manifest,
    Split,
    StudyLabel,
    StudyRecord,
    export_manifest_csv,
    import_manifest_csv,
    manifest_from_image_paths_csv,
    scan_dataset,
    summarize,
)
from radtriage.errors import DatasetError, MalformedLabelError

from conftest import build_tree, write_png, gray


def test_fixture_tree_hand_counts(fixture_root):
    manifest = scan_dataset(fixture_root, Split.TRAIN)
    assert len(manifest.studies) == 6
    assert manifest.image_count == 9
    by_id = {s.study_id: s for s in manifest.studies}
    assert set(by_id) == {
        "XR_ELBOW/patient00001/study1",
        "XR_ELBOW/patient00002/study1",
        "XR_SHOULDER/patient00004/study1",
        "XR_SHOULDER/patient00004/study2",
        "XR_WRIST/patient00001/study1",
        "XR_WRIST/patient00003/study1",
    }
    elbow_pos = by_id["XR_ELBOW/patient00001/study1"]
    assert elbow_pos.label is StudyLabel.ABNORMAL
    assert elbow_pos.body_part is BodyPart.ELBOW
    assert elbow_pos.patient_id == "patient00001"
    assert len(elbow_pos.image_paths) == 2
    assert by_id["XR_WRIST/patient00001/study1"].label is StudyLabel.NORMAL
    assert len(by_id["XR_WRIST/patient00003/study1"].image_paths) == 3
    for study in manifest.studies:
        for p in study.image_paths:
            assert Path(p).is_file()


def test_scan_order_is_lexicographic_and_deterministic(fixture_root):
    a = scan_dataset(fixture_root, "train")
    b = scan_dataset(fixture_root, "train")
    ids = [s.study_id for s in a.studies]
    assert ids == sorted(ids)
    assert ids == [s.study_id for s in b.studies]
    assert [s.image_paths for s in a.studies] == [s.image_paths for s in b.studies]


def test_four_study_synthetic_tree(tmp_path):
    # 2 patients x (1 positive elbow study of 2 images, 1 negative wrist of 1)
    tree = build_tree(
        tmp_path,
        [
            ("train", "XR_ELBOW", "patient00001", "study1_positive", 2),
            ("train", "XR_WRIST", "patient00001", "study1_negative", 1),
            ("train", "XR_ELBOW", "patient00002", "study1_positive", 2),
            ("train", "XR_WRIST", "patient00002", "study1_negative", 1),
        ],
    )
    manifest = scan_dataset(tree, Split.TRAIN)
    assert len(manifest.studies) == 4
    summary = summarize(manifest)
    assert summary.count(BodyPart.ELBOW, StudyLabel.ABNORMAL) == 2
    assert summary.count(BodyPart.WRIST, StudyLabel.NORMAL) == 2
    assert summary.count(BodyPart.ELBOW, StudyLabel.NORMAL) == 0
    assert summary.total_studies == 4
    assert summary.total_images == 6


def test_empty_split_directory(tmp_path):
    (tmp_path / "train").mkdir()
    manifest = scan_dataset(tmp_path, Split.TRAIN)
    assert manifest.studies == []
    summary = summarize(manifest)
    assert summary.total_studies == 0
    assert summary.total_images == 0
    assert summary.label_total(StudyLabel.NORMAL) == 0


def test_missing_root_raises():
    with pytest.raises(FileNotFoundError) as exc:
        scan_dataset("/no/such/tree", Split.TRAIN)
    assert "/no/such/tree" in str(exc.value)


def test_missing_split_raises(tmp_path):
    (tmp_path / "train").mkdir()
    with pytest.raises(FileNotFoundError):
        scan_dataset(tmp_path, Split.VALID)


def test_malformed_study_suffix_raises(tmp_path):
    bad = tmp_path / "train" / "XR_HAND" / "patient00001" / "study1_inconclusive"
    write_png(bad / "image1.png", gray(8, 8))
    with pytest.raises(MalformedLabelError) as exc:
        scan_dataset(tmp_path, Split.TRAIN)
    assert "study1_inconclusive" in str(exc.value)


def test_unknown_body_part_raises(tmp_path):
    bad = tmp_path / "train" / "XR_SKULL" / "patient00001" / "study1_positive"
    write_png(bad / "image1.png", gray(8, 8))
    with pytest.raises(DatasetError):
        scan_dataset(tmp_path, Split.TRAIN)


def test_empty_study_skipped_with_diagnostic(tmp_path):
    build_tree(tmp_path, [("train", "XR_HAND", "patient00001", "study1_positive", 1)])
    empty = tmp_path / "train" / "XR_HAND" / "patient00002" / "study1_negative"
    empty.mkdir(parents=True)
    manifest = scan_dataset(tmp_path, Split.TRAIN)
    assert len(manifest.studies) == 1
    assert len(manifest.diagnostics) == 1
    assert "patient00002" in manifest.diagnostics[0]


def test_label_counts_sum_to_totals(train_manifest):
    summary = summarize(train_manifest)
    assert sum(summary.cells.values()) == summary.total_studies
    per_part: dict = {}
    for (part, _), n in summary.cells.items():
        per_part[part] = per_part.get(part, 0) + n
    for part, total in per_part.items():
        assert total == summary.count(part, StudyLabel.NORMAL) + summary.count(
            part, StudyLabel.ABNORMAL
        )


def test_summary_table_renders_totals(train_manifest):
    table = summarize(train_manifest).as_table()
    assert "Elbow" in table and "Wrist" in table
    assert "Total" in table
    assert "Images: 9" in table


def test_manifest_rejects_duplicate_ids(fixture_root):
    manifest = scan_dataset(fixture_root, Split.TRAIN)
    with pytest.raises(DatasetError):
        Manifest(
            split=Split.TRAIN,
            root=manifest.root,
            studies=manifest.studies + [manifest.studies[0]],
        )


def test_manifest_rejects_missing_image_paths(fixture_root):
    manifest = scan_dataset(fixture_root, Split.TRAIN)
    fake = StudyRecord(
        study_id="XR_HAND/patientXXXXX/study1",
        patient_id="patientXXXXX",
        body_part=BodyPart.HAND,
        label=StudyLabel.NORMAL,
        image_paths=("/no/such/image.png",),
    )
    with pytest.raises(DatasetError):
        Manifest(split=Split.TRAIN, root=manifest.root, studies=[fake])


def test_study_record_requires_images():
    with pytest.raises(DatasetError):
        StudyRecord(
            study_id="x",
            patient_id="p",
            body_part=BodyPart.HAND,
            label=StudyLabel.NORMAL,
            image_paths=(),
        )


def test_manifest_csv_round_trip(tmp_path, train_manifest):
    out = tmp_path / "manifest.csv"
    export_manifest_csv(train_manifest, out)
    loaded = import_manifest_csv(out, split=Split.TRAIN)
    assert [s.study_id for s in loaded.studies] == [
        s.study_id for s in train_manifest.studies
    ]
    assert [s.image_paths for s in loaded.studies] == [
        s.image_paths for s in train_manifest.studies
    ]
    assert [s.label for s in loaded.studies] == [s.label for s in train_manifest.studies]


def test_manifest_csv_missing_image_rejected(tmp_path, train_manifest):
    out = tmp_path / "manifest.csv"
    export_manifest_csv(train_manifest, out)
    text = out.read_text().replace("image1.png", "imageX.png")
    out.write_text(text)
    with pytest.raises(FileNotFoundError):
        import_manifest_csv(out)


def test_manifest_csv_missing_columns_rejected(tmp_path):
    out = tmp_path / "bad.csv"
    out.write_text("study_id,label\nx,NORMAL\n")
    with pytest.raises(DatasetError):
        import_manifest_csv(out)


def test_image_paths_csv_ingestion(tmp_path, fixture_root):
    # MURA ships one bare path per line, relative to the dataset parent dir
    lines = []
    for split_dir in ["train"]:
        for png in sorted((fixture_root / split_dir).rglob("*.png")):
            lines.append(str(png.relative_to(fixture_root.parent)))
    csv_path = tmp_path / "train_image_paths.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    manifest = manifest_from_image_paths_csv(csv_path, fixture_root.parent, "train")
    scanned = scan_dataset(fixture_root, Split.TRAIN)
    assert {s.study_id for s in manifest.studies} == {
        s.study_id for s in scanned.studies
    }
    assert manifest.image_count == scanned.image_count
    by_id = {s.study_id: s for s in manifest.studies}
    for s in scanned.studies:
        assert s.label == by_id[s.study_id].label


@pytest.mark.skipif(
    not (Path(__file__).parent / "mura_root_path").exists()
    and not __import__("os").environ.get("MURA_ROOT"),
    reason="real dataset not available (set MURA_ROOT to enable)",
)
def test_real_dataset_census():
    import os

    root = os.environ.get("MURA_ROOT") or (
        (Path(__file__).parent / "mura_root_path").read_text().strip()
    )
    manifest = scan_dataset(root, Split.TRAIN)
    summary = summarize(manifest)
    assert summary.count(BodyPart.WRIST, StudyLabel.NORMAL) == 2134
    assert summary.count(BodyPart.WRIST, StudyLabel.ABNORMAL) == 1326
    assert summary.label_total(StudyLabel.NORMAL) == 8280
    assert summary.label_total(StudyLabel.ABNORMAL) == 5177
    assert summary.total_studies == 13457
    assert summary.total_images == 36808
    valid = summarize(scan_dataset(root, Split.VALID))
    assert valid.label_total(StudyLabel.NORMAL) == 661
    assert valid.label_total(StudyLabel.ABNORMAL) == 538
