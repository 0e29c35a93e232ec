"""Metric formulas, study aggregation, evaluation, and comparison tables."""

import json
from fractions import Fraction

import numpy as np
import pytest

from radtriage.dataset import PreprocessConfig, Split, scan_dataset
from radtriage.metrics import (
    MODEL_TABLE_ORDER,
    ConfusionMatrix,
    EvalLevel,
    EvalReport,
    MetricBundle,
    aggregate_study,
    cohens_kappa,
    compare_report,
    confusion,
    evaluate,
    f1_score,
    full_bundle,
    metric_bundle,
)

from conftest import StubScorer, build_tree, path_key


# -- independent references (coded with exact rational arithmetic) ------------


def ref_metrics(tp, fp, tn, fn):
    n = Fraction(tp + fp + tn + fn)
    acc = Fraction(tp + tn) / n
    prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
    p_o = acc
    p_e = (Fraction(tp + fp) * (tp + fn) + Fraction(tn + fn) * (tn + fp)) / (n * n)
    kappa = Fraction(0) if p_e == 1 else (p_o - p_e) / (1 - p_e)
    return tuple(float(x) for x in (acc, prec, rec, f1, kappa))


# -- confusion ----------------------------------------------------------------


def test_confusion_perfect_agreement():
    cm = confusion([1, 0, 1], [1, 0, 1])
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (2, 0, 1, 0)


def test_confusion_total_disagreement():
    cm = confusion([0, 1, 0], [1, 0, 1])
    assert cm.tp == 0 and cm.tn == 0
    assert cm.fp == 1 and cm.fn == 2


def test_confusion_matches_tally_loop():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 2, size=100).tolist()
    labels = rng.integers(0, 2, size=100).tolist()
    cm = confusion(preds, labels)
    tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for p, l in zip(preds, labels):
        if p and l:
            tally["tp"] += 1
        elif p and not l:
            tally["fp"] += 1
        elif not p and not l:
            tally["tn"] += 1
        else:
            tally["fn"] += 1
    assert vars(cm) == tally


def test_confusion_input_contracts():
    with pytest.raises(ValueError):
        confusion([1], [1, 0])
    with pytest.raises(ValueError):
        confusion([], [])


def test_confusion_matrix_validation_and_add():
    with pytest.raises(ValueError):
        ConfusionMatrix(tp=-1, fp=0, tn=0, fn=0)
    total = ConfusionMatrix(1, 2, 3, 4) + ConfusionMatrix(10, 20, 30, 40)
    assert (total.tp, total.fp, total.tn, total.fn) == (11, 22, 33, 44)


# -- metric_bundle / kappa ----------------------------------------------------


def test_published_precision_recall_f1_consistency():
    # P=0.904, R=0.753 must round to the published F1 of 0.822
    assert round(f1_score(0.904, 0.753), 3) == 0.822


def test_perfect_matrix_all_ones():
    acc, prec, rec, f1 = metric_bundle(ConfusionMatrix(10, 0, 10, 0))
    assert (acc, prec, rec, f1) == (1.0, 1.0, 1.0, 1.0)
    assert cohens_kappa(ConfusionMatrix(10, 0, 10, 0)) == 1.0


def test_hand_computed_bundle():
    cm = ConfusionMatrix(tp=45, fp=10, tn=40, fn=5)
    acc, prec, rec, f1 = metric_bundle(cm)
    assert acc == pytest.approx(0.85)
    assert prec == pytest.approx(45 / 55)
    assert rec == pytest.approx(0.9)
    assert f1 == pytest.approx(2 * (45 / 55) * 0.9 / (45 / 55 + 0.9))
    # p_o = 0.85, p_e = 0.5 -> kappa = 0.7
    assert cohens_kappa(cm) == pytest.approx(0.7, abs=1e-12)


def test_chance_level_kappa_zero():
    assert cohens_kappa(ConfusionMatrix(25, 25, 25, 25)) == pytest.approx(0.0)


def test_kappa_zero_when_expected_agreement_is_total():
    # constant predictions on constant labels: p_e = 1; 0 by convention
    assert cohens_kappa(ConfusionMatrix(tp=10, fp=0, tn=0, fn=0)) == 0.0
    assert cohens_kappa(ConfusionMatrix(tp=0, fp=0, tn=7, fn=0)) == 0.0


def test_kappa_zero_under_statistical_independence():
    # pred-positive rate 0.3, label-positive rate 0.4, n=100
    assert cohens_kappa(ConfusionMatrix(tp=12, fp=18, tn=42, fn=28)) == pytest.approx(
        0.0, abs=1e-12
    )


def test_kappa_one_iff_no_errors():
    rng = np.random.default_rng(4)
    for _ in range(50):
        tp, fp, tn, fn = (int(x) for x in rng.integers(0, 30, size=4))
        if tp + fp + tn + fn == 0 or tp + tn == 0:
            continue
        kappa = cohens_kappa(ConfusionMatrix(tp, fp, tn, fn))
        if fp == 0 and fn == 0:
            assert kappa in (1.0, 0.0)  # 0 only for the constant/p_e=1 case
        else:
            assert kappa < 1.0


def test_degenerate_denominators_are_zero():
    # nothing predicted positive and nothing actually positive
    acc, prec, rec, f1 = metric_bundle(ConfusionMatrix(tp=0, fp=0, tn=5, fn=5))
    assert prec == 0.0 and f1 == 0.0
    assert rec == 0.0
    acc, prec, rec, f1 = metric_bundle(ConfusionMatrix(tp=0, fp=5, tn=5, fn=0))
    assert prec == 0.0 and rec == 0.0 and f1 == 0.0


def test_metrics_match_reference_on_random_matrices():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 500:
        tp, fp, tn, fn = (int(x) for x in rng.integers(0, 200, size=4))
        if tp + fp + tn + fn == 0:
            continue
        cm = ConfusionMatrix(tp, fp, tn, fn)
        got = metric_bundle(cm) + (cohens_kappa(cm),)
        expected = ref_metrics(tp, fp, tn, fn)
        for g, e in zip(got, expected):
            assert abs(g - e) <= 1e-9
        checked += 1


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    preds = rng.integers(0, 2, size=60)
    labels = rng.integers(0, 2, size=60)
    base = full_bundle(confusion(preds.tolist(), labels.tolist()))
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(60)
        shuffled = full_bundle(
            confusion(preds[perm].tolist(), labels[perm].tolist())
        )
        assert shuffled == base


# -- aggregate_study ----------------------------------------------------------


def test_aggregate_single_image():
    prob, pred = aggregate_study([0.9], 0.5)
    assert prob == pytest.approx(0.9)
    assert pred is True


def test_aggregate_mean_and_boundary():
    prob, pred = aggregate_study([0.2, 0.4, 0.9], 0.5)
    assert prob == pytest.approx(0.5)
    assert pred is True  # mean == threshold counts as abnormal


def test_aggregate_all_zero():
    prob, pred = aggregate_study([0.0, 0.0], 0.5)
    assert prob == 0.0 and pred is False


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate_study([], 0.5)


# -- evaluate -----------------------------------------------------------------


def _scripted_tree(tmp_path, parts, per_part_cm):
    """One single-image study per (part, outcome slot); stub probabilities
    chosen so each part's confusion matrix matches per_part_cm."""
    tp, fp, tn, fn = per_part_cm
    studies, probs = [], {}
    for part in parts:
        i = 0
        for count, label_dir, prob in [
            (tp, "positive", 0.9),
            (fn, "positive", 0.1),
            (tn, "negative", 0.1),
            (fp, "negative", 0.9),
        ]:
            for _ in range(count):
                i += 1
                patient = f"patient{i:05d}"
                studies.append(("valid", part, patient, f"study1_{label_dir}", 1))
                probs[f"{part}/{patient}/study1_{label_dir}/image1.png"] = prob
    build_tree(tmp_path, studies)
    return scan_dataset(tmp_path, Split.VALID), StubScorer(probs)


def test_truth_oracle_scorer_scores_ones(tmp_path, tiny_prep):
    manifest, scorer = _scripted_tree(tmp_path, ["XR_WRIST"], (5, 0, 5, 0))
    report = evaluate(scorer, manifest, level=EvalLevel.STUDY, config=tiny_prep)
    assert report.overall == MetricBundle(1.0, 1.0, 1.0, 1.0, 1.0)


def test_scripted_costs_per_body_part(tmp_path, tiny_prep):
    manifest, scorer = _scripted_tree(
        tmp_path, ["XR_WRIST", "XR_HAND"], (9, 2, 8, 1)
    )
    report = evaluate(scorer, manifest, level=EvalLevel.STUDY, config=tiny_prep)
    expected = ref_metrics(9, 2, 8, 1)[4]
    assert set(report.per_body_part) == {"WRIST", "HAND"}
    for part, bundle in report.per_body_part.items():
        assert bundle.kappa == pytest.approx(expected, abs=1e-9)
    # the overall matrix is the sum of identical per-part matrices, so
    # every rate (and kappa) is unchanged
    assert report.overall.kappa == pytest.approx(expected, abs=1e-9)
    summed = None
    for cm in report.per_body_part_cm.values():
        summed = cm if summed is None else summed + cm
    assert vars(summed) == vars(report.overall_cm)


def test_study_vs_image_level_identical_for_single_image_studies(
    tmp_path, tiny_prep
):
    manifest, scorer = _scripted_tree(tmp_path, ["XR_ELBOW"], (3, 1, 4, 2))
    study = evaluate(scorer, manifest, level=EvalLevel.STUDY, config=tiny_prep)
    image = evaluate(scorer, manifest, level=EvalLevel.IMAGE, config=tiny_prep)
    assert study.overall == image.overall
    assert study.per_body_part == image.per_body_part


def test_study_level_averages_views(tmp_path, tiny_prep):
    build_tree(tmp_path, [("valid", "XR_HAND", "patient00001", "study1_positive", 3)])
    manifest = scan_dataset(tmp_path, Split.VALID)
    keys = [path_key(p) for p, _ in manifest.image_entries()]
    # dyadic values stay exact in float32: mean is exactly 0.5
    scorer = StubScorer(dict(zip(keys, [0.25, 0.5, 0.75])))
    report = evaluate(scorer, manifest, level=EvalLevel.STUDY, config=tiny_prep)
    # mean 0.5 >= threshold -> abnormal -> the one study is a true positive
    assert report.overall_cm.tp == 1
    assert report.overall_cm.total == 1


def test_eval_report_json_round_trip(tmp_path, tiny_prep):
    manifest, scorer = _scripted_tree(tmp_path, ["XR_WRIST"], (2, 1, 2, 1))
    report = evaluate(scorer, manifest, config=tiny_prep, model_id="stub")
    report.parameter_count = 123456
    report.train_seconds = 7.5
    loaded = EvalReport.from_json(report.to_json())
    assert loaded == report
    assert json.loads(report.to_json())["model_id"] == "stub"


# -- compare_report -----------------------------------------------------------


def _report(model_id, kappa, accuracy=0.8, params=None, seconds=None, parts=None):
    bundle = MetricBundle(accuracy, 0.8, 0.7, 0.75, kappa)
    parts = parts or {"WRIST": bundle}
    return EvalReport(
        model_id=model_id,
        level=EvalLevel.STUDY,
        threshold=0.5,
        overall=bundle,
        per_body_part=parts,
        overall_cm=ConfusionMatrix(8, 2, 8, 2),
        per_body_part_cm={k: ConfusionMatrix(8, 2, 8, 2) for k in parts},
        parameter_count=params,
        train_seconds=seconds,
    )


def test_single_report_renders_one_row():
    md, csv_text = compare_report([_report("densenet169", 0.7)])
    table_rows = [l for l in md.splitlines() if l.startswith("| densenet169")
                  or l.startswith("| DenseNet169")]
    assert len(table_rows) == 1
    assert "kappa" in csv_text.splitlines()[0]


def test_best_values_marked():
    md, csv_text = compare_report(
        [
            _report("resnet50", 0.60, accuracy=0.90, params=25_000_000),
            _report("densenet121", 0.75, accuracy=0.85, params=8_000_000),
        ]
    )
    lines = {l.split("|")[1].strip(): l for l in md.splitlines() if l.startswith("| ")}
    dn, rn = lines["densenet121"], lines["resnet50"]
    assert "**0.750**" in dn  # best kappa marked
    assert "**0.900**" in rn  # best accuracy marked
    assert "**8.0**" in dn  # fewest parameters marked
    assert "**" not in rn.split("|")[6]  # resnet50's kappa cell unmarked
    header = csv_text.splitlines()[0].split(",")
    assert "kappa_wrist" in header


def test_row_order_follows_benchmark_listing():
    reports = [_report(m, 0.5) for m in reversed(MODEL_TABLE_ORDER)]
    md, _ = compare_report(reports)
    rows = [
        l.split("|")[1].strip()
        for l in md.splitlines()
        if l.startswith("| ") and not l.startswith("| Model") and not l.startswith("| Body")
    ]
    listed = [m for m in rows if m in MODEL_TABLE_ORDER]
    assert listed == list(MODEL_TABLE_ORDER)


def test_compare_requires_reports():
    with pytest.raises(ValueError):
        compare_report([])
