import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import det, rect, sample
from textedit_eval.corpus import OcrFile
from textedit_eval.metrics import (
    OcrMissingError,
    PenaltyConfig,
    ProviderError,
    evaluate_classic,
    fallback_roi_text,
    ocr_accuracy,
    ocr_f1,
    ocr_precision,
    ocr_recall,
    roi_ned,
)

words = st.lists(st.text(alphabet="AB 1", max_size=5), max_size=5)


# --- OCR accuracy ---------------------------------------------------------


def test_ocr_accuracy_examples():
    assert ocr_accuracy([det("PARTY")], "PARTY", "MUSIC") == 1.0
    # base 0.6, source residual present, target absent -> 0.6 * 0.2
    assert ocr_accuracy([det("MUSIC")], "MUSES", "MUSIC") == pytest.approx(0.12, abs=1e-12)
    assert ocr_accuracy([], "PARTY", "MUSIC") == 0.0


def test_ocr_accuracy_target_present_suppresses_penalty():
    # "PARTX" reaches 0.8 >= 0.7 so the residual source detection is forgiven
    assert ocr_accuracy([det("MUSIC"), det("PARTX")], "PARTY", "MUSIC") == pytest.approx(0.8)


def test_ocr_accuracy_whitespace_normalized():
    assert ocr_accuracy([det("  NIGHT   CLUB ")], "NIGHT CLUB", "DAY BAR") == 1.0


def test_ocr_accuracy_pure_erasure():
    assert ocr_accuracy([], "", "MUSIC") == 1.0
    assert ocr_accuracy([det("MUSIC")], "", "MUSIC") == 0.0


def test_ocr_accuracy_penalty_off_equals_unpenalized():
    cfg = PenaltyConfig(fail_penalty=1.0)
    assert ocr_accuracy([det("MUSIC")], "MUSES", "MUSIC", cfg) == pytest.approx(0.6)


@given(words, st.text(alphabet="AB 1", min_size=1, max_size=5), st.text(alphabet="AB 1", min_size=1, max_size=5))
def test_ocr_accuracy_penalty_monotone(texts, tgt, src):
    dets = [det(t) for t in texts]
    penalized = ocr_accuracy(dets, tgt, src)
    assert 0.0 <= penalized <= 1.0
    assert penalized <= ocr_accuracy(dets, tgt, src, PenaltyConfig(fail_penalty=1.0))


# --- precision / recall / F1 ----------------------------------------------


def test_precision_recall_examples():
    same = [det("OPEN"), det("24HR")]
    assert ocr_precision(same, same) == 1.0
    assert ocr_recall(same, same) == 1.0
    gen, orig = [det("OPEN"), det("24H")], [det("OPEN"), det("24HR")]
    assert ocr_precision(gen, orig) == pytest.approx(0.875, abs=1e-12)
    assert ocr_recall(gen, orig) == pytest.approx(0.875, abs=1e-12)


def test_precision_recall_empty_conventions():
    assert ocr_precision([], [det("OPEN")]) == 1.0
    assert ocr_precision([det("OPEN")], []) == 0.0
    assert ocr_recall([], []) == 1.0
    assert ocr_recall([], [det("OPEN")]) == 0.0
    assert ocr_recall([det("OPEN")], []) == 1.0


@given(words, words, st.randoms())
def test_precision_recall_permutation_and_swap(a, b, rnd):
    A, B = [det(t) for t in a], [det(t) for t in b]
    pa, pb = A[:], B[:]
    rnd.shuffle(pa)
    rnd.shuffle(pb)
    assert ocr_precision(A, B) == ocr_precision(pa, pb)
    assert ocr_recall(A, B) == ocr_recall(pa, pb)
    assert ocr_precision(A, B) == ocr_recall(B, A)


def test_f1_examples():
    assert ocr_f1(1, 1) == 1.0
    assert ocr_f1(1, 0) == 0.0
    assert ocr_f1(0, 0) == 0.0
    assert ocr_f1(0.6, 0.4) == pytest.approx(0.48, abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_harmonic_mean_identities(p, r):
    f = ocr_f1(p, r)
    assert 0.0 <= f <= 1.0
    assert f <= (p + r) / 2 + 1e-15
    assert ocr_f1(p, p) == pytest.approx(p, abs=1e-15)


# --- NED ------------------------------------------------------------------


def test_roi_ned_examples():
    assert roi_ned("MUSES", "MUSES", "MUSIC") == 1.0
    assert roi_ned("MUSIC", "MUSES", "MUSIC") == pytest.approx(0.12, abs=1e-12)
    assert roi_ned("", "MUSES", "MUSIC") == 0.0
    assert roi_ned("", "", "MUSIC") == 1.0


def test_roi_ned_threshold_is_strict():
    # S("ABCDEFGHIJ", "ABCDEFGHIX") == 0.9 exactly: no penalty under "> 0.9"
    assert roi_ned("ABCDEFGHIJ", "ABCDEFGHIJ", "ABCDEFGHIX") == 1.0


def test_fallback_roi_text_reading_order():
    roi = rect(0, 0, 100, 100)
    dets = [det("B", (60, 10, 80, 20)), det("C", (10, 50, 30, 60)), det("A", (10, 10, 30, 20)), det("X", (200, 0, 210, 5))]
    assert fallback_roi_text(dets, roi) == "A B C"


# --- evaluate_classic -----------------------------------------------------

REGION = (100, 100, 200, 140)


def ocr_for(sid, src, gen, roi=None):
    ocr = OcrFile()
    ocr.detections[f"{sid}/source"] = src
    ocr.detections[f"{sid}/edited"] = gen
    if roi is not None:
        ocr.roi_text[f"{sid}/edited"] = roi
    return ocr


def background():
    return [det("OPEN", (0, 0, 40, 10)), det("24HR", (0, 200, 40, 210))]


def test_evaluate_classic_perfect_edit():
    s = sample(raw="MUSIC", target="PARTY", region=REGION)
    ocr = ocr_for("s1", [det("MUSIC", REGION)] + background(), [det("PARTY", (101, 100, 199, 141))] + background())
    sc = evaluate_classic(s, ocr)
    assert (sc.ocr_accuracy, sc.ocr_precision, sc.ocr_recall, sc.ocr_f1, sc.roi_ned) == (1, 1, 1, 1, 1)
    assert sc.clip_score is None and sc.aesthetic is None


def test_evaluate_classic_untouched_image():
    s = sample(raw="MUSIC", target="MUSES", region=REGION)
    src = [det("MUSIC", REGION)] + background()
    sc = evaluate_classic(s, ocr_for("s1", src, list(src)))
    assert sc.ocr_accuracy == pytest.approx(0.12, abs=1e-12)
    assert sc.roi_ned == pytest.approx(0.12, abs=1e-12)
    assert (sc.ocr_precision, sc.ocr_recall, sc.ocr_f1) == (1, 1, 1)


def test_evaluate_classic_uses_supplied_roi_text():
    s = sample(raw="MUSIC", target="PARTY", region=REGION)
    ocr = ocr_for("s1", [det("MUSIC", REGION)], [det("PARTY", REGION)], roi="PARTX")
    assert evaluate_classic(s, ocr).roi_ned == pytest.approx(0.8)


def test_evaluate_classic_min_confidence_filter():
    s = sample(raw="MUSIC", target="PARTY", region=REGION)
    ocr = ocr_for("s1", [], [det("PARTY", REGION, conf=0.3)])
    assert evaluate_classic(s, ocr).ocr_accuracy == 1.0
    assert evaluate_classic(s, ocr, cfg=PenaltyConfig(min_confidence=0.5)).ocr_accuracy == 0.0


def test_evaluate_classic_missing_ocr():
    s = sample()
    ocr = OcrFile()
    ocr.detections["s1/source"] = []
    with pytest.raises(OcrMissingError, match="s1/edited"):
        evaluate_classic(s, ocr)


def test_evaluate_classic_provider_failure_names_sample():
    class Broken:
        def score(self, sid):
            raise KeyError("nope")

    s = sample()
    with pytest.raises(ProviderError, match="s1"):
        evaluate_classic(s, ocr_for("s1", [], []), Broken())


def test_evaluate_classic_is_pure():
    rng = random.Random(3)
    s = sample(raw="MUSIC", target="PARTY", region=REGION)
    gen = [det(rng.choice(["PARTY", "PARTX", "MUSIC"]), (rng.randint(90, 110), 100, rng.randint(190, 210), 140)) for _ in range(4)]
    ocr = ocr_for("s1", [det("MUSIC", REGION)] + background(), gen + background()[:1])
    assert evaluate_classic(s, ocr) == evaluate_classic(s, ocr)


def test_penalty_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(fail_penalty=0)
    with pytest.raises(ValueError):
        PenaltyConfig(iou_threshold=1.5)
