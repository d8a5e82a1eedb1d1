import dataclasses
import itertools
import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import sample
from textedit_eval.judge import (
    DIMENSIONS,
    HttpJudgeClient,
    JudgeError,
    JudgeParseError,
    JudgeRaw,
    JudgeUnavailable,
    JudgeWeights,
    ReplayJudgeClient,
    ResponseCache,
    build_judge_prompt,
    evaluate_judge,
    normalize_likert,
    parse_judge_response,
    score_judge_raw,
    serialize_judge_raw,
    weighted_vscore,
)

EXAMPLE = {
    "score": {"Q1": 5, "Q2": 1, "Q3": 2, "Q4": 5, "Q5": 4},
    "reason": {
        "Q1": "The target text 'PARTY' is spelled correctly and is clearly legible.",
        "Q2": "Widespread destruction of non-target text.",
        "Q3": "The skeleton's arm holding the maraca was erased.",
        "Q4": "Edges are sharp and the background inpainting is smooth.",
        "Q5": "The font style integrates well, though the colour is darker.",
    },
}
EXAMPLE_TEXT = json.dumps(EXAMPLE, indent=2)


# --- prompt ---------------------------------------------------------------


def test_prompt_substitutes_both_texts():
    p = build_judge_prompt(sample(raw="MUSIC", target="PARTY"))
    assert '**Text to Remove**: "MUSIC"' in p.system_text
    assert '**Text to Add**: "PARTY"' in p.system_text
    assert "{raw_text}" not in p.system_text and "{target_text}" not in p.system_text
    assert p.image_slots == ("src/s1.png", "gt/s1.png", "edited/s1.png")


def test_prompt_pure_erasure_and_determinism():
    p = build_judge_prompt(sample(target=""))
    assert '**Text to Add**: ""' in p.system_text
    a = build_judge_prompt(sample(sid="x", raw="A", target="B"))
    b = build_judge_prompt(sample(sid="y", raw="A", target="B"))
    assert a.system_text.encode() == b.system_text.encode()
    assert a.prompt_hash == b.prompt_hash


def test_prompt_requires_gt_image():
    with pytest.raises(JudgeError, match="ground-truth"):
        build_judge_prompt(sample(gt_image=None))


# --- parsing --------------------------------------------------------------


def test_parse_reference_example():
    raw = parse_judge_response(EXAMPLE_TEXT)
    assert raw.score_tuple() == (5, 1, 2, 5, 4)
    assert raw.reasons["Q3"].startswith("The skeleton")


@pytest.mark.parametrize(
    "wrap",
    [
        "```json\n{}\n```",
        "```\n{}\n```",
        "Here is my evaluation:\n{}\nHope this helps {{ :) }}",
        "  {}  ",
    ],
)
def test_parse_tolerates_fences_and_prose(wrap):
    assert parse_judge_response(wrap.replace("{}", EXAMPLE_TEXT, 1)) == parse_judge_response(EXAMPLE_TEXT)


def test_parse_skips_unparseable_leading_braces():
    text = "Scores {draft} follow: " + EXAMPLE_TEXT
    assert parse_judge_response(text).score_tuple() == (5, 1, 2, 5, 4)


def test_parse_braces_inside_reason_strings():
    obj = json.loads(EXAMPLE_TEXT)
    obj["reason"]["Q1"] = "text with } and { braces"
    assert parse_judge_response("prefix " + json.dumps(obj)).reasons["Q1"] == "text with } and { braces"


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda o: o["score"].update(Q3=6), "Q3 = 6"),
        (lambda o: o["score"].update(Q2=0), "Q2 = 0"),
        (lambda o: o["score"].pop("Q4"), "missing score Q4"),
        (lambda o: o["score"].update(Q1=4.5), "Q1 is not an integer"),
        (lambda o: o["score"].update(Q1="5"), "Q1 is not an integer"),
        (lambda o: o["score"].update(Q1=True), "Q1 is not an integer"),
        (lambda o: o.pop("score"), "no 'score'"),
    ],
)
def test_parse_rejects_bad_scores(mutate, msg):
    obj = json.loads(EXAMPLE_TEXT)
    mutate(obj)
    with pytest.raises(JudgeParseError, match=msg):
        parse_judge_response(json.dumps(obj))


def test_parse_accepts_integral_floats_and_missing_reasons():
    raw = parse_judge_response('{"score": {"Q1": 5.0, "Q2": 4, "Q3": 3, "Q4": 2, "Q5": 1}}')
    assert raw.score_tuple() == (5, 4, 3, 2, 1)
    assert raw.reasons == {q: "" for q in DIMENSIONS}


def test_parse_prose_only():
    with pytest.raises(JudgeParseError, match="no JSON object"):
        parse_judge_response("The edit looks great, I'd give it a 5.")


likert = st.integers(1, 5)


@given(st.tuples(likert, likert, likert, likert, likert), st.lists(st.text(max_size=20), min_size=5, max_size=5))
def test_serialize_parse_round_trip(scores, reasons):
    raw = JudgeRaw(dict(zip(DIMENSIONS, scores)), dict(zip(DIMENSIONS, reasons)))
    assert parse_judge_response(serialize_judge_raw(raw)) == raw


# --- scoring --------------------------------------------------------------


def test_normalize_likert_table():
    assert [normalize_likert(s) for s in range(1, 6)] == [0.0, 0.25, 0.5, 0.75, 1.0]
    for bad in (0, 6, 2.5, True):
        with pytest.raises(ValueError):
            normalize_likert(bad)


def test_weighted_vscore_examples():
    assert weighted_vscore((5, 5, 5, 5, 5)) == pytest.approx(1.0, abs=1e-12)
    # 0.4*1 + 0.3*0 + 0.1*0.25 + 0.1*1 + 0.1*0.75
    assert weighted_vscore((5, 1, 2, 5, 4)) == pytest.approx(0.600, abs=1e-12)
    # Q1 < 4 zeroes the rest: 0.4 * 0.5
    assert weighted_vscore((3, 5, 5, 5, 5)) == pytest.approx(0.200, abs=1e-12)
    assert weighted_vscore((4, 1, 1, 1, 1)) == pytest.approx(0.3, abs=1e-12)


def test_weights_validation():
    with pytest.raises(ValueError):
        JudgeWeights((0.5, 0.5, 0.1, 0.0, 0.0))
    with pytest.raises(ValueError):
        JudgeWeights((1.2, -0.2, 0, 0, 0))
    with pytest.raises(ValueError):
        JudgeWeights((0.5, 0.5))
    assert JudgeWeights.parse("0.2,0.2,0.2,0.2,0.2").w == (0.2,) * 5


def test_vscore_cutoff_holds_for_every_tuple():
    w = JudgeWeights()
    for s in itertools.product(range(1, 6), repeat=5):
        v = weighted_vscore(s, w)
        if s[0] < 4:
            assert v == w.w[0] * (s[0] - 1) / 4


def test_dimension_values_with_and_without_cutoff():
    sc = score_judge_raw(JudgeRaw(dict(zip(DIMENSIONS, (3, 5, 5, 5, 5)))))
    assert sc.dimension_values() == (0.5, 1.0, 1.0, 1.0, 1.0)
    assert sc.dimension_values(apply_cutoff=True) == (0.5, 0.0, 0.0, 0.0, 0.0)


# --- evaluate_judge, clients and cache -------------------------------------


class CountingClient:
    def __init__(self, reply, model_id="judge-x"):
        self.reply = reply
        self.model_id = model_id
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        return self.reply


def test_evaluate_judge_reference_example(tmp_path):
    client = CountingClient(EXAMPLE_TEXT)
    sc = evaluate_judge(sample(), client, cache=ResponseCache(tmp_path))
    assert sc.v_score == pytest.approx(0.600, abs=1e-12)
    assert sc.normalized == {"Q1": 1.0, "Q2": 0.0, "Q3": 0.25, "Q4": 1.0, "Q5": 0.75}


def test_evaluate_judge_uses_cache(tmp_path):
    cache = ResponseCache(tmp_path)
    first = evaluate_judge(sample(), CountingClient(EXAMPLE_TEXT), cache=cache)
    offline = CountingClient("should not be used")
    again = evaluate_judge(sample(), offline, cache=cache)
    assert offline.calls == 0
    assert again == first
    assert evaluate_judge(sample(), ReplayJudgeClient("judge-x"), cache=cache) == first


def test_cache_invalidated_by_prompt_or_model_change(tmp_path):
    cache = ResponseCache(tmp_path)
    evaluate_judge(sample(target="PARTY"), CountingClient(EXAMPLE_TEXT), cache=cache)
    with pytest.raises(JudgeUnavailable):
        evaluate_judge(sample(target="PARTIES"), ReplayJudgeClient("judge-x"), cache=cache)
    with pytest.raises(JudgeUnavailable):
        evaluate_judge(sample(target="PARTY"), ReplayJudgeClient("judge-y"), cache=cache)


def test_cache_file_layout(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("s/1", "m:1", "abc", "RESPONSE")
    (f,) = list(tmp_path.iterdir())
    entry = json.loads(f.read_text())
    assert entry == {"sample_id": "s/1", "model_id": "m:1", "prompt_hash": "abc", "response": "RESPONSE"}
    assert cache.get("s/1", "m:1", "abc") == "RESPONSE"
    assert cache.get("s/1", "m:1", "other") is None


def test_evaluate_judge_prose_response_fails():
    with pytest.raises(JudgeParseError, match="s1"):
        evaluate_judge(sample(), CountingClient("Looks good to me."))


def test_http_judge_client_payload(tmp_path):
    for name in ("src", "gt", "edited"):
        (tmp_path / name).mkdir()
        (tmp_path / name / "s1.png").write_bytes(b"\x89PNG fake")
    captured = {}

    def handler(request):
        captured.update(json.loads(request.content))
        captured["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": EXAMPLE_TEXT}}]})

    client = HttpJudgeClient(
        "http://judge.test/v1/chat/completions",
        "judge-x",
        image_root=tmp_path,
        client=httpx.Client(transport=httpx.MockTransport(handler), headers={"Authorization": "Bearer t"}),
    )
    sc = evaluate_judge(sample(), client)
    assert sc.v_score == pytest.approx(0.6)
    assert captured["model"] == "judge-x"
    assert captured["auth"] == "Bearer t"
    sys_msg, user_msg = captured["messages"]
    assert "Forensic Image Analyst" in sys_msg["content"]
    parts = user_msg["content"]
    assert [p["text"] for p in parts if p["type"] == "text"] == ["Original Image", "Ground Truth Image", "Edited Image"]
    assert all(p["image_url"]["url"].startswith("data:image/png;base64,") for p in parts if p["type"] == "image_url")


def test_http_judge_client_transport_failure(tmp_path):
    (tmp_path / "x.png").write_bytes(b"x")
    client = HttpJudgeClient(
        "http://judge.test/v1",
        "judge-x",
        max_retries=1,
        backoff=0.0,
        client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503))),
    )
    img = str(tmp_path / "x.png")
    s = dataclasses.replace(sample(), source_image=img, gt_image=img, edited_image=img)
    with pytest.raises(JudgeUnavailable, match="2 attempts"):
        evaluate_judge(s, client)
    assert client.request_count == 2
