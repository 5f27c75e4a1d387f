import json
import pathlib
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from praf import judge
from praf.errors import ContractError, ScoringError

GOLDEN = pathlib.Path(__file__).parent / "golden" / "judge_prompt.txt"
TARGET = "A dog runs along the beach at sunset."
ADV = "A {brown} dog running on the shore."


def reply(content, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def scripted(*responses):
    """Client whose transport returns ``responses`` in order and records requests."""
    queue, seen = list(responses), []

    def handler(request):
        seen.append(request)
        item = queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    return httpx.Client(transport=httpx.MockTransport(handler)), seen


def request(**kw):
    base = dict(target_text=TARGET, adversarial_text=ADV, model_name="judge-m",
                endpoint_url="http://judge.test/v1")
    base.update(kw)
    return judge.JudgeRequest(**base)


# --- prompt ------------------------------------------------------------------------

def test_prompt_matches_golden():
    assert judge.build_prompt(TARGET, ADV) == GOLDEN.read_text(encoding="utf-8")


def test_prompt_keeps_rubric_and_braces():
    text = judge.build_prompt("{adversarial_text}", "a {x} b")
    assert "    - **1.0**: Nearly identical in meaning." in text
    assert "Text 1: {adversarial_text}\nText 2: a {x} b\n" in text
    assert text.endswith("Do not include any explanation or additional text.\n")
    assert judge.build_prompt("a", "b") == judge.build_prompt("a", "b")


@pytest.mark.parametrize("t, a", [("", "x"), ("x", "   "), ("\n", "x")])
def test_prompt_rejects_empty_text(t, a):
    with pytest.raises(ContractError):
        judge.build_prompt(t, a)
    with pytest.raises(ContractError):
        request(target_text=t, adversarial_text=a)


# --- parsing ------------------------------------------------------------------------

@pytest.mark.parametrize("text, value", [
    ("0.85", 0.85), ("Score: 1.2", 1.0), ("-0.4", 0.0), (" .5\n", 0.5), ("0.7 (out of 1)", 0.7), ("1", 1.0),
])
def test_parse_score(text, value):
    assert judge.parse_score(text) == value


def test_parse_score_failures():
    for text in ("high", "", None):
        with pytest.raises(ScoringError):
            judge.parse_score(text)


def test_chat_url():
    assert judge.chat_url("http://h/v1/") == "http://h/v1/chat/completions"
    assert judge.chat_url("http://h/v1/chat/completions") == "http://h/v1/chat/completions"


# --- query -----------------------------------------------------------------------

def test_query_direct_reply(monkeypatch):
    monkeypatch.setenv(judge.API_KEY_ENV, "sk-test")
    client, seen = scripted(reply("0.85"))
    assert judge.query_judge(request(), client=client) == 0.85
    sent = seen[0]
    assert str(sent.url) == "http://judge.test/v1/chat/completions"
    assert sent.headers["authorization"] == "Bearer sk-test"
    body = json.loads(sent.content)
    assert body["model"] == "judge-m"
    assert body["messages"] == [{"role": "user", "content": judge.build_prompt(TARGET, ADV)}]


def test_query_clamps_with_warning(caplog):
    client, _ = scripted(reply("Score: 1.2"))
    assert judge.query_judge(request(), client=client, api_key="") == 1.0
    assert "clamping" in caplog.text


def test_query_retries_server_error():
    client, seen = scripted(httpx.Response(500), reply("0.3"))
    sleeps = []
    assert judge.query_judge(request(), client=client, sleep=sleeps.append) == 0.3
    assert len(seen) == 2 and sleeps == [1.0]


def test_query_backoff_and_exhaustion():
    client, seen = scripted(httpx.ConnectError("down"), reply("no idea"), httpx.Response(503), reply("?"))
    sleeps = []
    with pytest.raises(ScoringError, match="after 4 attempts"):
        judge.query_judge(request(), client=client, sleep=sleeps.append, backoff=0.5)
    assert len(seen) == 4 and sleeps == [0.5, 1.0, 2.0]


def test_query_fatal_status_is_not_retried():
    client, seen = scripted(httpx.Response(401, text="bad key"), reply("0.9"))
    with pytest.raises(ScoringError, match="401"):
        judge.query_judge(request(), client=client, sleep=lambda s: None)
    assert len(seen) == 1


# --- aggregation -----------------------------------------------------------------

def test_aggregate_hand_values():
    (s,) = judge.aggregate([0.9, 0.4], [0.5])
    assert s.asr == 0.5 and s.avg_sim == pytest.approx(0.65)


def test_aggregate_strictness():
    assert judge.aggregate([0.5, 0.7], [0.5])[0].asr == 0.5
    assert judge.aggregate([0.5, 0.7], [0.5], strict=False)[0].asr == 1.0


def test_aggregate_all_ones():
    out = judge.aggregate([1.0] * 5)
    assert [s.asr for s in out] == [1.0] * 5
    assert len({s.avg_sim for s in out}) == 1


def test_aggregate_empty():
    with pytest.raises(ContractError):
        judge.aggregate([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.booleans())
def test_asr_monotone_in_threshold(scores, strict):
    out = judge.aggregate(scores, judge.DEFAULT_THRESHOLDS, strict)
    asr = [s.asr for s in out]
    assert all(a >= b for a, b in zip(asr, asr[1:]))
    assert all(0 <= s.asr <= 1 and 0 <= s.avg_sim <= 1 for s in out)
    assert len({s.avg_sim for s in out}) == 1


# --- batch ------------------------------------------------------------------------

def test_evaluate_pairs_excludes_unscored():
    lock = threading.Lock()
    answers = {"t0": "0.9", "t1": "nonsense", "t2": "0.4"}

    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        key = next(k for k in answers if f"Text 1: {k}\n" in prompt)
        with lock:
            return reply(answers[key])

    client = httpx.Client(transport=httpx.MockTransport(handler))
    pairs = [("t0", "a"), ("t1", "b"), ("t2", "c")]
    ev = judge.evaluate_pairs(pairs, "judge-m", "http://judge.test/v1", thresholds=[0.5], client=client,
                              sleep=lambda s: None)
    assert ev.scores == [0.9, None, 0.4]
    assert [i for i, _ in ev.errors] == [1]
    (s,) = ev.summaries
    assert (s.asr, s.avg_sim, s.scored, s.unscored) == (0.5, pytest.approx(0.65), 2, 1)


def test_read_caption_pairs(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"target_text": "a", "adversarial_text": "b"}\n\n{"target_text": "c", "adversarial_text": "d"}\n')
    assert judge.read_caption_pairs(p) == [("a", "b"), ("c", "d")]
    p.write_text('{"target_text": "a"}\n')
    with pytest.raises(ContractError, match=":1:"):
        judge.read_caption_pairs(p)
