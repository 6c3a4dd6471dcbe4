import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from binlift.config import EndpointConfig
from binlift.errors import EmptyCompletion, EndpointRejected, EndpointUnreachable
from binlift.llm import Candidate, DecodeConfig, EndpointClient, extract_code
from binlift.prompt import build_prompt

CFG_JSON = '{"nodenum":1,"nodes":{"start":["ret"]},"edges":[]}'
PROMPT = build_prompt("start:\n  ret", CFG_JSON, "{}", 64, "O0")

CANNED = "Here is the function:\n```c\nint f(void) { return 7; }\n```\n"


class _MockHandler(BaseHTTPRequestHandler):
    behavior = {"fail_times": 0, "empty": False, "status": 200}
    seen: list[dict] = []
    failures = {"count": 0}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen.append(body)
        if self.failures["count"] < self.behavior["fail_times"]:
            self.failures["count"] += 1
            self.send_response(503)
            self.end_headers()
            return
        status = self.behavior["status"]
        if status != 200:
            self.send_response(status)
            self.end_headers()
            self.wfile.write(b'{"error": "bad request"}')
            return
        n = body.get("n", 1)
        if self.behavior["empty"]:
            choices = []
        else:
            choices = [
                {"index": i, "message": {"role": "assistant", "content": CANNED}}
                for i in range(n)
            ]
        payload = {"model": "mock-model", "choices": choices}
        blob = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, *args):
        pass


@pytest.fixture()
def mock_endpoint():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _MockHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _MockHandler.behavior = {"fail_times": 0, "empty": False, "status": 200}
    _MockHandler.seen = []
    _MockHandler.failures = {"count": 0}
    url = f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    yield url
    server.shutdown()


def _client(url, retries=2, archive=None):
    return EndpointClient(EndpointConfig(url=url, model="mock-model", max_retries=retries,
                                         backoff_base=0.01, timeout=5, archive_path=archive))


def test_greedy_returns_one_candidate(mock_endpoint):
    candidates = _client(mock_endpoint).generate(PROMPT, DecodeConfig.greedy())
    assert len(candidates) == 1
    assert candidates[0].text == CANNED
    assert candidates[0].extracted_source == "int f(void) { return 7; }"
    assert candidates[0].model_id == "mock-model"


def test_sampled_n20_returns_indexed_candidates(mock_endpoint):
    config = DecodeConfig.sampled(n=20)
    candidates = _client(mock_endpoint).generate(PROMPT, config)
    assert len(candidates) == 20
    assert [c.sample_index for c in candidates] == list(range(20))
    sent = _MockHandler.seen[-1]
    assert sent["n"] == 20
    assert sent["temperature"] == 0.2
    assert sent["top_p"] == 0.95


def test_wire_shape_single_user_message(mock_endpoint):
    _client(mock_endpoint).generate(PROMPT, DecodeConfig.greedy())
    sent = _MockHandler.seen[-1]
    assert sent["model"] == "mock-model"
    assert [m["role"] for m in sent["messages"]] == ["user"]
    assert sent["messages"][0]["content"] == PROMPT.render()
    assert sent["temperature"] == 0.0


def test_transient_failures_are_retried(mock_endpoint):
    _MockHandler.behavior["fail_times"] = 2
    candidates = _client(mock_endpoint, retries=3).generate(PROMPT, DecodeConfig.greedy())
    assert len(candidates) == 1
    assert len(_MockHandler.seen) == 3


def test_persistent_5xx_raises_rejected(mock_endpoint):
    _MockHandler.behavior["fail_times"] = 99
    with pytest.raises(EndpointRejected):
        _client(mock_endpoint, retries=1).generate(PROMPT, DecodeConfig.greedy())


def test_4xx_fails_fast(mock_endpoint):
    _MockHandler.behavior["status"] = 400
    with pytest.raises(EndpointRejected) as err:
        _client(mock_endpoint, retries=3).generate(PROMPT, DecodeConfig.greedy())
    assert err.value.status == 400
    assert len(_MockHandler.seen) == 1


def test_endpoint_down_raises_unreachable():
    client = _client("http://127.0.0.1:9/nothing", retries=1)
    with pytest.raises(EndpointUnreachable):
        client.generate(PROMPT, DecodeConfig.greedy())


def test_empty_choices_raise(mock_endpoint):
    _MockHandler.behavior["empty"] = True
    with pytest.raises(EmptyCompletion):
        _client(mock_endpoint).generate(PROMPT, DecodeConfig.greedy())


def test_greedy_mock_is_deterministic(mock_endpoint):
    client = _client(mock_endpoint)
    first = client.generate(PROMPT, DecodeConfig.greedy())
    second = client.generate(PROMPT, DecodeConfig.greedy())
    assert [c.text for c in first] == [c.text for c in second]
    assert [c.extracted_source for c in first] == [c.extracted_source for c in second]


def test_archive_written(mock_endpoint, tmp_path):
    archive = tmp_path / "wire.jsonl"
    _client(mock_endpoint, archive=str(archive)).generate(PROMPT, DecodeConfig.greedy())
    entries = [json.loads(line) for line in archive.read_text().splitlines()]
    assert len(entries) == 1
    assert entries[0]["request"]["model"] == "mock-model"
    assert "request_sha256" in entries[0]


def test_greedy_config_invariants():
    config = DecodeConfig.greedy()
    assert config.n == 1 and config.temperature == 0.0
    with pytest.raises(ValueError):
        DecodeConfig(mode="greedy", n=3)
    with pytest.raises(ValueError):
        DecodeConfig(mode="sampled", top_p=0.0)


# --- extract_code -------------------------------------------------------------

def test_extract_fenced_block():
    assert extract_code("```c\nint f(){return 0;}\n```") == "int f(){return 0;}"


def test_extract_no_code_returns_none():
    assert extract_code("I am unable to decompile this function.") is None


def test_extract_prose_then_fence_takes_fence_only():
    text = "The function adds two ints.\n```c\nint add(int a, int b) { return a + b; }\n```\nHope that helps!"
    assert extract_code(text) == "int add(int a, int b) { return a + b; }"


def test_extract_unfenced_c_region():
    text = "Sure!\nint mul(int a, int b) {\n    return a * b;\n}\nLet me know."
    assert extract_code(text) == "int mul(int a, int b) {\n    return a * b;\n}"


def test_extract_plain_fence_without_language():
    assert extract_code("```\nint g(void){return 1;}\n```") == "int g(void){return 1;}"


@given(st.text(max_size=300))
def test_extract_never_returns_fence_delimiters(text):
    result = extract_code(text)
    if result is not None:
        assert "```" not in result
