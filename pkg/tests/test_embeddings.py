import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srfeat.embeddings import (
    EmbeddingError,
    FileProvider,
    HashingProvider,
    HttpProvider,
    TransportError,
    cosine,
    make_provider,
    normalize_rows,
)

words = st.text(alphabet="가나다라abc", min_size=1, max_size=6)


def test_fallback_token_contract(provider):
    emb = provider.embed_tokens("가을")
    assert emb.tokens == ("가을",)
    assert emb.vectors.shape == (1, 256)
    assert np.linalg.norm(emb.vectors[0]) == pytest.approx(1.0, abs=1e-12)


def test_fallback_deterministic_across_instances():
    a = HashingProvider().embed_tokens("가을 하늘").vectors
    b = HashingProvider().embed_tokens("가을 하늘").vectors
    assert np.array_equal(a, b)


def test_unrelated_strings_not_identical(provider):
    u = provider.embed_sentence("가을 하늘").vector
    v = provider.embed_sentence("xyz qqq").vector
    assert cosine(u, v) < 1.0


def test_sentence_identity_and_extension(provider):
    s = "가을 하늘은 높고 맑다"
    assert cosine(provider.embed_sentence(s).vector, provider.embed_sentence(s).vector) == pytest.approx(1, abs=1e-9)
    assert cosine(provider.embed_sentence(s).vector, provider.embed_sentence(s + " 음").vector) < 1.0


@pytest.mark.parametrize("text", ["", "   "])
def test_empty_text_rejected(provider, text):
    with pytest.raises(EmbeddingError):
        provider.embed_sentence(text)
    with pytest.raises(EmbeddingError):
        provider.embed_tokens(text)


def test_dimension_is_configurable():
    assert HashingProvider(32).embed_sentence("가을").vector.shape == (32,)


@given(st.lists(words, min_size=1, max_size=5))
def test_sentence_vectors_unit_norm(ws):
    v = HashingProvider(64).embed_sentence(" ".join(ws)).vector
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


def test_normalize_rows_checks():
    with pytest.raises(EmbeddingError, match="dimension"):
        normalize_rows([[1.0, 0.0]], 3)
    with pytest.raises(EmbeddingError):
        normalize_rows([[0.0, 0.0]])
    with pytest.raises(EmbeddingError):
        normalize_rows([[np.nan, 1.0]])


def test_file_provider(tmp_path):
    path = tmp_path / "emb.jsonl"
    path.write_text(
        json.dumps({"text": "a b", "vectors": [[3, 4], [1, 0]]}) + "\n"
        + json.dumps({"text": "c", "vectors": [[0, 2]], "sentence": [0, 5]}) + "\n",
        encoding="utf-8",
    )
    p = FileProvider.from_path(path, 2)
    emb = p.embed_tokens("a b")
    assert emb.tokens == ("a", "b")
    assert emb.vectors[0] == pytest.approx([0.6, 0.8])
    assert p.embed_sentence("c").vector == pytest.approx([0.0, 1.0])
    with pytest.raises(EmbeddingError, match="no precomputed"):
        p.embed_tokens("zzz")
    with pytest.raises(EmbeddingError, match="dimension"):
        FileProvider.from_path(path, 3).embed_tokens("a b")


def test_make_provider():
    assert make_provider("fallback").name == "fallback"
    with pytest.raises(ValueError):
        make_provider("remote")
    with pytest.raises(ValueError):
        make_provider("nope")


class _Service(BaseHTTPRequestHandler):
    dimension = 4
    fail_first = 0
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.calls <= cls.fail_first:
            self.send_response(503)
            self.end_headers()
            return
        text = body["texts"][0]
        hp = HashingProvider(cls.dimension)
        if body["mode"] == "tokens":
            emb = hp.embed_tokens(text)
            payload = {"dimension": cls.dimension, "tokens": list(emb.tokens), "embeddings": emb.vectors.tolist()}
        else:
            payload = {"dimension": cls.dimension, "embeddings": [hp.embed_sentence(text).vector.tolist()]}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def service():
    _Service.calls = 0
    _Service.fail_first = 0
    _Service.dimension = 4
    server = HTTPServer(("127.0.0.1", 0), _Service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()
    server.server_close()


def test_http_provider_matches_local(service):
    remote = HttpProvider(service, 4, timeout=5, retries=0)
    local = HashingProvider(4)
    assert np.allclose(remote.embed_tokens("가을 하늘").vectors, local.embed_tokens("가을 하늘").vectors)
    assert np.allclose(remote.embed_sentence("가을 하늘").vector, local.embed_sentence("가을 하늘").vector)
    # memoized: a second call does not hit the service
    calls = _Service.calls
    remote.embed_sentence("가을 하늘")
    assert _Service.calls == calls


def test_http_provider_retries(service):
    _Service.fail_first = 2
    p = HttpProvider(service, 4, timeout=5, retries=2, backoff=0.0)
    assert p.embed_sentence("가을").vector.shape == (4,)
    assert _Service.calls == 3


def test_http_provider_gives_up(service):
    _Service.fail_first = 10
    with pytest.raises(TransportError):
        HttpProvider(service, 4, timeout=5, retries=1, backoff=0.0).embed_sentence("가을")


def test_http_dimension_mismatch(service):
    with pytest.raises(EmbeddingError, match="dimension"):
        HttpProvider(service, 8, timeout=5, retries=0).embed_sentence("가을")


def test_http_unreachable():
    with pytest.raises(TransportError):
        HttpProvider("http://127.0.0.1:9/none", 4, timeout=0.5, retries=0).embed_sentence("가을")


def test_fallback_identical_across_processes():
    import subprocess
    import sys

    code = ("import hashlib; from srfeat.embeddings import HashingProvider; "
            "print(hashlib.sha256(HashingProvider().embed_tokens('가을 하늘은 높고 abc').vectors.tobytes()).hexdigest())")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout.strip()
    import hashlib

    here = hashlib.sha256(HashingProvider().embed_tokens("가을 하늘은 높고 abc").vectors.tobytes()).hexdigest()
    assert out == here
