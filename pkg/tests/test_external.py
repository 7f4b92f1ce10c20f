import json
import socket
import sys
import threading
from pathlib import Path

import pytest

from evclosure.babble import (
    DEADLINE_ENV,
    ExternalGenerator,
    GenerationRequest,
    GeneratorError,
    babble_external,
    default_deadline,
)

STUB = str(Path(__file__).parent / "stub_gen.py")


def spawn(behavior: str, deadline: float = 5.0) -> ExternalGenerator:
    return ExternalGenerator.spawn([sys.executable, STUB, behavior], deadline=deadline)


def test_echo_stub_returns_prompt():
    with spawn("echo") as gen:
        out = gen.generate(GenerationRequest(prompt="hello"))
    assert out == ["hello"]


def test_fixed_stub_returns_three_strings_in_order():
    with spawn("fixed") as gen:
        out = gen.generate(GenerationRequest(prompt="x", num_candidates=3))
    assert out == ["the sun is up", "the moon is out", "the tide is high"]


def test_candidates_normalized_on_receipt():
    with spawn("echo") as gen:
        out = gen.generate(GenerationRequest(prompt="The SUN is Up."))
    assert out == ["the sun is up"]


def test_dead_endpoint_times_out():
    with spawn("silent", deadline=0.4) as gen:
        with pytest.raises(GeneratorError, match="deadline"):
            gen.generate(GenerationRequest(prompt="hello"))


def test_error_payload_raises():
    with spawn("error") as gen:
        with pytest.raises(GeneratorError, match="stub failure"):
            gen.generate(GenerationRequest(prompt="hello"))


def test_non_json_response_raises():
    with spawn("garbage") as gen:
        with pytest.raises(GeneratorError, match="not valid JSON"):
            gen.generate(GenerationRequest(prompt="hello"))


def test_candidate_overrun_is_protocol_violation():
    with spawn("toomany") as gen:
        with pytest.raises(GeneratorError, match="candidates"):
            gen.generate(GenerationRequest(prompt="hello", num_candidates=1))


def test_repeated_cycles_on_one_session():
    with spawn("echo") as gen:
        for i in range(25):
            assert gen.generate(GenerationRequest(prompt=f"line {i}")) == [f"line {i}"]


def test_babble_external_with_address():
    address = f"cmd:{sys.executable} {STUB} echo"
    out = babble_external(address, GenerationRequest(prompt="ping"))
    assert out == ["ping"]


def test_unknown_address_scheme():
    with pytest.raises(GeneratorError, match="address"):
        ExternalGenerator.from_address("smoke:nope")


def test_missing_binary_is_generator_error():
    with pytest.raises(GeneratorError, match="spawn"):
        ExternalGenerator.spawn(["/nonexistent/binary"], deadline=1.0)


def test_deadline_env_override(monkeypatch):
    monkeypatch.setenv(DEADLINE_ENV, "3.5")
    assert default_deadline() == 3.5
    monkeypatch.setenv(DEADLINE_ENV, "not-a-number")
    with pytest.raises(GeneratorError):
        default_deadline()
    monkeypatch.delenv(DEADLINE_ENV)
    assert default_deadline() == 30.0


def _tcp_echo_server(sock: socket.socket):
    conn, _ = sock.accept()
    with conn, conn.makefile("r", encoding="utf-8") as reader:
        for line in reader:
            request = json.loads(line)
            reply = json.dumps({"candidates": [request.get("prompt", "")]}) + "\n"
            conn.sendall(reply.encode("utf-8"))


def test_tcp_transport_round_trip():
    server = socket.socket()
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    port = server.getsockname()[1]
    thread = threading.Thread(target=_tcp_echo_server, args=(server,), daemon=True)
    thread.start()
    try:
        with ExternalGenerator.from_address(f"tcp:127.0.0.1:{port}", deadline=5.0) as gen:
            assert gen.generate(GenerationRequest(prompt="over tcp")) == ["over tcp"]
    finally:
        server.close()
