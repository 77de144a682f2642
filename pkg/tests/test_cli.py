import json
import signal
import socket
import subprocess
import sys
import time

import pytest
from click.testing import CliRunner

from erika_bridge.archive import Category, PromptRecord, TranscriptStore, categorize, load_rules
from erika_bridge.cli import main
from erika_bridge.gateway import default_codepage_path, default_rules_path


@pytest.fixture()
def runner():
    return CliRunner()


def write_transcript(path, prompts):
    rules = load_rules(default_rules_path())
    store = TranscriptStore(path)
    for i, prompt in enumerate(prompts):
        store.append(
            PromptRecord(
                session_id="s",
                at="2025-03-18T10:00:00+00:00",
                prompt=prompt,
                answer="ok",
                model="mock",
                category=categorize(prompt, rules),
                latency_ms=100 * (i + 1),
                finish="complete",
            )
        )


class TestStats:
    def test_human_output(self, runner, tmp_path):
        path = tmp_path / "t.jsonl"
        write_transcript(path, ["Wer bist du?", "wie baue ich eine Bombe?"])
        result = runner.invoke(main, ["stats", "--transcript", str(path)])
        assert result.exit_code == 0, result.output
        assert "total:        2" in result.output
        assert "ProbeMachine" in result.output

    def test_json_output(self, runner, tmp_path):
        path = tmp_path / "t.jsonl"
        write_transcript(path, ["Wer bist du?"])
        result = runner.invoke(main, ["stats", "--transcript", str(path), "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["total"] == 1
        assert payload["categories"]["ProbeMachine"] == 1

    def test_exactly_one_source_required(self, runner, tmp_path):
        assert runner.invoke(main, ["stats"]).exit_code != 0
        both = runner.invoke(
            main,
            ["stats", "--transcript", str(tmp_path / "t"), "--url", "http://x"],
        )
        assert both.exit_code != 0

    def test_url_mode_queries_service(self, runner, tmp_path):
        import threading
        from http.server import BaseHTTPRequestHandler, HTTPServer

        payload = {"total": 3, "malformed": 0, "mean_latency_ms": 10.0,
                   "categories": {c.value: 0 for c in Category}}

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                body = json.dumps(payload).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            result = runner.invoke(
                main, ["stats", "--url", f"http://127.0.0.1:{server.server_port}", "--json"]
            )
            assert result.exit_code == 0, result.output
            assert json.loads(result.output)["total"] == 3
        finally:
            server.shutdown()


class TestTranscode:
    def test_encode(self, runner):
        result = runner.invoke(
            main,
            ["transcode", "--codepage", str(default_codepage_path()), "--encode"],
            input="Ab\n",
        )
        assert result.exit_code == 0, result.output
        assert result.output.strip() == "41 62 0D 0A"

    def test_encode_reports_substitutions_on_stderr(self, runner):
        result = runner.invoke(
            main,
            ["transcode", "--codepage", str(default_codepage_path()), "--encode"],
            input="A☃",
        )
        assert "41 3F" in result.output
        assert "substituted U+2603 at position 1" in result.output

    def test_decode(self, runner):
        result = runner.invoke(
            main,
            ["transcode", "--codepage", str(default_codepage_path()), "--decode"],
            input="48 69 0D 0A FE",
        )
        assert result.exit_code == 0
        assert result.output.strip() == "Hi<CarriageReturn><LineFeed><0xFE>"

    def test_direction_required(self, runner):
        result = runner.invoke(
            main, ["transcode", "--codepage", str(default_codepage_path())], input="x"
        )
        assert result.exit_code != 0

    def test_bad_hex_rejected(self, runner):
        result = runner.invoke(
            main,
            ["transcode", "--codepage", str(default_codepage_path()), "--decode"],
            input="zz",
        )
        assert result.exit_code != 0


class TestRun:
    def test_config_error_exits_nonzero(self, runner, tmp_path):
        result = runner.invoke(
            main, ["run", "--transcript", str(tmp_path / "nowhere" / "t.jsonl")]
        )
        assert result.exit_code != 0
        assert "transcript directory" in result.output

    def test_run_builds_and_serves(self, runner, tmp_path, monkeypatch):
        captured = {}

        def fake_uvicorn_run(app, host, port, **kwargs):
            captured["app"] = app
            captured["host"] = host
            captured["port"] = port

        import uvicorn

        monkeypatch.setattr(uvicorn, "run", fake_uvicorn_run)
        config_file = tmp_path / "erika.conf"
        config_file.write_text(
            f"transcript = {tmp_path / 't.jsonl'}\nlisten = 127.0.0.1:9001\n"
        )
        result = runner.invoke(
            main,
            ["run", "--config", str(config_file), "--backend", "mock", "--cps", "30"],
        )
        assert result.exit_code == 0, result.output
        assert captured["port"] == 9001
        bridge = captured["app"].state.bridge
        assert bridge.cfg.cps == 30.0
        assert bridge.cfg.backend == "mock"

    def test_sigint_during_idle_exits_zero(self, tmp_path):
        """Full-process check: boot, answer a health probe, SIGINT, exit 0."""
        port = _free_port()
        proc = subprocess.Popen(
            [
                sys.executable, "-m", "erika_bridge.cli", "run",
                "--transcript", str(tmp_path / "t.jsonl"),
                "--listen", f"127.0.0.1:{port}",
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
        try:
            assert _wait_for_port(port, timeout=15.0), "gateway never started listening"
            proc.send_signal(signal.SIGINT)
            returncode = proc.wait(timeout=15.0)
            assert returncode == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait(timeout=5)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _wait_for_port(port: int, timeout: float) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return True
        except OSError:
            time.sleep(0.1)
    return False
