import json
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from companion_engine.cli import main

from tests.conftest import DATA_DIR

CONFIG = str(DATA_DIR / "companions.json")


class TestValidate:
    def test_valid_fixture_exits_zero(self, capsys):
        assert main(["validate", CONFIG]) == 0
        assert "OK: 5 companions" in capsys.readouterr().out

    def test_duplicate_names_exit_one(self, tmp_path, capsys):
        doc = json.loads(Path(CONFIG).read_text())
        doc.append(dict(doc[1]))  # second Anders
        bad = tmp_path / "dup.json"
        bad.write_text(json.dumps(doc))
        assert main(["validate", str(bad)]) == 1
        assert "duplicate companion name 'Anders'" in capsys.readouterr().err

    def test_missing_file_exit_two(self):
        assert main(["validate", "/no/such/file.json"]) == 2

    def test_unknown_field_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "typo.json"
        bad.write_text(
            json.dumps(
                [
                    {
                        "name": "A",
                        "className": "ChatCompanion",
                        "description": "",
                        "basePrompt": "x",
                        "kind": "npc",
                        "basePromt": "oops",
                    }
                ]
            )
        )
        assert main(["validate", str(bad)]) == 1
        assert "unknown fields" in capsys.readouterr().err


class TestRun:
    def test_basic_scenario_assertions_pass(self):
        assert main(
            ["run", "--config", CONFIG, "--script", str(DATA_DIR / "scenario_basic.json"),
             "--seed", "1", "--quiet"]
        ) == 0

    def test_mention_order_scenario(self):
        assert main(
            ["run", "--config", CONFIG, "--script", str(DATA_DIR / "scenario_mentions.json"),
             "--seed", "1", "--quiet"]
        ) == 0

    def test_action_scenario_with_resume(self):
        assert main(
            ["run", "--config", CONFIG, "--script", str(DATA_DIR / "scenario_action.json"),
             "--seed", "1", "--quiet"]
        ) == 0

    def test_failed_assertion_exits_one(self, tmp_path, capsys):
        scenario = json.loads((DATA_DIR / "scenario_basic.json").read_text())
        scenario["assertions"]["speakerOrder"] = ["Greta"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(scenario))
        assert main(["run", "--config", CONFIG, "--script", str(path), "--quiet"]) == 1
        err = capsys.readouterr().err
        assert "speakerOrder" in err and "Greta" in err and "Anders" in err

    def test_transcripts_are_byte_identical_across_runs(self, tmp_path):
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for path in (first, second):
            code = main(
                ["run", "--config", CONFIG, "--script", str(DATA_DIR / "scenario_mentions.json"),
                 "--seed", "7", "--transcript", str(path), "--quiet"]
            )
            assert code == 0
        assert first.read_bytes() == second.read_bytes()

    def test_transcript_counts_match_messages(self, tmp_path):
        path = tmp_path / "t.jsonl"
        main(["run", "--config", CONFIG, "--script", str(DATA_DIR / "scenario_action.json"),
              "--seed", "3", "--transcript", str(path), "--quiet"])
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines[0]["schema"] == "chat-transcript@1"
        senders = [l["sender"] for l in lines[1:]]
        assert senders.count("Anders") == 1
        assert senders.count("style-deputy") == 1

    def test_missing_scenario_exit_two(self):
        assert main(["run", "--config", CONFIG, "--script", "/no/such.json"]) == 2


def free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.mark.skipif(shutil.which(sys.executable) is None, reason="no python executable")
class TestServe:
    def test_mock_serve_answers_requests_without_credentials(self, tmp_path):
        port = free_port()
        process = subprocess.Popen(
            [sys.executable, "-m", "companion_engine", "serve", "--config", CONFIG,
             "--backend", "mock", "--port", str(port)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env={"PATH": "/usr/bin:/bin", "PYTHONPATH": str(Path(CONFIG).parents[2] / "src")},
        )
        try:
            cards = None
            for _ in range(50):
                time.sleep(0.2)
                try:
                    cards = httpx.get(f"http://127.0.0.1:{port}/api/companions").json()
                    break
                except httpx.HTTPError:
                    continue
            assert cards is not None, "server never came up"
            assert {c["name"] for c in cards} == {"Anders", "Greta"}
        finally:
            process.terminate()
            process.wait(timeout=10)

    def test_live_mode_without_api_key_fails_naming_variable(self, capsys, monkeypatch):
        monkeypatch.delenv("ENGINE_API_KEY", raising=False)
        code = main(["serve", "--config", CONFIG, "--backend", "live",
                     "--base-url", "http://example.invalid/v1"])
        assert code == 1
        assert "ENGINE_API_KEY" in capsys.readouterr().err

    def test_port_in_use_exits_one(self):
        port = free_port()
        with socket.socket() as blocker:
            blocker.bind(("127.0.0.1", port))
            blocker.listen(1)
            result = subprocess.run(
                [sys.executable, "-m", "companion_engine", "serve", "--config", CONFIG,
                 "--backend", "mock", "--port", str(port)],
                capture_output=True,
                timeout=60,
                env={"PATH": "/usr/bin:/bin", "PYTHONPATH": str(Path(CONFIG).parents[2] / "src")},
            )
        assert result.returncode == 1
