import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from llm_stub import ScriptedLlmServer  # noqa: E402


@pytest.fixture(scope="module")
def llm_server():
    server = ScriptedLlmServer()
    server.start()
    yield server
    server.stop()


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("EVOCOPY_API_KEY", "stub-secret")
