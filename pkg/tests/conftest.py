from __future__ import annotations

import pytest
from helpers import neutral_emotion_reply, rich_packet_doc

from clinbench.backends import ScriptedLM
from clinbench.memory import HashEmbedder
from clinbench.packet import parse_packet
from clinbench.patient import PatientBackends
from clinbench.rubric import bundled_catalog_path, load_catalog


@pytest.fixture
def packet():
    return parse_packet(rich_packet_doc())


@pytest.fixture
def embedder():
    return HashEmbedder(dim=32, seed=0)


@pytest.fixture
def neutral_backends():
    return PatientBackends(
        effort=ScriptedLM("FOCUSED"),
        emotion=ScriptedLM(neutral_emotion_reply()),
        responder=ScriptedLM("Yes, doctor.\nUSED_MEMORIES: none"),
    )


@pytest.fixture(scope="session")
def toy_catalog():
    return load_catalog(bundled_catalog_path("toy_catalog"))


@pytest.fixture(scope="session")
def full_catalog():
    return load_catalog(bundled_catalog_path("catalog"))


# -- acceptance reporting: one PASS/FAIL line per criterion ---------------------

ACCEPTANCE_LINES: list[str] = []


class _Criterion:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            line = f"PASS  {self.name}"
        else:
            detail = str(exc).strip().splitlines()[0] if str(exc).strip() else exc_type.__name__
            line = f"FAIL  {self.name}: {detail[:160]}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
