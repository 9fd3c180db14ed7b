import numpy as np
import pytest

from statedelta.model import ModelConfig, build_toy_model


@pytest.fixture(scope="session")
def toy_model():
    return build_toy_model(ModelConfig(n_layers=4, d_model=32, n_heads=4, vocab_size=300, max_seq=512), seed=7)


@pytest.fixture(scope="session")
def tiny_model():
    return build_toy_model(ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=64, max_seq=64), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class World:
    """Fixture corpus, questions and a toy model on the fixture vocabulary."""

    def __init__(self):
        from statedelta.environment import ToolEnvironment, build_index, fixture_path, load_corpus, load_dataset
        from statedelta.model import Tokenizer

        self.tokenizer = Tokenizer.load(fixture_path("vocab.json"))
        cfg = ModelConfig(n_layers=4, d_model=32, n_heads=4, vocab_size=self.tokenizer.vocab_size, max_seq=4096)
        self.handle = build_toy_model(cfg, seed=7, tokenizer=self.tokenizer)
        self.corpus = load_corpus(fixture_path("corpus.jsonl"))
        self.index = build_index(self.corpus)
        self.env = ToolEnvironment(self.corpus, self.index)
        self.questions = load_dataset(fixture_path("questions.jsonl"))
        self.selection = load_dataset(fixture_path("selection.jsonl"))

    def question(self, kind):
        return next(q for q in self.questions if q.kind == kind)


@pytest.fixture(scope="session")
def world():
    return World()


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then fail the test if needed."""

    def check(n: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
