import pytest

from focuslab.synthgen import CorpusConfig, generate_corpus

REFERENCE_CORPUS = CorpusConfig(
    num_videos=200, clips_per_video=30, num_classes=10, feature_dim=16,
    actions_per_video=(2, 4), interval_length=(6, 12), feature_noise_sigma=0.8, seed=0,
)


@pytest.fixture(scope="session")
def small_config():
    return CorpusConfig(num_videos=20, clips_per_video=10, num_classes=4, feature_dim=6,
                        actions_per_video=(1, 3), interval_length=(2, 5),
                        feature_noise_sigma=0.5, seed=11)


@pytest.fixture(scope="session")
def small_corpus(small_config):
    return generate_corpus(small_config)


@pytest.fixture(scope="session")
def reference_corpus():
    return generate_corpus(REFERENCE_CORPUS)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def check(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
