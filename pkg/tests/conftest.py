import numpy as np
import pytest

from hcdkit import collab
from hcdkit.diffpipe import make_chain
from hcdkit.trainer import TrainConfig, make_synthetic_corpus, train

# Largest ||delta|| - radius seen by any optimiser run in this session.
RADIUS_EXCESS: list[float] = []
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(autouse=True, scope="session")
def _watch_radius():
    original = collab._solve

    def watched(*args, **kwargs):
        run = original(*args, **kwargs)
        RADIUS_EXCESS.append(run.max_radius_excess())
        return run

    collab._solve = watched
    yield
    collab._solve = original


@pytest.fixture(scope="session")
def quick_chain():
    """Briefly trained chain for unit tests that only need a sensible f."""
    corpus = make_synthetic_corpus(1, 24, size=24)
    cfg = TrainConfig(epochs=3, batch_size=4, patch_size=24, seed=1)
    return train(make_chain(2, seed=1), corpus, cfg, holdout_fraction=0.25).chain


@pytest.fixture(scope="session")
def patches():
    return make_synthetic_corpus(7, 4, size=24).patches


def pytest_collection_modifyitems(items):
    # the acceptance suite reads state gathered by every other test
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
