import pytest


@pytest.fixture
def report(capsys):
    """Print a verdict line straight to the terminal, bypassing capture."""

    def emit(line):
        with capsys.disabled():
            print("\n" + line)

    return emit
