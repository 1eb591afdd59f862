import contextlib
import re

import pytest

_OUTCOMES = {}


def _order(label):
    m = re.match(r"(\d+)(.*)", label)
    return (int(m.group(1)), m.group(2)) if m else (10**6, label)


@pytest.fixture
def criterion():
    """``with criterion("3") as info:`` records PASS if the block completes, FAIL if it raises.

    Setting ``info["detail"]`` attaches measured values to the printed line.
    """

    @contextlib.contextmanager
    def check(label):
        info = {"detail": ""}
        try:
            yield info
        except BaseException:
            _OUTCOMES[label] = ("FAIL", info["detail"])
            print(f"criterion {label}: FAIL {info['detail']}".rstrip())
            raise
        _OUTCOMES[label] = ("PASS", info["detail"])
        print(f"criterion {label}: PASS {info['detail']}".rstrip())

    return check


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_OUTCOMES, key=_order):
        status, detail = _OUTCOMES[label]
        terminalreporter.write_line(f"criterion {label}: {status} {detail}".rstrip())
