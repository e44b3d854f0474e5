"""Acceptance criteria 1-9 on the desk configuration, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` or ``fracbubble verify``.
"""

import pytest

from fracbubble.acceptance import RUNNERS, format_line


@pytest.mark.parametrize("k", sorted(RUNNERS))
def test_criterion(k, capsys):
    rep = RUNNERS[k]()
    with capsys.disabled():
        print("\n" + format_line(rep))
    assert rep["passed"], rep["metrics"]
    if rep["runtime_limit"] is not None:
        assert rep["within_runtime"], f"{rep['runtime']:.1f}s > {rep['runtime_limit']}s"
