import pytest

from hutchinson import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    (result,) = acceptance.run([number])
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.passed, result.details
