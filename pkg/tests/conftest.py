import pytest

from qdecomp.core import Question, parse_qdmr_text
from qdecomp.lexicon import default_lexicon

CENSUS_Q = "Which group from the census is smaller: Pacific islander or African American?"
CENSUS_D = ("return census groups ;return #1 that is Pacific islander ;return #1 that is African American ;"
            "return size of #2 ;return size of #3 ;return which is lowest of #4 , #5")


@pytest.fixture(scope="session")
def lex():
    return default_lexicon()


@pytest.fixture(scope="session")
def census_question():
    return Question.from_text(CENSUS_Q)


@pytest.fixture(scope="session")
def census_qdmr():
    return parse_qdmr_text(CENSUS_D)


# acceptance results, filled in by test_acceptance and echoed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
