import pytest

from helpers import make_chain_pathway, make_minimal_article, make_minimal_pathway


@pytest.fixture
def minimal_pathway():
    return make_minimal_pathway()


@pytest.fixture
def minimal_article():
    return make_minimal_article()


@pytest.fixture
def chain3_pathway():
    return make_chain_pathway(3)
