import os
from pathlib import Path

import pytest

from cqe.model import make_instance
from cqe.textio import parse_program

DATA = Path(__file__).parent / "data"


def load_program(name):
    return parse_program((DATA / name).read_text(encoding="utf-8"))


def load_instance(name):
    prog = load_program(name)
    return make_instance(prog.ontology, prog.facts, prog.policy)


def suite_seed():
    return int(os.environ.get("CQE_SEED", "0"))


@pytest.fixture
def social_network():
    return load_instance("social_network.cqe")


@pytest.fixture
def fan_club():
    return load_instance("fan_club.cqe")


@pytest.fixture
def movie_fans():
    return load_instance("movie_fans.cqe")


@pytest.fixture
def chain_loop():
    return load_instance("chain_loop.cqe")


@pytest.fixture
def ql_existential():
    return load_instance("ql_existential.cqe")
