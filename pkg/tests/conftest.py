import random

import pytest

from provlab.netsim import LossModel, SimClock, Simulation
from provlab.signing import SigningKeySet


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def clock():
    return SimClock(1_613_000_000)


@pytest.fixture
def sim(clock):
    return Simulation(loss=LossModel(), clock=clock)


@pytest.fixture
def keyset():
    return SigningKeySet(
        cert_hash="3f9a1c77d2b04e55",
        secret1="appsecretappsecretappsec",
        secret2="4j8vqy4egph3thd7fdchk435hjudwsey",
    )
