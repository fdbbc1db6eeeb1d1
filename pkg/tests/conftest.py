import sys
from pathlib import Path

import pytest

from iontransport.statics import solve_equilibrium
from iontransport.trap import TrapConfig

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def trap():
    return TrapConfig.default()


@pytest.fixture(scope="session")
def chain(trap):
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = solve_equilibrium(trap, n)
        return cache[n]

    return get

