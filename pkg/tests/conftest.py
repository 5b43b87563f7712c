import numpy as np
import pytest

from sarasim.matching import Game, GameConfig
from sarasim.phy import SpectrumPlan, random_topology, sample_channels


def make_game(seed, *, L=3, m_u=10, m_s=2, n=(3, 2, 3), z=None, cfg=None, z_power=1.0):
    """A random network game with SUEs at ids 0..m_s-1."""
    rng = np.random.default_rng(seed)
    M = m_u + m_s
    topo = random_topology(L, M, tuple(range(m_s)), 2000.0, rng)
    plan = SpectrumPlan(*n)
    ch = sample_channels(topo, plan, rng)
    if z is None:
        z = rng.random((M, M)) ** z_power
        z = np.triu(z, 1) + np.triu(z, 1).T
    cfg = cfg or GameConfig.half_bandwidth(plan.rb_bandwidth_hz)
    return Game.from_network(topo, plan, ch, z, cfg)


@pytest.fixture
def small_game():
    return make_game(7)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
