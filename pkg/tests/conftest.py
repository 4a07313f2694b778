import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ecop.approx import TabularSoftmaxPolicy
from ecop.losses import SurrogateBatch

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def enumerate_paths(cmdp, probs):
    """Brute-force (J, J_C...) by summing over every state/action path.

    Shares no code with the DP in ``ecop.cmdp``; used as an independent oracle.
    """
    S, A, H = cmdp.num_states, cmdp.num_actions, cmdp.horizon
    signals = [cmdp.reward] + list(cmdp.costs)
    totals = np.zeros(len(signals))
    for s0 in range(S):
        if cmdp.initial_dist[s0] == 0:
            continue
        for acts in itertools.product(range(A), repeat=H):
            for nxt in itertools.product(range(S), repeat=H):
                p = cmdp.initial_dist[s0]
                s = s0
                ret = np.zeros(len(signals))
                for h in range(H):
                    a, s2 = acts[h], nxt[h]
                    p *= probs[h, s, a] * cmdp.transition[s, a, s2]
                    if p == 0:
                        break
                    ret += [g[s, a, s2] for g in signals]
                    s = s2
                else:
                    totals += p * ret
    return totals


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    def check(name, ok, detail):
        _CRITERIA.append((name, bool(ok), detail))
        assert ok, f"criterion {name}: {detail}"
    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_batch(seed, m=1, N=6, H=3, S=3, A=2, drift=0.3):
    rng = np.random.default_rng(seed)
    pol = TabularSoftmaxPolicy(H, S, A)
    old = rng.normal(size=pol.layout.size)
    obs = rng.integers(0, S, (N, H))
    act = rng.integers(0, A, (N, H))
    h = np.tile(np.arange(1, H + 1), N)
    logp = pol.log_prob(old, h, obs.ravel(), act.ravel()).value.reshape(N, H)
    batch = SurrogateBatch(pol, obs, act, logp, rng.normal(size=(N, H)), rng.normal(size=(N, H, m)),
                           rng.uniform(0, 2, m), rng.uniform(0, 2, m))
    return batch, old, old + drift * rng.normal(size=old.size)
