"""Slippery 4-connected gridworlds with cost cells.

Actions: 0 up, 1 right, 2 down, 3 left. The intended move happens with
probability ``1 - slip``; otherwise the agent moves to one of the two
perpendicular directions with equal probability. Moves off the grid or
into a blocked cell leave the agent in place. Rewards and costs are
functions of the landing cell.
"""

from __future__ import annotations

import numpy as np

from ..cmdp import EpisodicCmdp
from .base import Env, EnvSpec

MOVES = np.array([(-1, 0), (0, 1), (1, 0), (0, -1)])


class GridWorld(Env):
    reset_noise_dim = 1
    step_noise_dim = 1

    def __init__(self, name: str, rows: int, cols: int, horizon: int, starts: list,
                 cost_cells: list, thresholds: tuple, reward: str = "goal", goal=None,
                 blocked=(), slip: float = 0.1):
        if len(cost_cells) != len(thresholds):
            raise ValueError("one threshold per cost channel")
        if reward not in ("goal", "distance"):
            raise ValueError(f"unknown reward kind {reward!r}")
        if not 0 <= slip < 1:
            raise ValueError("slip must lie in [0, 1)")
        self.rows, self.cols = rows, cols
        self.starts = [tuple(s) for s in starts]
        self.cost_cells = [frozenset(map(tuple, cells)) for cells in cost_cells]
        self.reward_kind = reward
        self.goal = tuple(goal)
        self.blocked = frozenset(map(tuple, blocked))
        self.slip = slip
        n = rows * cols
        self._blocked_mask = np.zeros(n, dtype=bool)
        for cell in self.blocked:
            self._blocked_mask[self.index(cell)] = True
        self._cost_mask = np.zeros((len(cost_cells), n))
        for i, cells in enumerate(self.cost_cells):
            for cell in cells:
                self._cost_mask[i, self.index(cell)] = 1.0
        r, c = np.divmod(np.arange(n), cols)
        self._dist = np.hypot(r - self.goal[0], c - self.goal[1])
        self.spec = EnvSpec(name, horizon, len(cost_cells), tuple(float(d) for d in thresholds),
                            True, n, 2, 4, None)

    def index(self, cell) -> int:
        return int(cell[0]) * self.cols + int(cell[1])

    def cell(self, s: int) -> tuple:
        return divmod(int(s), self.cols)

    def initial_states(self, u: np.ndarray) -> np.ndarray:
        k = np.minimum((u[:, 0] * len(self.starts)).astype(np.int64), len(self.starts) - 1)
        idx = np.array([self.index(s) for s in self.starts])
        return idx[k]

    def _move(self, states: np.ndarray, direction: np.ndarray) -> np.ndarray:
        r, c = np.divmod(states, self.cols)
        r2 = r + MOVES[direction, 0]
        c2 = c + MOVES[direction, 1]
        inside = (r2 >= 0) & (r2 < self.rows) & (c2 >= 0) & (c2 < self.cols)
        cand = np.clip(r2, 0, self.rows - 1) * self.cols + np.clip(c2, 0, self.cols - 1)
        return np.where(inside & ~self._blocked_mask[cand], cand, states)

    def _signals(self, states, s2):
        if self.reward_kind == "goal":
            reward = (s2 == self.index(self.goal)).astype(np.float64)
        else:
            reward = self._dist[states] - self._dist[s2]
        return reward, self._cost_mask[:, s2].T

    def transition(self, states, actions, u):
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        x = u[:, 0]
        keep = 1.0 - self.slip
        direction = np.where(x < keep, actions,
                             np.where(x < keep + self.slip / 2, (actions + 1) % 4, (actions + 3) % 4))
        s2 = self._move(states, direction)
        reward, costs = self._signals(states, s2)
        return s2, reward, costs

    def features(self, states):
        r, c = np.divmod(np.asarray(states, dtype=np.int64), self.cols)
        return np.stack([r / max(self.rows - 1, 1), c / max(self.cols - 1, 1)], axis=-1)

    def to_cmdp(self) -> EpisodicCmdp:
        n = self.rows * self.cols
        P = np.zeros((n, 4, n))
        for s in range(n):
            r, c = self.cell(s)
            for a in range(4):
                outcomes = [(a, 1.0 - self.slip), ((a + 1) % 4, self.slip / 2), ((a + 3) % 4, self.slip / 2)]
                for d, p in outcomes:
                    rr, cc = r + MOVES[d][0], c + MOVES[d][1]
                    ok = 0 <= rr < self.rows and 0 <= cc < self.cols and (rr, cc) not in self.blocked
                    P[s, a, rr * self.cols + cc if ok else s] += p
        s_idx = np.arange(n)
        if self.reward_kind == "goal":
            goal_row = (s_idx == self.index(self.goal)).astype(np.float64)
            R = np.broadcast_to(goal_row, (n, 4, n)).copy()
        else:
            R = np.broadcast_to(self._dist[:, None, None] - self._dist[None, None, :], (n, 4, n)).copy()
        costs = tuple(np.broadcast_to(mask, (n, 4, n)).copy() for mask in self._cost_mask)
        mu = np.zeros(n)
        for st in self.starts:
            mu[self.index(st)] += 1.0 / len(self.starts)
        return EpisodicCmdp(P, R, costs, self.spec.thresholds, mu, self.spec.horizon)


def hazard_gridworld(horizon: int = 30, threshold: float = 2.0, slip: float = 0.1,
                     start: str = "fixed", hazard_width: int = 2) -> GridWorld:
    """6x6 grid: the short route to the goal crosses a three-row hazard block.

    The block spans columns ``0 .. hazard_width - 1``; the safe detour runs
    up the first free column.
    """
    starts = [(5, 0)] if start == "fixed" else [(0, 0), (0, 5), (5, 0), (5, 5)]
    if start not in ("fixed", "corners"):
        raise ValueError(f"unknown start mode {start!r}")
    if not 1 <= hazard_width <= 5:
        raise ValueError("hazard_width must lie in 1..5")
    hazards = [(r, c) for r in range(1, 4) for c in range(hazard_width)]
    return GridWorld("hazard_gridworld", 6, 6, horizon, starts, [hazards], (threshold,),
                     reward="goal", goal=(0, 0), slip=slip)


def navigation_gridworld(horizon: int = 40, thresholds=(3.0, 5.0), slip: float = 0.1) -> GridWorld:
    """8x8 ring around a walled interior, with a hazard channel and a pillar-proximity channel.

    The agent starts in the bottom-left corner and the target is the top-right
    corner. One way round runs along a hazard strip (left column and top row);
    the other runs beside a row and column of pillars set into the interior
    wall. The reward is the decrease in Euclidean distance to the target, so
    either route earns the same return and only the costs tell them apart.
    """
    n = 8
    interior = [(r, c) for r in range(1, n - 1) for c in range(1, n - 1)]
    pillars = [(n - 2, c) for c in range(1, n - 1)] + [(r, n - 2) for r in range(1, n - 2)]
    blocked = set(interior)
    near_pillar = sorted({(r + dr, c + dc) for r, c in pillars for dr, dc in MOVES} - blocked)
    hazards = [(r, 0) for r in range(1, n - 1)] + [(0, c) for c in range(n - 1)]
    return GridWorld("navigation_gridworld", n, n, horizon, [(n - 1, 0)], [hazards, near_pillar],
                     tuple(thresholds), reward="distance", goal=(0, n - 1), blocked=sorted(blocked), slip=slip)
