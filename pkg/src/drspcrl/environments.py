"""Desk-scale environments with tunable physics, snapshots and branch sampling."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .tabular_mdp import TabularMdp


class EnvError(RuntimeError):
    pass


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    truncated: bool = False  # episode ended by the time limit, not by a terminal state


@dataclass(frozen=True)
class Discrete:
    n: int

    def contains(self, action) -> bool:
        return isinstance(action, (int, np.integer)) and 0 <= int(action) < self.n

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n))


@dataclass(frozen=True)
class Box:
    low: float
    high: float
    shape: tuple = (1,)

    def contains(self, action) -> bool:
        a = np.asarray(action, dtype=float)
        return a.shape == self.shape and bool(np.all(np.isfinite(a))) and bool(np.all((a >= self.low) & (a <= self.high)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=self.shape)


@dataclass
class EnvSnapshot:
    owner: str
    state: dict


class Env:
    """Minimal single-owner simulator interface.

    Subclasses keep all mutable simulator state in ``self._state`` (a dict)
    so that snapshot/restore is a deep copy of that dict plus the random
    stream used by the dynamics.
    """

    name = "env"
    obs_dim: int
    action_space: Discrete | Box
    perturbable: tuple = ()
    stochastic: bool = True  # False: branch samples from one snapshot are identical
    time_limit: int

    def __init__(self, physics: dict, seed: int = 0):
        self.nominal = dict(physics)
        self.physics = dict(physics)
        self._check_physics(self.physics)
        self.rng = np.random.default_rng(seed)
        self._state: dict | None = None

    def _check_physics(self, physics: dict) -> None:
        for k, v in physics.items():
            if not v > 0:
                raise ValueError(f"physics parameter {k} must be positive, got {v}")

    def seed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.seed(seed)
        self._state = self._initial_state()
        self._state["t"] = 0
        self._state["done"] = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._state is None:
            raise EnvError("step() before reset()")
        if self._state["done"]:
            raise EnvError("step() after episode end; call reset()")
        if not self.action_space.contains(action):
            raise EnvError(f"action {action!r} outside {self.action_space}")
        reward, terminal = self._advance(action)
        self._state["t"] += 1
        truncated = not terminal and self._state["t"] >= self.time_limit
        self._state["done"] = terminal or truncated
        return StepResult(self._observe(), float(reward), terminal or truncated, truncated)

    def snapshot(self) -> EnvSnapshot:
        if self._state is None:
            raise EnvError("nothing to snapshot before reset()")
        return EnvSnapshot(
            self.name,
            {"sim": copy.deepcopy(self._state), "physics": dict(self.physics), "rng": copy.deepcopy(self.rng.bit_generator.state)},
        )

    def restore(self, snap: EnvSnapshot) -> None:
        if not isinstance(snap, EnvSnapshot) or snap.owner != self.name:
            raise EnvError("snapshot does not belong to this environment")
        self._state = copy.deepcopy(snap.state["sim"])
        self.physics = dict(snap.state["physics"])
        self.rng.bit_generator.state = copy.deepcopy(snap.state["rng"])

    def branch_sample(self, snap: EnvSnapshot, action, n: int, rng: np.random.Generator) -> list[StepResult]:
        """n independent next-state draws from the snapshot.

        Branch 0 continues the snapshot's own random stream, so it coincides
        with an ordinary ``step`` taken after ``restore(snap)``; the other
        branches each run on a distinct sub-seed drawn from ``rng``.  The
        environment is left restored at ``snap``.
        """
        if n < 1:
            raise ValueError("n must be positive")
        seeds = rng.integers(0, 2**63 - 1, size=n - 1)
        out = []
        for j in range(n):
            self.restore(snap)
            if j > 0:
                self.rng = np.random.default_rng(int(seeds[j - 1]))
            out.append(self.step(action))
        self.restore(snap)
        return out

    def apply_physics_scale(self, scale_factors: dict) -> "Env":
        """Set physics to nominal * scale, always relative to the nominal parameters."""
        for k, f in scale_factors.items():
            if k not in self.nominal:
                raise KeyError(f"unknown physics parameter {k!r}")
            if not f > 0:
                raise ValueError(f"scale for {k} must be positive, got {f}")
        physics = dict(self.nominal)
        for k, f in scale_factors.items():
            physics[k] = self.nominal[k] * f
        self._check_physics(physics)
        self.physics = physics
        return self

    def reset_physics(self) -> None:
        self.physics = dict(self.nominal)

    def state_index(self) -> int:
        raise NotImplementedError

    def _initial_state(self) -> dict:
        raise NotImplementedError

    def _advance(self, action) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name, "obs_dim": self.obs_dim, "action_space": repr(self.action_space), "physics": dict(self.physics)}


class ChainEnv(Env):
    """Seven-cell slippery corridor.

    Cells 0 and 6 are terminals (+0.1 and +1).  Cell 1 is a trap (-1 per
    step spent there) next to the safe terminal.  Moving succeeds with
    probability 1 - slip_prob and goes the opposite way otherwise.  Acting
    in a terminal cell collects its reward and ends the episode.  Actions:
    0 = left, 1 = right.  Observations are one-hot cell indicators.
    """

    name = "chain"
    n_cells = 7
    action_space = Discrete(2)
    perturbable = ("slip_prob",)
    LEFT, RIGHT = 0, 1

    def __init__(
        self,
        slip_prob: float = 0.1,
        start: int = 3,
        trap: int = 1,
        max_steps: int = 200,
        seed: int = 0,
    ):
        self.start, self.trap, self.time_limit = start, trap, max_steps
        if not 0 < start < self.n_cells - 1 or not 0 < trap < self.n_cells - 1:
            raise ValueError("start and trap must be interior cells")
        super().__init__({"slip_prob": slip_prob}, seed)
        self.obs_dim = self.n_cells

    def _check_physics(self, physics: dict) -> None:
        if not 0 <= physics["slip_prob"] <= 0.5:
            raise ValueError(f"slip_prob must lie in [0, 0.5], got {physics['slip_prob']}")

    def cell_reward(self, cell: int) -> float:
        if cell == 0:
            return 0.1
        if cell == self.n_cells - 1:
            return 1.0
        if cell == self.trap:
            return -1.0
        return 0.0

    def _initial_state(self) -> dict:
        return {"cell": self.start}

    def _advance(self, action) -> tuple[float, bool]:
        cell = self._state["cell"]
        reward = self.cell_reward(cell)
        if cell in (0, self.n_cells - 1):
            return reward, True
        direction = 1 if int(action) == self.RIGHT else -1
        if self.rng.random() < self.physics["slip_prob"]:
            direction = -direction
        self._state["cell"] = cell + direction
        return reward, False

    def _observe(self) -> np.ndarray:
        obs = np.zeros(self.n_cells)
        obs[self._state["cell"]] = 1.0
        return obs

    def state_index(self) -> int:
        return int(self._state["cell"])

    @staticmethod
    def decode(observation) -> int:
        return int(np.argmax(observation))

    def tabular_model(self, gamma: float = 0.9) -> TabularMdp:
        """Exact MDP of the current physics; state ``n_cells`` is the post-terminal sink.

        The time limit is ignored: it only truncates sampled episodes.
        """
        L = self.n_cells
        S = L + 1
        p = self.physics["slip_prob"]
        rewards = np.zeros((S, 2))
        kernel = np.zeros((S, 2, S))
        for cell in range(L):
            rewards[cell] = self.cell_reward(cell)
            if cell in (0, L - 1):
                kernel[cell, :, L] = 1.0
                continue
            for a, d in ((self.LEFT, -1), (self.RIGHT, 1)):
                kernel[cell, a, cell + d] += 1.0 - p
                kernel[cell, a, cell - d] += p
        kernel[L, :, L] = 1.0
        return TabularMdp(rewards, kernel, gamma)

    def start_distribution(self) -> np.ndarray:
        d = np.zeros(self.n_cells + 1)
        d[self.start] = 1.0
        return d


def wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2 * math.pi) - math.pi


class PendulumEnv(Env):
    """Torque-limited swing-up pendulum; theta = 0 is upright.

    theta'' = (tau - damping * theta' + mass * gravity * length * sin(theta)) / (mass * length**2)

    integrated with velocity Verlet, ``substeps`` substeps per 0.05 s control
    step.  Observation is (cos theta, sin theta, theta').  Episodes start
    hanging near theta = pi and last 200 steps.
    """

    name = "pendulum"
    action_space = Box(-2.0, 2.0, (1,))
    perturbable = ("mass", "damping", "length")
    stochastic = False
    obs_dim = 3
    dt = 0.05

    def __init__(
        self,
        mass: float = 1.0,
        length: float = 1.0,
        damping: float = 0.05,
        gravity: float = 10.0,
        episode_length: int = 200,
        substeps: int = 20,
        init_noise: float = 0.1,
        seed: int = 0,
    ):
        self.time_limit, self.substeps, self.init_noise = episode_length, substeps, init_noise
        super().__init__({"mass": mass, "length": length, "damping": damping, "gravity": gravity}, seed)

    def _check_physics(self, physics: dict) -> None:
        # damping may be switched off entirely; everything else must stay positive
        for k, v in physics.items():
            if not (v >= 0 if k == "damping" else v > 0):
                raise ValueError(f"physics parameter {k} out of range: {v}")

    def _initial_state(self) -> dict:
        theta = math.pi + self.rng.uniform(-self.init_noise, self.init_noise)
        omega = self.rng.uniform(-self.init_noise, self.init_noise)
        return {"theta": float(theta), "omega": float(omega)}

    def set_state(self, theta: float, omega: float) -> np.ndarray:
        if self._state is None:
            self.reset()
        self._state.update(theta=float(theta), omega=float(omega))
        return self._observe()

    def angular_acceleration(self, theta: float, omega: float, torque: float) -> float:
        ph = self.physics
        m, l = ph["mass"], ph["length"]
        return (torque - ph["damping"] * omega + m * ph["gravity"] * l * math.sin(theta)) / (m * l * l)

    def energy(self) -> float:
        ph = self.physics
        m, l = ph["mass"], ph["length"]
        th, w = self._state["theta"], self._state["omega"]
        return 0.5 * m * l * l * w * w + m * ph["gravity"] * l * math.cos(th)

    def _advance(self, action) -> tuple[float, bool]:
        tau = float(np.asarray(action).reshape(-1)[0])
        th, w = self._state["theta"], self._state["omega"]
        reward = -(wrap_angle(th) ** 2 + 0.1 * w * w + 0.001 * tau * tau)
        h = self.dt / self.substeps
        for _ in range(self.substeps):
            w_half = w + 0.5 * h * self.angular_acceleration(th, w, tau)
            th = th + h * w_half
            w = w_half + 0.5 * h * self.angular_acceleration(th, w_half, tau)
        self._state["theta"], self._state["omega"] = th, w
        return reward, False

    def _observe(self) -> np.ndarray:
        th, w = self._state["theta"], self._state["omega"]
        return np.array([math.cos(th), math.sin(th), w])


ENVIRONMENTS = {"chain": ChainEnv, "pendulum": PendulumEnv}


def make_env(name: str, params: dict | None = None, seed: int = 0) -> Env:
    if name not in ENVIRONMENTS:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    return ENVIRONMENTS[name](**(params or {}), seed=seed)
