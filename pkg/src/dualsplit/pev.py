"""
Synthetic overnight-charging instances for a fleet of plug-in vehicles.

Units are MW for charging rates, MWh for energy and k€ for cost, which
keeps multipliers and violations small next to the unit tolerances. Each
vehicle picks a charging rate in every slot; the network caps the total
fleet power per slot from above and below, giving ``2 * slots`` coupling
rows. Prices, battery data and availability windows are drawn from
seeded ranges; the structure, not any particular data set, is what the
generator reproduces.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .assumptions import check_slater
from .problem import CoupledProblem, make_agent
from .solvers.simplex import SimplexSolver


class PevGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PevConfig:
    m: int = 100
    slots: int = 24
    dt: float = 1.0 / 3.0
    capacity_range: tuple[float, float] = (0.02, 0.03)
    rate_range: tuple[float, float] = (0.003, 0.007)
    initial_soc_range: tuple[float, float] = (0.2, 0.4)
    final_soc_range: tuple[float, float] = (0.55, 0.8)
    soc_floor: float = 0.1
    taper_start: float = 0.8
    ramp_fraction: float = 0.6
    efficiency: float = 0.9
    price_range: tuple[float, float] = (0.06, 0.08)
    price_noise: float = 0.1
    network_fraction: float = 0.6
    min_power_fraction: float = 0.0
    availability_slack: int = 3
    seed: int = 0
    max_attempts: int = 10
    widen_factor: float = 1.25

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("fleet size must be at least 1")
        if self.slots < 1:
            raise ValueError("at least one slot is needed")
        for name in ("capacity_range", "rate_range", "initial_soc_range", "final_soc_range", "price_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        if self.initial_soc_range[1] >= self.final_soc_range[0]:
            raise ValueError("initial charge must stay below the required final charge")
        if not 0 < self.network_fraction:
            raise ValueError("network_fraction must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PevShape:
    m: int
    n_i: int
    p: int
    local_rows: int
    box_inequalities: int
    network_capacity: np.ndarray = field(repr=False)
    attempts: int = 1

    @property
    def local_inequalities(self) -> int:
        return self.local_rows + self.box_inequalities


def price_curve(slots: int, low: float, high: float) -> np.ndarray:
    """Overnight tariff: expensive in the evening, cheapest in the small hours."""
    t = np.arange(slots) / max(slots - 1, 1)
    shape = 0.5 * (1.0 + np.cos(2.0 * np.pi * (t - 0.05)))
    return low + (high - low) * shape


def _vehicle(cfg: PevConfig, i: int, rng: np.random.Generator, base_price: np.ndarray):
    S, dt, zeta = cfg.slots, cfg.dt, cfg.efficiency
    cap = rng.uniform(*cfg.capacity_range)
    rate = rng.uniform(*cfg.rate_range)
    e0 = rng.uniform(*cfg.initial_soc_range) * cap
    e_req = rng.uniform(*cfg.final_soc_range) * cap
    e_min = cfg.soc_floor * cap
    slack = min(cfg.availability_slack, max(S // 4, 0))
    arrive = int(rng.integers(0, slack + 1))
    depart = S - int(rng.integers(0, slack + 1))

    ub = np.zeros(S)
    ub[arrive:depart] = rate
    lb = np.zeros(S)
    cost = base_price * (1.0 + cfg.price_noise * rng.uniform(-1.0, 1.0, size=S)) * dt

    L = np.tril(np.ones((S, S))) * (zeta * dt)  # row t: energy added up to slot t
    L_before = np.vstack([np.zeros((1, S)), L[:-1]])
    kappa = rate / ((1.0 - cfg.taper_start) * cap)
    ramp = cfg.ramp_fraction * rate
    D = (np.eye(S) - np.eye(S, k=-1))[1:]

    rows = [
        (L, np.full(S, cap - e0)),  # state of charge below capacity
        (-L, np.full(S, e0 - e_min)),  # state of charge above the floor
        (np.eye(S) + kappa * L_before, np.full(S, kappa * (cap - e0))),  # taper near full
        (D, np.full(S - 1, ramp)),
        (-D, np.full(S - 1, ramp)),
    ]

    # the required charge must be reachable with room to spare, so the
    # local set keeps an interior
    window = depart - arrive
    reachable = zeta * dt * rate * window * 0.7
    C0 = np.vstack([r[0] for r in rows])
    d0 = np.concatenate([r[1] for r in rows])
    most = SimplexSolver(C0, d0, lb, ub, pivot_rule="dantzig").solve(-L[-1])
    e_req = min(e_req, e0 + reachable, e0 + 0.9 * max(-most.objective, 0.0))

    rows.append((-L[-1:], np.array([e0 - e_req])))  # required final charge
    C = np.vstack([r[0] for r in rows])
    d = np.concatenate([r[1] for r in rows])
    return cost, C, d, lb, ub


def generate_pev(config: PevConfig | None = None, return_shape: bool = False):
    """Draw a fleet charging instance.

    The network limits are ``sum_i x_i(t) <= P_max(t)`` and
    ``-sum_i x_i(t) <= -P_min(t)``, split evenly over the vehicles as
    ``b / m``. If the drawn limits admit no strictly feasible schedule the
    upper limits are widened and the check repeated, at most
    ``max_attempts`` times.
    """
    cfg = config or PevConfig()
    rng = np.random.default_rng(cfg.seed)
    S, m = cfg.slots, cfg.m
    base = price_curve(S, *cfg.price_range)
    vehicles = [_vehicle(cfg, i, rng, base) for i in range(m)]
    total_rate = np.sum([v[4] for v in vehicles], axis=0)
    p_max = cfg.network_fraction * np.maximum(total_rate, total_rate.max() * 0.1)
    p_min = cfg.min_power_fraction * total_rate
    A = np.vstack([np.eye(S), -np.eye(S)])

    for attempt in range(1, cfg.max_attempts + 1):
        b = np.concatenate([p_max, -p_min])
        agents = [
            make_agent(i, cost, A, b / m, lb, ub, C=C, d=d)
            for i, (cost, C, d, lb, ub) in enumerate(vehicles)
        ]
        problem = CoupledProblem(agents)
        if check_slater(problem).holds:
            if return_shape:
                shape = PevShape(
                    m, S, 2 * S, int(vehicles[0][1].shape[0]), 2 * S, p_max.copy(), attempt
                )
                return problem, shape
            return problem
        p_max = p_max * cfg.widen_factor
    raise PevGenerationError(f"no strictly feasible instance after {cfg.max_attempts} attempts")
