"""Synthetic benchmark set-ups with fixed-seed policies.

Trained guidance networks are not available, so each benchmark pairs its
model with a small random SIREN (or a constant stub) and an initial state
chosen so that the nominal closed loop crosses the event transversally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    LANDER_X0,
    RPM,
    CubicClockModel,
    DroneModel,
    DroneParams,
    DynamicsModel,
    LanderModel,
    TransferModel,
    decay_model,
)
from .errors import ConfigError
from .eventmap import EventSpec
from .netpoly import Layer, PolicyNet, random_siren

# Illustrative quadcopter coefficients (mass-normalised forces, SI units).
# They are a test fixture with plausible magnitudes, not identified values:
# hover at u = 0.5 (7500 rpm) balances k_omega * 4 w^2 against g.
ILLUSTRATIVE_DRONE = {
    "Ix": 2.4e-3,
    "Iy": 2.4e-3,
    "Iz": 4.0e-3,
    "tau": 0.03,
    "k_x": 1.0e-4,
    "k_y": 1.0e-4,
    "k_omega": 9.81 / (4 * (7500 * RPM) ** 2),
    "k_z": 1.0e-4,
    "k_h": 1.0e-2,
    "k_p": 6.0e-7,
    "k_pv": -1.0e-3,
    "k_q": 6.0e-7,
    "k_qv": 1.0e-3,
    "k_r1": 1.0e-5,
    "k_r2": 1.0e-7,
    "k_rr": 1.0e-3,
}

PSYCHE_PROXY_RADIUS = 113e3  # m, spherical stand-in for the shape model
LANDER_ALTITUDE = 1e3  # m


@dataclass(frozen=True)
class Scenario:
    name: str
    model: DynamicsModel
    policy: PolicyNet | None
    x0: np.ndarray  # scaled
    event: EventSpec
    expand_vars: tuple
    var_scales: tuple
    t_max: float
    # half-width cap (map variable units) for pointwise oracle samples
    box_cap: float = 0.1
    notes: dict = field(default_factory=dict)


def constant_direction_policy(direction=(-1.0, 0.0, 0.0), input_dim: int = 6) -> PolicyNet:
    """Stub policy: zero weights, bias equal to the thrust direction."""
    w = np.zeros((3, input_dim))
    return PolicyNet((Layer(w, np.asarray(direction, dtype=float)),), np.zeros(input_dim), np.ones(input_dim), "direction")


def transfer_scenario(seed: int = 1, stub: bool = False) -> Scenario:
    """Approach of the target sphere of influence from three SOI radii out."""
    m = TransferModel()
    rs = m.params.r_soi / m.scaling.length
    if stub:
        x0 = np.array([1 + 3 * rs, -2 * rs, 0.0, -0.03, 0.0, 0.0])
        pol = constant_direction_policy()
    else:
        x0 = np.array([1 + 3 * rs, -2 * rs, -0.5 * rs, -0.03, 0.0, 0.0])
        pol = random_siren([6, 32, 32, 3], seed=seed, output_wiring="direction",
                           input_shift=[1, 0, 0, 0, 0, 0], input_scale=[1 / rs] * 3 + [20] * 3)
    ev = EventSpec.sphere([1.0, 0.0, 0.0], rs, direction="falling", name="soi")
    return Scenario(
        "transfer-stub" if stub else "transfer", m, pol, x0, ev,
        tuple(m.state_names), (rs,) * 3 + (1e-3,) * 3, 2.0, 0.1,
        {"position_unit_m": rs * m.scaling.length},
    )


def lander_scenario(seed: int = 0) -> Scenario:
    """Descent from the reference initial state to a 1 km altitude sphere."""
    m = LanderModel()
    x0 = m.to_scaled(LANDER_X0)
    pol = random_siren([7, 32, 32, 4], seed=seed, output_wiring="throttle_direction",
                       input_shift=x0, input_scale=[1, 1, 1, 5, 5, 5, 10])
    radius = (PSYCHE_PROXY_RADIUS + LANDER_ALTITUDE) / m.scaling.length
    ev = EventSpec.sphere([0.0, 0.0, 0.0], radius, direction="falling", name="altitude")
    # 1 km, 1 m/s and 1 kg per unit of each expansion variable
    L, V, M = m.scaling.length, m.scaling.velocity, m.scaling.mass
    scales = (1e3 / L,) * 3 + (1.0 / V,) * 3 + (1.0 / M,)
    return Scenario("lander", m, pol, x0, ev, tuple(m.state_names), scales, 4.0, 0.5)


def drone_scenario(seed: int = 0, params: dict | None = None, gain: float = 0.05) -> Scenario:
    """Level flight at 3 m/s through the gate plane x = 0 from 3 m before it."""
    m = DroneModel(DroneParams.from_mapping(params or ILLUSTRATIVE_DRONE))
    p = m.params
    w_hover = 0.5 * (p.omega_max + p.omega_min)
    x0 = np.array([-3.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] + [w_hover] * 4)
    shift = x0.copy()
    scale = np.array([1.0] * 12 + [1.0 / (p.omega_max - p.omega_min)] * 4)
    pol = random_siren([16, 32, 32, 4], seed=seed, gain=gain, output_wiring="rotors",
                       input_shift=shift, input_scale=scale)
    ev = EventSpec.plane([1.0, 0.0, 0.0], 0.0, direction="rising", name="gate")
    names = ("x", "y", "z", "vx", "vy", "vz")
    # 10 cm and 10 cm/s per unit
    return Scenario("drone", m, pol, x0, ev, names, (0.1,) * 6, 5.0, 0.5)


def decay_scenario() -> Scenario:
    m = decay_model()
    ev = EventSpec.plane([1.0], 1.0, indices=(0,), direction="falling")
    return Scenario("decay", m, None, np.array([2.0]), ev, ("x",), (1.0,), 10.0, 0.1)


def cubic_scenario() -> Scenario:
    """x' = -x^3 with a clock; the clock reading at x = 1/2 is nonlinear in x0."""
    m = CubicClockModel()
    ev = EventSpec.plane([1.0, 0.0], 0.5, indices=(0, 1), direction="falling")
    return Scenario("cubic", m, None, np.array([1.0, 0.0]), ev, ("x",), (1.0,), 50.0, 0.4)


SCENARIOS = {
    "transfer": transfer_scenario,
    "transfer-stub": lambda seed=1: transfer_scenario(seed, stub=True),
    "lander": lander_scenario,
    "drone": drone_scenario,
    "decay": decay_scenario,
    "cubic": cubic_scenario,
}


def get_scenario(name: str, **kw) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    try:
        return factory(**kw)
    except TypeError as exc:
        raise ConfigError(f"scenario {name!r}: {exc}") from exc
