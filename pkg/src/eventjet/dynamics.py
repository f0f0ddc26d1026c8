"""Closed-loop benchmark dynamics, written once for floats and Taylor polynomials.

Every right-hand side only uses ``+ - * /`` and the analytic functions from
:mod:`eventjet.polyalg`, so the same code integrates a nominal trajectory and
transports a jet.  States are in scaled units; see each model's ``scaling``.
"""
from __future__ import annotations

import math
from dataclasses import MISSING, dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from . import polyalg as pa
from .errors import ConfigError, DomainError
from .netpoly import PolicyNet, eval_net, normalize_direction

AU = 1.495978707e11  # m
MU_SUN = 1.32712440018e20  # m^3/s^2, standard heliocentric value
RPM = 2.0 * math.pi / 60.0

EPS_GIMBAL = 1e-6


def _const(x) -> float:
    return x.const if isinstance(x, pa.TPoly) else float(x)


@dataclass(frozen=True)
class Scaling:
    """Physical size of one scaled unit of length, time and mass."""

    length: float = 1.0
    time: float = 1.0
    mass: float = 1.0

    @property
    def velocity(self) -> float:
        return self.length / self.time

    @property
    def acceleration(self) -> float:
        return self.length / self.time**2


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class TransferParams:
    mu: float = MU_SUN
    R: float = 1.3 * AU
    gamma: float = 0.1e-3  # m/s^2
    r_soi: float = 924_000e3

    @property
    def omega(self) -> float:
        return math.sqrt(self.mu / self.R**3)


@dataclass(frozen=True)
class LanderParams:
    mu: float = 1530348199.0
    omega: float = 0.00041596
    c1: float = 80.0
    isp: float = 600.0
    g0: float = 9.8
    m0: float = 353.0


@dataclass(frozen=True)
class DroneParams:
    """Quadcopter model.  The force, moment, inertia and motor-lag coefficients
    have no defaults: they come from the model being certified."""

    Ix: float
    Iy: float
    Iz: float
    tau: float
    k_x: float
    k_y: float
    k_omega: float
    k_z: float
    k_h: float
    k_p: float
    k_pv: float
    k_q: float
    k_qv: float
    k_r1: float
    k_r2: float
    k_rr: float
    g: float = 9.81
    omega_min: float = 3000.0 * RPM
    omega_max: float = 12000.0 * RPM

    @classmethod
    def from_mapping(cls, block: Mapping) -> "DroneParams":
        required = [f.name for f in fields(cls) if f.default is MISSING]
        missing = [name for name in required if name not in block]
        if missing:
            raise ConfigError(f"drone model needs coefficients {missing}; no defaults are provided")
        known = {f.name for f in fields(cls)}
        extra = set(block) - known - {"omega_min_rpm", "omega_max_rpm"}
        if extra:
            raise ConfigError(f"unknown drone coefficients {sorted(extra)}")
        kw = {k: float(v) for k, v in block.items() if k in known}
        if "omega_min_rpm" in block:
            kw["omega_min"] = float(block["omega_min_rpm"]) * RPM
        if "omega_max_rpm" in block:
            kw["omega_max"] = float(block["omega_max_rpm"]) * RPM
        return cls(**kw)


def _check_positive(obj, names):
    for name in names:
        if not getattr(obj, name) > 0:
            raise ConfigError(f"{type(obj).__name__}.{name} must be positive")


# ---------------------------------------------------------------------------
# models


class DynamicsModel:
    """Base class: subclasses define ``rhs(state, controls, consts)``."""

    id: str = "base"
    state_names: tuple[str, ...] = ()
    wiring: str = "none"

    def __init__(self, scaling: Scaling | None = None):
        self.scaling = scaling or Scaling()

    @property
    def state_dim(self) -> int:
        return len(self.state_names)

    @property
    def state_units(self) -> np.ndarray:
        return np.ones(self.state_dim)

    @property
    def consts(self) -> dict:
        """Scaled constants used by ``rhs``; any of them can be expanded as a parameter."""
        return {}

    def to_scaled(self, x_phys) -> np.ndarray:
        return np.asarray(x_phys, dtype=float) / self.state_units

    def to_physical(self, x_scaled) -> np.ndarray:
        return np.asarray(x_scaled, dtype=float) * self.state_units

    def rhs(self, state: Sequence, controls, consts: Mapping | None = None) -> list:
        raise NotImplementedError

    def wire(self, outputs: list, policy: PolicyNet) -> object:
        return None

    def check_policy(self, policy: PolicyNet | None) -> None:
        if self.wiring == "none":
            return
        if policy is None:
            raise ConfigError(f"model {self.id!r} needs a policy")
        if policy.input_dim != self.state_dim:
            raise ConfigError(f"policy takes {policy.input_dim} inputs, model {self.id!r} has {self.state_dim} states")
        if policy.output_wiring not in (self.wiring, "none"):
            raise ConfigError(f"policy wiring {policy.output_wiring!r} does not match model {self.id!r}")
        needed = {"direction": 3, "throttle_direction": 4, "rotors": 4}[self.wiring]
        if policy.output_dim != needed:
            raise ConfigError(f"model {self.id!r} needs {needed} policy outputs, got {policy.output_dim}")


def _throttle(out, policy: PolicyNet):
    # final sigmoid layers already produce throttles in (0, 1)
    return out if policy.layers[-1].activation == "sigmoid" else pa.sigmoid(out)


class TransferModel(DynamicsModel):
    """Rotating-frame heliocentric transfer with constant thrust acceleration."""

    id = "transfer"
    state_names = ("x", "y", "z", "vx", "vy", "vz")
    wiring = "direction"

    def __init__(self, params: TransferParams | None = None, scaling: Scaling | None = None):
        self.params = params or TransferParams()
        _check_positive(self.params, ("mu", "R", "r_soi"))
        p = self.params
        super().__init__(scaling or Scaling(length=p.R, time=1.0 / p.omega))
        s = self.scaling
        self._consts = {
            "mu": p.mu * s.time**2 / s.length**3,
            "omega": p.omega * s.time,
            "gamma": p.gamma / s.acceleration,
        }

    @property
    def state_units(self):
        s = self.scaling
        return np.array([s.length] * 3 + [s.velocity] * 3)

    @property
    def consts(self):
        return dict(self._consts)

    def rhs(self, state, controls, consts=None):
        c = self._consts if consts is None else consts
        x, y, z, vx, vy, vz = state
        if controls is None:
            ix = iy = iz = 0.0
        else:
            ix, iy, iz = controls
        r2 = x * x + y * y + z * z
        if _const(r2) <= 0:
            raise DomainError("zero heliocentric radius")
        r = pa.sqrt(r2)
        k = c["mu"] * pa.recip(r2 * r)
        om, gam = c["omega"], c["gamma"]
        ax = -k * x + 2.0 * om * vy + om * om * x + gam * ix
        ay = -k * y - 2.0 * om * vx + om * om * y + gam * iy
        az = -k * z + gam * iz
        return [vx, vy, vz, ax, ay, az]

    def wire(self, outputs, policy):
        return normalize_direction(outputs[:3])

    def jacobi_energy(self, state) -> float:
        x, y, z, vx, vy, vz = (float(v) for v in state)
        c = self._consts
        r = math.sqrt(x * x + y * y + z * z)
        return 0.5 * (vx * vx + vy * vy + vz * vz) - c["mu"] / r - 0.5 * c["omega"] ** 2 * (x * x + y * y)


class LanderModel(DynamicsModel):
    """Rotating-frame point-mass asteroid landing with throttle and mass flow."""

    id = "lander"
    state_names = ("x", "y", "z", "vx", "vy", "vz", "m")
    wiring = "throttle_direction"

    def __init__(self, params: LanderParams | None = None, scaling: Scaling | None = None):
        self.params = params or LanderParams()
        p = self.params
        _check_positive(p, ("mu", "c1", "isp", "g0", "m0"))
        if scaling is None:
            L = 100e3
            scaling = Scaling(length=L, time=L * math.sqrt(L / p.mu), mass=p.m0)
        super().__init__(scaling)
        s = self.scaling
        self._consts = {
            "mu": p.mu * s.time**2 / s.length**3,
            "omega": p.omega * s.time,
            "c1": p.c1 * s.time**2 / (s.mass * s.length),
            "ve": p.isp * p.g0 * s.time / s.length,
        }

    @property
    def state_units(self):
        s = self.scaling
        return np.array([s.length] * 3 + [s.velocity] * 3 + [s.mass])

    @property
    def consts(self):
        return dict(self._consts)

    def rhs(self, state, controls, consts=None):
        c = self._consts if consts is None else consts
        x, y, z, vx, vy, vz, m = state
        if _const(m) <= 0:
            raise DomainError("non-positive spacecraft mass")
        if controls is None:
            u, (ix, iy, iz) = 0.0, (0.0, 0.0, 0.0)
        else:
            u, (ix, iy, iz) = controls
        r2 = x * x + y * y + z * z
        if _const(r2) <= 0:
            raise DomainError("zero radius")
        r = pa.sqrt(r2)
        k = c["mu"] * pa.recip(r2 * r)
        om = c["omega"]
        thrust = u * c["c1"] * pa.recip(m)
        ax = -k * x + 2.0 * om * vy + om * om * x + thrust * ix
        ay = -k * y - 2.0 * om * vx + om * om * y + thrust * iy
        az = -k * z + thrust * iz
        mdot = -u * c["c1"] / c["ve"]
        return [vx, vy, vz, ax, ay, az, mdot]

    def wire(self, outputs, policy):
        return _throttle(outputs[0], policy), normalize_direction(outputs[1:4])


# -- drone -----------------------------------------------------------------


def rotation_matrix(lam) -> list[list]:
    """Body-to-world rotation for Euler angles (roll, pitch, yaw)."""
    phi, theta, psi = lam
    cf, sf = pa.cos(phi), pa.sin(phi)
    ct, st = pa.cos(theta), pa.sin(theta)
    cp, sp_ = pa.cos(psi), pa.sin(psi)
    return [
        [ct * cp, -cf * sp_ + sf * st * cp, sf * sp_ + cf * st * cp],
        [ct * sp_, cf * cp + sf * st * sp_, -sf * cp + cf * st * sp_],
        [-st, sf * ct, cf * ct],
    ]


def euler_rate_matrix(lam, eps: float = EPS_GIMBAL) -> list[list]:
    """Maps body rates (p, q, r) to Euler-angle rates."""
    phi, theta, _ = lam
    ct = pa.cos(theta)
    if abs(_const(ct)) < eps:
        raise DomainError("Euler-angle singularity: cos(pitch) ~ 0")
    cf, sf = pa.cos(phi), pa.sin(phi)
    sec = pa.recip(ct)
    tt = pa.sin(theta) * sec
    return [
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf * sec, cf * sec],
    ]


def _matvec(m, v):
    return [m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] for i in range(3)]


def _mattvec(m, v):
    return [m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2] for i in range(3)]


def body_force_moment(v_body, w, wdot, body_rates, p: DroneParams):
    """Specific force and moments in the body frame (thrust/drag and rotor model)."""
    vbx, vby, vbz = v_body
    w1, w2, w3, w4 = w
    wsum = w1 + w2 + w3 + w4
    w1s, w2s, w3s, w4s = w1 * w1, w2 * w2, w3 * w3, w4 * w4
    F = [
        -p.k_x * vbx * wsum,
        -p.k_y * vby * wsum,
        -p.k_omega * (w1s + w2s + w3s + w4s) - p.k_z * vbz * wsum - p.k_h * (vbx * vbx + vby * vby),
    ]
    d1, d2, d3, d4 = wdot
    M = [
        p.k_p * (w1s - w2s - w3s + w4s) + p.k_pv * vby,
        p.k_q * (w1s + w2s - w3s - w4s) + p.k_qv * vbx,
        p.k_r1 * (-w1 + w2 - w3 + w4) + p.k_r2 * (-d1 + d2 - d3 + d4) - p.k_rr * body_rates[2],
    ]
    return F, M


def drone_kinematic_terms(lam, v_body, w, wdot, body_rates, params: DroneParams, eps: float = EPS_GIMBAL):
    """Rotation matrix, Euler-rate matrix, specific force and moments."""
    R = rotation_matrix(lam)
    Q = euler_rate_matrix(lam, eps)
    F, M = body_force_moment(v_body, w, wdot, body_rates, params)
    return R, Q, F, M


class DroneModel(DynamicsModel):
    """16-state quadcopter with first-order motor lag; SI units, unscaled."""

    id = "drone"
    state_names = (
        "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi",
        "p", "q", "r", "w1", "w2", "w3", "w4",
    )  # fmt: skip
    wiring = "rotors"

    def __init__(self, params: DroneParams, scaling: Scaling | None = None):
        if params is None:
            raise ConfigError("drone model needs explicit coefficients")
        _check_positive(params, ("Ix", "Iy", "Iz", "tau", "g"))
        if not params.omega_max > params.omega_min >= 0:
            raise ConfigError("need omega_max > omega_min >= 0")
        self.params = params
        super().__init__(scaling)

    @property
    def consts(self):
        return {f.name: getattr(self.params, f.name) for f in fields(self.params)}

    def motor_rates(self, w, u, params=None):
        p = params or self.params
        span = p.omega_max - p.omega_min
        return [(span * u[i] + p.omega_min - w[i]) / p.tau for i in range(4)]

    def rhs(self, state, controls, consts=None):
        p = self.params if consts is None else DroneParams(**consts)
        pos_dot = list(state[3:6])
        v = state[3:6]
        lam = state[6:9]
        rates = state[9:12]
        w = state[12:16]
        u = controls if controls is not None else [0.5] * 4
        # motor lag is explicit, so the rotor accelerations inside M_z are known here
        wdot = self.motor_rates(w, u, p)
        Q = euler_rate_matrix(lam)
        R = rotation_matrix(lam)
        v_body = _mattvec(R, v)
        F, M = body_force_moment(v_body, w, wdot, rates, p)
        RF = _matvec(R, F)
        vdot = [RF[0], RF[1], p.g + RF[2]]
        lamdot = _matvec(Q, rates)
        pr, qr, rr = rates
        # I Omega_dot = -Omega x (I Omega) + M with diagonal inertia
        Ipr, Iqr, Irr = p.Ix * pr, p.Iy * qr, p.Iz * rr
        cross = [qr * Irr - rr * Iqr, rr * Ipr - pr * Irr, pr * Iqr - qr * Ipr]
        rates_dot = [(M[0] - cross[0]) / p.Ix, (M[1] - cross[1]) / p.Iy, (M[2] - cross[2]) / p.Iz]
        return pos_dot + vdot + lamdot + rates_dot + wdot

    def wire(self, outputs, policy):
        return [_throttle(o, policy) for o in outputs[:4]]


# -- small analytic systems used as oracles ---------------------------------


class AffineModel(DynamicsModel):
    """x' = A x + b, uncontrolled."""

    id = "affine"

    def __init__(self, A, b=None, names: Sequence[str] | None = None):
        super().__init__()
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        self.state_names = tuple(names) if names else tuple(f"s{i}" for i in range(n))

    def rhs(self, state, controls=None, consts=None):
        n = self.state_dim
        out = []
        for i in range(n):
            acc = self.b[i]
            for j in range(n):
                if self.A[i, j] != 0.0:
                    acc = acc + self.A[i, j] * state[j]
            out.append(acc)
        return out


def decay_model() -> AffineModel:
    """x' = -x."""
    return AffineModel([[-1.0]], names=("x",))


class CubicClockModel(DynamicsModel):
    """x' = -x^3 alongside a clock y' = 1; closed form x = x0 / sqrt(1 + 2 x0^2 t)."""

    id = "cubic"
    state_names = ("x", "y")

    def rhs(self, state, controls=None, consts=None):
        x, y = state
        return [-(x * x * x), 0.0 * y + 1.0]


# ---------------------------------------------------------------------------


def closed_loop_rhs(model: DynamicsModel, policy: PolicyNet | None, state: Sequence, consts: Mapping | None = None) -> list:
    """Policy outputs wired into the model's right-hand side."""
    if model.wiring == "none" or policy is None:
        return model.rhs(state, None, consts)
    outputs = eval_net(policy, state)
    return model.rhs(state, model.wire(outputs, policy), consts)


MODEL_IDS = ("transfer", "lander", "drone")


def build_model(model_id: str, params: Mapping | None = None, scaling: Mapping | None = None) -> DynamicsModel:
    params = dict(params or {})
    sc = Scaling(**scaling) if scaling else None
    try:
        if model_id == "transfer":
            return TransferModel(TransferParams(**params), sc)
        if model_id == "lander":
            return LanderModel(LanderParams(**params), sc)
        if model_id == "drone":
            return DroneModel(DroneParams.from_mapping(params), sc)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {model_id!r}: {exc}") from exc
    raise ConfigError(f"unknown model {model_id!r}; choose from {MODEL_IDS}")


# Table 1 nominal initial states, physical units (m, m/s, kg)
TRANSFER_X0 = np.array([-1.1874388 * AU, -3.0578396 * AU, 0.3569406 * AU, -48.17e3, 18.30e3, 0.64e3])
LANDER_X0 = np.array([180e3, -4.8e3, 0.0, 25.0, -25.0, 20.0, 353.0])
