import math

import numpy as np
import pytest

from eventjet import polyalg as pa
from eventjet.dynamics import (
    RPM,
    DroneModel,
    DroneParams,
    LanderModel,
    TransferModel,
    TransferParams,
    build_model,
    closed_loop_rhs,
    drone_kinematic_terms,
    euler_rate_matrix,
)
from eventjet.errors import ConfigError, DomainError
from eventjet.jetflow import integrate
from eventjet.netpoly import random_siren
from eventjet.scenarios import ILLUSTRATIVE_DRONE, constant_direction_policy


@pytest.fixture(scope="module")
def drone():
    return DroneModel(DroneParams.from_mapping(ILLUSTRATIVE_DRONE))


def test_transfer_equilibrium_and_thrust():
    m = TransferModel()
    assert m.rhs([1.0, 0, 0, 0, 0, 0], None) == pytest.approx([0.0] * 6, abs=1e-15)
    d = m.rhs([1.0, 0, 0, 0, 0, 0], [1.0, 0.0, 0.0])
    # thrust term converted back to m/s^2
    assert d[3] * m.scaling.acceleration == pytest.approx(1e-4, rel=1e-12)
    stub = constant_direction_policy((1.0, 0.0, 0.0))
    d2 = closed_loop_rhs(m, stub, [1.0, 0, 0, 0, 0, 0])
    assert d2 == pytest.approx([0, 0, 0, m.consts["gamma"], 0, 0], abs=1e-15)


def _transfer_oracle(s, i, c):
    x, y, z, vx, vy, vz = s
    r = math.sqrt(x * x + y * y + z * z)
    mu, om, g = c["mu"], c["omega"], c["gamma"]
    return np.array([
        vx, vy, vz,
        -mu * x / r**3 + 2 * om * vy + om**2 * x + g * i[0],
        -mu * y / r**3 - 2 * om * vx + om**2 * y + g * i[1],
        -mu * z / r**3 + g * i[2],
    ])


def test_transfer_matches_scalar_oracle():
    m = TransferModel()
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.uniform(-2, 2, 6)
        s[0] += 3
        i = rng.normal(size=3)
        i /= np.linalg.norm(i)
        assert np.allclose(m.rhs(list(s), list(i)), _transfer_oracle(s, i, m.consts), rtol=1e-14, atol=1e-14)


def test_lander_constants_and_mass_flow():
    m = LanderModel()
    assert m.params.mu == 1530348199.0
    assert m.params.omega == 0.00041596
    x = [1.8, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
    d = m.rhs(x, (1.0, [1.0, 0.0, 0.0]))
    mdot = d[6] * m.scaling.mass / m.scaling.time
    assert mdot == pytest.approx(-80 / (600 * 9.8), rel=1e-12)
    assert mdot == pytest.approx(-1.3605e-2, rel=1e-4)
    d0 = m.rhs(x, (0.0, [1.0, 0.0, 0.0]))
    dn = m.rhs(x, None)
    assert d0[6] == 0.0
    assert d0 == dn
    # Coriolis and gravity terms use the verbatim constants
    v = [1.8, 0.3, -0.2, 0.1, 0.2, 0.05, 0.9]
    c = m.consts
    r = math.sqrt(1.8**2 + 0.3**2 + 0.2**2)
    ax = -c["mu"] * 1.8 / r**3 + 2 * c["omega"] * 0.2 + c["omega"] ** 2 * 1.8
    assert m.rhs(v, None)[3] == pytest.approx(ax, rel=1e-14)
    assert c["omega"] == pytest.approx(0.00041596 * m.scaling.time, rel=1e-15)


def test_lander_rejects_nonpositive_mass():
    with pytest.raises(DomainError):
        LanderModel().rhs([1.0, 0, 0, 0, 0, 0, 0.0], None)


def test_drone_requires_coefficients():
    with pytest.raises(ConfigError, match="k_x"):
        DroneParams.from_mapping({k: v for k, v in ILLUSTRATIVE_DRONE.items() if k != "k_x"})
    with pytest.raises(ConfigError):
        build_model("drone", {})
    with pytest.raises(ConfigError):
        build_model("rocket")


def test_drone_kinematics_identity_and_signs(drone):
    p = drone.params
    w = [700.0] * 4
    R, Q, F, M = drone_kinematic_terms([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], w, [0.0] * 4, [0.0, 0.0, 0.3], p)
    assert np.array_equal(np.array(R, dtype=float), np.eye(3))
    assert np.array_equal(np.array(Q, dtype=float), np.eye(3))
    assert M[0] == 0.0 and M[1] == 0.0
    assert M[2] == pytest.approx(-p.k_rr * 0.3, rel=1e-14)
    _, _, F, _ = drone_kinematic_terms([0.0, 0.0, 0.0], [2.0, 0.0, 0.0], w, [0.0] * 4, [0, 0, 0], p)
    assert F[0] < 0


def test_drone_gimbal_guard():
    with pytest.raises(DomainError):
        euler_rate_matrix([0.0, math.pi / 2, 0.0])


def test_drone_hover_fixed_point(drone):
    p = drone.params
    assert (p.omega_max - p.omega_min) * 0.5 + p.omega_min == pytest.approx(7500 * RPM, rel=1e-15)
    w = 7500 * RPM
    s = [0.0] * 12 + [w] * 4
    d = drone.rhs(s, [0.5] * 4)
    assert d[12:16] == pytest.approx([0.0] * 4, abs=1e-9)
    assert d[6:9] == [0.0, 0.0, 0.0]
    # illustrative coefficients are tuned so u = 0.5 hovers
    assert d[3:6] == pytest.approx([0.0, 0.0, 0.0], abs=1e-10)


def _drone_oracle(s, u, p):
    x = np.asarray(s, float)
    v, lam, Om, w = x[3:6], x[6:9], x[9:12], x[12:16]
    f, t, ps = lam
    cf, sf, ct, st, cp, sp = math.cos(f), math.sin(f), math.cos(t), math.sin(t), math.cos(ps), math.sin(ps)
    R = np.array([
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct],
    ])
    Q = np.array([[1, sf * st / ct, cf * st / ct], [0, cf, -sf], [0, sf / ct, cf / ct]])
    vb = R.T @ v
    ws = w.sum()
    wdot = ((p.omega_max - p.omega_min) * np.asarray(u) + p.omega_min - w) / p.tau
    F = np.array([-p.k_x * vb[0] * ws, -p.k_y * vb[1] * ws,
                  -p.k_omega * (w**2).sum() - p.k_z * vb[2] * ws - p.k_h * (vb[0] ** 2 + vb[1] ** 2)])
    w2 = w**2
    M = np.array([
        p.k_p * (w2[0] - w2[1] - w2[2] + w2[3]) + p.k_pv * vb[1],
        p.k_q * (w2[0] + w2[1] - w2[2] - w2[3]) + p.k_qv * vb[0],
        p.k_r1 * (-w[0] + w[1] - w[2] + w[3]) + p.k_r2 * (-wdot[0] + wdot[1] - wdot[2] + wdot[3]) - p.k_rr * Om[2],
    ])
    I = np.diag([p.Ix, p.Iy, p.Iz])
    Omd = np.linalg.solve(I, M - np.cross(Om, I @ Om))
    vd = np.array([0, 0, p.g]) + R @ F
    return np.concatenate([v, vd, Q @ Om, Omd, wdot])


def test_drone_matches_scalar_oracle(drone):
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = np.concatenate([rng.normal(size=6), rng.uniform(-0.5, 0.5, 3), rng.normal(size=3),
                            rng.uniform(400, 1200, 4)])
        u = rng.uniform(0, 1, 4)
        got = np.array(drone.rhs(list(s), list(u)))
        want = _drone_oracle(s, u, drone.params)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12 * np.max(np.abs(want)))


def _fd_check(model, policy, x0, consts=None):
    n = len(x0)
    jets = closed_loop_rhs(model, policy, [pa.variable(i, n, 1, x0[i]) for i in range(n)])
    J = np.array([[j.coeff(tuple(int(a == i) for a in range(n))) for i in range(n)] for j in jets])
    h = 1e-6
    Jfd = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        Jfd[:, i] = (np.array(closed_loop_rhs(model, policy, list(x0 + e))) -
                     np.array(closed_loop_rhs(model, policy, list(x0 - e)))) / (2 * h)
    return np.linalg.norm(J - Jfd) / np.linalg.norm(J)


def test_jacobian_matches_finite_differences(drone):
    rs = TransferModel().params.r_soi / TransferModel().scaling.length
    t = TransferModel()
    pol = random_siren([6, 16, 3], seed=0, output_wiring="direction", input_scale=[1 / rs] * 3 + [20] * 3)
    assert _fd_check(t, pol, np.array([1.01, -0.01, 0.002, -0.03, 0.01, 0.0])) < 1e-6
    lm = LanderModel()
    pol = random_siren([7, 16, 4], seed=1, output_wiring="throttle_direction")
    assert _fd_check(lm, pol, np.array([1.8, -0.05, 0.0, 0.2, -0.2, 0.16, 1.0])) < 1e-6
    pol = random_siren([16, 8, 4], seed=2, output_wiring="rotors", gain=0.01)
    x0 = np.array([0.1, 0.2, -0.1, 1.0, 0.5, 0.2, 0.05, -0.03, 0.1, 0.1, -0.2, 0.05, 700, 760, 790, 810.0])
    assert _fd_check(drone, pol, x0) < 1e-6


def test_degree_zero_jet_rhs_equals_scalar(drone):
    pol = random_siren([16, 8, 4], seed=2, output_wiring="rotors", gain=0.01)
    x0 = [0.1, 0.2, -0.1, 1.0, 0.5, 0.2, 0.05, -0.03, 0.1, 0.1, -0.2, 0.05, 700, 760, 790, 810.0]
    space = pa.get_space(1, 0)
    jets = closed_loop_rhs(drone, pol, [pa.TPoly(space, np.array([v])) for v in x0])
    consts = [j.const if isinstance(j, pa.TPoly) else float(j) for j in jets]
    assert consts == closed_loop_rhs(drone, pol, x0)


def test_jacobi_energy_conserved_without_thrust():
    m = TransferModel(TransferParams(gamma=0.0))
    x0 = np.array([1.2, 0.1, 0.05, 0.02, -0.3, 0.01])
    tr = integrate(m, constant_direction_policy(), x0, t_end=3.0)
    e = [m.jacobi_energy(s) for s in tr.states]
    assert max(abs(v - e[0]) for v in e) < 1e-10


def test_lander_mass_non_increasing():
    m = LanderModel()
    pol = random_siren([7, 16, 4], seed=3, output_wiring="throttle_direction")
    tr = integrate(m, pol, [1.8, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0], t_end=1.0)
    mass = tr.states[:, 6]
    assert np.all(np.diff(mass) < 0)


def test_rotors_stay_in_range(drone):
    p = drone.params
    pol = random_siren([16, 8, 4], seed=4, output_wiring="rotors", gain=3.0)
    x0 = [0.0] * 12 + [p.omega_min + 1.0, p.omega_max - 1.0, 600.0, 900.0]
    tr = integrate(drone, pol, x0, t_end=0.5)
    w = tr.states[:, 12:16]
    assert np.all(w >= p.omega_min - 1e-9) and np.all(w <= p.omega_max + 1e-9)


def test_policy_wiring_checks():
    m = TransferModel()
    with pytest.raises(ConfigError):
        m.check_policy(None)
    with pytest.raises(ConfigError):
        m.check_policy(random_siren([7, 4, 3], output_wiring="direction"))
    with pytest.raises(ConfigError):
        m.check_policy(random_siren([6, 4, 3], output_wiring="rotors"))
