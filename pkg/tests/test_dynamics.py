import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from src.engine.dynamics import (
    angles_of, chain_geometry, difference_operator, friction_matrices, group_velocity, initial_state,
    inertia_matrix, open_loop_torque, rollout, rotation, shape_acceleration, shape_of, step, total_energy,
)
from src.models.robot_models import ControlInput, GroupModel, RobotParams, RobotState
from src.utils.exceptions import InvalidControl, NonFinite, SingularFrictionBlock

DT = 0.02


def link_positions(q, params):
    """Link centers relative to the center of mass, solved from the joint constraints."""
    n = params.n
    D, _ = difference_operator(n)
    tangents = np.column_stack([np.cos(q), np.sin(q)])
    l = np.array(params.l)
    offsets = l[:-1, None] * tangents[:-1] + l[1:, None] * tangents[1:]
    system = np.vstack([D, np.array(params.m)[None, :]])
    rhs = np.vstack([offsets, np.zeros((1, 2))])
    return np.linalg.solve(system, rhs)


def mechanical_energy(state, params):
    kinetic, potential = total_energy(state, params)
    return kinetic + potential


def auxiliary_matrices(q, psi, u, params):
    """Every matrix of the angle dynamics, built entry by entry from its definition."""
    n = params.n
    D = np.zeros((n - 1, n))
    A = np.zeros((n - 1, n))
    for j in range(n - 1):
        D[j, j], D[j, j + 1] = 1.0, -1.0
        A[j, j], A[j, j + 1] = 1.0, 1.0
    M = np.diag(params.m)
    M_inv = np.linalg.inv(M)
    L = np.diag(params.l)
    J = np.diag(params.J)
    C_t = np.diag(params.c_t)
    C_N = np.diag([c * (1.0 + u_k) for c, u_k in zip(params.c_n_bar, u)])
    S = np.linalg.inv(D @ M_inv @ D.T)
    H = L @ A.T @ S @ A @ L
    B = M_inv @ D.T @ S @ A @ L

    inertia, coriolis, B_s, B_c = (np.zeros((n, n)) for _ in range(4))
    for i in range(n):
        for k in range(n):
            inertia[i, k] = H[i, k] * np.cos(q[i] - q[k]) + J[i, k]
            coriolis[i, k] = H[i, k] * np.sin(q[i] - q[k])
            B_s[i, k] = B[i, k] * np.sin(q[i] - q[k])
            B_c[i, k] = B[i, k] * np.cos(q[i] - q[k])

    c, s = np.cos(q - psi), np.sin(q - psi)
    R_qq = B_s.T @ M @ C_t @ B_s + B_c.T @ M @ C_N @ B_c + C_N @ J
    R_qv = np.column_stack([
        B_s.T @ M @ C_t @ c - B_c.T @ M @ C_N @ s,
        B_s.T @ M @ C_t @ s + B_c.T @ M @ C_N @ c,
    ])
    off = s @ M @ (C_t - C_N) @ c
    R_vv = np.array([[c @ M @ C_t @ c + s @ M @ C_N @ s, off], [off, s @ M @ C_t @ s + c @ M @ C_N @ c]])
    R = np.array([[np.cos(psi), -np.sin(psi)], [np.sin(psi), np.cos(psi)]])
    return {
        "D": D,
        "D_plus": D.T @ np.linalg.inv(D @ D.T),
        "inertia": inertia,
        "coriolis": coriolis,
        "R_qq": R_qq,
        "R_qr": R_qv @ R.T,
        "R_rr": R @ R_vv @ R.T,
        "kappa": D.T @ np.diag(params.kappa) @ D,
        "zeta": D.T @ np.diag(params.zeta) @ D,
    }


def reference_shape_acceleration(state, tau, u, params):
    """Shape acceleration from the full angle equation in world-frame group coordinates."""
    m = auxiliary_matrices(state.q, state.psi, u, params)
    n = params.n
    e = np.ones(n)
    if params.group_model is GroupModel.INERTIAL:
        qdot, r_dot = state.qdot, state.r_cm_dot
    else:
        # net friction torque and force vanish; unknowns are psi_dot and r_dot
        q_shape = m["D_plus"] @ state.xdot
        system = np.zeros((3, 3))
        system[0, 0] = e @ m["R_qq"] @ e
        system[0, 1:] = e @ m["R_qr"]
        system[1:, 0] = m["R_qr"].T @ e
        system[1:, 1:] = m["R_rr"]
        rhs = -np.concatenate([[e @ m["R_qq"] @ q_shape], m["R_qr"].T @ q_shape])
        solution = np.linalg.solve(system, rhs)
        qdot, r_dot = q_shape + e * solution[0], solution[1:]
    forces = (
        m["D"].T @ tau - m["kappa"] @ state.q - m["zeta"] @ qdot
        - m["coriolis"] @ qdot ** 2 - m["R_qq"] @ qdot - m["R_qr"] @ r_dot
    )
    return m["D"] @ np.linalg.solve(m["inertia"], forces)


def test_difference_operator_smallest_chain():
    D, D_plus = difference_operator(2)
    np.testing.assert_array_equal(D, [[1.0, -1.0]])
    np.testing.assert_allclose(D @ D_plus, [[1.0]], atol=1e-12)


def test_difference_operator_pseudo_inverse():
    D, D_plus = difference_operator(5)
    np.testing.assert_allclose(D @ D_plus, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(D_plus, np.linalg.pinv(D), atol=1e-12)
    np.testing.assert_allclose(D.sum(axis=1), 0.0)
    np.testing.assert_allclose(D @ np.full(5, 0.7), 0.0)


def test_difference_operator_rejects_single_link():
    with pytest.raises(ValueError):
        difference_operator(1)


def test_shape_coordinates_round_trip(nominal_params, rng):
    for _ in range(20):
        q = rng.uniform(-3, 3, 5)
        x, psi = shape_of(q)
        np.testing.assert_allclose(angles_of(x, psi, nominal_params), q, atol=1e-10)


@pytest.mark.parametrize("function", [rotation, chain_geometry, shape_of, angles_of])
def test_geometry_helpers_are_documented(function):
    assert function.__doc__ and function.__doc__.strip()


def test_state_shape_properties():
    state = RobotState(q=[0.3, 0.1, -0.2], qdot=[1.0, 0.5, 0.0], r_cm=[0, 0], r_cm_dot=[0, 0])
    np.testing.assert_allclose(state.x, [0.2, 0.3])
    np.testing.assert_allclose(state.xdot, [0.5, 0.5])
    assert state.psi == pytest.approx(0.2 / 3)


def test_inertia_with_aligned_links(nominal_params):
    geom = chain_geometry(nominal_params)
    np.testing.assert_allclose(inertia_matrix(np.full(5, 0.4), nominal_params), geom.H + np.diag(geom.J), atol=1e-14)


def test_inertia_symmetric_positive_definite(nominal_params, rng):
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 5)
        inertia = inertia_matrix(q, nominal_params)
        np.testing.assert_allclose(inertia, inertia.T, atol=1e-14)
        assert np.linalg.eigvalsh(inertia).min() > 0.0


def test_inertia_invariant_under_global_rotation(nominal_params, rng):
    q = rng.uniform(-1, 1, 5)
    np.testing.assert_allclose(inertia_matrix(q + 0.8, nominal_params), inertia_matrix(q, nominal_params), atol=1e-12)


def test_inertia_matches_kinetic_energy_of_links(nominal_params, rng):
    """Kinetic energy from differentiated link positions equals 1/2 qdot^T I(q) qdot."""
    J = np.array(nominal_params.J)
    m = np.array(nominal_params.m)
    h = 1e-6
    for _ in range(10):
        q = rng.uniform(-1, 1, 5)
        qdot = rng.normal(size=5)
        velocities = (link_positions(q + h * qdot, nominal_params) - link_positions(q - h * qdot, nominal_params)) / (2 * h)
        expected = 0.5 * np.sum(m * np.sum(velocities**2, axis=1)) + 0.5 * np.sum(J * qdot**2)
        actual = 0.5 * qdot @ inertia_matrix(q, nominal_params) @ qdot
        assert actual == pytest.approx(expected, rel=1e-7)


def test_open_loop_torque_zero_phase_at_origin():
    params = RobotParams(beta=(0.0, 0.0, 0.0, 0.0))
    np.testing.assert_array_equal(open_loop_torque(0.0, params), np.zeros(4))


def test_open_loop_torque_is_periodic(nominal_params, rng):
    for t in rng.uniform(0, 100, 10):
        np.testing.assert_allclose(
            open_loop_torque(t, nominal_params), open_loop_torque(t + nominal_params.period, nominal_params), atol=1e-12
        )


def test_open_loop_torque_peaks_at_amplitude(nominal_params):
    times = np.linspace(0, nominal_params.period, 20001)
    peaks = np.max(np.abs([open_loop_torque(t, nominal_params) for t in times]), axis=0)
    np.testing.assert_allclose(peaks, [2.0, 1.1, 1.0, 2.0], atol=1e-6)


def test_friction_without_control_is_nominal(nominal_params, rng):
    q = rng.uniform(-1, 1, 5)
    nominal = friction_matrices(q, 0.2, nominal_params)
    zero = friction_matrices(q, 0.2, nominal_params, ControlInput.zeros(5))
    np.testing.assert_array_equal(nominal.R_qq, zero.R_qq)
    np.testing.assert_array_equal(nominal.R_qv, zero.R_qv)
    np.testing.assert_array_equal(nominal.R_vv, zero.R_vv)


def test_friction_vanishes_without_coefficients(rng):
    params = RobotParams.frictionless()
    blocks = friction_matrices(rng.uniform(-1, 1, 5), 0.3, params)
    for block in (blocks.R_qq, blocks.R_qv, blocks.R_vv):
        np.testing.assert_array_equal(block, 0.0)


def test_translation_damping_matches_per_link_forces(nominal_params, rng):
    m = np.array(nominal_params.m)
    c_t = np.array(nominal_params.c_t)
    for _ in range(10):
        q = rng.uniform(-1, 1, 5)
        psi = float(np.mean(q))
        u = rng.uniform(-0.5, 0.5, 5)
        c_n = np.array(nominal_params.c_n_bar) * (1 + u)
        velocity = rng.normal(size=2)
        force = np.zeros(2)
        for j in range(5):
            tangent = np.array([np.cos(q[j]), np.sin(q[j])])
            normal = np.array([-np.sin(q[j]), np.cos(q[j])])
            force -= c_t[j] * m[j] * (velocity @ tangent) * tangent + c_n[j] * m[j] * (velocity @ normal) * normal
        R_vv = friction_matrices(q, psi, nominal_params, ControlInput(u=u)).R_vv
        expected = rotation(psi) @ (-R_vv @ rotation(psi).T @ velocity)
        np.testing.assert_allclose(force, expected, atol=1e-12)


def test_friction_blocks_positive_semidefinite(nominal_params, rng):
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 5)
        u = ControlInput(u=rng.uniform(-0.9, 0.9, 5))
        blocks = friction_matrices(q, float(np.mean(q)), nominal_params, u)
        full = np.block([[blocks.R_qq, blocks.R_qv], [blocks.R_qv.T, blocks.R_vv]])
        np.testing.assert_allclose(full, full.T, atol=1e-12)
        assert np.linalg.eigvalsh(full).min() > -1e-12


def test_friction_affine_in_each_control(nominal_params, rng):
    q = rng.uniform(-1, 1, 5)
    base = rng.uniform(-0.3, 0.3, 5)
    for k in range(5):
        shifted = [base.copy() for _ in range(3)]
        for i, s in enumerate((0.0, 0.2, 0.4)):
            shifted[i][k] += s
        low, mid, high = (friction_matrices(q, 0.1, nominal_params, ControlInput(u=u)) for u in shifted)
        np.testing.assert_allclose(low.R_qq + high.R_qq, 2 * mid.R_qq, atol=1e-12)
        np.testing.assert_allclose(low.R_qv + high.R_qv, 2 * mid.R_qv, atol=1e-12)
        np.testing.assert_allclose(low.R_vv + high.R_vv, 2 * mid.R_vv, atol=1e-12)


def test_negative_friction_is_rejected(nominal_params):
    with pytest.raises(InvalidControl):
        friction_matrices(np.zeros(5), 0.0, nominal_params, ControlInput(u=[0, 0, -1.01, 0, 0]))


def test_zero_normal_friction_is_accepted(nominal_params):
    blocks = friction_matrices(np.zeros(5), 0.0, nominal_params, ControlInput(u=[-1.0, 0, 0, 0, 0]))
    assert np.all(np.isfinite(blocks.R_qq))


def test_control_with_wrong_length_is_rejected(nominal_params):
    with pytest.raises(InvalidControl):
        friction_matrices(np.zeros(5), 0.0, nominal_params, ControlInput(u=[0.0, 0.0]))


def test_spring_torque_balances_deflection(nominal_params):
    x = np.array([0.3, -0.2, 0.1, 0.4])
    state = initial_state(nominal_params, x=x)
    tau = np.array(nominal_params.kappa) * x
    np.testing.assert_allclose(shape_acceleration(state, tau, None, nominal_params), 0.0, atol=1e-12)


def test_group_velocity_at_rest(nominal_params):
    state = initial_state(nominal_params, x=[0.2, 0.1, -0.1, 0.0])
    psi_dot, r_cm_dot = group_velocity(state, np.zeros(4), None, nominal_params)
    assert psi_dot == 0.0
    np.testing.assert_array_equal(r_cm_dot, 0.0)


def test_group_velocity_rotation_equivariance(nominal_params, rng):
    x = rng.uniform(-0.5, 0.5, 4)
    xdot = rng.uniform(-0.5, 0.5, 4)
    alpha = 0.9
    state = initial_state(nominal_params, x=x, xdot=xdot, psi=0.3)
    rotated = initial_state(nominal_params, x=x, xdot=xdot, psi=0.3 + alpha)
    psi_dot, r_cm_dot = group_velocity(state, xdot, None, nominal_params)
    psi_dot_rot, r_cm_dot_rot = group_velocity(rotated, xdot, None, nominal_params)
    assert psi_dot_rot == pytest.approx(psi_dot, abs=1e-12)
    np.testing.assert_allclose(r_cm_dot_rot, rotation(alpha) @ r_cm_dot, atol=1e-12)


def test_group_velocity_balances_friction(nominal_params, rng):
    """Without inertia the net friction force and torque on the whole chain vanish."""
    for _ in range(10):
        x = rng.uniform(-0.5, 0.5, 4)
        xdot = rng.uniform(-1, 1, 4)
        u = ControlInput(u=rng.uniform(-0.5, 0.5, 5))
        state = initial_state(nominal_params, x=x, xdot=xdot, psi=0.4, u=u)
        psi_dot, r_cm_dot = group_velocity(state, xdot, u, nominal_params)
        geom = chain_geometry(nominal_params)
        qdot = geom.D_plus @ xdot + geom.e * psi_dot
        v = rotation(state.psi).T @ r_cm_dot
        blocks = friction_matrices(state.q, state.psi, nominal_params, u)
        assert geom.e @ (blocks.R_qq @ qdot + blocks.R_qv @ v) == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(blocks.R_qv.T @ qdot + blocks.R_vv @ v, 0.0, atol=1e-10)


@pytest.mark.parametrize("model", [GroupModel.QUASI_STATIC, GroupModel.INERTIAL])
def test_shape_acceleration_matches_reference_construction(model, rng):
    params = RobotParams(group_model=model)
    for _ in range(10):
        u = ControlInput(u=rng.uniform(-0.5, 0.5, 5))
        state = initial_state(
            params, x=rng.uniform(-0.8, 0.8, 4), xdot=rng.uniform(-1, 1, 4), psi=rng.uniform(-np.pi, np.pi),
            r_cm=rng.normal(size=2), u=u, psi_dot=rng.normal(), r_cm_dot=rng.normal(size=2),
        )
        tau = rng.uniform(-2, 2, 4)
        np.testing.assert_allclose(
            shape_acceleration(state, tau, u, params),
            reference_shape_acceleration(state, tau, u.u, params),
            rtol=1e-9, atol=1e-10,
        )


def test_quasi_static_closure_needs_friction():
    with pytest.raises(SingularFrictionBlock):
        initial_state(RobotParams.frictionless(), xdot=[0.1, 0.0, 0.0, 0.0])


def test_equilibrium_is_preserved():
    params = RobotParams(tau0=(0.0, 0.0, 0.0, 0.0))
    state = initial_state(params, psi=0.5, r_cm=[1.0, -2.0])
    after = step(state, None, params, DT)
    np.testing.assert_allclose(after.q, state.q, atol=1e-15)
    np.testing.assert_allclose(after.r_cm, state.r_cm, atol=1e-15)
    assert after.t == pytest.approx(DT)


def test_step_rejects_bad_inputs(nominal_params):
    state = initial_state(nominal_params)
    with pytest.raises(ValueError):
        step(state, None, nominal_params, 0.0)
    broken = RobotState(q=[np.nan, 0, 0, 0, 0], qdot=np.zeros(5), r_cm=np.zeros(2), r_cm_dot=np.zeros(2))
    with pytest.raises(NonFinite):
        step(broken, None, nominal_params, DT)


def test_rk4_convergence_order(nominal_params):
    start = initial_state(nominal_params, x=[0.4, -0.3, 0.2, 0.1], xdot=[0.5, 0.0, -0.5, 0.2], psi=0.1)

    def end_state(dt):
        final = rollout(start, nominal_params, dt, int(round(1.0 / dt)))[-1]
        return np.concatenate([final.x, final.xdot, [final.psi], final.r_cm])

    coarse, medium, fine = end_state(0.04), end_state(0.02), end_state(0.01)
    order = np.log2(np.linalg.norm(coarse - medium) / np.linalg.norm(medium - fine))
    assert order >= 3.5


def test_rollout_is_rotation_and_translation_equivariant(nominal_params):
    alpha, shift = 0.7, np.array([1.5, -0.5])
    r0 = np.array([0.1, 0.3])
    x, xdot = [0.3, -0.1, 0.2, 0.0], [0.1, 0.2, -0.1, 0.0]
    base = rollout(initial_state(nominal_params, x=x, xdot=xdot, psi=0.2, r_cm=r0, t=0.5), nominal_params, DT, 50)
    moved = rollout(
        initial_state(nominal_params, x=x, xdot=xdot, psi=0.2 + alpha, r_cm=rotation(alpha) @ r0 + shift, t=0.5),
        nominal_params, DT, 50,
    )
    np.testing.assert_allclose(moved[-1].q, base[-1].q + alpha, atol=1e-9)
    np.testing.assert_allclose(moved[-1].r_cm, rotation(alpha) @ base[-1].r_cm + shift, atol=1e-9)


def test_energy_of_rest_state(nominal_params):
    assert total_energy(initial_state(nominal_params), nominal_params) == (0.0, 0.0)


def test_spring_energy_of_unit_deflection(nominal_params):
    _, potential = total_energy(initial_state(nominal_params, x=np.ones(4)), nominal_params)
    assert potential == pytest.approx(4 * 1.5)


def test_energy_never_increases_without_drive():
    params = RobotParams(tau0=(0.0, 0.0, 0.0, 0.0), group_model=GroupModel.INERTIAL)
    state = initial_state(params, x=[0.5, -0.3, 0.4, -0.2], xdot=[0.2, -0.1, 0.0, 0.3],
                          psi_dot=0.1, r_cm_dot=[0.05, 0.0])
    energies = [mechanical_energy(s, params) for s in rollout(state, params, DT, 300)]
    assert np.all(np.diff(energies) <= 1e-8)
    assert energies[-1] < energies[0]


def test_energy_conserved_without_friction():
    params = RobotParams.frictionless(tau0=(0.0, 0.0, 0.0, 0.0), group_model=GroupModel.INERTIAL)
    state = initial_state(params, x=[0.5, -0.3, 0.4, -0.2], xdot=[0.2, -0.1, 0.0, 0.3],
                          psi_dot=0.1, r_cm_dot=[0.05, 0.0])
    energies = np.array([mechanical_energy(s, params) for s in rollout(state, params, DT, 200)])
    np.testing.assert_allclose(energies, energies[0], rtol=1e-6)


@pytest.mark.slow
def test_open_loop_gait_settles_on_closed_orbit(nominal_params):
    states = rollout(initial_state(nominal_params), nominal_params, DT, int(round(51 * nominal_params.period / DT)))
    per_period = int(round(nominal_params.period / DT))
    last, previous = states[-1], states[-1 - per_period]
    assert np.max(np.abs(last.x - previous.x)) < 5e-2


@pytest.mark.slow
def test_poincare_returns_match_the_drive_period(nominal_params):
    period = nominal_params.period
    states = rollout(initial_state(nominal_params), nominal_params, DT, int(round(50 * period / DT)))
    tail = states[-int(round(6 * period / DT)):]
    times = np.array([s.t for s in tail])
    spline = CubicSpline(times, [s.x[0] for s in tail])
    roots = spline.roots(extrapolate=False)
    crossings = roots[spline(roots, 1) > 0]
    starts = crossings[crossings + period < times[-1] - DT]
    assert len(starts) >= 3
    returns = [np.min(np.abs(crossings - (c + period))) for c in starts]
    assert max(returns) < 1e-3
