import math

import numpy as np
import pytest

from bariflex_sim import elastics as el
from bariflex_sim.contact import Circle, HalfPlane


def bare_chain(n=8, seg=0.0125, k=0.2):
    """Straight cantilever chain, no crossbeams, no pin: the closed-form
    series-spring oracle applies."""
    return el.FinRayFinger(
        n_segments=n,
        segment_lengths=np.full(n, seg),
        joint_stiffnesses=np.full(n, k),
        rest_absolute_angles=np.full(n, math.pi / 2.0),
        base_origin=np.zeros(2),
        crossbeam_indices=(),
        crossbeam_stiffnesses=np.array([]),
        pin_slide_range=None,
        contact_node_indices=(),
    )


@pytest.fixture(scope="module")
def fin95():
    return el.FinRayFinger.triangular("TPU95A")


def test_zero_load_is_rest_shape(fin95):
    d = el.finray_equilibrium(fin95, [])
    assert np.abs(d.joint_rotations).max() == 0.0
    assert np.abs(d.deformed_node_positions - fin95.rest_nodes).max() < 1e-12
    assert d.pin_slide_position == 0.0


def test_series_spring_oracle():
    # small transverse tip load: deflection = F * sum(d_j^2 / k_j)
    n, seg, k = 8, 0.0125, 0.2
    chain = bare_chain(n, seg, k)
    force = 0.002
    d = el.finray_equilibrium(chain, [(n, np.array([-force, 0.0]))])
    oracle = force * sum(((n - j) * seg) ** 2 / k for j in range(n))
    tip_dx = d.deformed_node_positions[-1][0]
    assert tip_dx == pytest.approx(-oracle, rel=2e-3)


def test_joint_torque_balance_oracle(fin95):
    # independent check: each joint's spring torque equals the moment of all
    # distal applied forces about that joint
    loads = [(4, np.array([0.8, 0.1])), (8, np.array([-0.5, 0.3]))]
    d = el.finray_equilibrium(fin95, loads)
    nodes = d.deformed_node_positions
    # applied forces and the pin-slot reaction, all acting on nodes
    node_forces = {idx: np.asarray(f, dtype=float) for idx, f in loads}
    ghat = fin95.pin_guide_direction
    nhat = np.array([-ghat[1], ghat[0]])
    rel = nodes[-1] - fin95._pin_rest
    pin_force = -el.PIN_GUIDE_STIFFNESS * float(rel @ nhat) * nhat
    s = float(rel @ ghat)
    lo, hi = fin95.pin_slide_range
    if s > hi:
        pin_force = pin_force - el.PIN_GUIDE_STIFFNESS * (s - hi) * ghat
    elif s < lo:
        pin_force = pin_force - el.PIN_GUIDE_STIFFNESS * (s - lo) * ghat
    node_forces[fin95.n_joints] = node_forces.get(fin95.n_joints, np.zeros(2)) + pin_force
    # crossbeam spring forces
    for (a, b), k, d0 in zip(fin95.crossbeam_indices, fin95.crossbeam_stiffnesses,
                             fin95._crossbeam_rest):
        diff = nodes[a] - nodes[b]
        dist = float(np.linalg.norm(diff))
        f_ab = -k * (dist - d0) * diff / dist
        node_forces[a] = node_forces.get(a, np.zeros(2)) + f_ab
        node_forces[b] = node_forces.get(b, np.zeros(2)) - f_ab

    for j in range(fin95.n_joints):
        c = nodes[j]
        moment = 0.0
        for idx, f in node_forces.items():
            if idx > j:
                r = nodes[idx] - c
                moment += r[0] * f[1] - r[1] * f[0]
        spring = fin95.joint_stiffnesses[j] * d.joint_rotations[j]
        assert spring == pytest.approx(moment, abs=5e-6)


def test_material_scaling_linear_regime():
    fin95 = el.FinRayFinger.triangular("TPU95A")
    fin87 = el.FinRayFinger.triangular("TPU87A")
    load = [(4, np.array([0.2, 0.0]))]
    d95 = el.finray_equilibrium(fin95, load)
    d87 = el.finray_equilibrium(fin87, load)
    dx95 = d95.deformed_node_positions[4][0] - fin95.rest_nodes[4][0]
    dx87 = d87.deformed_node_positions[4][0] - fin87.rest_nodes[4][0]
    assert dx87 / dx95 == pytest.approx(26.0 / 12.0, rel=0.02)


def test_stiffer_material_deflects_less(fin95):
    fin87 = el.FinRayFinger.triangular("TPU87A")
    load = [(8, np.array([-2.0, 0.0]))]
    tip95 = el.finray_equilibrium(fin95, load).deformed_node_positions[8]
    tip87 = el.finray_equilibrium(fin87, load).deformed_node_positions[8]
    rest = fin95.rest_nodes[8]
    assert abs(tip95[0] - rest[0]) < abs(tip87[0] - rest[0])


def test_unload_returns_to_rest(fin95):
    load = [(6, np.array([1.5, -0.5]))]
    loaded = el.finray_equilibrium(fin95, load)
    unloaded = el.finray_equilibrium(fin95, [], warm_start=loaded.joint_rotations)
    assert np.abs(unloaded.deformed_node_positions - fin95.rest_nodes).max() < 1e-9


def test_work_equals_stored_energy(fin95):
    # conservative model: quasistatic loading path work = elastic energy
    target = np.array([1.2, 0.0])
    node = 5
    steps = 40
    warm = None
    prev_pos = fin95.rest_nodes[node].copy()
    prev_f = np.zeros(2)
    work = 0.0
    for i in range(1, steps + 1):
        f = target * (i / steps)
        d = el.finray_equilibrium(fin95, [(node, f)], warm_start=warm)
        warm = d.joint_rotations
        pos = d.deformed_node_positions[node]
        work += float((0.5 * (prev_f + f)) @ (pos - prev_pos))
        prev_pos, prev_f = pos.copy(), f.copy()
    assert work == pytest.approx(d.elastic_energy, rel=0.01)


def test_load_path_independence(fin95):
    # same final load through different monotone paths: same equilibrium
    final = [(7, np.array([0.9, -0.2]))]
    direct = el.finray_equilibrium(fin95, final)
    warm = None
    for frac in (0.3, 0.6, 1.0):
        staged = el.finray_equilibrium(
            fin95, [(7, np.array([0.9, -0.2]) * frac)], warm_start=warm)
        warm = staged.joint_rotations
    assert np.abs(staged.deformed_node_positions - direct.deformed_node_positions).max() < 1e-7


def test_load_bound_rejected(fin95):
    with pytest.raises(ValueError):
        el.finray_equilibrium(fin95, [(4, np.array([600.0, 0.0]))])
    with pytest.raises(ValueError):
        el.finray_equilibrium(fin95, [(4, np.array([np.nan, 0.0]))])


def test_pin_slide_within_range_and_unilateral(fin95):
    # axial squash drives the pin toward its stop; the reported slide stays
    # in range and the stop only pushes (never pulls)
    wall = HalfPlane((0.0, fin95.rest_nodes[8][1] - 0.015), (0.0, -1.0))
    d, _ = el.finray_contact_wrap(fin95, wall)
    lo, hi = fin95.pin_slide_range
    assert lo <= d.pin_slide_position <= hi


def test_contact_wrap_no_contact(fin95):
    far = Circle((1.0, 1.0), 0.05)
    d, contacts = el.finray_contact_wrap(fin95, far)
    assert contacts == []
    assert np.abs(d.joint_rotations).max() == 0.0


def test_contact_wrap_circle_multiple_nodes(fin95):
    # large circle pressed well into the face: at least 3 nodes in contact
    circle = Circle((-0.050, 0.032), 0.06)
    d, contacts = el.finray_contact_wrap(fin95, circle)
    assert len(contacts) >= 3
    assert all(c.normal_force > 0.0 for c in contacts)  # compressive only


def test_contact_wrap_penetration_tolerance(fin95):
    circle = Circle((-0.052, 0.032), 0.06)
    d, contacts = el.finray_contact_wrap(fin95, circle)
    for idx in fin95.contact_node_indices:
        sd, _ = circle.signed_distance(d.deformed_node_positions[idx])
        assert sd >= -1.5e-4  # contact-penalty tolerance


def test_wall_press_force_balance(fin95):
    # the summed contact normal force must equal the force needed to hold
    # the wall, measured independently as the total-potential derivative
    # w.r.t. the wall position (envelope theorem at equilibrium)
    apex_y = fin95.rest_nodes[8][1]
    depth = 0.012
    h = 1e-6

    def total_potential(extra):
        wall = HalfPlane((0.0, apex_y - depth + extra), (0.0, -1.0))
        d, _ = el.finray_contact_wrap(fin95, wall)
        penalty = 0.0
        for idx in fin95.contact_node_indices:
            sd, _ = wall.signed_distance(d.deformed_node_positions[idx])
            if sd < 0.0:
                penalty += 0.5 * el.PENALTY_STIFFNESS * sd * sd
        return d.elastic_energy + penalty

    wall = HalfPlane((0.0, apex_y - depth), (0.0, -1.0))
    _, contacts = el.finray_contact_wrap(fin95, wall)
    total = sum(c.normal_force for c in contacts)
    force_from_energy = (total_potential(h) - total_potential(-h)) / (2.0 * h)
    assert total == pytest.approx(abs(force_from_energy), rel=0.01)


def test_fingertip_spring_law():
    spring = el.FingertipSpring(stiffness=1.0, rest_angle=0.0)
    torque, engaged = el.fingertip_spring_torque(spring, 0.0)
    assert torque == 0.0 and engaged
    torque, engaged = el.fingertip_spring_torque(spring, 0.1)
    assert torque == pytest.approx(-0.1) and not engaged
    torque, engaged = el.fingertip_spring_torque(spring, -0.2)
    assert engaged  # extension attempt: clamped, load forwarded


def test_deterministic(fin95):
    load = [(6, np.array([0.7, 0.2]))]
    a = el.finray_equilibrium(fin95, load)
    b = el.finray_equilibrium(fin95, load)
    assert np.array_equal(a.joint_rotations, b.joint_rotations)
