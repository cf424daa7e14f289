import math

import numpy as np
import pytest

from bariflex_sim import contact as ct


def test_polygon_validation():
    with pytest.raises(ValueError):
        ct.ConvexPolygon([(0, 0), (1, 0), (1, 1), (0.2, -0.5)])  # non-convex
    with pytest.raises(ValueError):
        ct.ConvexPolygon([(0, 0), (0, 1), (1, 0)])  # clockwise
    ct.ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def test_circle_signed_distance():
    c = ct.Circle((1.0, 0.0), 0.5)
    sd, n = c.signed_distance((2.0, 0.0))
    assert sd == pytest.approx(0.5)
    assert n == pytest.approx([1.0, 0.0])
    sd, _ = c.signed_distance((1.0, 0.1))
    assert sd == pytest.approx(-0.4)


def test_polygon_signed_distance_matches_brute_force():
    poly = ct.ConvexPolygon([(0, 0), (0.1, 0), (0.1, 0.05), (0, 0.05)])
    # dense boundary sampling oracle
    boundary = []
    verts = list(poly.vertices) + [poly.vertices[0]]
    for a, b in zip(verts, verts[1:]):
        for t in np.linspace(0, 1, 400, endpoint=False):
            boundary.append(np.asarray(a) + t * (np.asarray(b) - np.asarray(a)))
    boundary = np.array(boundary)
    rng = np.random.default_rng(5)
    for p in rng.uniform([-0.05, -0.05], [0.15, 0.10], (60, 2)):
        sd, _ = poly.signed_distance(p)
        brute = np.linalg.norm(boundary - p, axis=1).min()
        assert abs(sd) == pytest.approx(brute, abs=2e-4)


def test_composite_union():
    L = ct.Composite([
        ct.ConvexPolygon([(0, 0), (0.06, 0), (0.06, 0.02), (0, 0.02)]),
        ct.ConvexPolygon([(0, 0), (0.02, 0), (0.02, 0.08), (0, 0.08)]),
    ])
    sd, _ = L.signed_distance((0.01, 0.05))  # inside the vertical arm
    assert sd < 0
    sd, _ = L.signed_distance((0.05, 0.05))  # in the notch
    assert sd > 0


def test_detect_contacts_disjoint():
    obj = ct.Circle((1.0, 1.0), 0.1)
    nodes = np.array([[0.0, 0.0], [0.0, 0.1]])
    pad = ((0.1, 0.0), (0.1, 0.05))
    assert ct.detect_contacts(nodes, pad, obj) == []


def test_detect_contacts_tangent_circle_pad():
    # circle exactly tangent to the pad line: one candidate at the tangency
    obj = ct.Circle((0.15, 0.025), 0.05)
    pad = ((0.1, 0.0), (0.1, 0.05))
    found = ct.detect_contacts(None, pad, obj, tolerance=1e-4)
    assert len(found) == 1
    assert found[0].position == pytest.approx([0.1, 0.025], abs=1e-3)
    # normal points into the object
    assert found[0].normal @ np.array([1.0, 0.0]) > 0.9


def test_detect_contacts_matches_dense_sampling():
    obj = ct.Circle((0.02, 0.03), 0.025)
    nodes = np.array([[0.0, 0.01 * k] for k in range(9)])
    found = ct.detect_contacts(nodes, None, obj, tolerance=1e-4)
    # oracle: brute-force penetration test per node
    expect = sum(
        1 for p in nodes if np.linalg.norm(p - [0.02, 0.03]) - 0.025 <= 1e-4
    )
    assert len(found) == expect > 0


def test_check_grasp_parallel_pads_circle():
    # hand oracle: weight 2 N, mu 0.5 -> each finger needs >= 2 N normal,
    # within the 11 N budget
    obj = ct.ObjectShape2D("disk", ct.Circle((0.0, 0.0), 0.03), mass=2.0 / 9.81,
                           friction_coefficient=0.5)
    contacts = [
        ct.ContactPoint(np.array([-0.03, 0.0]), np.array([1.0, 0.0]), 11.0, 0.0, finger=0),
        ct.ContactPoint(np.array([0.03, 0.0]), np.array([-1.0, 0.0]), 11.0, 0.0, finger=1),
    ]
    verdict = ct.check_grasp(contacts, obj, force_budget=11.0)
    assert verdict.success


def test_check_grasp_insufficient_friction():
    obj = ct.ObjectShape2D("disk", ct.Circle((0.0, 0.0), 0.03), mass=0.2,
                           friction_coefficient=0.01)
    contacts = [
        ct.ContactPoint(np.array([-0.03, 0.0]), np.array([1.0, 0.0]), 11.0, 0.0, finger=0),
        ct.ContactPoint(np.array([0.03, 0.0]), np.array([-1.0, 0.0]), 11.0, 0.0, finger=1),
    ]
    verdict = ct.check_grasp(contacts, obj, force_budget=11.0)
    assert not verdict.success
    assert verdict.reason == ct.REASON_INSUFFICIENT_FRICTION


def test_check_grasp_insufficient_force():
    # heavy object: friction fine, but the per-finger budget cannot carry it
    obj = ct.ObjectShape2D("brick", ct.Circle((0.0, 0.0), 0.03), mass=5.0,
                           friction_coefficient=0.5)
    contacts = [
        ct.ContactPoint(np.array([-0.03, 0.0]), np.array([1.0, 0.0]), 11.0, 0.0, finger=0),
        ct.ContactPoint(np.array([0.03, 0.0]), np.array([-1.0, 0.0]), 11.0, 0.0, finger=1),
    ]
    verdict = ct.check_grasp(contacts, obj, force_budget=11.0)
    assert not verdict.success
    assert verdict.reason == ct.REASON_INSUFFICIENT_FORCE


def test_check_grasp_no_contact():
    obj = ct.ObjectShape2D("disk", ct.Circle((0.0, 0.0), 0.03), mass=0.2)
    verdict = ct.check_grasp([], obj)
    assert not verdict.success and verdict.reason == ct.REASON_NO_CONTACT


def test_check_grasp_no_closure():
    # one-sided contact cannot balance the weight wrench for any friction
    obj = ct.ObjectShape2D("disk", ct.Circle((0.0, 0.0), 0.03), mass=0.2,
                           friction_coefficient=0.5)
    contacts = [
        ct.ContactPoint(np.array([0.0, 0.03]), np.array([0.0, -1.0]), 11.0, 0.0, finger=0),
    ]
    verdict = ct.check_grasp(contacts, obj, force_budget=11.0)
    assert not verdict.success
    assert verdict.reason == ct.REASON_NO_CLOSURE


def test_check_grasp_scale_invariance():
    obj1 = ct.ObjectShape2D("disk", ct.Circle((0.0, 0.0), 0.03), mass=0.4,
                            friction_coefficient=0.4)
    contacts = [
        ct.ContactPoint(np.array([-0.03, 0.0]), np.array([1.0, 0.0]), 11.0, 0.0, finger=0),
        ct.ContactPoint(np.array([0.03, 0.0]), np.array([-1.0, 0.0]), 11.0, 0.0, finger=1),
    ]
    base = ct.check_grasp(contacts, obj1, gravity=9.81, force_budget=5.0)
    scaled = ct.check_grasp(contacts, obj1, gravity=9.81 * 3.0, force_budget=15.0)
    assert base.success == scaled.success
    # and a case that fails at the small budget fails identically when scaled
    tight = ct.check_grasp(contacts, obj1, gravity=9.81, force_budget=0.3)
    tight_scaled = ct.check_grasp(contacts, obj1, gravity=9.81 * 3.0, force_budget=0.9)
    assert tight.success == tight_scaled.success


def test_contact_point_cone():
    c = ct.ContactPoint(np.zeros(2), np.array([1.0, 0.0]), 2.0, 0.7)
    assert c.cone_consistent(0.4)
    assert not c.cone_consistent(0.3)


def test_probe_validation():
    with pytest.raises(ValueError):
        ct.Probe(displacement=-0.01)
    probe = ct.Probe()
    assert probe.stiffness == 1e6


def test_press_probe_schedule_validation():
    class DummyGripper:
        def run_press(self, probe, schedule):
            return [(d, 0.0) for d in schedule]

    with pytest.raises(ValueError):
        ct.press_probe(DummyGripper(), ct.Probe(), [0.0, 0.002, 0.001])
    with pytest.raises(ValueError):
        ct.press_probe(DummyGripper(), ct.Probe(), [0.0, 0.070])
    out = ct.press_probe(DummyGripper(), ct.Probe(), [0.0, 0.01, 0.02])
    assert len(out) == 3
