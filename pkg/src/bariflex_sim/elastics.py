"""Quasistatic elastic models of the compliant elements.

The Fin-Ray inner linkage is a pseudo-rigid-body chain: one serial chain of
rigid segments joined by torsional springs runs up the contact face, turns
at the apex, and returns down the side support to a pin that slides in a
guide slot.  Crossbeams between the two runs are linear axial springs.
Equilibrium is elastic-energy minimization over the joint rotations with
damped Newton iterations; the pin slot and any contact are quadratic
penalties, the slot end stops are one-sided.

The fingertip torsion spring is a one-sided joint: compliant in flexion,
rigid against extension past the stopper (which forwards the load to the
rigid linkage and thence the actuator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contact import PENALTY_STIFFNESS, ContactPoint

MATERIAL_MODULUS = {"TPU87A": 12e6, "TPU95A": 26e6}  # Pa, nominal flexural

PIN_GUIDE_STIFFNESS = 1e6  # N/m, lateral slot play and end stops
MAX_LOAD = 500.0  # N, model validity bound
MAX_ITERATIONS = 200
FORCE_TOLERANCE = 1e-7  # N equivalent residual target (< 1e-6 contract)


class NoConvergence(RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no equilibrium after {iterations} iterations (residual {residual:.3e} N)"
        )


@dataclass(frozen=True)
class FingertipSpring:
    stiffness: float = 0.5  # N*m/rad
    rest_angle: float = 0.0
    stopper_angle: float = 0.0  # extension limit: equals rest_angle
    max_flexion: float = 0.40  # rad, pad meets the coupler stop

    def __post_init__(self):
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")


def fingertip_spring_torque(spring: FingertipSpring, angle: float):
    """Restoring torque and stopper state of the fingertip joint.

    Flexion (angle > rest) winds the spring; at or past the stopper the
    joint is rigid in extension and the load is forwarded to the linkage.
    """
    if angle > spring.rest_angle:
        return -spring.stiffness * (angle - spring.rest_angle), False
    return 0.0, True


@dataclass
class FinRayFinger:
    """Segmented model of one printed fin, in its own frame.

    The face runs from the clamped root (node 0) along +y to the apex; the
    side support returns from the apex to the pin end.  ``material`` picks
    the nominal modulus; ``modulus_scale`` is the calibration factor fitted
    against the compliance rig.
    """

    n_segments: int
    segment_lengths: np.ndarray  # all segments, face run then side run
    joint_stiffnesses: np.ndarray  # one per joint (same count as segments)
    rest_absolute_angles: np.ndarray  # unstressed segment directions
    base_origin: np.ndarray
    crossbeam_indices: tuple  # ((node_a, node_b), ...)
    crossbeam_stiffnesses: np.ndarray
    material: str = "TPU95A"
    pin_slide_range: tuple[float, float] | None = (-0.008, 0.008)
    pin_guide_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    contact_node_indices: tuple = ()  # face nodes eligible for contact

    def __post_init__(self):
        self.segment_lengths = np.asarray(self.segment_lengths, dtype=float)
        self.joint_stiffnesses = np.asarray(self.joint_stiffnesses, dtype=float)
        self.rest_absolute_angles = np.asarray(self.rest_absolute_angles, dtype=float)
        self.base_origin = np.asarray(self.base_origin, dtype=float)
        self.crossbeam_stiffnesses = np.asarray(self.crossbeam_stiffnesses, dtype=float)
        if np.any(self.joint_stiffnesses <= 0) or np.any(self.crossbeam_stiffnesses <= 0):
            raise ValueError("stiffnesses must be positive")
        if self.material not in MATERIAL_MODULUS:
            raise ValueError(f"unknown material {self.material!r}")
        self._rest_rel = np.diff(self.rest_absolute_angles, prepend=0.0)
        self._rest_nodes = self._forward(np.zeros(self.n_joints))
        self._crossbeam_rest = np.array([
            np.linalg.norm(self._rest_nodes[a] - self._rest_nodes[b])
            for a, b in self.crossbeam_indices
        ])
        self._pin_rest = self._rest_nodes[-1].copy()

    @property
    def n_joints(self) -> int:
        return len(self.segment_lengths)

    @property
    def rest_nodes(self) -> np.ndarray:
        return self._rest_nodes.copy()

    def _forward(self, rotations: np.ndarray) -> np.ndarray:
        angles = self.rest_absolute_angles + np.cumsum(rotations)
        steps = self.segment_lengths[:, None] * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        nodes = np.empty((self.n_joints + 1, 2))
        nodes[0] = self.base_origin
        np.cumsum(steps, axis=0, out=nodes[1:])
        nodes[1:] += self.base_origin
        return nodes

    def nodes(self, rotations) -> np.ndarray:
        return self._forward(np.asarray(rotations, dtype=float))

    @classmethod
    def triangular(cls, material: str = "TPU95A", face_length: float = 0.065,
                   base_width: float = 0.022, face_sagitta: float = 0.004,
                   n_per_beam: int = 8,
                   face_thickness: float = 0.0042, back_thickness: float = 0.0020,
                   crossbeam_thickness: float = 0.0018, width: float = 0.030,
                   modulus_scale: float = 1.0,
                   pin_slide_range=(-0.0025, 0.0025)) -> "FinRayFinger":
        """The printed fin profile.

        The contact face runs root-to-apex with a slight built-in outboard
        bow (the retraction path under tip load: a straight face would
        be an axially rigid column that snaps instead of flexing); the thin
        side support returns from the apex to the pin at the base corner.
        """
        e = MATERIAL_MODULUS[material] * modulus_scale

        ys = np.linspace(0.0, face_length, n_per_beam + 1)
        xs = face_sagitta * np.sin(np.pi * ys / face_length)
        face_nodes = np.stack([xs, ys], axis=1)
        lengths = []
        stiffness = []
        angles = []
        i_face = width * face_thickness ** 3 / 12.0
        for k in range(n_per_beam):
            d = face_nodes[k + 1] - face_nodes[k]
            seg = float(np.hypot(d[0], d[1]))
            lengths.append(seg)
            stiffness.append(e * i_face / seg)
            angles.append(math.atan2(d[1], d[0]))

        apex = face_nodes[-1]
        pin_end = np.array([base_width, 0.006])
        back_vec = pin_end - apex
        back_len = float(np.linalg.norm(back_vec))
        back_angle = math.atan2(back_vec[1], back_vec[0])
        back_seg = back_len / n_per_beam
        i_back = width * back_thickness ** 3 / 12.0
        for _ in range(n_per_beam):
            lengths.append(back_seg)
            stiffness.append(e * i_back / back_seg)
            angles.append(back_angle)

        # rest node positions, needed for the crossbeam rest lengths
        steps = np.array(lengths)[:, None] * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        rest = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])

        # crossbeams tie the face to the side support at three heights
        pairs = [(k, 2 * n_per_beam - k) for k in (2, 4, 6)]
        a_cb = width * crossbeam_thickness
        cb_stiffness = np.array([
            e * a_cb / np.linalg.norm(rest[a] - rest[b]) for a, b in pairs
        ])
        return cls(
            n_segments=n_per_beam,
            segment_lengths=np.array(lengths),
            joint_stiffnesses=np.array(stiffness),
            rest_absolute_angles=np.array(angles),
            base_origin=np.zeros(2),
            crossbeam_indices=tuple(pairs),
            crossbeam_stiffnesses=cb_stiffness,
            material=material,
            pin_slide_range=tuple(pin_slide_range),
            contact_node_indices=tuple(range(n_per_beam + 1)),
        )

    def to_fixture(self) -> dict:
        return {
            "material": self.material,
            "n_per_beam": self.n_segments,
            "face_length": float(self.segment_lengths[: self.n_segments].sum()),
            "pin_slide_lo": self.pin_slide_range[0],
            "pin_slide_hi": self.pin_slide_range[1],
        }


@dataclass
class FinRayDeflection:
    joint_rotations: np.ndarray
    pin_slide_position: float
    deformed_node_positions: np.ndarray
    elastic_energy: float = 0.0
    iterations: int = 0
    residual: float = 0.0


# ---------------------------------------------------------------------------
# Equilibrium solver
# ---------------------------------------------------------------------------


class _Problem:
    """Energy, gradient, and bookkeeping for one equilibrium solve."""

    def __init__(self, finger: FinRayFinger, loads, shapes):
        self.finger = finger
        self.loads = loads  # [(node_index, np.ndarray force)]
        self.shapes = shapes  # world obstacles already in the finger frame

    def nodal_terms(self, nodes):
        """Potential energy (excluding joint springs) and dU/dp per node."""
        finger = self.finger
        n_nodes = len(nodes)
        w = np.zeros((n_nodes, 2))
        energy = 0.0

        for (a, b), k, d0 in zip(
            finger.crossbeam_indices, finger.crossbeam_stiffnesses, finger._crossbeam_rest
        ):
            diff = nodes[a] - nodes[b]
            d = float(np.hypot(diff[0], diff[1]))
            if d < 1e-12:
                continue
            energy += 0.5 * k * (d - d0) ** 2
            g = k * (d - d0) * diff / d
            w[a] += g
            w[b] -= g

        if finger.pin_slide_range is not None:
            p = nodes[-1]
            ghat = finger.pin_guide_direction
            nhat = np.array([-ghat[1], ghat[0]])
            rel = p - finger._pin_rest
            lateral = float(rel @ nhat)
            energy += 0.5 * PIN_GUIDE_STIFFNESS * lateral * lateral
            w[-1] += PIN_GUIDE_STIFFNESS * lateral * nhat
            s = float(rel @ ghat)
            lo, hi = finger.pin_slide_range
            if s > hi:
                energy += 0.5 * PIN_GUIDE_STIFFNESS * (s - hi) ** 2
                w[-1] += PIN_GUIDE_STIFFNESS * (s - hi) * ghat
            elif s < lo:
                energy += 0.5 * PIN_GUIDE_STIFFNESS * (s - lo) ** 2
                w[-1] += PIN_GUIDE_STIFFNESS * (s - lo) * ghat

        for idx, force in self.loads:
            energy -= float(force @ nodes[idx])
            w[idx] -= force

        if self.shapes:
            for idx in self.finger.contact_node_indices:
                p = nodes[idx]
                for shape in self.shapes:
                    sd, normal = shape.signed_distance(p)
                    if sd < 0.0:
                        energy += 0.5 * PENALTY_STIFFNESS * sd * sd
                        w[idx] += PENALTY_STIFFNESS * sd * normal
        return energy, w

    def energy(self, q):
        nodes = self.finger._forward(q)
        e_nodes, _ = self.nodal_terms(nodes)
        return e_nodes + 0.5 * float(self.finger.joint_stiffnesses @ (q * q))

    def energy_and_grad(self, q):
        finger = self.finger
        nodes = finger._forward(q)
        e_nodes, w = self.nodal_terms(nodes)
        energy = e_nodes + 0.5 * float(finger.joint_stiffnesses @ (q * q))

        # chain rule via suffix sums: dp_i/dq_j = z x (p_i - c_j) for i > j
        moments = w[:, 1] * nodes[:, 0] - w[:, 0] * nodes[:, 1]
        sx = np.cumsum(w[::-1, 0])[::-1]
        sy = np.cumsum(w[::-1, 1])[::-1]
        sm = np.cumsum(moments[::-1])[::-1]
        centers = nodes[:-1]
        grad = finger.joint_stiffnesses * q + (
            sm[1:] + centers[:, 1] * sx[1:] - centers[:, 0] * sy[1:]
        )
        return energy, grad, nodes

    def residual_force(self, grad, nodes):
        """Torque residuals mapped to equivalent forces at the span they act over."""
        centers = nodes[:-1]
        spans = np.maximum(
            np.linalg.norm(nodes[-1] - centers, axis=1),
            self.finger.segment_lengths,
        )
        return float(np.max(np.abs(grad) / spans))


def _solve(problem: _Problem, q0=None, max_iterations=MAX_ITERATIONS):
    finger = problem.finger
    n = finger.n_joints
    q = np.zeros(n) if q0 is None else np.asarray(q0, dtype=float).copy()
    energy, grad, nodes = problem.energy_and_grad(q)
    lam = 0.0
    h = 1e-7
    for iteration in range(1, max_iterations + 1):
        residual = problem.residual_force(grad, nodes)
        if residual < FORCE_TOLERANCE:
            hess = _fd_hessian(problem, q, grad, h)
            if _is_psd(hess):
                return q, nodes, energy, iteration, residual, hess
            # saddle: nudge along the most negative curvature direction
            vals, vecs = np.linalg.eigh(hess)
            q = q + 1e-4 * vecs[:, 0]
            energy, grad, nodes = problem.energy_and_grad(q)
            continue
        hess = _fd_hessian(problem, q, grad, h)
        step = None
        trial_lam = lam
        for _ in range(40):
            try:
                step = np.linalg.solve(
                    hess + trial_lam * np.eye(n), -grad
                )
            except np.linalg.LinAlgError:
                trial_lam = max(1e-8, trial_lam * 10.0 if trial_lam else 1e-6)
                continue
            norm = float(np.linalg.norm(step))
            if norm > 0.5:  # rad; keep trial steps inside the model's validity
                step *= 0.5 / norm
            trial_q = q + step
            trial_energy = problem.energy(trial_q)
            if trial_energy <= energy + 1e-15:
                break
            trial_lam = max(1e-8, trial_lam * 10.0 if trial_lam else 1e-6)
            step = None
        if step is None:
            break
        lam = trial_lam * 0.3
        q = q + step
        energy, grad, nodes = problem.energy_and_grad(q)
    residual = problem.residual_force(grad, nodes)
    if residual < FORCE_TOLERANCE:
        hess = _fd_hessian(problem, q, grad, h)
        if _is_psd(hess):
            return q, nodes, energy, max_iterations, residual, hess
    raise NoConvergence(max_iterations, residual)


def _fd_hessian(problem, q, grad, h):
    n = len(q)
    hess = np.empty((n, n))
    for k in range(n):
        qk = q.copy()
        qk[k] += h
        _, gk, _ = problem.energy_and_grad(qk)
        hess[:, k] = (gk - grad) / h
    return 0.5 * (hess + hess.T)


def _is_psd(hess, tol_scale=1e-8):
    vals = np.linalg.eigvalsh(hess)
    return vals.min() >= -tol_scale * max(1.0, abs(vals.max()))


def _elastic_energy(finger, q, nodes):
    e = 0.5 * float(finger.joint_stiffnesses @ (q * q))
    for (a, b), k, d0 in zip(
        finger.crossbeam_indices, finger.crossbeam_stiffnesses, finger._crossbeam_rest
    ):
        d = float(np.linalg.norm(nodes[a] - nodes[b]))
        e += 0.5 * k * (d - d0) ** 2
    if finger.pin_slide_range is not None:
        ghat = finger.pin_guide_direction
        nhat = np.array([-ghat[1], ghat[0]])
        rel = nodes[-1] - finger._pin_rest
        e += 0.5 * PIN_GUIDE_STIFFNESS * float(rel @ nhat) ** 2
        s = float(rel @ ghat)
        lo, hi = finger.pin_slide_range
        if s > hi:
            e += 0.5 * PIN_GUIDE_STIFFNESS * (s - hi) ** 2
        elif s < lo:
            e += 0.5 * PIN_GUIDE_STIFFNESS * (s - lo) ** 2
    return e


def _check_loads(external_loads):
    loads = []
    for idx, force in external_loads:
        f = np.asarray(force, dtype=float)
        if not np.all(np.isfinite(f)):
            raise ValueError("loads must be finite")
        if np.linalg.norm(f) > MAX_LOAD:
            raise ValueError(f"load magnitude exceeds the {MAX_LOAD:.0f} N model bound")
        loads.append((int(idx), f))
    return loads


def _deflection(finger, q, nodes, energy_elastic, iterations, residual):
    if finger.pin_slide_range is not None:
        s = float((nodes[-1] - finger._pin_rest) @ finger.pin_guide_direction)
        lo, hi = finger.pin_slide_range
        s = min(max(s, lo), hi)
    else:
        s = 0.0
    return FinRayDeflection(
        joint_rotations=q,
        pin_slide_position=s,
        deformed_node_positions=nodes,
        elastic_energy=energy_elastic,
        iterations=iterations,
        residual=residual,
    )


def finray_equilibrium(finger: FinRayFinger, external_loads=(),
                       warm_start: np.ndarray | None = None) -> FinRayDeflection:
    """Static equilibrium of the fin under point loads at its nodes.

    Raises NoConvergence when the Newton iterations fail inside the budget,
    which callers treat as structural overload.
    """
    loads = _check_loads(external_loads)
    problem = _Problem(finger, loads, shapes=())
    q, nodes, _, iterations, residual, _ = _solve(problem, warm_start)
    return _deflection(finger, q, nodes, _elastic_energy(finger, q, nodes),
                       iterations, residual)


def finray_contact_wrap(finger: FinRayFinger, obj, base_pose=((0.0, 0.0), 0.0),
                        external_loads=(), warm_start=None):
    """Equilibrium against an obstacle; returns (deflection, contact set).

    ``base_pose = (origin, angle)`` places the finger in the world; the
    obstacle is brought into the finger frame instead of moving the fin.
    Contact forces are the converged penalty forces (all compressive).
    """
    (origin, angle) = base_pose
    origin = np.asarray(origin, dtype=float)
    shape = obj.shape if hasattr(obj, "shape") else obj
    c, s = math.cos(-angle), math.sin(-angle)
    rot_inv = np.array([[c, -s], [s, c]])
    local_shape = shape.transformed(rot_inv @ (-origin), -angle)

    loads = _check_loads(external_loads)
    problem = _Problem(finger, loads, shapes=(local_shape,))
    q, nodes, _, iterations, residual, _ = _solve(problem, warm_start)

    contacts = []
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    for idx in finger.contact_node_indices:
        sd, normal = local_shape.signed_distance(nodes[idx])
        if sd < 0.0:
            world_p = origin + rot @ nodes[idx]
            world_n = rot @ normal
            contacts.append(ContactPoint(
                position=world_p,
                normal=-world_n,  # into the object
                normal_force=PENALTY_STIFFNESS * (-sd),
            ))
    deflection = _deflection(finger, q, nodes, _elastic_energy(finger, q, nodes),
                             iterations, residual)
    return deflection, contacts
