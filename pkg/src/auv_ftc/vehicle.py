"""Nonlinear 6-DOF model of an eight-thruster underwater vehicle.

The model follows the usual marine-craft form

    eta_dot = J(eta) nu
    M nu_dot + C(nu) nu + D(nu) nu + g(eta) = tau,    tau = T Gamma u

with ``nu = [u, v, w, p, q, r]`` in the body frame, ``eta = [x, y, z, phi,
theta, psi]`` in the earth (NED) frame and ``u`` the eight thruster forces in
newtons.  Damping is diagonal linear plus diagonal quadratic, the Coriolis
matrix is derived from the total (rigid-body plus added) inertia and the
vehicle is neutrally buoyant with the centre of gravity a distance
``restoring_arm_z`` below the centre of buoyancy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, SaturationError, SingularAttitudeError

GRAVITY = 9.81
KGF = 9.80665
N_THRUSTERS = 8

# Body-frame coordinates (x forward, y starboard, z down) of a BlueROV2 Heavy
# style frame.  T1/T3 sit on the starboard side, T2/T4 on port.
_HORIZONTAL_XY = ((0.156, 0.111), (0.156, -0.111), (-0.156, 0.111), (-0.156, -0.111))
_HORIZONTAL_Z = 0.085
_VERTICAL_XY = ((0.12, 0.218), (0.12, -0.218), (-0.12, 0.218), (-0.12, -0.218))


@dataclass(frozen=True)
class Thruster:
    """Mounting point and unit thrust direction of one thruster (body frame)."""

    position: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if d.shape != (3,) or not n > 0:
            raise ValueError(f"bad thruster direction {self.direction!r}")
        if len(self.position) != 3:
            raise ValueError(f"bad thruster position {self.position!r}")
        object.__setattr__(self, "direction", tuple(float(c) for c in d / n))
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))

    @property
    def is_horizontal(self) -> bool:
        return abs(self.direction[2]) < 1e-9


def default_thrusters(angle: float = math.pi / 4) -> tuple[Thruster, ...]:
    """Thruster layout used when none is configured.

    Horizontal thrusters are vectored at ``angle`` from the surge axis so that
    equal commands on all four produce pure surge.  Vertical thrusters push
    along -z (upwards) for positive commands; T5/T8 and T6/T7 form the two
    diagonal pairs.
    """
    c, s = math.cos(angle), math.sin(angle)
    # front pair points inward, rear pair outward
    lateral = (-s, s, s, -s)
    out = [
        Thruster((x, y, _HORIZONTAL_Z), (c, ly, 0.0))
        for (x, y), ly in zip(_HORIZONTAL_XY, lateral)
    ]
    out += [Thruster((x, y, 0.0), (0.0, 0.0, -1.0)) for x, y in _VERTICAL_XY]
    return tuple(out)


# Linear / quadratic damping magnitudes for a BlueROV2-class frame.
DEFAULT_LINEAR_DAMPING = (4.03, 6.22, 5.18, 0.07, 0.07, 0.07)
DEFAULT_QUADRATIC_DAMPING = (18.18, 21.66, 36.99, 1.55, 1.55, 1.55)


@dataclass(frozen=True)
class VehicleParams:
    dry_mass: float = 11.5
    fluid_density: float = 1025.0
    added_mass_linear: tuple[float, float, float] = (-5.5, -12.7, -14.57)
    added_mass_rotational: tuple[float, float, float] = (-0.12, -0.12, -0.12)
    rotational_inertia: tuple[float, float, float] = (0.16, 0.16, 0.16)
    restoring_arm_z: float = 0.02
    max_thrust: float = 40.0
    horizontal_thruster_angle: float = math.pi / 4
    thrusters: tuple[Thruster, ...] = field(default_factory=default_thrusters)
    linear_damping: tuple[float, ...] = DEFAULT_LINEAR_DAMPING
    quadratic_damping: tuple[float, ...] = DEFAULT_QUADRATIC_DAMPING
    gravity: float = GRAVITY

    def __post_init__(self):
        for name in ("added_mass_linear", "added_mass_rotational", "rotational_inertia"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} needs 3 values")
            object.__setattr__(self, name, v)
        for name in ("linear_damping", "quadratic_damping"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 6:
                raise ValueError(f"{name} needs 6 values")
            if min(v) < 0:
                raise ValueError(f"{name} entries must be >= 0")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "thrusters", tuple(self.thrusters))

        if not self.dry_mass > 0 or not self.fluid_density > 0:
            raise ValueError("dry_mass and fluid_density must be positive")
        if not self.max_thrust > 0:
            raise ValueError("max_thrust must be positive")
        if min(self.rotational_inertia) <= 0:
            raise ValueError("rotational inertias must be positive")
        # Added-mass derivatives are listed with their hydrodynamic sign (<= 0).
        if max(self.added_mass_linear + self.added_mass_rotational) > 0:
            raise ValueError("added-mass derivatives must be <= 0")
        if len(self.thrusters) != N_THRUSTERS:
            raise ValueError(f"expected {N_THRUSTERS} thrusters, got {len(self.thrusters)}")
        for i, th in enumerate(self.thrusters, 1):
            if th.is_horizontal:
                ang = math.acos(min(1.0, abs(th.direction[0])))
                if abs(ang - self.horizontal_thruster_angle) > 1e-6:
                    raise ValueError(
                        f"thruster T{i} angle {math.degrees(ang):.3f} deg differs from "
                        f"horizontal_thruster_angle"
                    )

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        """Total inertia matrix: rigid body plus added mass (diagonal)."""
        m = self.dry_mass
        rigid = [m, m, m, *self.rotational_inertia]
        added = [-a for a in self.added_mass_linear + self.added_mass_rotational]
        return np.diag(np.add(rigid, added))

    @cached_property
    def mass_matrix_inv(self) -> np.ndarray:
        return np.linalg.inv(self.mass_matrix)

    @cached_property
    def allocation(self) -> np.ndarray:
        return build_allocation_matrix(self)

    @cached_property
    def linear_damping_array(self) -> np.ndarray:
        return np.array(self.linear_damping)

    @cached_property
    def quadratic_damping_array(self) -> np.ndarray:
        return np.array(self.quadratic_damping)

    @property
    def weight(self) -> float:
        return self.dry_mass * self.gravity


@dataclass(frozen=True, eq=False)
class BodyState:
    """Body-frame velocity ``nu`` and earth-frame pose ``eta``."""

    nu: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float).reshape(6)
        eta = np.array(self.eta, dtype=float).reshape(6)
        if abs(eta[4]) >= math.pi / 2:
            raise SingularAttitudeError(f"pitch {eta[4]:.6f} rad is at or beyond +/- pi/2")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def zero(cls) -> "BodyState":
        return cls(np.zeros(6), np.zeros(6))

    def as_vector(self) -> np.ndarray:
        """Stacked ``[nu; eta]`` (the linear model's state ordering)."""
        return np.concatenate([self.nu, self.eta])

    def __eq__(self, other):
        if not isinstance(other, BodyState):
            return NotImplemented
        return np.array_equal(self.nu, other.nu) and np.array_equal(self.eta, other.eta)


@dataclass(frozen=True, eq=False)
class FaultModel:
    """A thruster-fault hypothesis: failed set plus diagonal effectiveness."""

    id: int
    failed: frozenset
    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(-1)
        if np.any(g < 0) or np.any(g > 1):
            raise ValueError("effectiveness coefficients must lie in [0, 1]")
        failed = frozenset(int(i) for i in self.failed)
        for i in failed:
            if not 1 <= i <= g.size:
                raise ValueError(f"thruster index {i} out of range 1..{g.size}")
            if g[i - 1] != 0.0:
                raise ValueError(f"failed thruster T{i} must have zero effectiveness")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "failed", failed)

    @property
    def label(self) -> str:
        if not self.failed:
            return "healthy"
        return "".join(f"T{i}" for i in sorted(self.failed))

    def __eq__(self, other):
        if not isinstance(other, FaultModel):
            return NotImplemented
        return (
            self.id == other.id
            and self.failed == other.failed
            and np.array_equal(self.gamma, other.gamma)
        )

    def __hash__(self):
        return hash((self.id, self.failed, self.gamma.tobytes()))


def fault_coefficients(failed: Iterable[int], model_id: int = 0,
                       n_thrusters: int = N_THRUSTERS) -> FaultModel:
    """Total-failure model: zero effectiveness on ``failed``, one elsewhere."""
    failed = frozenset(int(i) for i in failed)
    bad = sorted(i for i in failed if not 1 <= i <= n_thrusters)
    if bad:
        raise ValueError(f"thruster index out of range 1..{n_thrusters}: {bad}")
    gamma = np.ones(n_thrusters)
    for i in failed:
        gamma[i - 1] = 0.0
    return FaultModel(model_id, failed, gamma)


def healthy(n_thrusters: int = N_THRUSTERS) -> FaultModel:
    return fault_coefficients((), 0, n_thrusters)


# --------------------------------------------------------------------------
# kinematics

def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-earth rotation, zyx Euler convention."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array([
        [cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth],
        [spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi],
        [-sth, cth * sphi, cth * cphi],
    ])


def euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    """Maps body angular rates ``[p, q, r]`` to Euler angle rates."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, tth = math.cos(theta), math.tan(theta)
    return np.array([
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth],
    ])


def check_attitude(theta: float, tol: float = 1e-4) -> None:
    if not math.isfinite(theta):
        raise NonFiniteError("pitch angle is not finite")
    if abs(theta) >= math.pi / 2 - tol:
        raise SingularAttitudeError(
            f"pitch {theta:.6f} rad within {tol:g} of the Euler-angle singularity"
        )


def kinematic_transform(eta: Sequence[float], tol: float = 1e-4) -> np.ndarray:
    """6x6 block-diagonal ``J(eta) = diag(R(eta), T(eta))``.

    Raises SingularAttitudeError when ``|theta| >= pi/2 - tol``.
    """
    phi, theta, psi = float(eta[3]), float(eta[4]), float(eta[5])
    check_attitude(theta, tol)
    J = np.zeros((6, 6))
    J[:3, :3] = rotation_matrix(phi, theta, psi)
    J[3:, 3:] = euler_rate_matrix(phi, theta)
    return J


def kinematic_transform_many(eta: np.ndarray, tol: float = 1e-4) -> np.ndarray:
    """``J(eta)`` for an array of poses ``(..., 6)``; returns ``(..., 6, 6)``."""
    eta = np.asarray(eta, dtype=float)
    phi, theta, psi = eta[..., 3], eta[..., 4], eta[..., 5]
    if not np.all(np.isfinite(theta)):
        raise NonFiniteError("pitch angle is not finite")
    worst = float(np.max(np.abs(theta), initial=0.0))
    if worst >= math.pi / 2 - tol:
        raise SingularAttitudeError(
            f"pitch {worst:.6f} rad within {tol:g} of the Euler-angle singularity")
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    J = np.zeros(eta.shape[:-1] + (6, 6))
    J[..., 0, 0] = cpsi * cth
    J[..., 0, 1] = -spsi * cphi + cpsi * sth * sphi
    J[..., 0, 2] = spsi * sphi + cpsi * cphi * sth
    J[..., 1, 0] = spsi * cth
    J[..., 1, 1] = cpsi * cphi + sphi * sth * spsi
    J[..., 1, 2] = -cpsi * sphi + sth * spsi * cphi
    J[..., 2, 0] = -sth
    J[..., 2, 1] = cth * sphi
    J[..., 2, 2] = cth * cphi
    J[..., 3, 3] = 1.0
    J[..., 3, 4] = sphi * sth / cth
    J[..., 3, 5] = cphi * sth / cth
    J[..., 4, 4] = cphi
    J[..., 4, 5] = -sphi
    J[..., 5, 4] = sphi / cth
    J[..., 5, 5] = cphi / cth
    return J


# --------------------------------------------------------------------------
# thrusters

def build_allocation_matrix(params: VehicleParams) -> np.ndarray:
    """6x8 allocation matrix; column i is ``[d_i; r_i x d_i]``."""
    T = np.empty((6, len(params.thrusters)))
    for i, th in enumerate(params.thrusters):
        d = np.asarray(th.direction)
        T[:3, i] = d
        T[3:, i] = np.cross(th.position, d)
    return T


def saturate(u: np.ndarray, max_thrust: float, policy: str = "clamp") -> np.ndarray:
    """Limit thruster commands to ``+/- max_thrust``.

    "clamp" clips each thruster; "scale" shrinks the whole command vector
    (last axis) so its largest entry meets the limit, keeping the direction
    of the requested wrench; "error" raises instead.
    """
    u = np.asarray(u, dtype=float)
    if policy == "clamp":
        return np.clip(u, -max_thrust, max_thrust)
    if policy == "scale":
        peak = np.max(np.abs(u), axis=-1, keepdims=True)
        return u * np.minimum(1.0, max_thrust / np.maximum(peak, 1e-300))
    if policy == "error":
        if np.any(np.abs(u) > max_thrust):
            i = int(np.argmax(np.abs(u)))
            raise SaturationError(
                f"T{i + 1} command {u[i]:.3f} N exceeds max thrust {max_thrust:g} N"
            )
        return u
    raise ValueError(f"unknown saturation policy {policy!r}")


def thrust_to_wrench(u: Sequence[float], fault: FaultModel, alloc: np.ndarray,
                     max_thrust: float | None = None, saturation: str = "clamp") -> np.ndarray:
    """Body wrench ``T diag(gamma) u`` produced by thruster forces ``u``.

    With ``max_thrust`` set the command is first saturated per ``saturation``
    (see :func:`saturate`).
    """
    u = np.asarray(u, dtype=float)
    if max_thrust is not None:
        u = saturate(u, max_thrust, saturation)
    return alloc @ (fault.gamma * u)


# --------------------------------------------------------------------------
# kinetics

def _cross(a, b) -> np.ndarray:
    # np.cross carries heavy per-call overhead for 3-vectors
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _skew(a: np.ndarray) -> np.ndarray:
    """Cross-product matrix; accepts leading batch axes."""
    a = np.asarray(a, dtype=float)
    S = np.zeros(a.shape[:-1] + (3, 3))
    S[..., 0, 1], S[..., 0, 2] = -a[..., 2], a[..., 1]
    S[..., 1, 0], S[..., 1, 2] = a[..., 2], -a[..., 0]
    S[..., 2, 0], S[..., 2, 1] = -a[..., 1], a[..., 0]
    return S


def coriolis_matrix(nu: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Skew-symmetric Coriolis-centripetal matrix built from the total inertia."""
    M = params.mass_matrix
    a1 = M[:3, :3] @ nu[:3]
    a2 = M[3:, 3:] @ nu[3:]
    C = np.zeros((6, 6))
    C[:3, 3:] = -_skew(a1)
    C[3:, :3] = -_skew(a1)
    C[3:, 3:] = -_skew(a2)
    return C


def damping_matrix(nu: np.ndarray, params: VehicleParams) -> np.ndarray:
    return np.diag(np.asarray(params.linear_damping)
                   + np.asarray(params.quadratic_damping) * np.abs(nu))


def restoring_vector(eta: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Hydrostatic restoring wrench for a neutrally buoyant vehicle.

    Only the righting moments from the centre-of-gravity offset remain.
    ``eta`` may carry leading batch axes.
    """
    eta = np.asarray(eta, dtype=float)
    phi, theta = eta[..., 3], eta[..., 4]
    wb = params.weight * params.restoring_arm_z
    g = np.zeros(eta.shape)
    g[..., 3] = wb * np.cos(theta) * np.sin(phi)
    g[..., 4] = wb * np.sin(theta)
    return g


def _nu_dot(nu: np.ndarray, eta: np.ndarray, wrench: np.ndarray, params: VehicleParams) -> np.ndarray:
    # C(nu) nu expanded with cross products to avoid building C; batch axes lead
    M = params.mass_matrix
    v1, v2 = nu[..., :3], nu[..., 3:]
    a1 = v1 @ M[:3, :3].T
    a2 = v2 @ M[3:, 3:].T
    cnu = np.concatenate([_cross(v2, a1), _cross(v1, a1) + _cross(v2, a2)], axis=-1)
    dnu = (params.linear_damping_array + params.quadratic_damping_array * np.abs(nu)) * nu
    return (wrench - cnu - dnu - restoring_vector(eta, params)) @ params.mass_matrix_inv.T


def rigid_body_accel(state: BodyState, wrench: Sequence[float], params: VehicleParams) -> np.ndarray:
    """Solve the kinetic equation for the body acceleration ``nu_dot``."""
    wrench = np.asarray(wrench, dtype=float)
    if not (np.all(np.isfinite(wrench)) and np.all(np.isfinite(state.nu))
            and np.all(np.isfinite(state.eta))):
        raise NonFiniteError("non-finite state or wrench")
    out = _nu_dot(state.nu, state.eta, wrench, params)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("acceleration is not finite")
    return out


def step_nonlinear(state: BodyState, u: Sequence[float], fault: FaultModel, dt: float,
                   process_noise: Sequence[float] | None = None,
                   params: VehicleParams | None = None,
                   saturation: str = "clamp") -> BodyState:
    """One forward-Euler step of the full nonlinear model.

    ``process_noise`` is an additive body-acceleration disturbance (m/s^2,
    rad/s^2).  Thruster commands are saturated at ``params.max_thrust``
    according to ``saturation``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    params = params or VehicleParams()
    J = kinematic_transform(state.eta)
    wrench = thrust_to_wrench(u, fault, params.allocation, params.max_thrust, saturation)
    acc = rigid_body_accel(state, wrench, params)
    if process_noise is not None:
        acc = acc + np.asarray(process_noise, dtype=float)
    nu = state.nu + dt * acc
    eta = state.eta + dt * (J @ state.nu)
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(eta))):
        raise NonFiniteError("state became non-finite")
    return BodyState(nu, eta)
