"""Closed-loop scenarios: reference, fault schedule, noise, controllers, metrics.

One control step of the adaptive loop:

1. every hypothesis evaluates its tracking law on its own estimate;
2. the laws are blended with the current posterior (or one is picked, for
   the hard-switching baseline), saturated and applied to the plant through
   the *true* effectiveness matrix;
3. the plant advances one Euler step with process noise and the pose is
   measured with additive noise;
4. each filter predicts with the applied command and updates with the
   measurement; the innovation likelihoods update the posterior, which is
   then floored.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ekf import FilterBank, Hypothesis, NonlinearTransition, augmented_process_cov
from .errors import DivergenceError, FTCError
from .linearization import (
    AugmentedModel,
    augment_matrices,
    augmented_weight,
    check_observation,
    default_observation,
    input_matrix,
    state_jacobian,
    state_jacobian_fd,
)
from .lqt import CostWeights, GainSchedule, control_law, sweep_arrays
from .supervisor import apply_floor, blend_controls, posterior_update
from .vehicle import (
    KGF,
    BodyState,
    FaultModel,
    VehicleParams,
    fault_coefficients,
    kinematic_transform,
    kinematic_transform_many,
    saturate,
    step_nonlinear,
)

log = logging.getLogger(__name__)

# Two-thruster failure space over the horizontal thrusters, Model I..VI.
PAIR_FAULTS = ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def pair_fault_space() -> list[FaultModel]:
    return [fault_coefficients(f, i) for i, f in enumerate(PAIR_FAULTS)]


# --------------------------------------------------------------------------
# reference

@dataclass(frozen=True)
class HelixReference:
    """``x = R sin(w t)``, ``y = R cos(w t)``, ``z = c t``, level attitude."""

    radius: float = 1.0
    rate: float = 0.02
    climb: float = 0.02

    def pose(self, t: float) -> np.ndarray:
        wt = self.rate * t
        return np.array([self.radius * math.sin(wt), self.radius * math.cos(wt),
                         self.climb * t, 0.0, 0.0, 0.0])

    def pose_rate(self, t: float) -> np.ndarray:
        wt = self.rate * t
        rw = self.radius * self.rate
        return np.array([rw * math.cos(wt), -rw * math.sin(wt), self.climb, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class ConstantReference:
    """Fixed pose setpoint."""

    setpoint: tuple[float, ...] = (0.0,) * 6

    def pose(self, t: float) -> np.ndarray:
        return np.array(self.setpoint, dtype=float)

    def pose_rate(self, t: float) -> np.ndarray:
        return np.zeros(6)


def reference_trajectory(t: float, reference=None) -> np.ndarray:
    """Reference pose at time ``t`` (helix by default)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return (reference or HelixReference()).pose(t)


def reference_velocity(t: float, reference) -> np.ndarray:
    """Body-frame velocity that realises the reference pose rate."""
    eta = reference.pose(t)
    return np.linalg.solve(kinematic_transform(eta), reference.pose_rate(t))


# --------------------------------------------------------------------------
# scenario / log

@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the body-acceleration disturbance and pose noise."""

    process_std: float = 0.02
    measurement_std: float = 0.02


@dataclass(frozen=True)
class FilterSpec:
    """Filter tuning. ``None`` covariances are derived from the noise model."""

    initial_cov: float = 1e-2
    process_cov: np.ndarray | None = None
    measurement_cov: np.ndarray | None = None
    model_error_velocity: float = 1e-4
    model_error_pose: float = 1e-10
    propagation: str = "nonlinear"


@dataclass(frozen=True)
class ControllerSpec:
    horizon_steps: int = 200
    resolve_every: int = 20
    jacobian: str = "analytic"
    saturate_each: bool = True
    heading: str = "estimate"


@dataclass(frozen=True, eq=False)
class Scenario:
    duration: float = 120.0
    dt: float = 0.01
    seed: int = 0
    params: VehicleParams = field(default_factory=VehicleParams)
    model_space: tuple[FaultModel, ...] = field(default_factory=lambda: tuple(pair_fault_space()))
    initial_priors: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.1, 0.1)
    fault_schedule: tuple[tuple[float, frozenset], ...] = ((0.0, frozenset({1, 3})),)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    weights: CostWeights = field(
        default_factory=lambda: CostWeights.diagonal([100.0] * 5 + [0.01], 100.0))
    eps_floor: float = 0.006
    reference: object = field(default_factory=HelixReference)
    baseline: float | None = None
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    observation: np.ndarray = field(default_factory=default_observation)
    initial_state: BodyState = field(default_factory=BodyState.zero)
    abort_bound: float = 50.0
    saturation: str = "scale"
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "model_space", tuple(self.model_space))
        object.__setattr__(self, "initial_priors", tuple(float(p) for p in self.initial_priors))
        sched = tuple((float(t), frozenset(int(i) for i in f)) for t, f in self.fault_schedule)
        object.__setattr__(self, "fault_schedule", sched)
        problems = self.violations()
        if problems:
            from .errors import ScenarioValidationError
            raise ScenarioValidationError(problems)

    def violations(self) -> list[tuple[str, str]]:
        out = []
        if not self.dt > 0:
            out.append(("dt_s", "must be positive"))
        if not self.duration > 0:
            out.append(("duration_s", "must be positive"))
        if len(self.initial_priors) != len(self.model_space):
            out.append(("initial_priors", f"{len(self.initial_priors)} priors for "
                                          f"{len(self.model_space)} models"))
        if any(p < 0 for p in self.initial_priors):
            out.append(("initial_priors", "entries must be non-negative"))
        if abs(sum(self.initial_priors) - 1.0) > 1e-9:
            out.append(("initial_priors", f"sum to {sum(self.initial_priors):.6g}, not 1"))
        if not self.fault_schedule:
            out.append(("fault_schedule", "needs at least one entry"))
        times = [t for t, _ in self.fault_schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            out.append(("fault_schedule", "times must be strictly increasing"))
        if times and (times[0] < 0 or times[-1] > self.duration):
            out.append(("fault_schedule", "times must lie within [0, duration]"))
        n_thr = len(self.params.thrusters)
        for t, f in self.fault_schedule:
            bad = sorted(i for i in f if not 1 <= i <= n_thr)
            if bad:
                out.append(("fault_schedule", f"unknown thruster index {bad} at t={t:g}"))
        if not 0 < self.eps_floor < 1:
            out.append(("eps_floor", "must lie in (0, 1)"))
        if self.baseline is not None and self.baseline < self.dt:
            out.append(("baseline.detection_interval_s", "must be >= dt"))
        if self.controller.horizon_steps < 1 or self.controller.resolve_every < 1:
            out.append(("controller", "horizon_steps and resolve_every must be >= 1"))
        if self.controller.resolve_every > self.controller.horizon_steps:
            out.append(("controller", "resolve_every cannot exceed horizon_steps"))
        if self.noise.process_std < 0 or self.noise.measurement_std < 0:
            out.append(("noise", "standard deviations must be non-negative"))
        return out

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def true_fault_at(self, t: float) -> frozenset:
        current = frozenset()
        for ts, f in self.fault_schedule:
            if t + 1e-9 >= ts:
                current = f
        return current

    def model_index(self, failed: frozenset) -> int:
        """1-based position of ``failed`` in the model space, 0 if absent."""
        for i, m in enumerate(self.model_space, 1):
            if m.failed == failed:
                return i
        return 0


@dataclass(eq=False)
class SimLog:
    """Per-step record of a run; row ``k`` is time ``k*dt``.

    ``u`` is the blended (or selected) command before saturation and
    ``applied`` the per-thruster force actually delivered, so failed
    thrusters read exactly zero there.
    """

    t: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    ref: np.ndarray
    posterior: np.ndarray
    u: np.ndarray
    applied: np.ndarray
    true_model: np.ndarray
    active_model: np.ndarray
    model_controls: np.ndarray
    log_likelihood: np.ndarray
    model_labels: list[str]
    fault_events: list[tuple[float, int]]
    dt: float
    mode: str = "soft"
    detection_interval: float | None = None
    wall_time: float = 0.0

    @property
    def error(self) -> np.ndarray:
        """Reference minus position: north, east, depth."""
        return self.ref[:, :3] - self.eta[:, :3]

    def __len__(self):
        return len(self.t)

    def truncated(self, n: int) -> "SimLog":
        keep = {k: getattr(self, k)[:n] for k in
                ("t", "nu", "eta", "ref", "posterior", "u", "applied", "true_model",
                 "active_model", "model_controls", "log_likelihood")}
        return replace(self, **keep)


# --------------------------------------------------------------------------
# loop

class _LoopContext:
    """Everything precomputable for a scenario: linear models along the
    reference, augmented weights, filter covariances."""

    def __init__(self, s: Scenario):
        self.s = s
        p = s.params
        self.K = s.steps
        self.Nw = s.controller.horizon_steps
        n_lin = self.K + self.Nw + 1
        dt = s.dt
        self.t = np.arange(n_lin) * dt
        self.refs = np.array([s.reference.pose(t) for t in self.t])
        H = np.asarray(s.observation, dtype=float)
        check_observation(H)
        self.H = H
        nus = np.array([reference_velocity(t, s.reference) for t in self.t])
        self.pose_rates = np.array([s.reference.pose_rate(t) for t in self.t])
        if s.controller.heading not in ("reference", "estimate"):
            raise ValueError(f"unknown heading mode {s.controller.heading!r}")
        if s.controller.jacobian == "analytic":
            Ac = state_jacobian(nus, self.refs, p)
        elif s.controller.jacobian == "fd":
            Ac = np.array([state_jacobian_fd(a, b, p) for a, b in zip(nus, self.refs)])
        else:
            raise ValueError(f"unknown jacobian method {s.controller.jacobian!r}")
        A = np.eye(12) + dt * Ac
        self.gammas = np.array([m.gamma for m in s.model_space])
        Bc = input_matrix(p)
        # input matrix does not depend on the reference; one per model
        self.B = dt * Bc[None, :, :] * self.gammas[:, None, :]
        self.At, Bt, self.Br, self.Ht = augment_matrices(A, self.B, H)
        self.Bt = Bt  # (M, 18, 8)
        self.Qt = augmented_weight(H, s.weights.Q)
        self.P = self.Qt if s.weights.P is None else s.weights.P
        self.R = s.weights.R
        n = 12 + H.shape[0]
        self.n = n

        sig_w, sig_v = s.noise.process_std, s.noise.measurement_std
        f = s.filter
        if f.process_cov is not None:
            Qp = np.asarray(f.process_cov, dtype=float)
        else:
            Qp = np.diag([(dt * sig_w) ** 2 + f.model_error_velocity] * 6 + [f.model_error_pose] * 6)
        if f.measurement_cov is not None:
            Rm = np.asarray(f.measurement_cov, dtype=float)
        else:
            Rm = np.eye(H.shape[0]) * max(sig_v ** 2, 1e-12)
        self.R_meas = Rm
        self.Q_aug = augmented_process_cov(Qp, Rm)
        if f.propagation == "nonlinear":
            self.transition = NonlinearTransition(p, self.gammas, dt, H)
        elif f.propagation == "linear":
            self.transition = None
        else:
            raise ValueError(f"unknown filter propagation {f.propagation!r}")

    def bank_model(self, k: int) -> AugmentedModel:
        """Step-``k`` model with the input matrices of every hypothesis stacked."""
        return AugmentedModel(self.At[k], self.Bt, self.Br, self.Ht, self.Qt)

    def window_at_heading(self, k0: int, psi: float) -> np.ndarray:
        """Augmented state matrices over the window with the reference yaw
        replaced by ``psi``; the yaw column of the kinematics is dropped so
        the model stays linear in the absolute state."""
        sl = slice(k0, k0 + self.Nw)
        eta = self.refs[sl].copy()
        eta[:, 5] = psi
        J = kinematic_transform_many(eta)
        nu = np.linalg.solve(J, self.pose_rates[sl][..., None])[..., 0]
        Ac = state_jacobian(nu, eta, self.s.params)
        Ac[:, 6:12, 11] = 0.0
        A = np.eye(12) + self.s.dt * Ac
        return augment_matrices(A, self.B[:1], self.H)[0]

    def schedule(self, k0: int, psi: float | None = None) -> GainSchedule:
        sl = slice(k0, k0 + self.Nw)
        At = self.At[sl] if psi is None else self.window_at_heading(k0, psi)
        Bwin = np.broadcast_to(self.Bt[:, None], (self.Bt.shape[0], self.Nw) + self.Bt.shape[1:])
        S, Tau, K, Kv = sweep_arrays(At, Bwin, self.Br, self.Qt, self.P, self.R,
                                     self.refs[sl], check=False)
        return GainSchedule(S, Tau, K, Kv, self.Br, self.Nw)


def _run(s: Scenario, detection_interval: float | None, threshold: float = 0.0,
         initial_model: int | None = None, observer=None) -> SimLog:
    wall0 = time.perf_counter()
    ctx = _LoopContext(s)
    p = s.params
    K, M, dt = ctx.K, len(s.model_space), s.dt
    rng = np.random.Generator(np.random.Philox(key=s.seed))
    sig_w, sig_v = s.noise.process_std, s.noise.measurement_std

    x0 = np.concatenate([s.initial_state.as_vector(), np.zeros(ctx.n - 12)])
    bank = FilterBank.from_hypotheses(
        Hypothesis.initial(m, ctx.n, s.filter.initial_cov, pr, x0)
        for m, pr in zip(s.model_space, s.initial_priors))
    post = np.array(s.initial_priors, dtype=float)
    state = s.initial_state

    hard = detection_interval is not None
    if hard:
        interval_steps = max(1, int(round(detection_interval / dt)))
        active = int(np.argmax(post)) if initial_model is None else initial_model
        ll_window = np.zeros(M)

    n_rec = K + 1
    rec = dict(
        t=np.arange(n_rec) * dt,
        nu=np.empty((n_rec, 6)), eta=np.empty((n_rec, 6)), ref=ctx.refs[:n_rec].copy(),
        posterior=np.empty((n_rec, M)), u=np.empty((n_rec, 8)), applied=np.empty((n_rec, 8)),
        true_model=np.empty(n_rec, dtype=int), active_model=np.zeros(n_rec, dtype=int),
        model_controls=np.empty((n_rec, M, 8)), log_likelihood=np.zeros((n_rec, M)),
    )
    labels = [m.label for m in s.model_space]
    events = [(t, s.model_index(f)) for t, f in s.fault_schedule]

    def finish(n):
        out = SimLog(**{k: v[:n] for k, v in rec.items()}, model_labels=labels, fault_events=events,
                     dt=dt, mode="hard" if hard else "soft", detection_interval=detection_interval)
        out.wall_time = time.perf_counter() - wall0
        return out

    sched, k0 = None, 0
    filled = 0
    try:
        for k in range(n_rec):
            t = k * dt
            true_failed = s.true_fault_at(t)
            true_fault = fault_coefficients(true_failed)
            if sched is None or k - k0 >= s.controller.resolve_every:
                psi = None
                if s.controller.heading == "estimate":
                    psi = bank.x[active if hard else int(np.argmax(post)), 11]
                sched, k0 = ctx.schedule(k, psi), k
            r_k = ctx.refs[k]
            U = control_law(sched, k - k0, bank.x, r_k)
            if s.controller.saturate_each:
                U = saturate(U, p.max_thrust, s.saturation)
            if hard:
                if k > 0 and k % interval_steps == 0:
                    best = int(np.argmax(ll_window))
                    if ll_window[best] - ll_window[active] > threshold:
                        active = best
                    ll_window[:] = 0.0
                u = U[active]
            else:
                u = blend_controls(U, post)
            u_sat = saturate(u, p.max_thrust, s.saturation)

            rec["nu"][k], rec["eta"][k] = state.nu, state.eta
            rec["posterior"][k] = post
            rec["u"][k] = u
            rec["applied"][k] = true_fault.gamma * u_sat
            rec["true_model"][k] = s.model_index(true_failed)
            rec["active_model"][k] = active + 1 if hard else int(np.argmax(post)) + 1
            rec["model_controls"][k] = U
            filled = k + 1

            err = np.linalg.norm(r_k[:3] - state.eta[:3])
            if not err <= s.abort_bound:
                raise DivergenceError(f"tracking error {err:.3g} m exceeds abort bound at t={t:.2f}s",
                                      t=t, error=err)
            if k == K:
                break

            w = rng.standard_normal(6) * sig_w
            v = rng.standard_normal(6) * sig_v
            state = step_nonlinear(state, u_sat, true_fault, dt, w, p, s.saturation)
            y = ctx.H @ state.as_vector() + v

            bank.predict(ctx.bank_model(k), u_sat, ctx.Q_aug, r_k, ctx.transition)
            ll = bank.update(ctx.Ht, y, ctx.R_meas)
            rec["log_likelihood"][k + 1] = ll
            post = apply_floor(posterior_update(post, log_likelihoods=ll), s.eps_floor)
            if hard:
                ll_window += ll
            if observer is not None and observer(k + 1, bank, post):
                return finish(k + 1)

    except FTCError as exc:
        # keep what was simulated so far for diagnosis
        exc.partial_log = finish(filled)
        raise
    return finish(n_rec)


def run_scenario(s: Scenario, observer=None) -> SimLog:
    """Adaptive soft-switching run (posterior-blended control).

    ``observer(k, bank, posterior)``, if given, is called after the filter
    and posterior updates that produce step ``k``; a truthy return ends the
    run early, and the log then stops just before step ``k``.
    """
    return _run(s, None, observer=observer)


def hard_switch_baseline(s: Scenario, detection_interval: float, *, threshold: float = 0.0,
                         initial_model: int | None = None) -> SimLog:
    """Single-model control with interval-sampled re-selection.

    At every multiple of ``detection_interval`` the model with the largest
    log-likelihood summed over the elapsed interval takes over, provided it
    beats the active model by more than ``threshold`` nats; exact ties go to
    the lower index.  The first active model is ``initial_model`` (0-based)
    or, by default, the prior's argmax.
    """
    if detection_interval < s.dt:
        raise ValueError("detection interval must be at least dt")
    if initial_model is not None and not 0 <= initial_model < len(s.model_space):
        raise ValueError(f"initial model {initial_model} outside the model space")
    return _run(s, detection_interval, threshold, initial_model)


# --------------------------------------------------------------------------
# metrics

def settling_time(t: np.ndarray, err: np.ndarray, band: float) -> float | None:
    """First time after which ``|err|`` stays within ``band``; None if never."""
    outside = np.flatnonzero(np.abs(err) > band)
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last + 1 >= len(t):
        return None
    return float(t[last + 1])


def crossing_time(t: np.ndarray, x: np.ndarray, level: float, start: float = 0.0) -> float | None:
    """First time at or after ``start`` where ``x >= level``."""
    idx = np.flatnonzero((x >= level) & (t >= start - 1e-12))
    return float(t[idx[0]]) if idx.size else None


def compute_metrics(log: SimLog, band: float = 0.05, level: float = 0.9,
                    event_window: float = 20.0) -> dict:
    """Summary statistics of a run.

    Per-axis RMS / steady-state / settling metrics use the north, east and
    depth errors; posterior convergence is the first time each model's weight
    reaches ``level``; fault-event metrics look at ``event_window`` seconds
    after every scheduled change.
    """
    if len(log) == 0:
        raise ValueError("empty log")
    t = log.t
    err = log.error
    axes = ("north", "east", "depth")
    tail = max(1, len(t) // 10)
    out = {
        "duration_s": float(t[-1]),
        "steps": len(t) - 1,
        "mode": log.mode,
        "detection_interval_s": log.detection_interval,
        "rms_error_m": {a: float(np.sqrt(np.mean(err[:, i] ** 2))) for i, a in enumerate(axes)},
        "steady_state_error_m": {a: float(np.mean(np.abs(err[-tail:, i]))) for i, a in enumerate(axes)},
        "max_abs_error_m": {a: float(np.max(np.abs(err[:, i]))) for i, a in enumerate(axes)},
        "settling_band_m": band,
        "settling_time_s": {a: settling_time(t, err[:, i], band) for i, a in enumerate(axes)},
        "posterior_convergence_s": {
            lab: crossing_time(t, log.posterior[:, j], level) for j, lab in enumerate(log.model_labels)
        },
        "wall_time_s": log.wall_time,
        "events": [],
    }
    planar = np.hypot(err[:, 0], err[:, 1])
    for te, idx in log.fault_events:
        ev = {"time_s": te, "true_model": idx}
        after = (t >= te - 1e-9) & (t <= te + event_window + 1e-9)
        if not after.any():
            continue
        if idx:
            ev["convergence_s"] = crossing_time(t, log.posterior[:, idx - 1], level, te)
            if ev["convergence_s"] is not None:
                ev["convergence_delay_s"] = ev["convergence_s"] - te
        ev["peak_planar_deviation_m"] = float(planar[after].max())
        before = (t < te - 1e-9) & (t >= te - 1.0)
        base = log.applied[before].mean(axis=0) if before.any() else np.zeros(8)
        seg = log.applied[after] - base
        peak_idx = np.argmax(np.abs(seg), axis=0)
        peaks = seg[peak_idx, np.arange(8)]
        ev["peak_force_adjustment_n"] = [float(x) for x in peaks]
        ev["peak_force_adjustment_kgf"] = [float(x / KGF) for x in peaks]
        out["events"].append(ev)
    return out
