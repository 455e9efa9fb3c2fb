"""Closed-loop episode runner: toy plant, reward accounting, ZOH control.

The plant here is deliberately NOT a microrobot dynamics model. It is a small
deterministic surrogate whose only job is to exercise zero-order-hold control
at configurable update frequencies, per-term reward accounting, domain
randomization plumbing, and the wire codec, end to end. Its one deliberately
physical trait is a saturating joint-velocity element: coarser action holds
concentrate joint motion into faster bursts, the saturation wastes the excess,
and forward drive (hence tracking reward) degrades as update rate drops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DomainError
from .kernel import fused_infer_dequant, infer_int8, quantize_obs
from .policy import Fp32Policy, ObservationSchema, infer_fp32
from .quant import QuantizedPolicy, dequantize_action
from .wire import LoopbackDevice, Session

NUM_LEGS = 4
NUM_JOINTS = 8
# joint layout: leg f owns (lift, swing) = (q[2f], q[2f+1]); legs FL, FR, RL, RR
_LEFT = (0, 2)
_RIGHT = (1, 3)
_FRONT = (0, 1)
_REAR = (2, 3)


@dataclass(frozen=True)
class RewardWeights:
    """Per-step reward weights; each term is additionally scaled by dt."""

    dt: float
    lin_track: float = 1.0
    ang_track: float = 0.5
    lin_penalty: float = 0.5
    ang_penalty: float = 0.05
    air_time: float = 1.0
    sigma: float = 0.5       # tracking kernel width: Phi(e) = exp(-e^2 / sigma^2)
    air_time_offset: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0 and self.sigma > 0):
            raise DataError("dt and sigma must be > 0")


def tracking_kernel(err: float, sigma: float) -> float:
    return math.exp(-(err * err) / (sigma * sigma))


@dataclass
class PlantState:
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))        # base lin vel
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))        # base ang vel
    att: np.ndarray = field(default_factory=lambda: np.zeros(2))      # roll, pitch
    q: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))
    qd: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))
    q_targets: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))
    t_air: np.ndarray = field(default_factory=lambda: np.zeros(NUM_LEGS))
    contact: np.ndarray = field(default_factory=lambda: np.zeros(NUM_LEGS, dtype=bool))
    just_landed: np.ndarray = field(default_factory=lambda: np.zeros(NUM_LEGS, dtype=bool))

    def copy(self) -> "PlantState":
        return PlantState(*(x.copy() for x in (
            self.v, self.w, self.att, self.q, self.qd, self.q_targets,
            self.t_air, self.contact, self.just_landed)))


def reward_step(s: PlantState, cmd: tuple[float, float], w: RewardWeights
                ) -> tuple[float, dict[str, float]]:
    """Per-step reward: tracking terms, motion penalties, touchdown air-time bonus."""
    v_cmd, w_cmd = cmd
    dt = w.dt
    lin = w.lin_track * dt * tracking_kernel(v_cmd - s.v[0], w.sigma)
    ang = w.ang_track * dt * tracking_kernel(w_cmd - s.w[2], w.sigma)
    pen_lin = -w.lin_penalty * dt * s.v[1] ** 2
    pen_ang = -w.ang_penalty * dt * (s.w[0] ** 2 + s.w[1] ** 2)
    air = w.air_time * dt * float(
        np.sum((s.t_air - w.air_time_offset) * s.just_landed))
    terms = {"lin_track": lin, "ang_track": ang, "lin_penalty": pen_lin,
             "ang_penalty": pen_ang, "air_time": air}
    return lin + ang + pen_lin + pen_ang + air, terms


# --- domain randomization -------------------------------------------------

@dataclass(frozen=True)
class DRConfig:
    """Randomization rows: additive rows are (mean, std) of a Gaussian draw,
    scaling rows are (lo, hi) of a Uniform multiplicative factor."""

    observation: tuple[float, float] = (0.0, 0.002)
    action: tuple[float, float] = (0.0, 0.02)
    gravity: tuple[float, float] = (0.0, 0.4)
    mass: tuple[float, float] = (0.05, 0.15)
    friction: tuple[float, float] = (0.07, 0.13)
    restitution: tuple[float, float] = (0.0, 0.7)
    damping: tuple[float, float] = (0.5, 1.5)
    stiffness: tuple[float, float] = (0.5, 1.5)
    dof_lower: tuple[float, float] = (0.0, 0.01)
    dof_upper: tuple[float, float] = (0.0, 0.01)

    def __post_init__(self):
        for name in ("mass", "friction", "restitution", "damping", "stiffness"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DataError(f"{name} range lower {lo} > upper {hi}")
        for name in ("observation", "action", "gravity", "dof_lower", "dof_upper"):
            _, std = getattr(self, name)
            if std < 0:
                raise DataError(f"{name} std must be >= 0")


ADDITIVE_ROWS = ("observation", "action", "gravity", "dof_lower", "dof_upper")
SCALING_ROWS = ("mass", "friction", "restitution", "damping", "stiffness")


@dataclass(frozen=True)
class DRPerturbation:
    observation: float = 0.0
    action: float = 0.0
    gravity: float = 0.0
    dof_lower: float = 0.0
    dof_upper: float = 0.0
    mass: float = 1.0
    friction: float = 1.0
    restitution: float = 1.0
    damping: float = 1.0
    stiffness: float = 1.0


def sample_dr(cfg: DRConfig, seed: int) -> DRPerturbation:
    """One seeded perturbation draw (additive Gaussians, uniform scale factors)."""
    rng = np.random.default_rng(seed)
    values = {}
    for name in ADDITIVE_ROWS:
        mean, std = getattr(cfg, name)
        values[name] = mean + std * float(rng.standard_normal()) if std > 0 else mean
    for name in SCALING_ROWS:
        lo, hi = getattr(cfg, name)
        values[name] = float(rng.uniform(lo, hi)) if hi > lo else lo
    return DRPerturbation(**values)


# --- toy plant ------------------------------------------------------------

@dataclass(frozen=True)
class PlantParams:
    """Declared surrogate constants (not fit to any physical robot)."""

    tau_joint: float = 0.02      # joint servo time constant, s
    tau_vel: float = 0.25        # body velocity time constant, s
    tau_att: float = 0.15        # attitude relaxation, s
    qd_sat: float = 0.75         # saturating joint-velocity element, rad/s
    k_vel: float = 0.28          # forward drive gain, (m/s) per (rad/s)
    k_lat: float = 0.02          # lateral response to left/right drive asymmetry
    k_yaw: float = 0.2           # yaw response to left/right drive asymmetry
    k_att: float = 0.05          # roll/pitch rate response to lift-joint motion
    q_limit: float = 1.2         # nominal joint range, rad


def _apply_dr_to_params(p: PlantParams, dr: DRPerturbation) -> PlantParams:
    # mass slows the body response; friction scales drive; stiffness speeds the
    # servo and damping slows it; restitution has no hook in this surrogate
    return replace(
        p,
        tau_vel=p.tau_vel * dr.mass / max(dr.damping, 1e-6),
        k_vel=p.k_vel * dr.friction,
        tau_joint=p.tau_joint / max(dr.stiffness, 1e-6))


def plant_step(s: PlantState, motor_targets: np.ndarray, dt: float,
               params: PlantParams = PlantParams(),
               dr: DRPerturbation = DRPerturbation()) -> PlantState:
    """Advance the surrogate by one step toward the held joint targets."""
    if dt <= 0:
        raise DataError(f"dt must be > 0, got {dt}")
    targets = np.asarray(motor_targets, dtype=np.float64).ravel()
    if targets.shape != (NUM_JOINTS,):
        raise DataError(f"expected {NUM_JOINTS} joint targets, got shape {targets.shape}")
    lo = -params.q_limit + dr.dof_lower
    hi = params.q_limit + dr.dof_upper
    targets = np.clip(targets, lo, hi)

    out = s.copy()
    out.q_targets = targets
    qd = (targets - s.q) / params.tau_joint
    out.q = s.q + dt * qd
    out.qd = qd

    lift = out.qd[0::2]
    swing = out.qd[1::2]
    contact = out.q[0::2] < 0.0

    # rectified, saturated swing-velocity drive during stance
    drive = np.clip(-swing, -params.qd_sat, params.qd_sat) * contact
    thrust = params.k_vel * float(drive.mean())
    side_asym = float(drive[list(_LEFT)].sum() - drive[list(_RIGHT)].sum())

    out.v = s.v.copy()
    out.v[0] += dt * (thrust - s.v[0]) / params.tau_vel
    out.v[1] += dt * (params.k_lat * side_asym - s.v[1]) / params.tau_vel
    out.v[2] = 0.0

    out.w = s.w.copy()
    out.w[2] += dt * (params.k_yaw * params.k_lat * side_asym - s.w[2]) / params.tau_vel
    roll_drive = float(lift[list(_LEFT)].mean() - lift[list(_RIGHT)].mean())
    pitch_drive = float(lift[list(_FRONT)].mean() - lift[list(_REAR)].mean())
    out.w[0] += dt * (params.k_att * roll_drive - s.w[0]) / params.tau_att
    out.w[1] += dt * (params.k_att * pitch_drive - s.w[1]) / params.tau_att

    out.att = s.att + dt * (out.w[:2] - s.att / params.tau_att)

    out.just_landed = contact & ~s.contact
    out.t_air = s.t_air.copy()
    airborne = ~contact
    out.t_air[airborne] += dt
    out.t_air[contact & s.contact] = 0.0
    out.contact = contact
    return out


# --- runtimes -------------------------------------------------------------

class ScriptedGaitController:
    """Deterministic trot-pattern target generator; stands in for a policy."""

    def __init__(self, v_cmd: float, gait_freq_hz: float = 1.5,
                 amp_per_mps: float = 1.2, lift_amp: float = 0.25):
        self.v_cmd = v_cmd
        self.gait_freq_hz = gait_freq_hz
        self.amp = amp_per_mps * v_cmd
        self.lift_amp = lift_amp
        self.offsets = np.array([0.0, math.pi, math.pi, 0.0])  # diagonal pairs

    def act(self, obs: np.ndarray, t: float) -> np.ndarray:
        phase = 2.0 * math.pi * self.gait_freq_hz * t + self.offsets
        targets = np.empty(NUM_JOINTS)
        targets[0::2] = self.lift_amp * np.cos(phase)
        targets[1::2] = self.amp * np.sin(phase)
        return targets


class PolicyRuntime:
    """FP32 reference inference."""

    def __init__(self, policy: Fp32Policy):
        self.policy = policy

    def act(self, obs: np.ndarray, t: float) -> np.ndarray:
        return infer_fp32(self.policy, obs).astype(np.float64)


class QuantizedRuntime:
    """Int8 kernel inference via the fused quantize/infer/dequantize path."""

    def __init__(self, qp: QuantizedPolicy):
        self.qp = qp

    def act(self, obs: np.ndarray, t: float) -> np.ndarray:
        return fused_infer_dequant(self.qp, obs)


class CodecRuntime:
    """Route another runtime's observations/actions through the wire codec."""

    def __init__(self, inner, precision: str = "fp32"):
        if precision == "int8" and not isinstance(inner, QuantizedRuntime):
            raise DataError("int8 codec transport needs a QuantizedRuntime")
        self.inner = inner
        self.precision = precision
        self.session = Session(precision)
        if precision == "int8":
            qp = inner.qp
            self.device = LoopbackDevice(lambda q: infer_int8(qp, q)[0], "int8")
        else:
            self._t = 0.0
            self.device = LoopbackDevice(lambda o: inner.act(o, self._t), "fp32")

    def act(self, obs: np.ndarray, t: float) -> np.ndarray:
        if self.precision == "int8":
            qp = self.inner.qp
            obs_q = quantize_obs(obs, qp.obs_scale, qp.obs_zp)
            reply = self.device.handle(self.session.send_observation(obs_q))
            action_q = self.session.receive_action(reply)
            out = qp.layers[-1]
            return dequantize_action(action_q, out.output_scale, out.output_zp)
        self._t = t
        reply = self.device.handle(self.session.send_observation(obs))
        return self.session.receive_action(reply).astype(np.float64)


# --- episode loop ---------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    f_sim_hz: float = 120.0
    episode_s: float = 10.0
    f_update_hz: float = 120.0
    seed: int = 0

    def __post_init__(self):
        if not (self.f_sim_hz > 0 and self.episode_s > 0):
            raise DataError("f_sim and episode length must be > 0")
        if not (0 < self.f_update_hz <= self.f_sim_hz):
            raise DataError("need 0 < f_update <= f_sim")


TRAJECTORY_COLUMNS = ("t", "vx", "vy", "wz", "reward_total", "reward_lin",
                      "reward_ang", "pen_lin", "pen_ang", "reward_air")

ATTITUDE_LIMIT_RAD = math.pi / 4


@dataclass
class EpisodeResult:
    rows: list[tuple]
    total_reward: float
    reward_ratio: float | None
    steps: int
    inference_count: int
    terminated_early: bool


def _build_observation(s: PlantState, prev_action: np.ndarray,
                       schema: ObservationSchema, dr: DRPerturbation) -> np.ndarray:
    roll, pitch = s.att
    gravity = np.array([-math.sin(pitch), math.sin(roll),
                        -math.cos(pitch) * math.cos(roll) - dr.gravity],
                       dtype=np.float64)
    obs = schema.pack(lin_vel=s.v, ang_vel=s.w, gravity=gravity,
                      joint_pos=s.q, prev_action=prev_action)
    return obs + np.float32(dr.observation)


def run_episode(runtime, sim: SimConfig, dr_config: DRConfig | None,
                cmd: tuple[float, float], *, baseline_reward: float | None = None,
                plant_params: PlantParams = PlantParams(),
                weights: RewardWeights | None = None,
                schema: ObservationSchema | None = None) -> EpisodeResult:
    """Run one deterministic closed-loop episode with zero-order-hold control."""
    dt = 1.0 / sim.f_sim_hz
    weights = weights or RewardWeights(dt=dt)
    schema = schema or ObservationSchema()
    dr = sample_dr(dr_config, sim.seed) if dr_config is not None else DRPerturbation()
    params = _apply_dr_to_params(plant_params, dr)

    n_steps = round(sim.episode_s * sim.f_sim_hz)
    n_hold = max(1, round(sim.f_sim_hz / sim.f_update_hz))

    state = PlantState()
    action = np.zeros(NUM_JOINTS)
    rows: list[tuple] = []
    total = 0.0
    inference_count = 0
    terminated = False

    for step in range(n_steps):
        t = step * dt
        if step % n_hold == 0:
            obs = _build_observation(state, action, schema, dr)
            action = np.asarray(runtime.act(obs, t), dtype=np.float64).ravel()
            if action.shape != (NUM_JOINTS,):
                raise DataError(f"runtime produced action shape {action.shape}")
            action = action + dr.action
            inference_count += 1
        state = plant_step(state, action, dt, params, dr)
        reward, terms = reward_step(state, cmd, weights)
        total += reward
        rows.append((t + dt, state.v[0], state.v[1], state.w[2], reward,
                     terms["lin_track"], terms["ang_track"], terms["lin_penalty"],
                     terms["ang_penalty"], terms["air_time"]))
        if abs(state.att[0]) > ATTITUDE_LIMIT_RAD or abs(state.att[1]) > ATTITUDE_LIMIT_RAD:
            terminated = True
            break

    ratio = None
    if baseline_reward is not None:
        if baseline_reward == 0:
            raise DomainError("baseline reward is zero; ratio undefined")
        ratio = total / baseline_reward
    return EpisodeResult(rows, total, ratio, len(rows), inference_count, terminated)


def write_trajectory_csv(result: EpisodeResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for row in result.rows:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


def episode_summary(result: EpisodeResult) -> str:
    lines = [
        f"total_reward={result.total_reward:.10g}",
        f"steps={result.steps}",
        f"inferences={result.inference_count}",
        f"terminated_early={str(result.terminated_early).lower()}",
    ]
    if result.reward_ratio is not None:
        lines.insert(1, f"reward_ratio={result.reward_ratio:.10g}")
    return "\n".join(lines) + "\n"
