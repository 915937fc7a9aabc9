"""Per-frame orchestration: bind policies to the environment and learn online.

Each frame: the camera policy picks a subset, the server policy observes
(subset size, previous server) and picks a server, the environment produces
the outcome, and once the configured feedback delay has elapsed both policies
learn from that frame's rewards. Everything is driven by the config seed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .disruption import (CameraTrace, ServerLatencyTrace, generate_camera_trace,
                         generate_server_trace, load_traces)
from .environment import (FrameOutcome, Mask, QualityModel, load_quality_trace,
                          mask_from_str, popcount, step)
from .errors import ConfigError
from .metrics import RunStats, camera_reward, server_reward
from .policies import (BanditCameraPolicy, GreedyTripletCameraPolicy, LatencyGreedyServerPolicy,
                       QLearningCameraPolicy, QLearningServerPolicy, RandomCameraPolicy,
                       RoundRobinServerPolicy, ServerState, enumerate_actions)

# Server the agent pretends it used before frame 0.
INITIAL_SERVER = 0

# Seed-stream tags for the independent RNG consumers of one episode.
_ENV_STREAM = 3
_CAMERA_POLICY_STREAM = 4
_SERVER_POLICY_STREAM = 5


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    mask: Mask
    server: int
    outcome: FrameOutcome
    camera_reward: float
    server_reward: float
    camera_epsilon: float
    camera_alpha: float
    server_epsilon: float
    server_alpha: float


@dataclass
class _Pending:
    """Feedback not yet delivered to the agents."""

    frame: int
    mask: Mask
    state: ServerState
    server: int
    camera_reward: float
    server_reward: float
    outcome: FrameOutcome
    next_state: ServerState | None = None


def build_camera_policy(config: ExperimentConfig, space):
    name = config.camera_policy
    if name in ("qlearning", "adaptive_q"):
        return QLearningCameraPolicy(space, config.resolved_camera_agent())
    if name == "random":
        return RandomCameraPolicy(space)
    if name == "greedy3":
        return GreedyTripletCameraPolicy(config.n_cameras)
    if name == "bandit":
        return BanditCameraPolicy(space, config.bandit_epsilon)
    raise ConfigError(f"unknown camera_policy {name!r}")


def build_server_policy(config: ExperimentConfig):
    name = config.server_policy
    if name in ("qlearning", "adaptive_q"):
        return QLearningServerPolicy(config.n_servers, config.resolved_server_agent())
    if name == "round_robin":
        return RoundRobinServerPolicy(config.n_servers)
    if name == "latency_greedy":
        return LatencyGreedyServerPolicy(config.n_servers, config.ewma_beta)
    raise ConfigError(f"unknown server_policy {name!r}")


def build_traces(config: ExperimentConfig) -> tuple[CameraTrace, ServerLatencyTrace]:
    """Generate (or load) the disruption traces for this config.

    Pure in (config, seed): swapping policies never changes what comes back.
    """
    if config.traces_dir is not None:
        return load_traces(config.traces_dir)
    params = config.resolved_disruption()
    return generate_camera_trace(params), generate_server_trace(params)


def build_quality_model(config: ExperimentConfig) -> QualityModel:
    spec = config.quality
    if spec.mode == "trace":
        return load_quality_trace(spec.trace_path, config.n_cameras)
    table = None
    if spec.table is not None:
        table = {mask_from_str(k): float(v) for k, v in spec.table.items()}
    return QualityModel.synthetic(
        config.n_cameras,
        noise_sd=spec.noise_sd,
        table=table,
        camera_weights=spec.camera_weights,
        ceiling=spec.ceiling,
        curve=spec.curve,
        midpoint=spec.midpoint,
    )


def run_episode(config: ExperimentConfig,
                camera_trace: CameraTrace | None = None,
                server_trace: ServerLatencyTrace | None = None,
                camera_policy=None,
                server_policy=None) -> tuple[RunStats, list[FrameRecord]]:
    """Run one online-learning episode; returns aggregate stats and the frame log.

    Optional pre-built traces/policies support instrumented tests and trace
    reuse across runs; by default everything derives from the config.
    """
    config.validate()
    if camera_trace is None or server_trace is None:
        gen_cam, gen_srv = build_traces(config)
        camera_trace = camera_trace or gen_cam
        server_trace = server_trace or gen_srv
    if camera_trace.frames < config.n_frames or server_trace.frames < config.n_frames:
        raise ConfigError(
            f"traces cover {camera_trace.frames}/{server_trace.frames} frames, "
            f"need {config.n_frames}"
        )
    if camera_trace.n_cameras != config.n_cameras:
        raise ConfigError(
            f"camera trace width {camera_trace.n_cameras} != n_cameras {config.n_cameras}"
        )
    if server_trace.n_servers != config.n_servers:
        raise ConfigError(
            f"server trace width {server_trace.n_servers} != n_servers {config.n_servers}"
        )

    space = enumerate_actions(config.n_cameras, config.k_min, config.k_max)
    camera_policy = camera_policy or build_camera_policy(config, space)
    server_policy = server_policy or build_server_policy(config)
    quality_model = build_quality_model(config)
    latency_model = config.latency

    rng_env = np.random.default_rng([config.seed, _ENV_STREAM])
    rng_cam = np.random.default_rng([config.seed, _CAMERA_POLICY_STREAM])
    rng_srv = np.random.default_rng([config.seed, _SERVER_POLICY_STREAM])

    delay = config.feedback_delay_frames
    pending: deque[_Pending] = deque()
    records: list[FrameRecord] = []
    stats = RunStats()
    prev_server = INITIAL_SERVER

    for frame in range(config.n_frames):
        mask = camera_policy.select(rng_cam)
        state = ServerState(popcount(mask), prev_server)
        if pending and pending[-1].next_state is None:
            # This is the state the server agent actually faced one frame
            # after the pending decision; record it for that update.
            pending[-1].next_state = state
        server = server_policy.select(frame, state, rng_srv)
        outcome = step(
            frame, mask, server, camera_trace, server_trace, quality_model, latency_model,
            config.thresholds, k_min=config.k_min, k_max=config.k_max, rng=rng_env,
        )
        r_cam = camera_reward(outcome, config.thresholds, config.weights)
        r_srv = server_reward(outcome, config.thresholds)
        record = FrameRecord(
            frame=frame,
            mask=mask,
            server=server,
            outcome=outcome,
            camera_reward=r_cam,
            server_reward=r_srv,
            camera_epsilon=float(getattr(camera_policy, "epsilon", float("nan"))),
            camera_alpha=float(getattr(camera_policy, "alpha", float("nan"))),
            server_epsilon=float(getattr(server_policy, "epsilon", float("nan"))),
            server_alpha=float(getattr(server_policy, "alpha", float("nan"))),
        )
        records.append(record)
        stats.add(record)
        pending.append(_Pending(frame, mask, state, server, r_cam, r_srv, outcome))

        while pending and pending[0].frame + delay <= frame:
            fb = pending.popleft()
            if fb.next_state is None:
                # Immediate feedback: frame t+1 has not happened yet, so
                # bootstrap as if the subset size carried over.
                fb.next_state = ServerState(popcount(fb.mask), fb.server)
            camera_policy.learn(fb.mask, fb.camera_reward, quality=fb.outcome.quality)
            server_policy.learn(fb.state, fb.server, fb.server_reward, fb.next_state,
                                fb.outcome.total_latency_s)
        prev_server = server

    return stats, records


@dataclass
class GridResult:
    config_id: str
    stats: RunStats | None
    error: str | None = None


def run_grid(configs, ids=None) -> list[GridResult]:
    """Run independent episodes; a failure in one is reported, not propagated."""
    if ids is None:
        ids = [f"config-{i}" for i in range(len(configs))]
    if len(ids) != len(configs):
        raise ConfigError(f"got {len(ids)} ids for {len(configs)} configs")
    results = []
    for config_id, config in zip(ids, configs):
        try:
            stats, _records = run_episode(config)
            results.append(GridResult(config_id=config_id, stats=stats))
        except Exception as exc:   # noqa: BLE001 - per-episode isolation is the contract
            results.append(GridResult(config_id=config_id, stats=None, error=str(exc)))
    return results
