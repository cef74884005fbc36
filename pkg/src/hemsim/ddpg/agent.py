"""DDPG training on random 72-hour windows of the training split.

The buffer is first filled by random-action rollouts (no learning), its
contents fix the feature scaling, and training then performs one critic
update, one actor update and one soft target update per simulated hour.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..control import Policy, RolloutResult, rollout_segments
from ..dataio import SplitPlan, interpolate_ev_soc
from ..domain import Action, HouseholdSeries, SimState, Tariff, TechnicalSpec, TrainConfig
from ..env import Frame, RewardWeights, build_frames, initial_state, state_features, step
from .buffer import FeatureNorm, ReplayBuffer
from .nets import Adam, Mlp, soft_update
from .noise import make_noise

STATE_DIM = 8
ACTION_DIM = 2
TRAIN_LOG_HEADER = "episode,mean_reward,critic_loss,actor_objective"
CHECKPOINT_VERSION = 1


class DdpgAgent:
    """Actor/critic pair with their targets and a shared feature scaler."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        self.config = config
        sizes_a = (STATE_DIM, config.layer1, config.layer2, ACTION_DIM)
        sizes_c = (STATE_DIM + ACTION_DIM, config.layer1, config.layer2, 1)
        self.actor = Mlp(sizes_a, "tanh", rng)
        self.critic = Mlp(sizes_c, "linear", rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.adam_actor = Adam(self.actor.params, config.lr_actor)
        self.adam_critic = Adam(self.critic.params, config.lr_critic)
        self.norm: FeatureNorm | None = None

    # --- acting -------------------------------------------------------------

    def act(self, features: Sequence[float], noise=None) -> np.ndarray:
        """Action in [0, 1]^2 for one raw feature vector."""
        if self.norm is None:
            raise RuntimeError("feature scaling not fitted yet")
        x = self.norm.transform(np.asarray(features, dtype=float))[None, :]
        u, _ = self.actor.forward(x)
        u = u[0]
        if noise is not None:
            u = u + noise.sample()
        u = np.clip(u, -1.0, 1.0)
        return (u + 1.0) / 2.0

    def policy(self, spec: TechnicalSpec) -> Policy:
        """Deterministic greedy policy usable by the rollout machinery."""

        def policy_fn(state: SimState) -> Action:
            a = self.act(state_features(state, spec))
            return Action(target_bess=float(a[0]), target_ev=float(a[1]))

        return policy_fn

    # --- learning -----------------------------------------------------------

    def critic_update(self, batch) -> float:
        """One TD(0) regression step toward r + gamma * Q'(s', actor'(s'))."""
        states, actions, rewards, next_states = batch
        assert self.norm is not None
        s = self.norm.transform(states)
        s2 = self.norm.transform(next_states)
        u2, _ = self.target_actor.forward(s2)
        a2 = (u2 + 1.0) / 2.0
        q2, _ = self.target_critic.forward(np.concatenate([s2, a2], axis=1))
        targets = rewards + self.config.discount * q2[:, 0]
        q, cache = self.critic.forward(np.concatenate([s, actions], axis=1))
        err = q[:, 0] - targets
        loss = float(np.mean(err**2))
        dq = (2.0 * err / len(err))[:, None]
        grads, _ = self.critic.backward(cache, dq)
        self.adam_critic.step(self.critic.params, grads)
        return loss

    def actor_update(self, batch) -> float:
        """Ascend mean Q(s, actor(s)) through the frozen critic."""
        states = batch[0]
        assert self.norm is not None
        s = self.norm.transform(states)
        u, actor_cache = self.actor.forward(s)
        a = (u + 1.0) / 2.0
        q, critic_cache = self.critic.forward(np.concatenate([s, a], axis=1))
        objective = float(np.mean(q))
        # minimize -mean(Q): push -1/K through the critic to its action input
        dq = np.full((len(s), 1), -1.0 / len(s))
        _, dx = self.critic.backward(critic_cache, dq)
        du = dx[:, STATE_DIM:] * 0.5  # action = (u + 1) / 2
        grads, _ = self.actor.backward(actor_cache, du)
        self.adam_actor.step(self.actor.params, grads)
        return objective

    def soft_updates(self) -> None:
        tau = self.config.soft_update_tau
        soft_update(self.actor, self.target_actor, tau)
        soft_update(self.critic, self.target_critic, tau)


# --- episode sampling ---------------------------------------------------------


@dataclass
class TrainingWindows:
    """Training-split frames and the interpolated EV SoC used for cold starts."""

    segments: list[list[Frame]]
    seg_offsets: list[int]
    soc_interpolated: np.ndarray

    @classmethod
    def from_plan(cls, series: HouseholdSeries, plan: SplitPlan) -> "TrainingWindows":
        frames = build_frames(series)
        segs: list[list[Frame]] = []
        offsets: list[int] = []
        for seg in plan.by_role("train"):
            lo, hi = seg.step_range()
            segs.append(frames[lo:hi])
            offsets.append(lo)
        if not segs:
            raise ValueError("plan has no training segments")
        return cls(segs, offsets, interpolate_ev_soc(series))

    def initial_ev_soc(self, seg_idx: int, local_t: int) -> float | None:
        value = self.soc_interpolated[self.seg_offsets[seg_idx] + local_t]
        return None if np.isnan(value) else float(value)


def sample_episode(
    windows: TrainingWindows, horizon_h: int, rng: np.random.Generator,
    max_tries: int = 1000,
) -> tuple[int, int]:
    """Pick (segment, start) for one episode.

    A window whose final hour sits inside an unfinished transaction is
    shifted later until that transaction's disconnect step is included;
    if the shift leaves the segment, the draw is repeated.
    """
    weights = np.array([max(0, len(seg) - horizon_h) for seg in windows.segments], dtype=float)
    if weights.sum() == 0:
        raise ValueError(f"no training segment is long enough for {horizon_h} h episodes")
    probs = weights / weights.sum()
    for _ in range(max_tries):
        seg_idx = int(rng.choice(len(windows.segments), p=probs))
        seg = windows.segments[seg_idx]
        start = int(rng.integers(0, len(seg) - horizon_h))
        last = seg[start + horizon_h - 1]
        if last.connected and last.countdown_h > 1:
            start += last.countdown_h - 1
            if start + horizon_h > len(seg) - 1:
                continue
        return seg_idx, start
    raise RuntimeError("no feasible episode window found; transactions may be too long")


# --- training loop -------------------------------------------------------------


@dataclass
class TrainResult:
    agent: DdpgAgent
    log_rows: list[tuple[int, float, float, float]]
    seed: int


def _fill_buffer(
    agent: DdpgAgent,
    windows: TrainingWindows,
    series: HouseholdSeries,
    tariff: Tariff,
    weights: RewardWeights,
    rng: np.random.Generator,
) -> ReplayBuffer:
    """Random-action episodes until the buffer holds ``buffer_size`` tuples."""
    config = agent.config
    buffer = ReplayBuffer(config.buffer_size)
    spec = series.spec
    while len(buffer) < config.buffer_size:
        seg_idx, start = sample_episode(windows, config.episode_len_h, rng)
        seg = windows.segments[seg_idx]
        state = initial_state(
            seg[start], 0.0, spec, windows.initial_ev_soc(seg_idx, start)
        )
        for t in range(start, start + config.episode_len_h):
            action01 = rng.uniform(0.0, 1.0, ACTION_DIM)
            action = Action(float(action01[0]), float(action01[1]))
            outcome = step(state, action, seg[t + 1], spec, tariff, weights)
            buffer.insert(
                state_features(state, spec),
                action01,
                outcome.reward,
                state_features(outcome.next_state, spec),
            )
            state = outcome.next_state
            if len(buffer) >= config.buffer_size:
                break
    return buffer


def reward_weights(config: TrainConfig) -> RewardWeights:
    return RewardWeights(
        discomfort_weight=config.discomfort_weight,
        penalty_weight=config.penalty_weight,
        discomfort_kind=config.discomfort_kind,
    )


def train(
    series: HouseholdSeries,
    plan: SplitPlan,
    config: TrainConfig,
    seed: int,
    tariff: Tariff,
) -> TrainResult:
    """Train one agent; fully deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    agent = DdpgAgent(config, rng)
    windows = TrainingWindows.from_plan(series, plan)
    weights = reward_weights(config)
    spec = series.spec

    buffer = _fill_buffer(agent, windows, series, tariff, weights, rng)
    agent.norm = FeatureNorm.fit(buffer.all_states())

    noise = make_noise(config.noise_kind, config.noise_scale, rng, ACTION_DIM)
    log_rows: list[tuple[int, float, float, float]] = []
    for episode in range(config.episodes):
        seg_idx, start = sample_episode(windows, config.episode_len_h, rng)
        seg = windows.segments[seg_idx]
        state = initial_state(
            seg[start], 0.0, spec, windows.initial_ev_soc(seg_idx, start)
        )
        noise.reset()
        rewards = np.empty(config.episode_len_h)
        closses = np.empty(config.episode_len_h)
        aobjs = np.empty(config.episode_len_h)
        for i, t in enumerate(range(start, start + config.episode_len_h)):
            features = state_features(state, spec)
            action01 = agent.act(features, noise)
            action = Action(float(action01[0]), float(action01[1]))
            outcome = step(state, action, seg[t + 1], spec, tariff, weights)
            buffer.insert(
                features, action01, outcome.reward, state_features(outcome.next_state, spec)
            )
            batch = buffer.sample(config.batch_size, rng)
            closses[i] = agent.critic_update(batch)
            aobjs[i] = agent.actor_update(batch)
            agent.soft_updates()
            rewards[i] = outcome.reward
            state = outcome.next_state
        log_rows.append(
            (episode, float(rewards.mean()), float(closses.mean()), float(aobjs.mean()))
        )
    return TrainResult(agent=agent, log_rows=log_rows, seed=seed)


def evaluate(
    agent: DdpgAgent,
    series: HouseholdSeries,
    plan: SplitPlan,
    role: str,
    tariff: Tariff,
) -> RolloutResult:
    """Deterministic rollout of the greedy policy over a split's segments."""
    segments = [seg.step_range() for seg in plan.by_role(role)]
    return rollout_segments(
        series, segments, agent.policy(series.spec), tariff, reward_weights(agent.config)
    )


# --- multi-seed orchestration ---------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    eval_profit_per_day: float
    test_profit_per_day: float
    eval_discomfort: float | None
    test_discomfort: float | None


@dataclass
class MultiSeedResult:
    results: list[SeedResult]
    best_index: int

    @property
    def mean_test_profit(self) -> float:
        return sum(r.test_profit_per_day for r in self.results) / len(self.results)

    @property
    def best(self) -> SeedResult:
        return self.results[self.best_index]


def select_best_by_eval(results: Sequence[SeedResult]) -> int:
    """Model selection: the seed with the highest evaluation-split profit."""
    best = 0
    for i, res in enumerate(results):
        if res.eval_profit_per_day > results[best].eval_profit_per_day:
            best = i
    return best


def multi_seed(
    series: HouseholdSeries,
    plan: SplitPlan,
    config: TrainConfig,
    tariff: Tariff,
    base_seed: int = 0,
    agents_out: list[DdpgAgent] | None = None,
) -> MultiSeedResult:
    """Train ``config.seed_count`` agents with seeds base, base+1, ..."""
    results: list[SeedResult] = []
    for i in range(config.seed_count):
        trained = train(series, plan, config, base_seed + i, tariff)
        eval_run = evaluate(trained.agent, series, plan, "eval", tariff)
        test_run = evaluate(trained.agent, series, plan, "test", tariff)
        results.append(
            SeedResult(
                seed=base_seed + i,
                eval_profit_per_day=eval_run.profit_per_day,
                test_profit_per_day=test_run.profit_per_day,
                eval_discomfort=eval_run.discomfort_score,
                test_discomfort=test_run.discomfort_score,
            )
        )
        if agents_out is not None:
            agents_out.append(trained.agent)
    return MultiSeedResult(results=results, best_index=select_best_by_eval(results))


# --- persistence ----------------------------------------------------------------


def write_train_log(path: str | Path, rows: Sequence[tuple[int, float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAIN_LOG_HEADER.split(","))
        for episode, mean_reward, critic_loss, actor_objective in rows:
            writer.writerow(
                [episode, repr(mean_reward), repr(critic_loss), repr(actor_objective)]
            )


def save_checkpoint(path: str | Path, agent: DdpgAgent) -> None:
    """Persist config, feature scaling and all four networks; loads bit-exactly."""
    if agent.norm is None:
        raise ValueError("agent has no fitted feature scaling to save")
    arrays: dict[str, np.ndarray] = {
        "norm_low": agent.norm.low,
        "norm_high": agent.norm.high,
    }
    for name, net in (
        ("actor", agent.actor),
        ("critic", agent.critic),
        ("target_actor", agent.target_actor),
        ("target_critic", agent.target_critic),
    ):
        for i, p in enumerate(net.params):
            arrays[f"{name}_{i}"] = p
    meta = {"version": CHECKPOINT_VERSION, "config": agent.config.__dict__}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> DdpgAgent:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        config = TrainConfig(**meta["config"])
        agent = DdpgAgent(config, np.random.default_rng(0))
        for name, net in (
            ("actor", agent.actor),
            ("critic", agent.critic),
            ("target_actor", agent.target_actor),
            ("target_critic", agent.target_critic),
        ):
            net.set_params([data[f"{name}_{i}"] for i in range(len(net.params))])
        agent.norm = FeatureNorm(data["norm_low"], data["norm_high"])
    return agent
