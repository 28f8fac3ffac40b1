"""Compact actor-critic learner: tanh MLP with policy and value heads,
clipped-surrogate policy updates, Adam, and reward normalization.

The network and its gradients are written out by hand in numpy. That keeps
the whole update rule inspectable, lets tests check every gradient against
central finite differences, and makes training byte-reproducible for a
fixed seed on a given platform. All math runs in float64; checkpoints are
stored as little-endian float32.

Observations are int8 grids of shape (H, W, 3). Preprocessing flattens them
and rescales the cell-type channel (values 0..4) by 1/4 so every input
feature lies in [0, 1].
"""

import io
import struct
from dataclasses import dataclass, fields

import numpy as np

from replaylab.errors import ContractViolation, NonFiniteLossError
from replaylab.scoring import Trajectory, compute_gae

N_ACTIONS = 4
N_CELL_TYPES = 5
HIDDEN = 64

CHECKPOINT_MAGIC = b"RLVLPRM1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999


@dataclass
class UpdateConfig:
    gamma: float = 0.999
    lam: float = 0.95
    rollout_length: int = 256
    epochs: int = 4
    minibatches: int = 8
    clip: float = 0.2
    workers: int = 8
    learning_rate: float = 7e-4
    adam_epsilon: float = 1e-5
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    reward_normalization: bool = True
    normalize_advantages: bool = True

    def __post_init__(self):
        for name in ("gamma", "lam", "rollout_length", "epochs", "minibatches",
                     "workers", "learning_rate", "adam_epsilon", "entropy_coef",
                     "value_coef"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if not 0.0 < self.clip < 1.0:
            raise ContractViolation(f"clip must be in (0, 1), got {self.clip}")


@dataclass
class PolicyParams:
    """Weights in a fixed order; the checkpoint format serializes them as listed."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w_pi: np.ndarray
    b_pi: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    @property
    def obs_dim(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(*[a.copy() for a in self.arrays()])


def init_params(obs_shape: tuple[int, int, int], rng: np.random.Generator,
                hidden: int = HIDDEN) -> PolicyParams:
    """Scaled-normal hidden layers, zero output heads (uniform initial policy)."""
    h, w, _ = obs_shape
    in_dim = h * w * (N_CELL_TYPES + 2)
    return PolicyParams(
        w1=rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, hidden)),
        b2=np.zeros(hidden),
        w_pi=np.zeros((hidden, N_ACTIONS)),
        b_pi=np.zeros(N_ACTIONS),
        w_v=np.zeros((hidden, 1)),
        b_v=np.zeros(1),
    )


def preprocess(obs: np.ndarray) -> np.ndarray:
    """Flatten one observation or a batch to binary float features.

    The cell-type channel is one-hot encoded per cell (ordinal 0..4 codes are
    arbitrary, so thresholds on them are not learnable features); the door
    state and agent channels pass through as-is.
    """
    obs = np.asarray(obs)
    onehot = (obs[..., 0, None] == np.arange(N_CELL_TYPES)).astype(np.float64)
    x = np.concatenate([onehot, obs[..., 1:].astype(np.float64)], axis=-1)
    return x.reshape(*obs.shape[:-3], -1) if obs.ndim > 3 else x.reshape(-1)


def _hidden(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    h1 = np.tanh(x @ params.w1 + params.b1)
    return np.tanh(h1 @ params.w2 + params.b2)


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Action probabilities and value estimate for one obs or a batch."""
    x = preprocess(obs)
    if x.shape[-1] != params.obs_dim:
        raise ContractViolation(
            f"observation has {x.shape[-1]} features, network expects {params.obs_dim}"
        )
    h = _hidden(params, x)
    logits = h @ params.w_pi + params.b_pi
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=-1, keepdims=True)
    value = (h @ params.w_v)[..., 0] + params.b_v[0]
    return probs, value


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def compute_targets(
    trajs: list[Trajectory], config: UpdateConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated advantages and value targets (V + A) for a batch.

    Value targets always use raw advantages; the returned advantages are
    standardized across the batch when ``normalize_advantages`` is set.
    """
    adv = np.concatenate([compute_gae(t, config.gamma, config.lam) for t in trajs])
    values = np.concatenate([t.values for t in trajs])
    targets = values + adv
    if config.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, targets


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
        )


def _adam_step(params, grads, state, lr, eps):
    state.t += 1
    bias1 = 1.0 - ADAM_BETA1**state.t
    bias2 = 1.0 - ADAM_BETA2**state.t
    new = []
    for a, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        new.append(a - lr * (m / bias1) / (np.sqrt(v / bias2) + eps))
    return PolicyParams(*new)


def _loss_and_grads(params, x, actions, old_log_probs, advantages, targets, config):
    B = x.shape[0]
    h1 = np.tanh(x @ params.w1 + params.b1)
    h = np.tanh(h1 @ params.w2 + params.b2)
    logits = h @ params.w_pi + params.b_pi
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    probs = np.exp(log_probs)
    v = (h @ params.w_v)[:, 0] + params.b_v[0]

    logp_a = log_probs[np.arange(B), actions]
    ratio = np.exp(logp_a - old_log_probs)
    s1 = ratio * advantages
    s2 = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * advantages
    surrogate = np.minimum(s1, s2)
    entropy = -(probs * log_probs).sum(axis=1)
    v_err = v - targets

    pi_loss = -surrogate.mean()
    v_loss = (v_err**2).mean()
    ent_loss = -entropy.mean()
    loss = pi_loss + config.value_coef * v_loss + config.entropy_coef * ent_loss
    diagnostics = {
        "loss": float(loss),
        "policy_loss": float(pi_loss),
        "value_loss": float(v_loss),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(s2 < s1)),
    }
    if not np.isfinite(loss):
        return loss, None, diagnostics

    # d(pi_loss)/d(logp_a): the clipped branch has zero gradient in r.
    dlogp_a = np.where(s1 <= s2, -ratio * advantages, 0.0) / B
    dlogits = dlogp_a[:, None] * (np.eye(N_ACTIONS)[actions] - probs)
    # d(ent_loss)/d(logits): dH/dz_k = -p_k (log p_k + H).
    dlogits += config.entropy_coef / B * probs * (log_probs + entropy[:, None])
    dv = config.value_coef * 2.0 / B * v_err

    dh = dlogits @ params.w_pi.T + dv[:, None] * params.w_v[:, 0]
    dh_pre = dh * (1.0 - h * h)
    dh1 = dh_pre @ params.w2.T
    dh1_pre = dh1 * (1.0 - h1 * h1)
    grads = [
        x.T @ dh1_pre,
        dh1_pre.sum(axis=0),
        h1.T @ dh_pre,
        dh_pre.sum(axis=0),
        h.T @ dlogits,
        dlogits.sum(axis=0),
        h.T @ dv[:, None],
        np.array([dv.sum()]),
    ]
    return loss, grads, diagnostics


def ppo_update(
    params: PolicyParams,
    batch: dict,
    config: UpdateConfig,
    opt_state: AdamState,
    rng: np.random.Generator,
) -> tuple[PolicyParams, dict]:
    """Run epochs x minibatches of clipped-surrogate updates.

    ``batch`` holds obs, actions, log_probs, advantages, value_targets as
    flat arrays of equal length. Mutates ``opt_state``; returns new params
    and averaged diagnostics. Non-finite loss aborts with the diagnostics
    of the offending minibatch attached.
    """
    x = preprocess(batch["obs"])
    n = x.shape[0]
    if n % config.minibatches != 0:
        raise ContractViolation(
            f"batch size {n} not divisible into {config.minibatches} minibatches"
        )
    actions = np.asarray(batch["actions"], dtype=np.int64)
    old_log_probs = np.asarray(batch["log_probs"], dtype=np.float64)
    advantages = np.asarray(batch["advantages"], dtype=np.float64)
    targets = np.asarray(batch["value_targets"], dtype=np.float64)

    totals: dict[str, float] = {}
    count = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for chunk in np.split(order, config.minibatches):
            loss, grads, diag = _loss_and_grads(
                params, x[chunk], actions[chunk], old_log_probs[chunk],
                advantages[chunk], targets[chunk], config,
            )
            if not np.isfinite(loss):
                raise NonFiniteLossError("policy update produced a non-finite loss", diag)
            params = _adam_step(params, grads, opt_state,
                                config.learning_rate, config.adam_epsilon)
            for k, val in diag.items():
                totals[k] = totals.get(k, 0.0) + val
            count += 1
    return params, {k: val / count for k, val in totals.items()}


class RewardNormalizer:
    """Scales rewards by the running std of per-actor discounted returns.

    Keeps one return accumulator per actor (reset on episode end) and a
    Welford estimate of the accumulator's variance over all steps seen.
    """

    def __init__(self, n_actors: int, gamma: float, epsilon: float = 1e-8):
        self.gamma = gamma
        self.epsilon = epsilon
        self.returns = np.zeros(n_actors)
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count > 1 else 1.0

    def normalize(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        """Update running stats with this step's rewards, return scaled rewards."""
        rewards = np.asarray(rewards, dtype=np.float64)
        self.returns = self.gamma * self.returns + rewards
        for r in self.returns:
            self.count += 1
            delta = r - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (r - self.mean)
        out = rewards / np.sqrt(self.variance + self.epsilon)
        self.returns[np.asarray(dones, dtype=bool)] = 0.0
        return out


def save_params(params: PolicyParams, path):
    """Flat binary checkpoint: magic, array count, shapes, f32 LE data."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    arrays = params.arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for a in arrays:
        buf.write(struct.pack("<I", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(a.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ContractViolation(f"{path} is not a parameter checkpoint")
    off = 8
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape))
        a = np.frombuffer(data, dtype="<f4", count=size, offset=off)
        off += 4 * size
        arrays.append(a.reshape(shape).astype(np.float64))
    if len(arrays) != len(fields(PolicyParams)):
        raise ContractViolation("checkpoint array count does not match PolicyParams")
    return PolicyParams(*arrays)
