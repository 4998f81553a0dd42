"""Minimal neural machinery for the multimodal alignment simulation.

One encoder per modality, each a 3-layer fully connected ReLU network
mapping a D-dimensional input to a D-dimensional embedding:

    z = relu(W3 @ relu(W2 @ relu(W1 @ x + b1) + b2) + b3)

The final ReLU keeps embeddings entry-wise nonnegative, which the joint
cosine requires to be sign-discriminative. Backpropagation is written out
by hand (the ReLU subgradient at exactly 0 is taken as 0) and parameters
are updated with a standard bias-corrected Adam.

``train_alignment`` runs the mini-batch training loop against the combined
contrastive + equilibrium loss and records per-epoch statistics. Training
is single-threaded and fully deterministic for a given config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossConfig, batch_joint_cosine, gha_loss, sample_negatives
from .similarity import EPS_NORM

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Encoder:
    """Weights and biases of one MLP encoder.

    ``weights[l]`` has shape (fan_out, fan_in) and ``biases[l]`` shape
    (fan_out,); layer l computes relu(W x + b).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases


def init_encoder(dim: int, rng, n_layers: int = 3) -> Encoder:
    """Encoder with all layer sizes equal to ``dim``.

    Weights and biases are drawn uniformly from +-1/sqrt(fan_in),
    deterministically from ``rng``.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    bound = 1.0 / np.sqrt(dim)
    weights = [rng.uniform(-bound, bound, (dim, dim)) for _ in range(n_layers)]
    biases = [rng.uniform(-bound, bound, dim) for _ in range(n_layers)]
    return Encoder(weights, biases)


def encoder_forward(enc: Encoder, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Embedding and a cache of layer inputs/pre-activations for backward.

    Accepts a single vector (D,) or a batch (B, D) and mirrors the shape.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    cache = [h]
    for w, b in zip(enc.weights, enc.biases):
        pre = h @ w.T + b
        h = np.maximum(pre, 0.0)
        cache.extend([pre, h])
    z = h[0] if single else h
    return z, cache


def encoder_backward(enc: Encoder, cache: list[np.ndarray], dz):
    """Parameter and input gradients given dz = dLoss/d(embedding).

    Returns:
        (dweights, dbiases, dx) matching the shapes of the encoder
        parameters and the forward input.
    """
    dz = np.asarray(dz, dtype=np.float64)
    single = dz.ndim == 1
    dh = np.atleast_2d(dz)
    dweights: list[np.ndarray] = [None] * len(enc.weights)
    dbiases: list[np.ndarray] = [None] * len(enc.biases)
    for layer in range(len(enc.weights) - 1, -1, -1):
        inp = cache[2 * layer]
        pre = cache[2 * layer + 1]
        dpre = dh * (pre > 0.0)
        dweights[layer] = dpre.T @ inp
        dbiases[layer] = dpre.sum(axis=0)
        dh = dpre @ enc.weights[layer]
    dx = dh[0] if single else dh
    return dweights, dbiases, dx


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place from ``grads``."""
        self.step_count += 1
        b1t = 1.0 - self.beta1**self.step_count
        b2t = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    """Configuration of the alignment training loop.

    The default temperature is milder than the contrastive-loss default:
    at tau = 0.005 the softmax saturates once positives beat negatives by
    a few hundredths of cosine and alignment stalls around 0.6, while
    tau = 0.2 keeps pulling the positive tuples together until they
    nearly coincide.
    """

    epochs: int = 200
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: LossConfig = field(default_factory=lambda: LossConfig(tau=0.2))
    seed: int = 0
    #: stop once the epoch-mean positive joint cosine exceeds this
    early_stop_cos: float = 0.99
    #: abort if more than this fraction of samples is skipped in an epoch
    #: because an encoder emitted an all-zero embedding
    max_dead_fraction: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    l_contrastive: float
    l_angular: float
    l_total: float
    mean_cos_pos: float


def encode_batch(encoders: list[Encoder], x: np.ndarray) -> np.ndarray:
    """Embed a (B, n, D) batch with one encoder per modality, no caches."""
    return np.stack(
        [encoder_forward(enc, x[:, a, :])[0] for a, enc in enumerate(encoders)],
        axis=1,
    )


def init_alignment_encoders(n_modalities: int, dim: int, rng) -> list[Encoder]:
    """Independent, identically structured encoders, one per modality.

    ``train_alignment`` calls this as its first use of the generator, so
    callers can reproduce the untrained encoders from the same seed.
    """
    return [init_encoder(dim, rng) for _ in range(n_modalities)]


def train_alignment(dataset, cfg: TrainConfig) -> tuple[list[Encoder], list[EpochStats]]:
    """Train one encoder per modality to align each sample's tuple.

    Each epoch shuffles the dataset, and for every mini-batch: embeds all
    modalities, draws fresh negative tuples, evaluates the combined loss,
    backpropagates its feature gradients through each encoder, and applies
    one Adam step. Samples whose embedding collapses to the zero vector in
    any modality are excluded from that step and counted; the run aborts
    if an epoch skips more than ``max_dead_fraction`` of its samples, or
    if the loss turns non-finite.

    Returns:
        (encoders, history) where history holds one EpochStats per
        completed epoch. Stops early once the epoch-mean positive joint
        cosine exceeds ``early_stop_cos``.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 3:
        raise ValueError(f"expected a (N, n, D) dataset, got shape {data.shape}")
    n_total, n_mod, dim = data.shape
    if n_total < cfg.batch_size:
        raise ValueError("dataset smaller than one batch")
    rng = np.random.default_rng(cfg.seed)
    encoders = init_alignment_encoders(n_mod, dim, rng)
    opts = [Adam(enc.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
            for enc in encoders]
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_total)
        sums = np.zeros(4)  # l_c, l_a, l_total, cos_pos, weighted by samples
        seen = 0
        skipped = 0
        for start in range(0, n_total, cfg.batch_size):
            chunk = perm[start:start + cfg.batch_size]
            x = data[chunk]
            outs = []
            caches = []
            for a, enc in enumerate(encoders):
                z, cache = encoder_forward(enc, x[:, a, :])
                outs.append(z)
                caches.append(cache)
            feats = np.stack(outs, axis=1)
            alive = (np.sqrt(np.einsum("bnd,bnd->bn", feats, feats)) > EPS_NORM).all(axis=1)
            skipped += int((~alive).sum())
            if int(alive.sum()) < 2:
                continue
            feats_alive = feats[alive]
            batch_n = feats_alive.shape[0]
            neg = sample_negatives(batch_n, n_mod, cfg.loss.negatives, rng,
                                   cfg.loss.neg_scheme)
            breakdown = gha_loss(feats_alive, neg, cfg.loss)
            if not np.isfinite(breakdown.l_total):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}: "
                    f"l_contrastive={breakdown.l_contrastive}, "
                    f"l_angular={breakdown.l_angular}"
                )
            cos_pos = batch_joint_cosine(feats_alive)
            sums += batch_n * np.array([
                breakdown.l_contrastive, breakdown.l_angular,
                breakdown.l_total, float(cos_pos.mean()),
            ])
            seen += batch_n
            for a, (enc, opt) in enumerate(zip(encoders, opts)):
                dz = np.zeros((x.shape[0], dim))
                dz[alive] = breakdown.grads[:, a, :]
                dw, db, _ = encoder_backward(enc, caches[a], dz)
                opt.step(enc.params, dw + db)
        if seen == 0:
            raise RuntimeError(f"every sample of epoch {epoch} was skipped")
        if skipped / n_total > cfg.max_dead_fraction:
            raise RuntimeError(
                f"epoch {epoch} skipped {skipped}/{n_total} samples "
                f"(> {cfg.max_dead_fraction:.0%}) due to all-zero embeddings"
            )
        stats = EpochStats(epoch, *(sums / seen))
        history.append(stats)
        if stats.mean_cos_pos > cfg.early_stop_cos:
            break
    return encoders, history


def save_checkpoint(path, encoders: list[Encoder], seed: int) -> None:
    """Dump encoder parameters to a versioned .npz with the training seed."""
    arrays = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION),
        "seed": np.array(seed),
        "n_encoders": np.array(len(encoders)),
        "n_layers": np.array(len(encoders[0].weights)),
    }
    for i, enc in enumerate(encoders):
        for l, (w, b) in enumerate(zip(enc.weights, enc.biases)):
            arrays[f"enc{i}_w{l}"] = w
            arrays[f"enc{i}_b{l}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[list[Encoder], int]:
    """Inverse of ``save_checkpoint``; returns (encoders, seed)."""
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        encoders = []
        for i in range(int(data["n_encoders"])):
            weights = [data[f"enc{i}_w{l}"] for l in range(int(data["n_layers"]))]
            biases = [data[f"enc{i}_b{l}"] for l in range(int(data["n_layers"]))]
            encoders.append(Encoder(weights, biases))
        return encoders, int(data["seed"])
