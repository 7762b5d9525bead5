"""Conditional tabular GAN for class-targeted synthetic sample generation.

The generator maps [noise, one-hot condition] to an encoded row (mode-specific
normalized features) plus a reconstructed condition block; the discriminator
is a critic scoring [encoded row, condition]. Training alternates critic and
generator updates, drawing the conditioning class uniformly so minority
classes receive equal learning pressure, and sampling real rows from the
conditioned class. The critic difference loss is stabilized with an
interpolated gradient penalty (excluded from the logged values, which keep the
bare difference-loss form).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from synthbal import neuralnet as nn
from synthbal import vgmm
from synthbal.dataset import TabularDataset

MODEL_FORMAT = "synthbal-ctgan"
MODEL_VERSION = 1


class CtganError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ConditionalLayout:
    """One-hot condition layout over the class labels (condvec width = class count)."""

    classes: tuple[str, ...]
    class_frequencies: np.ndarray

    def __post_init__(self):
        freq = np.asarray(self.class_frequencies, dtype=np.float64)
        if len(freq) != len(self.classes):
            raise CtganError("one frequency per class required")
        if abs(freq.sum() - 1.0) > 1e-9:
            raise CtganError("class frequencies must sum to 1")
        freq.setflags(write=False)
        object.__setattr__(self, "class_frequencies", freq)

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def condvec_width(self) -> int:
        return len(self.classes)

    def one_hot(self, class_ids: np.ndarray) -> np.ndarray:
        out = np.zeros((len(class_ids), self.condvec_width))
        out[np.arange(len(class_ids)), class_ids] = 1.0
        return out


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 500
    learning_rate: float = 2e-3
    gumbel_tau: float = 0.2
    gradient_penalty_weight: float = 10.0
    seed: int = 0
    noise_dim: int = 128
    hidden_width: int = 255
    max_modes: int = 10
    # Stabilizers for the 1:1 alternating schedule. Momentum amplifies the
    # rotational component of adversarial dynamics, so the GAN's Adam runs
    # without it; the learning rate decays linearly to zero and the exported
    # generator is an exponential moving average of the iterates.
    adam_beta1: float = 0.0
    lr_decay: bool = True
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.epochs < 1:
            raise CtganError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise CtganError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise CtganError("learning_rate must be positive")
        if self.gumbel_tau <= 0:
            raise CtganError("gumbel_tau must be positive")
        if self.gradient_penalty_weight < 0:
            raise CtganError("gradient_penalty_weight must be non-negative")


@dataclass
class CtganModel:
    generator: nn.DenseNet
    discriminator: nn.DenseNet
    codec: vgmm.VgmmCodec
    layout: ConditionalLayout
    noise_dim: int
    gumbel_tau: float
    feature_names: tuple[str, ...]
    training_log: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def encoded_width(self) -> int:
        return self.codec.encoded_width


# ---------------------------------------------------------------------------
# Adversarial losses
# ---------------------------------------------------------------------------

def discriminator_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """Critic difference loss: mean(D(fake)) - mean(D(real))."""
    d_real = np.asarray(d_real, dtype=np.float64).ravel()
    d_fake = np.asarray(d_fake, dtype=np.float64).ravel()
    if d_real.size == 0 or d_fake.size == 0:
        raise CtganError("loss inputs must be non-empty")
    if d_real.size != d_fake.size:
        raise CtganError(
            f"real/fake score lengths differ: {d_real.size} vs {d_fake.size}"
        )
    return float(np.mean(d_fake) - np.mean(d_real))


def generator_loss(d_fake: np.ndarray, ce: float) -> float:
    """Generator loss: -mean(D(fake)) plus the condition cross-entropy term."""
    d_fake = np.asarray(d_fake, dtype=np.float64).ravel()
    if d_fake.size == 0:
        raise CtganError("loss input must be non-empty")
    if ce < 0:
        raise CtganError(f"cross-entropy must be >= 0, got {ce}")
    return float(-np.mean(d_fake) + ce)


def condition_cross_entropy(cond_probs: np.ndarray, class_ids: np.ndarray) -> float:
    """Mean cross-entropy between produced condition blocks and requested one-hots."""
    picked = cond_probs[np.arange(len(class_ids)), class_ids]
    return float(np.mean(-np.log(np.maximum(picked, 1e-12))))


def sample_condition(layout: ConditionalLayout, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Draw a training condition: a uniformly random class and its one-hot vector."""
    if layout.class_count < 1:
        raise CtganError("layout has no classes")
    cid = int(rng.integers(layout.class_count))
    vec = np.zeros(layout.condvec_width)
    vec[cid] = 1.0
    return cid, vec


# ---------------------------------------------------------------------------
# Generator output transform: tanh on alpha columns, tempered softmax on the
# one-hot mode blocks and on the condition block. Gumbel noise is added to the
# raw logits before the softmax when sampling.
# ---------------------------------------------------------------------------

def _output_slices(codec: vgmm.VgmmCodec, class_count: int) -> list[tuple[str, int, int]]:
    slices: list[tuple[str, int, int]] = []
    for alpha_off, beta_off, width in codec.layout():
        slices.append(("tanh", alpha_off, alpha_off + 1))
        slices.append(("softmax", beta_off, beta_off + width))
    enc_w = codec.encoded_width
    slices.append(("softmax", enc_w, enc_w + class_count))
    return slices


def _apply_output(
    raw: np.ndarray,
    slices: list[tuple[str, int, int]],
    tau: float,
    rng: np.random.Generator | None,
) -> np.ndarray:
    out = np.empty_like(raw)
    for kind, lo, hi in slices:
        block = raw[:, lo:hi]
        if kind == "tanh":
            out[:, lo:hi] = np.tanh(block)
        else:
            if rng is not None:
                block = block + nn.gumbel_noise(block.shape, rng)
            s = block / tau
            s = s - s.max(axis=1, keepdims=True)
            e = np.exp(s)
            out[:, lo:hi] = e / e.sum(axis=1, keepdims=True)
    return out


def _output_backward(
    out: np.ndarray,
    grad_out: np.ndarray,
    slices: list[tuple[str, int, int]],
    tau: float,
) -> np.ndarray:
    grad_raw = np.empty_like(grad_out)
    for kind, lo, hi in slices:
        g = grad_out[:, lo:hi]
        y = out[:, lo:hi]
        if kind == "tanh":
            grad_raw[:, lo:hi] = g * (1.0 - y * y)
        else:
            inner = (g * y).sum(axis=1, keepdims=True)
            grad_raw[:, lo:hi] = (g - inner) * y / tau
    return grad_raw


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _build_model(ds: TabularDataset, codec: vgmm.VgmmCodec, cfg: TrainConfig, rng) -> CtganModel:
    classes = ds.classes
    counts = np.array([len(ds.class_index[c]) for c in classes], dtype=np.float64)
    layout = ConditionalLayout(classes=classes, class_frequencies=counts / counts.sum())
    enc_w = codec.encoded_width
    cond_w = layout.condvec_width
    generator = nn.build_net(
        cfg.noise_dim + cond_w,
        [
            (cfg.hidden_width, "relu", True),
            (cfg.hidden_width, "relu", True),
            (enc_w + cond_w, "linear"),
        ],
        seed=int(rng.integers(1 << 31)),
    )
    discriminator = nn.build_net(
        enc_w + cond_w,
        [
            (cfg.hidden_width, "leaky_relu"),
            (cfg.hidden_width, "leaky_relu"),
            (1, "linear"),
        ],
        seed=int(rng.integers(1 << 31)),
    )
    return CtganModel(
        generator=generator,
        discriminator=discriminator,
        codec=codec,
        layout=layout,
        noise_dim=cfg.noise_dim,
        gumbel_tau=cfg.gumbel_tau,
        feature_names=ds.feature_names,
    )


def _generator_forward(
    model: CtganModel, noise: np.ndarray, cond: np.ndarray, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (raw head output, transformed output)."""
    slices = _output_slices(model.codec, model.layout.class_count)
    raw = nn.forward(model.generator, np.concatenate([noise, cond], axis=1))
    out = _apply_output(raw, slices, model.gumbel_tau, rng)
    return raw, out


def train(real: TabularDataset, cfg: TrainConfig) -> CtganModel:
    """Adversarial training over the encoded training set.

    Per epoch, ceil(n / batch_size) alternating critic/generator steps; real
    batches for a sampled condition are drawn from that class's rows.
    Deterministic for a fixed config seed.
    """
    if real.n_rows < 2:
        raise CtganError("need at least 2 training rows")
    if len(real.classes) < 1:
        raise CtganError("need at least one class")
    batch = min(cfg.batch_size, real.n_rows)
    if batch < 2:
        raise CtganError("batch size collapsed below 2")

    rng = np.random.default_rng(cfg.seed)
    codec = vgmm.fit(real, max_modes=min(cfg.max_modes, real.n_rows), seed=cfg.seed)
    model = _build_model(real, codec, cfg, rng)
    slices = _output_slices(codec, model.layout.class_count)

    encoded = vgmm.encode(codec, real, seed=int(rng.integers(1 << 31)))
    enc_rows = encoded.rows
    label_ids = real.label_ids()
    by_class = [np.flatnonzero(label_ids == c) for c in range(model.layout.class_count)]

    d_state = nn.init_adam(model.discriminator, cfg.learning_rate, beta1=cfg.adam_beta1)
    g_state = nn.init_adam(model.generator, cfg.learning_rate, beta1=cfg.adam_beta1)
    ema = [(l.weight.copy(), l.bias.copy()) for l in model.generator.layers]

    n_batches = math.ceil(real.n_rows / batch)
    C = model.layout.class_count
    for epoch in range(cfg.epochs):
        if cfg.lr_decay:
            frac = 1.0 - epoch / cfg.epochs
            d_state.learning_rate = cfg.learning_rate * frac
            g_state.learning_rate = cfg.learning_rate * frac
        d_losses = []
        g_losses = []
        for b in range(n_batches):
            # --- critic update ---
            cond_ids = rng.integers(0, C, size=batch)
            cond = model.layout.one_hot(cond_ids)
            real_rows = np.stack(
                [enc_rows[by_class[c][rng.integers(len(by_class[c]))]] for c in cond_ids]
            )
            real_in = np.concatenate([real_rows, cond], axis=1)

            noise = rng.standard_normal((batch, model.noise_dim))
            _, fake_in = _generator_forward(model, noise, cond, rng)

            d_real = nn.forward(model.discriminator, real_in)
            tape_real, _ = nn.backward(
                model.discriminator, np.full((batch, 1), -1.0 / batch)
            )
            d_fake = nn.forward(model.discriminator, fake_in)
            tape_fake, _ = nn.backward(
                model.discriminator, np.full((batch, 1), 1.0 / batch)
            )
            loss_d = discriminator_loss(d_real.ravel(), d_fake.ravel())

            tape_d = tape_real.scaled_add(tape_fake, 1.0)
            if cfg.gradient_penalty_weight > 0:
                mix = rng.random((batch, 1))
                interpolated = mix * real_in + (1.0 - mix) * fake_in
                _, tape_gp = nn.gradient_penalty(model.discriminator, interpolated)
                tape_d = tape_d.scaled_add(tape_gp, cfg.gradient_penalty_weight)
            nn.adam_step(model.discriminator, tape_d, d_state)

            # --- generator update ---
            cond_ids = rng.integers(0, C, size=batch)
            cond = model.layout.one_hot(cond_ids)
            noise = rng.standard_normal((batch, model.noise_dim))
            _, fake_out = _generator_forward(model, noise, cond, rng)

            scores = nn.forward(model.discriminator, fake_out)
            _, grad_wrt_fake = nn.backward(
                model.discriminator, np.full((batch, 1), -1.0 / batch)
            )
            cond_probs = fake_out[:, model.encoded_width :]
            ce = condition_cross_entropy(cond_probs, cond_ids)
            loss_g = generator_loss(scores.ravel(), ce)

            # Cross-entropy gradient w.r.t. the produced condition probabilities.
            picked = np.maximum(cond_probs[np.arange(batch), cond_ids], 1e-12)
            grad_wrt_fake = grad_wrt_fake.copy()
            grad_wrt_fake[np.arange(batch), model.encoded_width + cond_ids] += (
                -1.0 / (batch * picked)
            )
            grad_raw = _output_backward(fake_out, grad_wrt_fake, slices, model.gumbel_tau)
            tape_g, _ = nn.backward(model.generator, grad_raw)
            nn.adam_step(model.generator, tape_g, g_state)
            for (ew, eb), layer in zip(ema, model.generator.layers):
                ew *= cfg.ema_decay
                ew += (1.0 - cfg.ema_decay) * layer.weight
                eb *= cfg.ema_decay
                eb += (1.0 - cfg.ema_decay) * layer.bias

            if not (math.isfinite(loss_d) and math.isfinite(loss_g)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}: "
                    f"L_D={loss_d}, L_G={loss_g}"
                )
            d_losses.append(loss_d)
            g_losses.append(loss_g)
        model.training_log.append(
            (epoch, float(np.mean(d_losses)), float(np.mean(g_losses)))
        )
    for (ew, eb), layer in zip(ema, model.generator.layers):
        layer.weight[:] = ew
        layer.bias[:] = eb
    return model


def generate(model: CtganModel, class_name: str, n: int, seed: int = 0) -> TabularDataset:
    """Generate n rows conditioned on the requested class.

    Rows are decoded through the fitted per-feature mixtures and all labeled
    with the requested class. Deterministic per seed.
    """
    if class_name not in model.layout.classes:
        raise CtganError(
            f"unknown class '{class_name}'; model knows {list(model.layout.classes)}"
        )
    if n < 1:
        raise CtganError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    cid = model.layout.classes.index(class_name)
    cond = model.layout.one_hot(np.full(n, cid, dtype=np.int64))
    noise = rng.standard_normal((n, model.noise_dim))
    _, out = _generator_forward(model, noise, cond, rng)

    # Harden the soft one-hot blocks before decoding.
    enc = np.zeros((n, model.encoded_width))
    for alpha_off, beta_off, width in model.codec.layout():
        enc[:, alpha_off] = np.clip(out[:, alpha_off], -1.0, 1.0)
        block = out[:, beta_off : beta_off + width]
        enc[np.arange(n), beta_off + np.argmax(block, axis=1)] = 1.0

    encoded = vgmm.EncodedDataset(
        rows=enc, layout=model.codec.layout(), labels=np.array([class_name] * n)
    )
    decoded = vgmm.decode(model.codec, encoded)
    return TabularDataset(model.feature_names, decoded.rows, decoded.labels)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_model(model: CtganModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(model.feature_names),
        "classes": list(model.layout.classes),
        "class_frequencies": model.layout.class_frequencies.tolist(),
        "noise_dim": model.noise_dim,
        "gumbel_tau": model.gumbel_tau,
        "codec": vgmm.codec_to_dict(model.codec),
        "generator": nn.net_to_dict(model.generator),
        "discriminator": nn.net_to_dict(model.discriminator),
        "training_log": [list(row) for row in model.training_log],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> CtganModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise CtganError(f"{path}: not a ctgan checkpoint")
    if doc.get("version") != MODEL_VERSION:
        raise CtganError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    layout = ConditionalLayout(
        classes=tuple(doc["classes"]),
        class_frequencies=np.asarray(doc["class_frequencies"]),
    )
    return CtganModel(
        generator=nn.net_from_dict(doc["generator"]),
        discriminator=nn.net_from_dict(doc["discriminator"]),
        codec=vgmm.codec_from_dict(doc["codec"]),
        layout=layout,
        noise_dim=int(doc["noise_dim"]),
        gumbel_tau=float(doc["gumbel_tau"]),
        feature_names=tuple(doc["feature_names"]),
        training_log=[tuple(row) for row in doc["training_log"]],
    )


def save_loss_curve(model: CtganModel, path: str | Path) -> None:
    """Write the per-epoch loss log as CSV (epoch, L_D, L_G)."""
    lines = ["epoch,loss_discriminator,loss_generator"]
    for epoch, ld, lg in model.training_log:
        lines.append(f"{epoch},{ld!r},{lg!r}")
    Path(path).write_text("\n".join(lines) + "\n")
