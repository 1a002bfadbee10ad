"""Adversarial audio-to-attribute generation.

A temporal-correlation generator encodes the whole audio window conditioned
on an initial state; a local phonetic generator encodes each frame's 16-frame
context; one fully connected layer fuses the two latents into per-frame
expression (64) + pose (6) + blink AU (1) vectors. A sequence discriminator
judges whole attribute sequences. Architectures are defaults only; every
contract below holds for any drop-in replacement with the same shapes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
import torch
from torch import nn

from .audio import CONTEXT_AFTER, CONTEXT_BEFORE, WindowSample
from .checkpoint import Checkpoint
from .datasets import ATTRIBUTE_DIM
from .errors import CheckpointError, DivergenceError, ShapeMismatchError
from .reporting import LossReport
from .seeding import derive_seed, seed_all

AUDIO_DIM = 29
EXP_SLICE = slice(0, 64)
POSE_SLICE = slice(64, 70)
EYE_SLICE = slice(70, 71)
LOG_EPS = 1e-7


@dataclass
class AttributeFrame:
    expression: np.ndarray  # (64,)
    pose: np.ndarray  # (6,)
    blink: np.ndarray  # (1,)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "AttributeFrame":
        v = np.asarray(v).reshape(ATTRIBUTE_DIM)
        return cls(expression=v[EXP_SLICE], pose=v[POSE_SLICE], blink=v[EYE_SLICE])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.expression, self.pose, self.blink])


@dataclass
class AttributeGanConfig:
    window: int = 128
    d_z: int = 128
    d_c: int = 128
    hidden: int = 64
    disc_hidden: int = 64
    omega_exp: float = 2.0
    omega_pose: float = 1.0
    omega_eye: float = 5.0
    omega_state: float = 10.0
    omega_motion: float = 10.0
    omega_adv: float = 0.1
    learning_rate: float = 1e-4
    general_epochs: int = 50
    general_batch: int = 64
    finetune_epochs: int = 10
    finetune_batch: int = 16
    seed: int = 0
    max_steps: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeGanConfig":
        return cls(**d)


def local_context_windows(audio: torch.Tensor) -> torch.Tensor:
    """(B, T, D) -> (B, T, 16, D): per-frame clamped contexts a[t-8 : t+8)."""
    frames = audio.shape[1]
    idx = torch.clamp(
        torch.arange(frames, device=audio.device)[:, None]
        + torch.arange(-CONTEXT_BEFORE, CONTEXT_AFTER + 1, device=audio.device)[None, :],
        0,
        frames - 1,
    )
    return audio[:, idx]


class TemporalGenerator(nn.Module):
    """Dilated temporal convolutions over the window, the initial state
    concatenated to every timestep."""

    def __init__(self, d_z: int = 128, hidden: int = 64, audio_dim: int = AUDIO_DIM):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(audio_dim + ATTRIBUTE_DIM, hidden, 9, padding=4),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, 9, padding=8, dilation=2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, 9, padding=16, dilation=4),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, d_z, 1),
        )

    def forward(self, audio: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        if audio.shape[-1] != AUDIO_DIM or state.shape[-1] != ATTRIBUTE_DIM:
            raise ShapeMismatchError(
                f"expected audio (B,T,{AUDIO_DIM}) and state (B,{ATTRIBUTE_DIM}), "
                f"got {tuple(audio.shape)} and {tuple(state.shape)}"
            )
        cond = state[:, None, :].expand(-1, audio.shape[1], -1)
        x = torch.cat([audio, cond], dim=-1).transpose(1, 2)
        return self.net(x).transpose(1, 2)


class LocalGenerator(nn.Module):
    """Per-frame encoder over the 16-frame context; frames never mix."""

    def __init__(self, d_c: int = 128, hidden: int = 64, audio_dim: int = AUDIO_DIM):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv1d(audio_dim, hidden, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.proj = nn.Linear(hidden * 4, d_c)

    def forward(self, contexts: torch.Tensor) -> torch.Tensor:
        b, t = contexts.shape[:2]
        x = contexts.reshape(b * t, *contexts.shape[2:]).transpose(1, 2)
        h = self.conv(x).reshape(b * t, -1)
        return self.proj(h).reshape(b, t, -1)


class AttributeGenerator(nn.Module):
    def __init__(self, config: AttributeGanConfig):
        super().__init__()
        self.temporal = TemporalGenerator(config.d_z, config.hidden)
        self.local = LocalGenerator(config.d_c, config.hidden)
        self.fusion = nn.Linear(config.d_z + config.d_c, ATTRIBUTE_DIM)

    def forward(self, audio: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        z = self.temporal(audio, state)
        c = self.local(local_context_windows(audio))
        return self.fusion(torch.cat([z, c], dim=-1))


class SequenceDiscriminator(nn.Module):
    """Temporal conv classifier over (B, T, 71) sequences; outputs P(real)."""

    def __init__(self, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(ATTRIBUTE_DIM, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(hidden, 1)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        h = self.net(seq.transpose(1, 2)).mean(dim=2)
        return torch.sigmoid(self.head(h)).squeeze(-1)


def split_attributes(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return x[..., EXP_SLICE], x[..., POSE_SLICE], x[..., EYE_SLICE]


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x if x.dim() == 3 else x.unsqueeze(0)


def loss_initial_state(pred_frame0: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
    """Sum of the L1 norms of the expression/pose/blink residuals at frame 0,
    averaged over the batch."""
    diff = (pred_frame0 - state).abs().sum(dim=-1)
    return diff.mean()


def motion_terms(
    pred: torch.Tensor, target: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-attribute inter-frame motion terms:
    sum_{t>=1} ||(x_t - x_{t-1}) - (x^_t - x^_{t-1})||^2, batch-averaged."""
    pred, target = _batched(pred), _batched(target)
    out = []
    for sl in (EXP_SLICE, POSE_SLICE, EYE_SLICE):
        p, x = pred[..., sl], target[..., sl]
        dp = p[:, 1:] - p[:, :-1]
        dx = x[:, 1:] - x[:, :-1]
        out.append(((dx - dp) ** 2).sum(dim=(1, 2)).mean())
    return tuple(out)


def loss_attribute(
    pred: torch.Tensor, target: torch.Tensor, omega_motion: float
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-attribute squared-error terms plus the weighted motion term.

    For each of expression/pose/blink: sum_t ||x_t - x^_t||^2 +
    omega_motion * U, summed over time and feature dims, batch-averaged.
    """
    pred, target = _batched(pred), _batched(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {tuple(pred.shape)} != target {tuple(target.shape)}")
    motion = motion_terms(pred, target)
    out = []
    for sl, u in zip((EXP_SLICE, POSE_SLICE, EYE_SLICE), motion):
        p, x = pred[..., sl], target[..., sl]
        fit = ((x - p) ** 2).sum(dim=(1, 2)).mean()
        out.append(fit + omega_motion * u)
    return tuple(out)


def loss_regression(
    pred: torch.Tensor,
    target: torch.Tensor,
    state: torch.Tensor,
    config: AttributeGanConfig,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Weighted sum of the attribute and initial-state losses."""
    pred_b, target_b = _batched(pred), _batched(target)
    state_b = state if state.dim() == 2 else state.unsqueeze(0)
    l_exp, l_pose, l_eye = loss_attribute(pred_b, target_b, config.omega_motion)
    l_state = loss_initial_state(pred_b[:, 0], state_b)
    total = (
        config.omega_exp * l_exp
        + config.omega_pose * l_pose
        + config.omega_eye * l_eye
        + config.omega_state * l_state
    )
    return total, {"l_exp": l_exp, "l_pose": l_pose, "l_eye": l_eye, "l_s": l_state}


def loss_adversarial(
    disc: nn.Module, real: torch.Tensor, fake: torch.Tensor, eps: float = LOG_EPS
) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating split of the sequence GAN objective.

    disc_loss treats fake as fixed (detached); gen_loss keeps the generator
    graph. Logs are stabilized by clamping scores into [eps, 1 - eps].
    """
    d_real = disc(real).clamp(eps, 1.0 - eps)
    d_fake_detached = disc(fake.detach()).clamp(eps, 1.0 - eps)
    disc_loss = -(d_real.log() + (1.0 - d_fake_detached).log()).mean()
    gen_loss = -disc(fake).clamp(eps, 1.0 - eps).log().mean()
    return gen_loss, disc_loss


def loss_total(
    pred: torch.Tensor,
    target: torch.Tensor,
    state: torch.Tensor,
    config: AttributeGanConfig,
    disc: nn.Module | None = None,
    real: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossReport]:
    """Generator objective: omega_adv * adversarial term + regression loss."""
    reg, parts = loss_regression(pred, target, state, config)
    if disc is not None and config.omega_adv != 0.0:
        real_seq = _batched(real if real is not None else target)
        gen_adv, _ = loss_adversarial(disc, real_seq, _batched(pred))
    else:
        gen_adv = torch.zeros((), dtype=reg.dtype)
    total = config.omega_adv * gen_adv + reg
    components = {k: float(v.detach()) for k, v in parts.items()}
    components.update({"l_reg": float(reg.detach()), "gen_adv": float(gen_adv.detach())})
    return total, LossReport(total=float(total.detach()), components=components)


def build_models(config: AttributeGanConfig) -> tuple[AttributeGenerator, SequenceDiscriminator]:
    seed_all(derive_seed(config.seed, "attribute-gan-init"))
    return AttributeGenerator(config), SequenceDiscriminator(config.disc_hidden)


def _samples_to_tensors(samples: list[WindowSample]):
    audio = torch.from_numpy(np.stack([s.audio for s in samples])).float()
    states = torch.from_numpy(np.stack([s.initial_state for s in samples])).float()
    targets = torch.from_numpy(np.stack([s.targets for s in samples])).float()
    return audio, states, targets


def _state_dict_arrays(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _load_module(module: nn.Module, params: dict[str, np.ndarray], prefix: str) -> None:
    state = {}
    for key, value in params.items():
        if key.startswith(prefix + "."):
            state[key[len(prefix) + 1 :]] = torch.from_numpy(np.array(value))
    missing = set(module.state_dict()) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters for {prefix}: {sorted(missing)[:3]}")
    module.load_state_dict(state)


def make_checkpoint(
    gen: AttributeGenerator,
    disc: SequenceDiscriminator,
    config: AttributeGanConfig,
    step: int,
) -> Checkpoint:
    params = {**_state_dict_arrays(gen, "generator"), **_state_dict_arrays(disc, "discriminator")}
    return Checkpoint(
        params=params, config=config.to_dict(), seed=config.seed, step=step, kind="attribute_gan"
    )


def models_from_checkpoint(
    ckpt: Checkpoint,
) -> tuple[AttributeGenerator, SequenceDiscriminator, AttributeGanConfig]:
    if ckpt.kind != "attribute_gan":
        raise CheckpointError(f"expected an attribute_gan checkpoint, got kind {ckpt.kind!r}")
    config = AttributeGanConfig.from_dict(ckpt.config)
    gen, disc = AttributeGenerator(config), SequenceDiscriminator(config.disc_hidden)
    _load_module(gen, ckpt.params, "generator")
    _load_module(disc, ckpt.params, "discriminator")
    return gen, disc, config


def train_attribute_gan(
    samples: list[WindowSample],
    config: AttributeGanConfig,
    epochs: int | None = None,
    batch_size: int | None = None,
    models: tuple[AttributeGenerator, SequenceDiscriminator] | None = None,
    start_step: int = 0,
    rng_label: str = "general-batches",
) -> tuple[Checkpoint, list[LossReport]]:
    """Alternating discriminator/generator updates with Adam.

    With omega_adv == 0 the discriminator is left untouched (regression-only
    mode). History carries one mean LossReport per epoch. Non-finite losses
    abort with the offending global step index.
    """
    epochs = config.general_epochs if epochs is None else epochs
    batch_size = config.general_batch if batch_size is None else batch_size
    gen, disc = models if models is not None else build_models(config)
    audio, states, targets = _samples_to_tensors(samples)
    n = len(samples)
    adversarial = config.omega_adv != 0.0

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.learning_rate)
    order_rng = np.random.default_rng(derive_seed(config.seed, rng_label))
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)  # single update stream: bit-stable history
    step = start_step
    history: list[LossReport] = []
    try:
        for _ in range(epochs):
            order = order_rng.permutation(n)
            epoch_parts: dict[str, list[float]] = {}
            epoch_totals: list[float] = []
            for lo in range(0, n, batch_size):
                idx = torch.from_numpy(order[lo : lo + batch_size].copy())
                aud, st, tgt = audio[idx], states[idx], targets[idx]
                report_extra = {}
                if adversarial:
                    with torch.no_grad():
                        fake_fixed = gen(aud, st)
                    _, disc_loss = loss_adversarial(disc, tgt, fake_fixed)
                    opt_d.zero_grad()
                    disc_loss.backward()
                    opt_d.step()
                    report_extra["disc"] = float(disc_loss.detach())

                pred = gen(aud, st)
                total, report = loss_total(pred, tgt, st, config, disc if adversarial else None)
                if not torch.isfinite(total):
                    raise DivergenceError(f"non-finite loss at step {step}", step=step)
                opt_g.zero_grad()
                total.backward()
                opt_g.step()
                step += 1

                epoch_totals.append(report.total)
                for k, v in {**report.components, **report_extra}.items():
                    epoch_parts.setdefault(k, []).append(v)
                if config.max_steps is not None and step - start_step >= config.max_steps:
                    break
            if epoch_totals:
                history.append(
                    LossReport(
                        total=float(np.mean(epoch_totals)),
                        components={k: float(np.mean(v)) for k, v in epoch_parts.items()},
                    )
                )
            if config.max_steps is not None and step - start_step >= config.max_steps:
                break
    finally:
        torch.set_num_threads(prev_threads)
    return make_checkpoint(gen, disc, config, step), history


def finetune_attribute_gan(
    ckpt: Checkpoint,
    clip_samples: list[WindowSample],
    epochs: int | None = None,
    batch_size: int | None = None,
) -> tuple[Checkpoint, list[LossReport]]:
    """Continue optimization of all parameters on one clip's samples."""
    gen, disc, config = models_from_checkpoint(ckpt)
    epochs = config.finetune_epochs if epochs is None else epochs
    batch_size = config.finetune_batch if batch_size is None else batch_size
    return train_attribute_gan(
        clip_samples,
        config,
        epochs=epochs,
        batch_size=batch_size,
        models=(gen, disc),
        start_step=ckpt.step,
        rng_label="finetune-batches",
    )


@dataclass
class InferenceResult:
    attributes: np.ndarray  # (frames, 71) float32
    window_starts: list[int]
    window_states: list[np.ndarray]  # the initial state fed to each window


def infer_sequence(
    audio: np.ndarray,
    initial_state: np.ndarray,
    ckpt: Checkpoint,
    teacher_targets: np.ndarray | None = None,
) -> InferenceResult:
    """Generate attributes for a whole clip in consecutive windows of T frames.

    Window k > 0 is seeded with the last generated frame of window k-1;
    teacher_targets instead seeds every window with the ground truth at its
    start frame. Clips shorter than a window (or a ragged tail) are padded by
    repeating the final audio frame and trimmed after generation.
    """
    gen, _, config = models_from_checkpoint(ckpt)
    gen.eval()
    audio = np.asarray(audio, dtype=np.float32)
    frames, window = audio.shape[0], config.window
    if frames == 0:
        raise ShapeMismatchError("cannot infer attributes for an empty clip")
    state = np.asarray(initial_state, dtype=np.float32).reshape(ATTRIBUTE_DIM)

    outputs = []
    starts: list[int] = []
    states: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, frames, window):
            chunk = audio[start : start + window]
            if chunk.shape[0] < window:
                pad = np.repeat(chunk[-1:], window - chunk.shape[0], axis=0)
                chunk = np.concatenate([chunk, pad], axis=0)
            if teacher_targets is not None:
                state = np.asarray(teacher_targets[start], dtype=np.float32)
            out = gen(torch.from_numpy(chunk)[None], torch.from_numpy(state)[None])[0].numpy()
            take = min(window, frames - start)
            outputs.append(out[:take])
            starts.append(start)
            states.append(state.copy())
            state = out[-1].copy()
    return InferenceResult(
        attributes=np.concatenate(outputs, axis=0),
        window_starts=starts,
        window_states=states,
    )
