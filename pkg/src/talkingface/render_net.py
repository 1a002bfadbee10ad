"""Rendering-to-video translation.

Rendered RGB + eye-attention frames around each timestep are stacked into a
W x H x 8*N_w tensor and translated by a resolution-preserving generator
trained against three conditional patch discriminators at halved scales,
with feature-matching, perceptual, and absolute-pixel losses on top of the
adversarial term.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import Checkpoint
from .errors import CheckpointError, DivergenceError, ShapeMismatchError
from .reporting import LossReport
from .seeding import derive_seed, seed_all

FRAME_CHANNELS = 4  # rgb + attention


@dataclass
class RenderFrame:
    """One conditioning frame: RGB render plus single-channel eye-attention map."""

    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    attention: np.ndarray  # (H, W, 1) in [0, 1]

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float32)
        self.attention = np.asarray(self.attention, dtype=np.float32)
        if self.attention.ndim == 2:
            self.attention = self.attention[..., None]
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ShapeMismatchError(f"rgb must be (H, W, 3), got {self.rgb.shape}")
        if self.attention.shape != (*self.rgb.shape[:2], 1):
            raise ShapeMismatchError(
                f"attention shape {self.attention.shape} does not match rgb {self.rgb.shape}"
            )

    def channels(self) -> np.ndarray:
        """(4, H, W): r, g, b, attention."""
        return np.concatenate([self.rgb, self.attention], axis=2).transpose(2, 0, 1)


@dataclass
class RenderNetConfig:
    n_w: int = 2
    lambda_fm: float = 2.0
    lambda_perc: float = 10.0
    lambda_l1: float = 50.0
    learning_rate: float = 1e-4
    epochs: int = 50
    batch: int = 1
    decay_epochs: int = 30
    base_channels: int = 24
    disc_channels: int = 24
    n_scales: int = 3
    gan_mode: str = "log"  # or "lsgan"
    extractor_channels: int = 8
    seed: int = 0
    max_steps: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RenderNetConfig":
        return cls(**d)

    @property
    def stack_channels(self) -> int:
        return 2 * self.n_w * FRAME_CHANNELS


def stack_window(frames: list[RenderFrame], t: int, n_w: int) -> np.ndarray:
    """Channel-concatenate frames t-n_w .. t+n_w-1 (edges clamped): (8*n_w, H, W).

    Channel slice [4k, 4k+4) is frame t - n_w + k verbatim.
    """
    if not frames:
        raise ShapeMismatchError("cannot stack an empty frame sequence")
    last = len(frames) - 1
    picked = [frames[min(max(t + off, 0), last)] for off in range(-n_w, n_w)]
    return np.concatenate([f.channels() for f in picked], axis=0)


def unstack_window(stacked: np.ndarray) -> list[RenderFrame]:
    """Inverse of stack_window's layout; recovers the 2*n_w source frames."""
    if stacked.shape[0] % FRAME_CHANNELS != 0:
        raise ShapeMismatchError(f"channel count {stacked.shape[0]} is not a multiple of 4")
    frames = []
    for k in range(stacked.shape[0] // FRAME_CHANNELS):
        block = stacked[FRAME_CHANNELS * k : FRAME_CHANNELS * (k + 1)]
        frames.append(RenderFrame(rgb=block[:3].transpose(1, 2, 0), attention=block[3]))
    return frames


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class FrameGenerator(nn.Module):
    """Encoder-decoder with residual blocks; in 8*n_w channels, out RGB in (0, 1).

    Spatial dims must be divisible by 4 (two stride-2 stages each way).
    """

    def __init__(self, in_channels: int, base_channels: int = 24):
        super().__init__()
        c = base_channels
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, c, 7, padding=3),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            _ResidualBlock(4 * c),
            _ResidualBlock(4 * c),
            nn.ConvTranspose2d(4 * c, 2 * c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.ConvTranspose2d(2 * c, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 3, 7, padding=3),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return self.net(x)


class PatchDiscriminator(nn.Module):
    """4-layer patch classifier; returns (score map, intermediate activations)."""

    def __init__(self, in_channels: int, channels: int = 24):
        super().__init__()
        c = channels
        self.blocks = nn.ModuleList(
            [
                nn.Sequential(nn.Conv2d(in_channels, c, 3, stride=2, padding=1), nn.LeakyReLU(0.2)),
                nn.Sequential(nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.LeakyReLU(0.2)),
                nn.Sequential(nn.Conv2d(2 * c, 4 * c, 3, stride=1, padding=1), nn.LeakyReLU(0.2)),
            ]
        )
        self.score = nn.Conv2d(4 * c, 1, 3, stride=1, padding=1)

    def forward(self, x) -> tuple[torch.Tensor, list[torch.Tensor]]:
        feats = []
        h = x
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        return self.score(h), feats


class MultiScaleDiscriminator(nn.Module):
    """Three patch discriminators, scale i fed the input average-pooled by 2^(i-1)."""

    def __init__(self, in_channels: int, channels: int = 24, n_scales: int = 3):
        super().__init__()
        self.discs = nn.ModuleList(
            [PatchDiscriminator(in_channels, channels) for _ in range(n_scales)]
        )

    def forward(self, x) -> list[tuple[torch.Tensor, list[torch.Tensor]]]:
        outs = []
        h = x
        for i, disc in enumerate(self.discs):
            if i > 0:
                h = F.avg_pool2d(h, kernel_size=2, stride=2)
            outs.append(disc(h))
        return outs


def multiscale_discriminate(
    disc: MultiScaleDiscriminator, x_stack: torch.Tensor, frame: torch.Tensor
) -> list[tuple[torch.Tensor, list[torch.Tensor]]]:
    """Condition on the stacked input: per scale, score concat(x_stack, frame)."""
    return disc(torch.cat([x_stack, frame], dim=1))


class FixedRandomExtractor(nn.Module):
    """Seeded frozen conv stack standing in for a pretrained perceptual network."""

    def __init__(self, seed: int = 0, channels: int = 8):
        super().__init__()
        seed_all(seed)
        c = channels
        self.layers = nn.ModuleList(
            [
                nn.Sequential(nn.Conv2d(3, c, 3, stride=2, padding=1), nn.Tanh()),
                nn.Sequential(nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.Tanh()),
                nn.Sequential(nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), nn.Tanh()),
            ]
        )
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, img: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = img
        for layer in self.layers:
            h = layer(h)
            feats.append(h)
        return feats


def feature_matching_loss(
    feats_real: list[torch.Tensor], feats_fake: list[torch.Tensor]
) -> torch.Tensor:
    """Mean L1 over all discriminator intermediate layers; real side detached."""
    terms = [(r.detach() - f).abs().mean() for r, f in zip(feats_real, feats_fake)]
    return torch.stack(terms).mean()


def perceptual_loss(extractor: nn.Module, fake: torch.Tensor, real: torch.Tensor) -> torch.Tensor:
    """Mean L1 over the extractor's layer activations."""
    terms = [
        (r - f).abs().mean() for r, f in zip(extractor(real), extractor(fake))
    ]
    return torch.stack(terms).mean()


def _gen_gan_term(score_fake: torch.Tensor, gan_mode: str) -> torch.Tensor:
    if gan_mode == "log":
        return -torch.sigmoid(score_fake).clamp(1e-7, 1 - 1e-7).log().mean()
    if gan_mode == "lsgan":
        return ((score_fake - 1.0) ** 2).mean()
    raise ShapeMismatchError(f"unknown gan_mode {gan_mode!r}")


def _disc_gan_term(score_real: torch.Tensor, score_fake: torch.Tensor, gan_mode: str) -> torch.Tensor:
    if gan_mode == "log":
        p_real = torch.sigmoid(score_real).clamp(1e-7, 1 - 1e-7)
        p_fake = torch.sigmoid(score_fake).clamp(1e-7, 1 - 1e-7)
        return -(p_real.log() + (1.0 - p_fake).log()).mean()
    if gan_mode == "lsgan":
        return 0.5 * (((score_real - 1.0) ** 2).mean() + (score_fake**2).mean())
    raise ShapeMismatchError(f"unknown gan_mode {gan_mode!r}")


def render_loss_components(
    fake: torch.Tensor,
    real: torch.Tensor,
    disc_outs_real: list[tuple[torch.Tensor, list[torch.Tensor]]],
    disc_outs_fake: list[tuple[torch.Tensor, list[torch.Tensor]]],
    extractor: nn.Module | None,
    config: RenderNetConfig,
) -> tuple[torch.Tensor, LossReport]:
    """Generator objective of the render net, every component reported.

    total = sum_i [adversarial_i + lambda_fm * feature_matching_i]
          + lambda_perc * perceptual + lambda_l1 * mean absolute pixel error.
    """
    if fake.shape != real.shape:
        raise ShapeMismatchError(f"fake {tuple(fake.shape)} != real {tuple(real.shape)}")
    adv = torch.stack(
        [_gen_gan_term(score, config.gan_mode) for score, _ in disc_outs_fake]
    ).sum()
    fm = torch.stack(
        [
            feature_matching_loss(fr, ff)
            for (_, fr), (_, ff) in zip(disc_outs_real, disc_outs_fake)
        ]
    ).sum()
    perc = (
        perceptual_loss(extractor, fake, real)
        if extractor is not None and config.lambda_perc != 0.0
        else torch.zeros((), dtype=fake.dtype)
    )
    pixel = (fake - real).abs().mean()
    total = adv + config.lambda_fm * fm + config.lambda_perc * perc + config.lambda_l1 * pixel
    report = LossReport(
        total=float(total.detach()),
        components={
            "adv": float(adv.detach()),
            "fm": float(fm.detach()),
            "perceptual": float(perc.detach()),
            "l1": float(pixel.detach()),
        },
    )
    return total, report


def loss_render(
    gen: FrameGenerator,
    disc: MultiScaleDiscriminator,
    extractor: nn.Module | None,
    x_stack: torch.Tensor,
    real: torch.Tensor,
    config: RenderNetConfig,
) -> tuple[torch.Tensor, LossReport, torch.Tensor]:
    """Run the generator and assemble its full loss; returns the fake too."""
    fake = gen(x_stack)
    outs_real = multiscale_discriminate(disc, x_stack, real)
    outs_fake = multiscale_discriminate(disc, x_stack, fake)
    total, report = render_loss_components(fake, real, outs_real, outs_fake, extractor, config)
    return total, report, fake


def build_render_models(config: RenderNetConfig) -> tuple[FrameGenerator, MultiScaleDiscriminator]:
    seed_all(derive_seed(config.seed, "render-net-init"))
    gen = FrameGenerator(config.stack_channels, config.base_channels)
    disc = MultiScaleDiscriminator(
        config.stack_channels + 3, config.disc_channels, config.n_scales
    )
    return gen, disc


def default_extractor(config: RenderNetConfig) -> FixedRandomExtractor:
    return FixedRandomExtractor(
        seed=derive_seed(config.seed, "perceptual-extractor"), channels=config.extractor_channels
    )


def lr_factor(epoch: int, epochs: int, decay_epochs: int) -> float:
    """1.0 until the decay region, then linear toward 0 after the final epoch."""
    if decay_epochs <= 0 or epoch < epochs - decay_epochs:
        return 1.0
    return (epochs - epoch) / decay_epochs


def _state_arrays(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def make_render_checkpoint(
    gen: FrameGenerator, disc: MultiScaleDiscriminator, config: RenderNetConfig, step: int
) -> Checkpoint:
    params = {**_state_arrays(gen, "generator"), **_state_arrays(disc, "discriminator")}
    return Checkpoint(
        params=params, config=config.to_dict(), seed=config.seed, step=step, kind="render_net"
    )


def render_models_from_checkpoint(
    ckpt: Checkpoint,
) -> tuple[FrameGenerator, MultiScaleDiscriminator, RenderNetConfig]:
    if ckpt.kind != "render_net":
        raise CheckpointError(f"expected a render_net checkpoint, got kind {ckpt.kind!r}")
    config = RenderNetConfig.from_dict(ckpt.config)
    gen = FrameGenerator(config.stack_channels, config.base_channels)
    disc = MultiScaleDiscriminator(config.stack_channels + 3, config.disc_channels, config.n_scales)
    for module, prefix in ((gen, "generator"), (disc, "discriminator")):
        state = {
            k[len(prefix) + 1 :]: torch.from_numpy(np.array(v))
            for k, v in ckpt.params.items()
            if k.startswith(prefix + ".")
        }
        missing = set(module.state_dict()) - set(state)
        if missing:
            raise CheckpointError(f"checkpoint missing parameters for {prefix}")
        module.load_state_dict(state)
    return gen, disc, config


def train_render_net(
    pairs: list[tuple[np.ndarray, np.ndarray]],
    config: RenderNetConfig,
    extractor: nn.Module | None = None,
    models: tuple[FrameGenerator, MultiScaleDiscriminator] | None = None,
) -> tuple[Checkpoint, list[LossReport]]:
    """Alternating G/D updates over (stacked input, real frame) pairs.

    The learning rate stays flat, then decays linearly over the final
    decay_epochs. History carries one mean LossReport per epoch.
    """
    gen, disc = models if models is not None else build_render_models(config)
    if extractor is None:
        extractor = default_extractor(config)
    stacks = torch.from_numpy(np.stack([p[0] for p in pairs])).float()
    reals = torch.from_numpy(np.stack([p[1] for p in pairs])).float()
    n = len(pairs)

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.learning_rate)
    order_rng = np.random.default_rng(derive_seed(config.seed, "render-batches"))
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    step = 0
    history: list[LossReport] = []
    try:
        for epoch in range(config.epochs):
            factor = lr_factor(epoch, config.epochs, config.decay_epochs)
            for group in (*opt_g.param_groups, *opt_d.param_groups):
                group["lr"] = config.learning_rate * factor
            order = order_rng.permutation(n)
            epoch_parts: dict[str, list[float]] = {}
            epoch_totals: list[float] = []
            for lo in range(0, n, config.batch):
                idx = torch.from_numpy(order[lo : lo + config.batch].copy())
                x, real = stacks[idx], reals[idx]

                with torch.no_grad():
                    fake_fixed = gen(x)
                outs_real = multiscale_discriminate(disc, x, real)
                outs_fake = multiscale_discriminate(disc, x, fake_fixed)
                disc_loss = torch.stack(
                    [
                        _disc_gan_term(sr, sf, config.gan_mode)
                        for (sr, _), (sf, _) in zip(outs_real, outs_fake)
                    ]
                ).sum()
                opt_d.zero_grad()
                disc_loss.backward()
                opt_d.step()

                total, report, _ = loss_render(gen, disc, extractor, x, real, config)
                if not torch.isfinite(total):
                    raise DivergenceError(f"non-finite loss at step {step}", step=step)
                opt_g.zero_grad()
                total.backward()
                opt_g.step()
                step += 1

                epoch_totals.append(report.total)
                for k, v in {**report.components, "disc": float(disc_loss.detach())}.items():
                    epoch_parts.setdefault(k, []).append(v)
                if config.max_steps is not None and step >= config.max_steps:
                    break
            if epoch_totals:
                history.append(
                    LossReport(
                        total=float(np.mean(epoch_totals)),
                        components={k: float(np.mean(v)) for k, v in epoch_parts.items()},
                    )
                )
            if config.max_steps is not None and step >= config.max_steps:
                break
    finally:
        torch.set_num_threads(prev_threads)
    return make_render_checkpoint(gen, disc, config, step), history


def translate(ckpt: Checkpoint, frames: list[RenderFrame]) -> list[np.ndarray]:
    """Translate a render sequence to RGB frames, one per input frame."""
    gen, _, config = render_models_from_checkpoint(ckpt)
    gen.eval()
    out = []
    with torch.no_grad():
        for t in range(len(frames)):
            x = torch.from_numpy(stack_window(frames, t, config.n_w))[None].float()
            img = gen(x)[0].clamp(0.0, 1.0).numpy().transpose(1, 2, 0)
            out.append(img.astype(np.float32))
    return out
