import numpy as np
import pytest
import torch
from torch import nn

from conftest import finite_difference_check, param_count
from talkingface.checkpoint import load_checkpoint, save_checkpoint
from talkingface.errors import ShapeMismatchError
from talkingface.render_net import (
    FixedRandomExtractor,
    FrameGenerator,
    MultiScaleDiscriminator,
    RenderFrame,
    RenderNetConfig,
    build_render_models,
    default_extractor,
    loss_render,
    lr_factor,
    make_render_checkpoint,
    multiscale_discriminate,
    render_loss_components,
    render_models_from_checkpoint,
    stack_window,
    train_render_net,
    translate,
    unstack_window,
)


def _frames(n, h=16, w=16, seed=0):
    rng = np.random.default_rng(seed)
    return [
        RenderFrame(
            rgb=rng.uniform(0, 1, (h, w, 3)).astype(np.float32),
            attention=rng.uniform(0, 1, (h, w, 1)).astype(np.float32),
        )
        for _ in range(n)
    ]


def small_config(**kw):
    defaults = dict(
        n_w=1, base_channels=4, disc_channels=4, extractor_channels=4,
        learning_rate=1e-3, seed=0,
    )
    defaults.update(kw)
    return RenderNetConfig(**defaults)


# ---------------------------------------------------------------- stacking


def test_stack_channel_count():
    frames = _frames(6)
    assert stack_window(frames, 3, 2).shape == (16, 16, 16)  # 8 * N_w channels
    assert stack_window(frames, 3, 1).shape == (8, 16, 16)


def test_stack_left_edge_clamps():
    frames = _frames(6)
    stacked = stack_window(frames, 0, 2)
    frame0 = frames[0].channels()
    for k in range(2):  # first N_w slots all equal frame 0
        assert np.array_equal(stacked[4 * k : 4 * k + 4], frame0)


def test_stack_interior_layout():
    frames = _frames(8)
    n_w = 2
    t = 4
    stacked = stack_window(frames, t, n_w)
    for k in range(2 * n_w):
        assert np.array_equal(stacked[4 * k : 4 * k + 4], frames[t - n_w + k].channels())


def test_stack_unstack_round_trip():
    frames = _frames(5)
    stacked = stack_window(frames, 2, 2)
    back = unstack_window(stacked)
    for k, frame in enumerate(back):
        assert np.array_equal(frame.rgb, frames[k].rgb)
        assert np.array_equal(frame.attention, frames[k].attention)


def test_stack_empty_errors():
    with pytest.raises(ShapeMismatchError):
        stack_window([], 0, 2)


def test_render_frame_validates_shapes():
    with pytest.raises(ShapeMismatchError):
        RenderFrame(rgb=np.zeros((4, 4, 3)), attention=np.zeros((5, 4, 1)))


# ---------------------------------------------------------------- loss math


def _stub_disc_outs(scores, feats):
    return [(s, f) for s, f in zip(scores, feats)]


def test_perfect_reconstruction_components_zero():
    config = small_config()
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    fake = real.clone()
    score = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
    feats = [torch.rand(1, 2, 4, 4, dtype=torch.float64), torch.rand(1, 4, 2, 2, dtype=torch.float64)]
    outs = _stub_disc_outs([score] * 3, [feats] * 3)  # identical real/fake features
    extractor = FixedRandomExtractor(seed=1, channels=2).double()
    total, report = render_loss_components(fake, real, outs, outs, extractor, config)
    assert report.components["fm"] == 0.0
    assert report.components["perceptual"] == 0.0
    assert report.components["l1"] == 0.0


def test_l1_component_is_mean_absolute_error():
    config = small_config()
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    fake = real + 0.1
    score = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
    feats = [torch.zeros(1, 2, 4, 4, dtype=torch.float64)] * 2
    outs = _stub_disc_outs([score] * 3, [feats] * 3)
    _, report = render_loss_components(fake, real, outs, outs, None, config)
    assert abs(report.components["l1"] - 0.1) <= 1e-9


def test_zero_lambdas_reduce_to_adversarial_sum():
    config = small_config(lambda_fm=0.0, lambda_perc=0.0, lambda_l1=0.0)
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    fake = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    scores = [torch.randn(1, 1, 2, 2, dtype=torch.float64) for _ in range(3)]
    feats = [[torch.rand(1, 2, 4, 4, dtype=torch.float64)] * 2 for _ in range(3)]
    outs_fake = _stub_disc_outs(scores, feats)
    outs_real = _stub_disc_outs([s + 1 for s in scores], feats)
    total, report = render_loss_components(fake, real, outs_real, outs_fake, None, config)
    adv = sum(
        float(-torch.sigmoid(s).clamp(1e-7, 1 - 1e-7).log().mean()) for s in scores
    )
    assert abs(float(total) - adv) <= 1e-9
    assert abs(report.components["adv"] - adv) <= 1e-9


def test_feature_matching_uses_all_layers():
    config = small_config(lambda_perc=0.0, lambda_l1=0.0)
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    fake = real.clone()
    score = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
    f_real = [torch.zeros(1, 2, 2, 2, dtype=torch.float64), torch.zeros(1, 2, 2, 2, dtype=torch.float64)]
    f_fake = [torch.ones(1, 2, 2, 2, dtype=torch.float64), 3 * torch.ones(1, 2, 2, 2, dtype=torch.float64)]
    outs_real = _stub_disc_outs([score], [f_real])
    outs_fake = _stub_disc_outs([score], [f_fake])
    _, report = render_loss_components(fake, real, outs_real, outs_fake, None, config)
    assert abs(report.components["fm"] - 2.0) <= 1e-12  # mean of (1, 3)


def test_image_size_mismatch_rejected():
    config = small_config()
    with pytest.raises(ShapeMismatchError):
        render_loss_components(
            torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 4, 4), [], [], None, config
        )


def test_extractor_zero_on_identical_and_symmetric():
    extractor = FixedRandomExtractor(seed=0, channels=4).double()
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    y = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    from talkingface.render_net import perceptual_loss

    assert float(perceptual_loss(extractor, x, x)) == 0.0
    assert abs(float(perceptual_loss(extractor, x, y)) - float(perceptual_loss(extractor, y, x))) <= 1e-12


# ------------------------------------------------------- multiscale disc


def test_multiscale_shapes_and_determinism():
    config = small_config(n_w=2)
    torch.manual_seed(0)
    disc = MultiScaleDiscriminator(config.stack_channels + 3, 4, 3)
    x = torch.zeros(1, config.stack_channels, 32, 32)
    frame = torch.zeros(1, 3, 32, 32)
    outs1 = multiscale_discriminate(disc, x, frame)
    outs2 = multiscale_discriminate(disc, x, frame)
    assert len(outs1) == 3
    for (s1, f1), (s2, f2) in zip(outs1, outs2):
        assert torch.equal(s1, s2)
        assert len(f1) >= 2  # feature pyramid depth for L_FM
    # D2 sees half of D1's spatial dims
    assert outs1[1][1][0].shape[-1] == outs1[0][1][0].shape[-1] // 2
    assert outs1[2][1][0].shape[-1] == outs1[0][1][0].shape[-1] // 4


# ---------------------------------------------------------------- gradients


def test_render_generator_gradcheck():
    config = small_config(base_channels=2, disc_channels=2, extractor_channels=2)
    torch.manual_seed(1)
    gen = FrameGenerator(config.stack_channels, config.base_channels).double()
    disc = MultiScaleDiscriminator(config.stack_channels + 3, config.disc_channels, 3).double()
    extractor = FixedRandomExtractor(seed=2, channels=2).double()
    x = torch.rand(1, config.stack_channels, 8, 8, dtype=torch.float64)
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)

    def loss_fn():
        return loss_render(gen, disc, extractor, x, real, config)[0]

    assert param_count(gen) <= 5000
    finite_difference_check(gen, loss_fn)


def test_render_disc_gradcheck():
    config = small_config(base_channels=2, disc_channels=2)
    torch.manual_seed(2)
    disc = MultiScaleDiscriminator(config.stack_channels + 3, config.disc_channels, 2).double()
    x = torch.rand(1, config.stack_channels, 8, 8, dtype=torch.float64)
    real = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    fake = torch.rand(1, 3, 8, 8, dtype=torch.float64)

    from talkingface.render_net import _disc_gan_term

    def loss_fn():
        outs_real = multiscale_discriminate(disc, x, real)
        outs_fake = multiscale_discriminate(disc, x, fake)
        return torch.stack(
            [_disc_gan_term(sr, sf, "log") for (sr, _), (sf, _) in zip(outs_real, outs_fake)]
        ).sum()

    assert param_count(disc) <= 5000
    finite_difference_check(disc, loss_fn)


# ---------------------------------------------------------------- training


def _pairs(n, size=16, n_w=1, seed=0):
    frames = _frames(n, size, size, seed=seed)
    rng = np.random.default_rng(seed + 1)
    targets = [rng.uniform(0, 1, (3, size, size)).astype(np.float32) for _ in range(n)]
    return [(stack_window(frames, t, n_w), targets[t]) for t in range(n)]


def test_train_same_seed_identical_history():
    config = small_config(epochs=2, decay_epochs=1, max_steps=None)
    pairs = _pairs(3)
    _, h1 = train_render_net(pairs, config)
    _, h2 = train_render_net(pairs, config)
    assert [r.total for r in h1] == [r.total for r in h2]


def test_train_zero_epochs_identity():
    config = small_config(epochs=0)
    ckpt, history = train_render_net(_pairs(2), config)
    assert history == []
    gen, disc = build_render_models(config)
    fresh = make_render_checkpoint(gen, disc, config, 0)
    for k in ckpt.params:
        assert np.array_equal(ckpt.params[k], fresh.params[k])


def test_lr_schedule_linear_decay():
    assert lr_factor(0, 50, 30) == 1.0
    assert lr_factor(19, 50, 30) == 1.0
    assert lr_factor(20, 50, 30) == 1.0
    assert abs(lr_factor(35, 50, 30) - 0.5) <= 1e-12
    assert abs(lr_factor(49, 50, 30) - 1 / 30) <= 1e-12
    # linear in the decay region
    diffs = [lr_factor(e, 50, 30) - lr_factor(e + 1, 50, 30) for e in range(20, 49)]
    assert all(abs(d - 1 / 30) <= 1e-12 for d in diffs)


def test_render_defaults_match_training_recipe():
    config = RenderNetConfig()
    assert (config.lambda_fm, config.lambda_perc, config.lambda_l1) == (2.0, 10.0, 50.0)
    assert (config.epochs, config.batch, config.decay_epochs) == (50, 1, 30)
    assert config.n_w == 2


def test_checkpoint_round_trip(tmp_path):
    config = small_config(epochs=1)
    ckpt, _ = train_render_net(_pairs(2), config)
    save_checkpoint(ckpt, tmp_path / "ck")
    back = load_checkpoint(tmp_path / "ck")
    for k in ckpt.params:
        assert back.params[k].tobytes() == ckpt.params[k].astype(np.float32).tobytes()
    gen, disc, cfg2 = render_models_from_checkpoint(back)
    assert cfg2.n_w == config.n_w


# ---------------------------------------------------------------- translate


def test_translate_preserves_count_resolution_and_range():
    config = small_config(epochs=0)
    ckpt, _ = train_render_net(_pairs(2), config)
    frames = _frames(5, 16, 16)
    out = translate(ckpt, frames)
    assert len(out) == 5
    for img in out:
        assert img.shape == (16, 16, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_translate_deterministic():
    config = small_config(epochs=0)
    ckpt, _ = train_render_net(_pairs(2), config)
    frames = _frames(4, 16, 16, seed=9)
    a = translate(ckpt, frames)
    b = translate(ckpt, frames)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()
