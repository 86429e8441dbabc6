import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganstego.autodiff import ShapeError, Tape, Tensor, grad_check
from ganstego.errors import ExtentError
from ganstego.gan import (
    Discriminator, Extractor, FeatureNet, Generator, LossWeights, ModelBundle, ModelConfig,
    adversarial_loss, discriminator_forward, extractor_forward, generator_adversarial_loss,
    generator_forward, perceptual_loss, reconstruction_loss, total_loss,
)
from ganstego.media import plane_to_bits
from ganstego.metrics import mse

SMALL = ModelConfig(channels=3, bpp=1, g_width=4, d_width=4, e_width=4, e_layers=3, f_widths=(4, 4, 4))


def zero_all(module):
    for p in module.parameters():
        p.data[...] = 0


def batch(rng, n=2, c=3, h=16, w=16, bpp=1):
    cover = Tensor(rng.uniform(-1, 1, (n, c, h, w)).astype(np.float32))
    secret = Tensor((rng.integers(0, 2, (n, bpp, h, w)) * 2 - 1).astype(np.float32))
    return cover, secret


def test_generator_shape_and_range(rng):
    g = Generator(SMALL, seed=1)
    cover, secret = batch(rng)
    out = generator_forward(g, cover, secret)
    assert out.shape == cover.shape
    assert np.all(np.abs(out.data) <= 1.0)


def test_generator_unbatched(rng):
    g = Generator(SMALL, seed=1)
    cover, secret = batch(rng, n=1)
    out = g(Tensor(cover.data[0]), Tensor(secret.data[0]))
    assert out.shape == (3, 16, 16)


def test_generator_zero_weights_gives_zero(rng):
    g = Generator(SMALL, seed=1)
    zero_all(g)
    out = g(*batch(rng))
    np.testing.assert_array_equal(out.data, 0.0)


@pytest.mark.parametrize("seed", range(0, 100, 9))
def test_generator_range_random_weights(seed):
    rng = np.random.default_rng(seed)
    g = Generator(SMALL, seed=seed)
    for p in g.parameters():
        p.data[...] = rng.normal(0, 3, p.shape)
    assert np.all(np.abs(g(*batch(rng)).data) <= 1.0)


def test_generator_extent_error_names_multiple(rng):
    g = Generator(SMALL)
    cover, secret = batch(rng, h=12, w=16)
    with pytest.raises(ExtentError, match="multiples of 8"):
        g(cover, secret)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 2))
def test_generator_shape_property(hm, wm, bpp):
    cfg = ModelConfig(bpp=bpp, g_width=2, g_depth=2)
    g = Generator(cfg)
    rng = np.random.default_rng(hm * 10 + wm)
    cover, secret = batch(rng, h=4 * hm, w=4 * wm, bpp=bpp)
    assert g(cover, secret).shape == cover.shape


def test_discriminator_outputs(rng):
    d = Discriminator(SMALL, seed=2)
    x, _ = batch(rng, n=3)
    p = discriminator_forward(d, x)
    assert p.shape == (3,)
    assert np.all((p.data > 0) & (p.data < 1))
    # order alignment: scoring images one by one in eval mode matches the batch
    d.eval()
    whole = d(x).data
    single = [d(Tensor(x.data[i : i + 1])).data[0] for i in range(3)]
    np.testing.assert_allclose(whole, single, rtol=1e-5)


def test_discriminator_zero_weights_half(rng):
    d = Discriminator(SMALL)
    zero_all(d)
    np.testing.assert_array_equal(d(batch(rng)[0]).data, 0.5)


def test_discriminator_extent_error(rng):
    with pytest.raises(ExtentError, match="16"):
        Discriminator(SMALL)(batch(rng, h=8, w=8)[0])


def test_extractor_shape_zero_and_threshold(rng):
    e = Extractor(SMALL, seed=3)
    x, s = batch(rng)
    logits = extractor_forward(e, x)
    assert logits.shape == s.shape
    zero_all(e)
    z = e(x)
    np.testing.assert_array_equal(z.data, 0.0)
    assert plane_to_bits(z).sum() == 0
    with pytest.raises(ExtentError):
        e(Tensor(np.zeros((1, 1, 8, 8), np.float32)))


def test_threshold_monotone(rng):
    logits = rng.normal(size=100)
    bits = plane_to_bits(logits)
    raised = logits + rng.uniform(0, 1, 100)
    assert np.all(plane_to_bits(raised) >= bits)


def test_adversarial_loss_values():
    assert adversarial_loss([0.5], [0.5]).item() == pytest.approx(2 * math.log(0.5), abs=1e-12)
    assert adversarial_loss([1 - 1e-7], [1e-7]).item() == pytest.approx(0.0, abs=1e-6)
    v = adversarial_loss([1.0, 0.0], [1.0, 0.0]).item()
    assert math.isfinite(v)
    with pytest.raises(ShapeError):
        adversarial_loss(np.zeros(0), [0.5])


def test_generator_adversarial_loss():
    assert generator_adversarial_loss([0.5, 0.5]).item() == pytest.approx(math.log(2))
    assert math.isfinite(generator_adversarial_loss([0.0]).item())


def test_reconstruction_loss_values():
    assert reconstruction_loss(np.ones(4), np.full(4, 50.0)).item() == pytest.approx(0.0, abs=1e-12)
    s = np.array([0.0, 1.0])
    exact = Tensor(np.array([-np.inf, np.inf]))
    assert reconstruction_loss(s, exact).item() == 0.0
    assert reconstruction_loss(np.ones(8), np.full(8, -np.inf)).item() == 1.0
    assert reconstruction_loss(np.array([1.0, 0, 1, 0]), np.zeros(4)).item() == 0.25
    with pytest.raises(ShapeError):
        reconstruction_loss(np.ones(3), np.ones(4))


def test_perceptual_loss(rng):
    f = FeatureNet(3, (4, 8, 8), seed=0, dtype=np.float64)
    a = rng.uniform(-1, 1, (2, 3, 16, 16))
    b = rng.uniform(-1, 1, (2, 3, 16, 16))
    assert perceptual_loss(f, a, a).item() == 0.0
    assert perceptual_loss(f, a, b).item() > 0
    assert perceptual_loss(FeatureNet(3, zero=True), a, b).item() == 0.0
    with pytest.raises(ShapeError):
        perceptual_loss(f, a, b[:, :, :8])


def test_perceptual_identity_tap_is_pixel_mse(rng):
    pa = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
    pb = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
    ta = pa.transpose(2, 0, 1) / 127.5 - 1
    tb = pb.transpose(2, 0, 1) / 127.5 - 1
    loss = perceptual_loss(FeatureNet(identity=True), ta, tb).item()
    # normalized-domain MSE is the 8-bit MSE scaled by 1 / 127.5^2
    assert loss == pytest.approx(mse(pa, pb) / 127.5**2, rel=1e-12)


def test_feature_net_is_not_trainable():
    f = FeatureNet(3, seed=0)
    assert f.parameters() == []
    assert all(not w.requires_grad for w in f.weights)
    assert len(f.features(Tensor(np.zeros((1, 3, 16, 16), np.float32)))) == 3


def test_total_loss_values():
    w = LossWeights(10.0, 2.0)
    assert total_loss(-1.0, 0.5, 0.25, w) == 4.5
    adv, rec, perc = -0.7, 0.3, 0.11
    assert total_loss(adv, rec, perc, LossWeights(0.0, 0.0)) == adv
    assert total_loss(adv, rec, perc, LossWeights(0.0, 2.0)) == adv + 2.0 * perc
    assert total_loss(adv, rec, perc, LossWeights(3.0, 0.0)) == adv + 3.0 * rec
    l1 = total_loss(adv, rec, perc, LossWeights(1.0, 1.0))
    l2 = total_loss(adv, rec, perc, LossWeights(2.0, 1.0))
    assert l2 - l1 == pytest.approx(rec)
    with pytest.raises(ValueError):
        LossWeights(-1.0, 0.0)


def test_generator_gradients_nonzero(rng):
    mb = ModelBundle.build(SMALL, seed=4)
    x, s = batch(rng)
    target = Tensor((s.data + 1) / 2)
    with Tape() as tape:
        st_ = mb.generator(x, s)
        loss = total_loss(generator_adversarial_loss(mb.discriminator(st_)),
                          reconstruction_loss(target, mb.extractor(st_)),
                          perceptual_loss(mb.features, x, st_), LossWeights())
    grads = tape.backward(loss, mb.generator.parameters())
    assert sum(float(np.abs(g).sum()) for g in grads) > 0


def test_extractor_rec_gradient_matches_finite_differences(rng):
    cfg = ModelConfig(channels=3, bpp=1, e_width=3, e_layers=3)
    e = Extractor(cfg, seed=5, dtype=np.float64)
    x = Tensor(rng.uniform(-1, 1, (2, 3, 4, 4)))
    target = Tensor(rng.integers(0, 2, (2, 1, 4, 4)).astype(np.float64))
    assert grad_check(lambda: reconstruction_loss(target, e(x)), e.parameters()) < 1e-4


def test_inference_is_deterministic(rng):
    x, s = batch(rng)
    outs = []
    for _ in range(2):
        g = Generator(SMALL, seed=9).eval()
        outs.append(g(x, s).data)
    assert np.array_equal(outs[0], outs[1])


def test_bundle_parameter_names_are_prefixed():
    mb = ModelBundle.build(SMALL)
    names = [n for n, _ in mb.named_parameters()]
    assert names[0].startswith("G.") and any(n.startswith("D.") for n in names)
    assert any(n.startswith("E.") for n in names)
    assert len(names) == len(set(names))
